"""Command line entry point: ``sublab <kind> --config FILE [--out DIR] [--jobs N]``."""

from __future__ import annotations

import argparse
import sys

from .errors import ConfigInvalid
from .experiments import KINDS, load_config, run


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sublab", description="Run a configured sub-Riemannian spectral experiment.")
    p.add_argument("kind", choices=KINDS)
    p.add_argument("--config", required=True, help="INI file with a section named after the kind")
    p.add_argument("--out", default=None, help="artifact directory (overrides the config)")
    p.add_argument("--jobs", type=int, default=1, help="worker processes")
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.jobs < 1:
        print("error: --jobs must be at least 1", file=sys.stderr)
        return 2
    try:
        cfg = load_config(args.config, args.kind, args.out)
    except ConfigInvalid as exc:
        for field_name, msg in sorted(exc.errors.items()):
            print(f"config error: {field_name}: {msg}", file=sys.stderr)
        return 2
    manifest = run(cfg, jobs=args.jobs)
    for job in manifest.jobs:
        if job["status"] != "ok":
            print(f"job {job['key']} failed: {job['error']}", file=sys.stderr)
    for c in manifest.checks:
        print(f"{'PASS' if c['passed'] else 'FAIL'}  {c['name']}  value={c['value']}  target {c['target']}")
    print(f"artifacts in {cfg.out}")
    return 0 if manifest.passed else 1


if __name__ == "__main__":
    sys.exit(main())

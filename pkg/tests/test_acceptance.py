"""Acceptance criteria, each run at its stated tolerance against configs/acceptance.ini.

Every criterion appends one PASS/FAIL line to the terminal summary.
"""

import time
from pathlib import Path

import numpy as np
import pytest

import conftest
from sublab.experiments import load_config, run
from sublab.phasespace import PhasePoint, frame, get_chart, poisson_bracket

CONFIG = Path(__file__).resolve().parents[1] / "configs" / "acceptance.ini"


@pytest.fixture(scope="module")
def runs(tmp_path_factory):
    cache = {}

    def get(kind):
        if kind not in cache:
            cfg = load_config(CONFIG, kind, str(tmp_path_factory.mktemp(kind)))
            t0 = time.perf_counter()
            m = run(cfg)
            cache[kind] = (cfg, m, time.perf_counter() - t0)
        return cache[kind]
    return get


def _report(num, label, ok, detail):
    conftest.ACCEPTANCE_LINES.append(f"criterion {num:>3} {'PASS' if ok else 'FAIL'}  {label}: {detail}")
    assert ok, detail


def _checks(m, prefix):
    return [c for c in m.checks if c["name"].startswith(prefix)]


def _jobs_ok(m):
    return all(j["status"] == "ok" for j in m.jobs)


def test_criterion_1_bracket_identities():
    t0 = time.perf_counter()
    worst = 0.0
    for name in ("flat", "bump"):
        ch = get_chart(name)
        pt = PhasePoint(*ch.sample(np.random.default_rng(11), 1000))
        h1, h2, h3 = frame(ch, *pt.coords())
        K = ch.curvature(pt.x, pt.y)
        worst = max(worst,
                    np.max(np.abs(poisson_bracket(ch, "H1", "H3", pt) - h2)),
                    np.max(np.abs(poisson_bracket(ch, "H2", "H3", pt) + h1)),
                    np.max(np.abs(poisson_bracket(ch, "H1", "H2", pt) + K * h3)))
    dt = time.perf_counter() - t0
    _report(1, "bracket identities", worst <= 1e-9 and dt < 1.0, f"max error {worst:.2e} (<= 1e-9), {dt:.2f}s (< 1s)")


def test_criterion_2_mathieu_asymptotics(runs):
    _, m, dt = runs("spectrum")
    cs = _checks(m, "error_ratio")
    ok = _jobs_ok(m) and len(cs) == 4 and all(c["passed"] for c in cs) and dt < 30
    ratios = {c["name"][-2:]: [round(v, 4) for v in c["value"]] for c in cs}
    _report(2, "Mathieu error ratio per 4x n", ok, f"ratios {ratios} (in [0.3, 0.7]), {dt:.1f}s (< 30s)")


def test_criterion_3_quasimode_rate(runs):
    _, m, dt = runs("quasimode-rate")
    cs = _checks(m, "slope")
    ok = _jobs_ok(m) and len(cs) == 3 and all(c["passed"] for c in cs) and dt < 30
    slopes = {c["name"][-2:]: round(c["value"]["slope"], 4) for c in cs}
    _report(3, "quasimode residual slope", ok, f"slopes {slopes} (in [-1.8, -1.2]), {dt:.1f}s (< 30s)")


def test_criterion_4_ladder_exactness(runs):
    _, m, dt = runs("ladder-check")
    c = _checks(m, "ladder_identities")[0]
    ok = _jobs_ok(m) and c["passed"] and c["value"] <= 1e-12 and dt < 1.0
    _report(4, "ladder identities", ok, f"max defect {c['value']:.2e} (<= 1e-12), {dt:.2f}s (< 1s)")


def test_criterion_5_level_concentration(runs):
    _, m, dt = runs("levels")
    cs = {c["name"]: c for c in m.checks}
    mass = cs["mass_at_nmax_k0"]
    mono = cs["mass_monotone_k0"]
    split = cs["parity_split_k0"]
    ok = _jobs_ok(m) and mass["passed"] and mono["passed"] and split["passed"] and dt < 60
    _report(5, "level concentration", ok,
            f"mass {mass['value']:.6f} (>= 0.95), monotone {mono['passed']}, "
            f"max split {max(split['value']):.2e} (<= 0.01), {dt:.1f}s (< 60s)")


def test_criterion_6_subcritical(runs):
    _, m, dt = runs("subcritical")
    cs = {c["name"]: c for c in m.checks}
    ok = _jobs_ok(m) and cs["mass_at_nmax"]["passed"] and cs["mass_monotone"]["passed"] and dt < 60
    _report(6, "subcritical mass", ok,
            f"masses {[round(v, 6) for v in cs['mass_monotone']['value']]} (last >= 0.9, increasing), "
            f"{dt:.1f}s (< 60s)")


def _nf(m, q):
    return [c for c in m.checks if c["name"].startswith(q)]


def test_criterion_7a_H1_residual_order(runs):
    _, m, dt = runs("normalform-check")
    cs = _nf(m, "residual_ratio") + _nf(m, "degree3_cancelled")
    vals = [v for c in _nf(m, "residual_ratio") for v in c["value"]]
    ok = _jobs_ok(m) and all(c["passed"] for c in cs) and dt < 5
    _report("7a", "H1 residual quartic order", ok,
            f"t-halving ratios in [{min(vals):.3f}, {max(vals):.3f}] (in [12, 20]), {dt:.2f}s (< 5s)")


def test_criterion_7b_symbol_defect_order(runs):
    _, m, dt = runs("normalform-check")
    dr = [v for c in _nf(m, "defect_ratio") for v in c["value"]]
    hd = [v for c in _nf(m, "defect_h1_doubling") for v in c["value"]]
    ok = _jobs_ok(m) and all(c["passed"] for c in _nf(m, "defect_")) and dt < 5
    _report("7b", "a-defect quadratic order", ok,
            f"t-halving ratios in [{min(dr):.3f}, {max(dr):.3f}] (in [3.5, 4.5]), "
            f"H1-doubling in [{min(hd):.3f}, {max(hd):.3f}] (in [0.4, 0.6]), {dt:.2f}s (< 5s)")


def test_criterion_8_invariance_trend(runs):
    _, m, dt = runs("invariance")
    cs = _checks(m, "defect_ratio")
    ok = _jobs_ok(m) and len(cs) == 2 and all(c["passed"] for c in cs) and dt < 60
    ratios = {c["name"][-5:]: [round(v, 4) for v in c["value"]] for c in cs}
    _report(8, "invariance defect ratio per doubling", ok, f"ratios {ratios} (< 0.8), {dt:.1f}s (< 60s)")


def test_criterion_9_apriori(runs):
    rows = []
    for kind in ("spectrum", "levels"):
        _, m, _ = runs(kind)
        rows += [r for j in m.jobs for r in j["rows"]]
    ok = bool(rows) and all(r["apriori_ok"] for r in rows)
    worst = max(r["apriori_lhs"] / r["apriori_rhs"] for r in rows)
    _report(9, "a priori estimate", ok, f"{len(rows)} eigenpairs, worst lhs/rhs {worst:.3e} (<= 1)")


def test_criterion_10_determinism(runs, tmp_path):
    kinds = ("spectrum", "quasimode-rate", "ladder-check", "levels", "subcritical", "invariance",
             "normalform-check")
    diffs = []
    for kind in kinds:
        cfg, m, _ = runs(kind)
        again = load_config(CONFIG, kind, str(tmp_path / kind))
        m2 = run(again, jobs=2)
        assert m2.config_hash == m.config_hash
        first = sorted(Path(cfg.out).glob("*.csv"))
        for f in first:
            if f.read_bytes() != (tmp_path / kind / f.name).read_bytes():
                diffs.append(f"{kind}/{f.name}")
        if len(first) != len(list((tmp_path / kind).glob("*.csv"))):
            diffs.append(f"{kind}: file count")
    _report(10, "byte-identical reruns", not diffs, f"{len(kinds)} configs, differing files {diffs or 'none'}")

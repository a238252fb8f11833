"""Configuration-driven experiment runner, trend fitting and artifact persistence.

A config is an INI file with one section per experiment kind::

    [spectrum]
    n = 256, 1024, 4096
    k = 0, 1, 2, 3
    out = runs/spectrum

Jobs inside a sweep are independent.  A failing job is recorded in the
manifest and does not abort its siblings.  All CSV floats are written with
``repr`` so reruns are byte-identical.
"""

from __future__ import annotations

import configparser
import csv
import hashlib
import io
import json
import math
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from importlib import metadata
from pathlib import Path
from typing import Callable

import numpy as np
from scipy import stats

from .errors import ConfigInvalid, NonPositiveValue

KINDS = ("spectrum", "quasimode-rate", "ladder-check", "levels", "subcritical",
         "invariance", "normalform-check")

MONOTONE_TOL = 1e-12


def fit_trend(series, model: str = "power-law") -> tuple[float, float]:
    """Log-log least-squares slope and its 95% confidence half-width."""
    if model != "power-law":
        raise ValueError(f"unsupported model {model!r}")
    pts = np.asarray(list(series), dtype=float)
    if pts.ndim != 2 or pts.shape[0] < 3:
        raise ValueError("need at least three (x, y) points")
    if np.any(pts <= 0):
        raise NonPositiveValue("power-law fit needs positive x and y")
    lx, ly = np.log(pts[:, 0]), np.log(pts[:, 1])
    fit = stats.linregress(lx, ly)
    dof = len(lx) - 2
    hw = float(stats.t.ppf(0.975, dof) * fit.stderr) if dof > 0 else 0.0
    return float(fit.slope), hw


# config parsing

def _ints(s: str) -> tuple[int, ...]:
    return tuple(int(v) for v in s.replace(",", " ").split())


def _floats(s: str) -> tuple[float, ...]:
    return tuple(float(v) for v in s.replace(",", " ").split())


def parse_series(text: str):
    """``"cos:1:0.2, sin:3:0.1, const:0:1"`` to a :class:`TrigSeries`; ``"0"`` is zero."""
    from .circle_spectral import TrigSeries

    text = text.strip()
    if text in ("", "0"):
        return TrigSeries()
    const, cos, sin = 0.0, {}, {}
    for item in text.split(","):
        kind, j, val = (p.strip() for p in item.split(":"))
        j, val = int(j), float(val)
        if kind == "const":
            const += val
        elif kind == "cos":
            cos[j] = cos.get(j, 0.0) + val
        elif kind == "sin":
            sin[j] = sin.get(j, 0.0) + val
        else:
            raise ValueError(f"unknown series term {kind!r}")
    return TrigSeries.from_cos_sin(const, cos, sin)


DEFAULTS: dict[str, dict[str, str]] = {
    "spectrum": {"k": "0, 1, 2, 3", "Q": "0", "W": "0", "h": "", "window": "0.3, 0.7"},
    "quasimode-rate": {"k": "0, 1, 2", "delta": "0.5", "window": "-1.8, -1.2"},
    "ladder-check": {"k": "0, 1, 2", "vectors": "3", "tol": "1e-12"},
    "levels": {"k": "0", "delta": "0.1", "bins": "401", "min_mass": "0.95", "split_tol": "0.01"},
    "subcritical": {"K": "", "min_mass": "0.9"},
    "invariance": {"lambda0": "1.0", "W": "0 | cos:1:0.2",
                   "g": "const:0:1, cos:1:0.5 | const:0:1, cos:1:0.5, sin:1:0.5", "max_ratio": "0.8"},
    "normalform-check": {"charts": "flat, bump", "t": "0.1, 0.05", "H1": "10", "points": "5",
                         "bracket_points": "1000", "a": "mixed", "bracket_tol": "1e-9",
                         "residual_window": "12, 20", "undeformed_window": "3.5, 4.5",
                         "defect_window": "3.5, 4.5", "doubling_window": "0.4, 0.6"},
}


@dataclass(frozen=True)
class ExperimentConfig:
    kind: str
    n: tuple
    params: dict = field(default_factory=dict)
    out: str = "runs"
    seed: int = 0

    def get(self, key: str) -> str:
        return self.params.get(key, DEFAULTS[self.kind].get(key, ""))

    def canonical(self) -> dict:
        merged = dict(DEFAULTS[self.kind])
        merged.update(self.params)
        return {"kind": self.kind, "n": list(self.n), "seed": self.seed,
                "params": dict(sorted(merged.items()))}

    def digest(self) -> str:
        blob = json.dumps(self.canonical(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()

    @classmethod
    def from_mapping(cls, kind: str, section: dict, out: str | None = None) -> "ExperimentConfig":
        errors: dict[str, str] = {}
        if kind not in KINDS:
            raise ConfigInvalid({"kind": f"unknown kind {kind!r}; expected one of {', '.join(KINDS)}"})
        section = {k: v for k, v in section.items()}
        n: tuple = ()
        try:
            n = _ints(section.pop("n", ""))
            if not n and kind != "normalform-check":
                errors["n"] = "n list is empty"
            elif any(v <= 0 for v in n):
                errors["n"] = "n values must be positive"
            elif any(b <= a for a, b in zip(n, n[1:])):
                errors["n"] = "n list must be strictly increasing"
        except ValueError as exc:
            errors["n"] = f"not a list of integers ({exc})"
        seed = 0
        try:
            seed = int(section.pop("seed", "0"))
        except ValueError:
            errors["seed"] = "seed must be an integer"
        out_dir = out or section.pop("out", f"runs/{kind}")
        section.pop("out", None)
        unknown = set(section) - set(DEFAULTS[kind])
        for key in sorted(unknown):
            errors[key] = "unknown parameter"
        cfg = cls(kind, n, {k: section[k] for k in sorted(section) if k not in unknown}, out_dir, seed)
        for key, msg in cfg._validate().items():
            errors.setdefault(key, msg)
        if errors:
            raise ConfigInvalid(errors)
        return cfg

    def _validate(self) -> dict[str, str]:
        errors: dict[str, str] = {}
        checks: dict[str, Callable[[str], None]] = {
            "k": lambda s: _nonneg(_ints(s)),
            "delta": lambda s: _positive(float(s)),
            "bins": lambda s: _at_least(int(s), 3),
            "vectors": lambda s: _at_least(int(s), 1),
            "points": lambda s: _at_least(int(s), 1),
            "bracket_points": lambda s: _at_least(int(s), 1),
            "t": lambda s: _positive(*_floats(s)),
            "H1": lambda s: _positive(float(s)),
            "lambda0": lambda s: _positive(float(s)),
            "h": lambda s: _positive(float(s)) if s.strip() else None,
            "K": lambda s: _at_least(int(s), 1) if s.strip() else None,
            "W": lambda s: [parse_series(p) for p in s.split("|")],
            "g": lambda s: [parse_series(p) for p in s.split("|")],
            "a": lambda s: _known(s.strip(), TEST_FUNCTIONS),
            "charts": lambda s: [_chart(c) for c in s.split(",")],
        }
        for key, fn in checks.items():
            if key in DEFAULTS[self.kind]:
                try:
                    fn(self.get(key))
                except (ValueError, KeyError) as exc:
                    errors[key] = str(exc) or "invalid value"
        if self.kind == "spectrum":
            series = {}
            for key in ("Q", "W"):
                try:
                    series[key] = parse_series(self.get(key))
                except ValueError as exc:
                    errors[key] = str(exc)
            if "Q" in series and series["Q"].sup() >= 1.0:
                errors["Q"] = f"sup|Q| = {series['Q'].sup():.6g} must be < 1"
            perturbed = any(not f.is_zero() for f in series.values())
            if perturbed and not self.get("h").strip():
                errors["h"] = "a perturbed spectrum needs h"
        if self.kind == "invariance" and "W" not in errors and "g" not in errors:
            if len(self.get("W").split("|")) != len(self.get("g").split("|")):
                errors["g"] = "one test function per W case"
        if self.kind in ("spectrum", "quasimode-rate", "levels", "subcritical", "invariance") and len(self.n) < 3:
            errors.setdefault("n", "trend checks need at least three values of n")
        if self.kind == "quasimode-rate" and len(self.n) >= 3:
            r = [b / a for a, b in zip(self.n, self.n[1:])]
            if not np.allclose(r, r[0]):
                errors["n"] = "n list must be geometric"
        return errors


def _nonneg(vals) -> None:
    if not vals or any(v < 0 for v in vals):
        raise ValueError("expected a nonempty list of nonnegative integers")


def _positive(*vals) -> None:
    if not vals or any(not v > 0 for v in vals):
        raise ValueError("expected positive values")


def _at_least(v: int, lo: int) -> None:
    if v < lo:
        raise ValueError(f"must be at least {lo}")


def _known(name: str, table: dict) -> None:
    if name not in table:
        raise ValueError(f"unknown name {name!r}")


def _chart(name: str):
    from .phasespace import get_chart
    return get_chart(name.strip())


def load_config(path, kind: str, out: str | None = None) -> ExperimentConfig:
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    try:
        with open(path) as fh:
            parser.read_file(fh)
    except (OSError, configparser.Error) as exc:
        raise ConfigInvalid({"config": str(exc)}) from exc
    if not parser.has_section(kind):
        raise ConfigInvalid({"kind": f"config has no [{kind}] section"})
    return ExperimentConfig.from_mapping(kind, dict(parser.items(kind)), out)


# jobs

def _test_function(name: str) -> Callable:
    return TEST_FUNCTIONS[name]


def _mixed(x, y, z):
    from . import jets
    return jets.sin(z) * jets.cos(x) + x * y


def _sin_z(x, y, z):
    from . import jets
    return jets.sin(z) + 0.0 * x


TEST_FUNCTIONS: dict[str, Callable] = {"mixed": _mixed, "sin_z": _sin_z}


def _job_spectrum(n: int, k: int, p: dict) -> dict:
    from .circle_spectral import apriori_check, assemble, eigensolve, mathieu_level, mathieu_operator, suggest_cutoff

    Q, W = parse_series(p["Q"]), parse_series(p["W"])
    if Q.is_zero() and W.is_zero():
        pair = mathieu_level((n, 0), k)
        op = mathieu_operator((n, 0), k=k)
        scaled = pair.eigenvalue * n / (2 * k + 1)
    else:
        op = assemble((n, 0), float(p["h"]), suggest_cutoff(n, k), Q=Q, W=W)
        pair = eigensolve(op, k + 1)[k]
        scaled = float("nan")
    rep = apriori_check(pair, op)
    row = {"n": n, "k": k, "M": op.M, "eigenvalue": pair.eigenvalue, "scaled": scaled,
           "error": abs(scaled - 1.0), "residual": pair.residual,
           "apriori_lhs": rep.lhs, "apriori_rhs": rep.rhs, "apriori_ok": int(rep.passed)}
    vec = [[int(m), float(np.real(c)), float(np.imag(c))] for m, c in zip(pair.modes, pair.eigenvector)]
    return {"rows": [row], "files": {f"spectrum_n{n}_k{k}.csv": (["m", "re", "im"], vec)}}


def _job_quasimode(n: int, k: int, p: dict) -> dict:
    from .circle_spectral import mathieu_operator
    from .quasimodes import build_quasimode, quasimode_residual

    v = build_quasimode(k, n, float(p["delta"]))
    r = quasimode_residual(mathieu_operator((n, 0), k=k), v)
    return {"rows": [{"n": n, "k": k, "energy": v.energy, "residual": r}]}


def _job_ladder(n: int, seed: int, p: dict) -> dict:
    from .circle_spectral import suggest_cutoff
    from .ladder import identity_defects, ladder_on_quasimode, ladder_pair
    from .quasimodes import build_quasimode

    rows = []
    rng = np.random.default_rng([seed, n])
    h = 1.0 / math.sqrt(n)
    pair = ladder_pair((n, 0), h, suggest_cutoff(n, 2))
    for i in range(int(p["vectors"])):
        u = np.zeros(pair.size, dtype=complex)
        u[3:-3] = rng.normal(size=pair.size - 6) + 1j * rng.normal(size=pair.size - 6)
        d = identity_defects(pair, u)
        rows.append({"n": n, "test": f"random{i}", "k": -1, "h": h, "factorization": d["factorization"],
                     "commutator": d["commutator"], "lowering": float("nan"), "raising": float("nan")})
    for k in _ints(p["k"]):
        hk = 1.0 / math.sqrt((2 * k + 1) * n)
        q = build_quasimode(k, n)
        lp = ladder_pair((n, 0), hk, suggest_cutoff(n, k + 2))
        rep = ladder_on_quasimode(lp, q)
        rows.append({"n": n, "test": "quasimode", "k": k, "h": hk, "factorization": float("nan"),
                     "commutator": float("nan"), "lowering": rep.lowering_defect, "raising": rep.raising_defect})
    return {"rows": rows}


def _job_levels(n: int, k: int, p: dict) -> dict:
    from .circle_spectral import apriori_check, mathieu_operator
    from .microlocal import level_experiment

    pair, h, marg, rep = level_experiment(n, k, float(p["delta"]), int(p["bins"]))
    ap = apriori_check(pair, mathieu_operator((n, 0), k=k))
    row = {"n": n, "k": k, "h": h, "eigenvalue": pair.eigenvalue, **rep.to_dict(),
           "captured_mass": rep.captured_mass, "apriori_lhs": ap.lhs, "apriori_rhs": ap.rhs,
           "apriori_ok": int(ap.passed)}
    hist = [[float(c), float(m)] for c, m in zip(marg.centers, marg.masses)]
    return {"rows": [row], "files": {f"levels_n{n}_k{k}.csv": (["E", "mass"], hist)}}


def _job_subcritical(n: int, K: int, p: dict) -> dict:
    from .microlocal import subcritical_experiment

    r = subcritical_experiment(n, K or None)
    return {"rows": [{"n": n, "K": r.K, "level": r.level, "h": r.h, "mass": r.mass}]}


def _job_invariance(n: int, case: int, p: dict) -> dict:
    from .circle_spectral import mathieu_level
    from .microlocal import invariance_defect, tuned_ground_state

    W = parse_series(p["W"].split("|")[case])
    g = parse_series(p["g"].split("|")[case])
    lam0 = float(p["lambda0"])
    c = (1 / math.sqrt(2), 1j / math.sqrt(2))
    if W.is_zero():
        u1, u2 = mathieu_level((n, 0), 0), mathieu_level((0, n), 0)
        J, h = (n, -n), 1.0 / (n * math.sqrt(u1.eigenvalue))
    else:
        u1, h, _ = tuned_ground_state((n, n), W, lam0)
        u2, _, _ = tuned_ground_state((n, -n), W, lam0)
        J = (0, 2 * n)
    test = {J: lambda z: 0.5 * g(z), (-J[0], -J[1]): lambda z: 0.5 * g(z)}
    d = invariance_defect([(c[0], u1), (c[1], u2)], test, W, lam0, h)
    d = d.real if isinstance(d, complex) else d
    return {"rows": [{"case": case, "n": n, "h": h, "defect": d, "abs_defect": abs(d)}]}


def _job_normalform(chart: str, seed: int, p: dict) -> dict:
    from .phasespace import PhasePoint, frame, get_chart, poisson_bracket
    from .symbolic import SymbolAlgebra, bracket_poly, build_H1_deformation, build_symbol_deformation, symbol_defect

    ch = get_chart(chart)
    rng = np.random.default_rng([seed, sum(map(ord, chart))])
    rows = []
    # bracket identities
    m = int(p["bracket_points"])
    pt = PhasePoint(*ch.sample(rng, m))
    h1, h2, h3 = frame(ch, *pt.coords())
    K = ch.curvature(pt.x, pt.y)
    errs = np.concatenate([np.abs(poisson_bracket(ch, "H1", "H3", pt) - h2),
                           np.abs(poisson_bracket(ch, "H2", "H3", pt) + h1),
                           np.abs(poisson_bracket(ch, "H1", "H2", pt) + K * h3)])
    rows.append({"chart": chart, "quantity": "bracket_max_error", "point": -1, "t": float("nan"),
                 "value": float(max(errs))})
    alg = SymbolAlgebra(ch)
    Z2 = alg.abs_Z2()
    H = build_H1_deformation(alg)
    R = bracket_poly(Z2, H)
    R0 = bracket_poly(Z2, alg.H1())
    deg3 = bracket_poly(Z2, alg.H1() + H.part(lambda k, l, w: k + l == 2)).part(lambda k, l, w: k + l == 3)
    rows.append({"chart": chart, "quantity": "degree3_after_P3", "point": -1, "t": float("nan"),
                 "value": float(len(R.part(lambda k, l, w: k + l == 3).terms))})
    rows.append({"chart": chart, "quantity": "degree3_before_P3", "point": -1, "t": float("nan"),
                 "value": float(len(deg3.terms))})
    D = symbol_defect(build_symbol_deformation(_test_function(p["a"]), alg))
    H1 = float(p["H1"])
    r = 0.5 * ch.radius
    for j in range(int(p["points"])):
        bx, by = rng.uniform(-r, r, 2) / math.sqrt(2)
        bz, th = rng.uniform(0, 2 * math.pi, 2)

        def at(F, t, h1=H1):
            return abs(F.evaluate_at(bx, by, bz, h1, t * h1 * math.cos(th), t * h1 * math.sin(th)))
        for t in _floats(p["t"]):
            for name, val in (("residual_ratio", at(R, t) / at(R, t / 2)),
                              ("undeformed_ratio", at(R0, t) / at(R0, t / 2)),
                              ("defect_ratio", at(D, t) / at(D, t / 2)),
                              ("defect_h1_doubling", at(D, t, 2 * H1) / at(D, t, H1))):
                rows.append({"chart": chart, "quantity": name, "point": j, "t": t, "value": float(val)})
    return {"rows": rows}


JOBS: dict[str, Callable] = {
    "spectrum": _job_spectrum, "quasimode-rate": _job_quasimode, "ladder-check": _job_ladder,
    "levels": _job_levels, "subcritical": _job_subcritical, "invariance": _job_invariance,
    "normalform-check": _job_normalform,
}


def _job_keys(cfg: ExperimentConfig) -> list[tuple]:
    kind = cfg.kind
    if kind in ("spectrum", "quasimode-rate", "levels"):
        return [(n, k) for k in _ints(cfg.get("k")) for n in cfg.n]
    if kind == "ladder-check":
        return [(n, cfg.seed) for n in cfg.n]
    if kind == "subcritical":
        K = cfg.get("K").strip()
        return [(n, int(K) if K else 0) for n in cfg.n]
    if kind == "invariance":
        return [(n, c) for c in range(len(cfg.get("W").split("|"))) for n in cfg.n]
    return [(c.strip(), cfg.seed) for c in cfg.get("charts").split(",")]


def _run_job(kind: str, key: tuple, params: dict) -> dict:
    try:
        out = JOBS[kind](*key, params)
        out["status"] = "ok"
    except Exception as exc:  # isolate failures per job
        out = {"status": "error", "rows": [], "error": f"{type(exc).__name__}: {exc}",
               "traceback": traceback.format_exc(limit=3)}
    out["key"] = list(key)
    return out


# checks

def _check(name: str, value, passed: bool, target: str) -> dict:
    return {"name": name, "value": value, "target": target, "passed": bool(passed)}


def _window(s: str) -> tuple[float, float]:
    lo, hi = _floats(s)
    return lo, hi


def _nondecreasing(vals) -> bool:
    return all(b >= a - MONOTONE_TOL for a, b in zip(vals, vals[1:]))


def _rows_by(rows, key):
    out: dict = {}
    for r in rows:
        out.setdefault(r[key], []).append(r)
    return out


def evaluate_checks(cfg: ExperimentConfig, rows: list[dict]) -> list[dict]:
    kind, checks = cfg.kind, []
    if kind == "spectrum":
        lo, hi = _window(cfg.get("window"))
        for k, rs in sorted(_rows_by(rows, "k").items()):
            rs = sorted(rs, key=lambda r: r["n"])
            ratios = [b["error"] / a["error"] for a, b in zip(rs, rs[1:])]
            checks.append(_check(f"error_ratio_k{k}", ratios,
                                 len(rs) == len(cfg.n) and all(lo <= q <= hi for q in ratios), f"[{lo}, {hi}]"))
        checks.append(_check("apriori", [r["apriori_ok"] for r in rows],
                             bool(rows) and all(r["apriori_ok"] for r in rows), "all pass"))
    elif kind == "quasimode-rate":
        lo, hi = _window(cfg.get("window"))
        for k, rs in sorted(_rows_by(rows, "k").items()):
            rs = sorted(rs, key=lambda r: r["n"])
            ok = len(rs) == len(cfg.n)
            slope, hw = fit_trend([(r["n"], r["residual"]) for r in rs]) if ok else (float("nan"), 0.0)
            checks.append(_check(f"slope_k{k}", {"slope": slope, "halfwidth": hw}, ok and lo <= slope <= hi,
                                 f"[{lo}, {hi}]"))
    elif kind == "ladder-check":
        tol = float(cfg.get("tol"))
        rand = [r for r in rows if r["test"].startswith("random")]
        worst = max([max(r["factorization"], r["commutator"]) for r in rand], default=float("inf"))
        checks.append(_check("ladder_identities", worst, len({r["n"] for r in rand}) == len(cfg.n) and worst <= tol,
                             f"<= {tol}"))
    elif kind == "levels":
        mmin, stol = float(cfg.get("min_mass")), float(cfg.get("split_tol"))
        for k, rs in sorted(_rows_by(rows, "k").items()):
            rs = sorted(rs, key=lambda r: r["n"])
            masses = [r["captured_mass"] for r in rs]
            full = len(rs) == len(cfg.n)
            checks.append(_check(f"mass_at_nmax_k{k}", masses[-1], full and masses[-1] >= mmin, f">= {mmin}"))
            checks.append(_check(f"mass_monotone_k{k}", masses, full and _nondecreasing(masses), "non-decreasing"))
            split = [abs(r["captured_mass_plus"] - r["captured_mass_minus"]) for r in rs]
            checks.append(_check(f"parity_split_k{k}", split, full and max(split) <= stol, f"<= {stol}"))
        checks.append(_check("apriori", [r["apriori_ok"] for r in rows],
                             bool(rows) and all(r["apriori_ok"] for r in rows), "all pass"))
    elif kind == "subcritical":
        mmin = float(cfg.get("min_mass"))
        rs = sorted(rows, key=lambda r: r["n"])
        masses = [r["mass"] for r in rs]
        full = len(rs) == len(cfg.n)
        checks.append(_check("mass_at_nmax", masses[-1] if masses else None, full and masses[-1] >= mmin, f">= {mmin}"))
        checks.append(_check("mass_monotone", masses, full and _nondecreasing(masses), "non-decreasing"))
    elif kind == "invariance":
        mr = float(cfg.get("max_ratio"))
        for case, rs in sorted(_rows_by(rows, "case").items()):
            rs = sorted(rs, key=lambda r: r["n"])
            ratios = [b["abs_defect"] / a["abs_defect"] if a["abs_defect"] > 0 else float("inf")
                      for a, b in zip(rs, rs[1:])]
            checks.append(_check(f"defect_ratio_case{case}", ratios,
                                 len(rs) == len(cfg.n) and all(q < mr for q in ratios), f"< {mr}"))
    else:
        windows = {q: _window(cfg.get(w)) for q, w in (
            ("residual_ratio", "residual_window"), ("undeformed_ratio", "undeformed_window"),
            ("defect_ratio", "defect_window"), ("defect_h1_doubling", "doubling_window"))}
        tol = float(cfg.get("bracket_tol"))
        charts = [c.strip() for c in cfg.get("charts").split(",")]
        for chart in charts:
            rs = [r for r in rows if r["chart"] == chart]
            b = [r["value"] for r in rs if r["quantity"] == "bracket_max_error"]
            checks.append(_check(f"brackets_{chart}", b[0] if b else None, bool(b) and b[0] <= tol, f"<= {tol}"))
            d3 = [r["value"] for r in rs if r["quantity"] == "degree3_after_P3"]
            checks.append(_check(f"degree3_cancelled_{chart}", d3[0] if d3 else None, bool(d3) and d3[0] == 0, "== 0"))
            for q, (lo, hi) in windows.items():
                vals = [r["value"] for r in rs if r["quantity"] == q]
                checks.append(_check(f"{q}_{chart}", vals, bool(vals) and all(lo <= v <= hi for v in vals),
                                     f"[{lo}, {hi}]"))
    return checks


# artifacts

def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(path, header: list[str], rows: list) -> None:
    """Rows are dicts keyed by ``header`` or plain sequences."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        vals = [r.get(h, "") for h in header] if isinstance(r, dict) else r
        w.writerow([_fmt(v) for v in vals])
    Path(path).write_text(buf.getvalue())


_PLOTS = {
    "spectrum": ("n", "error", "k", True),
    "quasimode-rate": ("n", "residual", "k", True),
    "levels": ("n", "captured_mass", "k", False),
    "subcritical": ("n", "mass", None, False),
    "invariance": ("n", "abs_defect", "case", True),
}


def _gp_script(kind: str, header: list[str]) -> str | None:
    if kind not in _PLOTS:
        return None
    x, y, _, logy = _PLOTS[kind]
    xi, yi = header.index(x) + 1, header.index(y) + 1
    lines = ["set datafile separator ','", "set key off", "set logscale x",
             f"set xlabel '{x}'", f"set ylabel '{y}'"]
    if logy:
        lines.append("set logscale y")
    lines += ["set terminal pngcairo size 800,600", f"set output '{kind}.png'",
              f"plot '{kind}.csv' every ::1 using {xi}:{yi} with linespoints pt 7"]
    return "\n".join(lines) + "\n"


def _json_safe(v):
    if isinstance(v, float) and not math.isfinite(v):
        return repr(v)
    if isinstance(v, (np.floating,)):
        return _json_safe(float(v))
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, dict):
        return {k: _json_safe(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_json_safe(x) for x in v]
    return v


def _version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "0+unknown"


@dataclass
class RunManifest:
    kind: str
    config_hash: str
    version: str
    jobs: list
    checks: list
    out: str

    @property
    def passed(self) -> bool:
        return bool(self.checks) and all(c["passed"] for c in self.checks) and \
            all(j["status"] == "ok" for j in self.jobs)

    def to_dict(self) -> dict:
        return _json_safe({"kind": self.kind, "config_hash": self.config_hash, "version": self.version,
                           "jobs": self.jobs, "checks": self.checks, "passed": self.passed})

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


def run(config: ExperimentConfig, jobs: int = 1, write: bool = True) -> RunManifest:
    """Execute every job of ``config``, evaluate checks and write artifacts."""
    keys = _job_keys(config)
    params = {k: config.get(k) for k in DEFAULTS[config.kind]}
    if jobs > 1 and len(keys) > 1:
        with ProcessPoolExecutor(max_workers=min(jobs, len(keys))) as ex:
            futs = [ex.submit(_run_job, config.kind, key, params) for key in keys]
            results = [f.result() for f in futs]
    else:
        results = [_run_job(config.kind, key, params) for key in keys]
    results.sort(key=lambda r: tuple(r["key"]))
    rows = [row for r in results for row in r["rows"]]
    checks = evaluate_checks(config, rows)
    job_records = [{"key": r["key"], "status": r["status"], "rows": r["rows"],
                    **({"error": r["error"]} if r["status"] != "ok" else {})} for r in results]
    manifest = RunManifest(config.kind, config.digest(), _version(), job_records, checks, config.out)
    if write:
        out = Path(config.out)
        out.mkdir(parents=True, exist_ok=True)
        if rows:
            header = list(rows[0])
            for r in rows:
                header += [h for h in r if h not in header]
            write_csv(out / f"{config.kind}.csv", header, rows)
            gp = _gp_script(config.kind, header)
            if gp:
                (out / f"{config.kind}.gp").write_text(gp)
        for r in results:
            for name, (hdr, data) in sorted(r.get("files", {}).items()):
                write_csv(out / name, hdr, data)
        (out / "manifest.json").write_text(manifest.to_json())
    return manifest

"""Frame Hamiltonians of an isothermal chart, exact Poisson brackets, cutoffs and cones.

Phase space coordinates are ``(x, y, z, xi, eta, zeta)`` with ``(x, y)`` in a
conformal chart ``e^{2 lam}(dx^2 + dy^2)`` of the surface, ``z`` the angle of
the unit tangent vector and ``(xi, eta, zeta)`` the dual momenta.  Every
function here is written generically so that it accepts floats, numpy arrays
or :class:`~sublab.jets.Jet` objects.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.special import expit

from . import jets
from .jets import Jet

TWO_PI = 2.0 * np.pi


class ConformalChart:
    """Conformal factor ``lam(x, y)`` with hand-coded first and second derivatives.

    Subclasses implement :meth:`lam`, :meth:`grad` and :meth:`hess`; all three
    must accept jets so that curvature and its derivatives can be
    differentiated further.
    """

    name = "chart"
    flat = False
    radius = 1.0

    def lam(self, x, y):
        raise NotImplementedError

    def grad(self, x, y):
        raise NotImplementedError

    def hess(self, x, y):
        raise NotImplementedError

    def curvature(self, x, y):
        lxx, _, lyy = self.hess(x, y)
        return -jets.exp(-2.0 * self.lam(x, y)) * (lxx + lyy)

    def k_plus(self, x, y):
        return 0.5 * (1.0 + self.curvature(x, y))

    def k_minus(self, x, y):
        return 0.5 * (1.0 - self.curvature(x, y))

    def sample(self, rng: np.random.Generator, size: int, pmax: float = 10.0):
        """Random phase points well inside the chart domain, as six arrays."""
        r = 0.8 * self.radius * np.sqrt(rng.uniform(0, 1, size))
        th = rng.uniform(0, TWO_PI, size)
        x, y = r * np.cos(th), r * np.sin(th)
        z = rng.uniform(0, TWO_PI, size)
        p = rng.uniform(-pmax, pmax, (3, size))
        return x, y, z, p[0], p[1], p[2]

    def fd_check(self, x: float, y: float, step: float = 1e-4) -> tuple[float, float]:
        """Largest deviation of grad and hess from central differences."""
        def g(f, x, y):
            fx = (f(x + step, y) - f(x - step, y)) / (2 * step)
            fy = (f(x, y + step) - f(x, y - step)) / (2 * step)
            return fx, fy

        lx, ly = self.grad(x, y)
        fx, fy = g(self.lam, x, y)
        gerr = max(abs(lx - fx), abs(ly - fy))
        lxx, lxy, lyy = self.hess(x, y)
        gxx, gxy = g(lambda a, b: self.grad(a, b)[0], x, y)
        _, gyy = g(lambda a, b: self.grad(a, b)[1], x, y)
        herr = max(abs(lxx - gxx), abs(lxy - gxy), abs(lyy - gyy))
        return float(gerr), float(herr)

    def __repr__(self) -> str:
        return f"<ConformalChart {self.name}>"


class FlatChart(ConformalChart):
    name = "flat"
    flat = True
    radius = np.pi

    def lam(self, x, y):
        return 0.0 * x

    def grad(self, x, y):
        return 0.0 * x, 0.0 * y

    def hess(self, x, y):
        return 0.0 * x, 0.0 * x, 0.0 * y

    def curvature(self, x, y):
        return 0.0 * x

    def k_plus(self, x, y):
        return 0.5 + 0.0 * x

    def k_minus(self, x, y):
        return 0.5 + 0.0 * x


class BumpChart(ConformalChart):
    """``lam = a exp(-1/(1 - (x^2+y^2)/r^2))`` inside the disk of radius ``r``, zero outside."""

    def __init__(self, a: float = 1.0, r: float = 1.0):
        self.a = float(a)
        self.radius = float(r)
        self.name = f"bump({self.a:g},{self.radius:g})"

    def _parts(self, x, y):
        r2 = self.radius ** 2
        rho = (x * x + y * y) / r2
        inside = jets.primal(rho) < 1.0
        s = jets.where(inside, 1.0 - rho, 1.0)
        f = jets.where(inside, self.a * jets.exp(-1.0 / s), 0.0)
        return inside, s, f, r2

    def lam(self, x, y):
        return self._parts(x, y)[2]

    def grad(self, x, y):
        inside, s, f, r2 = self._parts(x, y)
        g = f / (s * s)
        return g * (-2.0 * x / r2), g * (-2.0 * y / r2)

    def hess(self, x, y):
        inside, s, f, r2 = self._parts(x, y)
        g = f / (s * s)
        dg = f * (1.0 - 2.0 * s) / s ** 4
        sx, sy = -2.0 * x / r2, -2.0 * y / r2
        return dg * sx * sx - 2.0 * g / r2, dg * sx * sy, dg * sy * sy - 2.0 * g / r2


_BUMP = re.compile(r"^bump(?:\(\s*([-+0-9.eE]+)\s*,\s*([-+0-9.eE]+)\s*\))?$")


def get_chart(name: str) -> ConformalChart:
    """Registry lookup: ``flat``, ``bump`` or ``bump(a,r)``."""
    name = name.strip()
    if name == "flat":
        return FlatChart()
    m = _BUMP.match(name)
    if m:
        if m.group(1) is None:
            return BumpChart()
        return BumpChart(float(m.group(1)), float(m.group(2)))
    raise KeyError(f"unknown chart {name!r}")


@dataclass(frozen=True)
class PhasePoint:
    x: float
    y: float
    z: float
    xi: float
    eta: float
    zeta: float

    def __post_init__(self):
        object.__setattr__(self, "z", np.mod(self.z, TWO_PI))

    def coords(self) -> tuple:
        return (self.x, self.y, self.z, self.xi, self.eta, self.zeta)


@dataclass(frozen=True)
class PhaseJet:
    """Value and exact gradient ``(d_x, d_y, d_z, d_xi, d_eta, d_zeta)``."""

    value: np.ndarray
    grad: np.ndarray


def frame(chart: ConformalChart, x, y, z, xi, eta, zeta):
    """``(H1, H2, H3)`` as generic expressions."""
    lx, ly = chart.grad(x, y)
    e = jets.exp(-chart.lam(x, y))
    c, s = jets.cos(z), jets.sin(z)
    h1 = e * (xi * c + eta * s + zeta * (ly * c - lx * s))
    h2 = e * (xi * s - eta * c + zeta * (lx * c + ly * s))
    h3 = zeta + 0.0 * e
    return h1, h2, h3


def _to_phasejet(val, der, shape) -> PhaseJet:
    grad = np.stack([np.broadcast_to(np.asarray(d, dtype=np.result_type(d, float)), shape) for d in der])
    return PhaseJet(np.asarray(val), grad)


def phase_jet(fn: Callable, coords) -> PhaseJet:
    """Evaluate a phase function and its exact gradient at ``coords``."""
    val, der = jets.value_and_grad(fn, coords)
    shape = np.broadcast(*[np.asarray(c) for c in coords]).shape
    return _to_phasejet(val, der, shape)


def eval_frame(chart: ConformalChart, pt: PhasePoint) -> tuple[PhaseJet, PhaseJet, PhaseJet]:
    coords = pt.coords()
    shape = np.broadcast(*[np.asarray(c) for c in coords]).shape
    tag = jets.new_tag()
    out = frame(chart, *jets.seed(coords, tag))
    res = []
    for h in out:
        if isinstance(h, Jet) and h.tag == tag:
            res.append(_to_phasejet(h.val, h.der, shape))
        else:
            res.append(_to_phasejet(h, (0,) * 6, shape))
    return tuple(res)


def frame_function(chart: ConformalChart, which: str) -> Callable:
    idx = {"H1": 0, "H2": 1, "H3": 2}[which]
    return lambda *c: frame(chart, *c)[idx]


def poisson_bracket(chart: ConformalChart, f, g, pt: PhasePoint):
    """``sum_j (d_pj f d_qj g - d_qj f d_pj g)``; ``f``/``g`` are callables or ``'H1'``..``'H3'``."""
    if isinstance(f, str):
        f = frame_function(chart, f)
    if isinstance(g, str):
        g = frame_function(chart, g)
    fj = phase_jet(f, pt.coords())
    gj = phase_jet(g, pt.coords())
    return sum(fj.grad[3 + j] * gj.grad[j] - fj.grad[j] * gj.grad[3 + j] for j in range(3))


def chi(t):
    """Smooth even cutoff: 1 on ``[-1, 1]``, 0 outside ``[-2, 2]``, monotone in between."""
    if isinstance(t, Jet):
        if isinstance(t.val, Jet):
            raise NotImplementedError("chi supports a single level of differentiation")
        d = chi_prime(t.val)
        return Jet(chi(t.val), [0 if jets._iszero(x) else d * x for x in t.der], t.tag)
    s = np.abs(np.asarray(t, dtype=float))
    out = np.atleast_1d((s <= 1.0).astype(float))
    s1 = np.atleast_1d(s)
    mid = (s1 > 1.0) & (s1 < 2.0)
    sm = s1[mid]
    out[mid] = expit(1.0 / (sm - 1.0) - 1.0 / (2.0 - sm))
    return out.reshape(s.shape) if s.ndim else float(out[0])


def chi_prime(t):
    t = np.asarray(t, dtype=float)
    s = np.abs(t)
    mid = (s > 1.0) & (s < 2.0)
    sm = np.where(mid, s, 1.5)
    c = expit(1.0 / (sm - 1.0) - 1.0 / (2.0 - sm))
    ds = -c * (1.0 - c) * (1.0 / (sm - 1.0) ** 2 + 1.0 / (2.0 - sm) ** 2)
    out = np.where(mid, np.sign(t) * ds, 0.0)
    return out if out.ndim else float(out)


def tilde_chi(t):
    return 1.0 - chi(t)


@dataclass(frozen=True)
class CutoffFamily:
    """Ball scale ``R``, cone scale ``eps`` and E scale ``R1`` (``h`` enters only ``rho``)."""

    R: float = 2.0
    eps: float = 0.5
    R1: float = 2.0
    h: float = 1.0

    def __post_init__(self):
        if not self.R > 1.0:
            raise ValueError("R must exceed 1")
        if not 0.0 < self.eps < 1.0:
            raise ValueError("eps must lie in (0, 1)")
        if not self.R1 > 1.0:
            raise ValueError("R1 must exceed 1")

    def ball(self, h1, h2, h3):
        return chi((h1 * h1 + h2 * h2 + h3 * h3) / self.R)

    def cone(self, h1, h2, h3):
        return chi(self.eps * h1 / jets.sqrt(1.0 + h2 * h2 + h3 * h3))

    def rho(self, h1):
        return tilde_chi(self.h * h1 / self.R1)


CUTOFFS = ("chi", "chiB_R", "chiC_eps", "rho_R1")


def cutoff_eval(family: CutoffFamily, which: str, arg, chart: ConformalChart | None = None):
    """Evaluate a named cutoff; prefix ``tilde_`` for the complementary function.

    ``arg`` is a scalar for ``chi`` and a :class:`PhasePoint` otherwise.
    """
    tilde = which.startswith("tilde_")
    base = which[6:] if tilde else which
    if base not in CUTOFFS:
        raise KeyError(f"unknown cutoff {which!r}")
    if base == "chi":
        v = chi(arg)
    else:
        h1, h2, h3 = frame(chart or FlatChart(), *arg.coords())
        if base == "chiB_R":
            v = family.ball(h1, h2, h3)
        elif base == "chiC_eps":
            v = family.cone(h1, h2, h3)
        else:
            v = family.rho(h1)
    return 1.0 - v if tilde else v


def in_cone(chart: ConformalChart, pt: PhasePoint, eps: float):
    if not 0.0 < eps <= 1.0:
        raise ValueError("eps must lie in (0, 1]")
    h1, h2, h3 = frame(chart, *pt.coords())
    return eps * np.abs(h1) >= np.sqrt(1.0 + h2 * h2 + h3 * h3)


def norm_constant(chart: ConformalChart, npts: int = 201) -> float:
    """``C0`` with ``C0^{-1}|p|^2 <= H1^2+H2^2+H3^2 <= C0|p|^2`` from C^1 bounds of ``lam``."""
    r = 0.8 * chart.radius
    g = np.linspace(-r, r, npts)
    x, y = np.meshgrid(g, g)
    mask = x * x + y * y <= r * r
    lam = np.asarray(chart.lam(x, y) + 0.0 * x)[mask]
    lx, ly = (np.asarray(v + 0.0 * x)[mask] for v in chart.grad(x, y))
    lmax = float(np.max(np.abs(lam)))
    gmax = float(np.max(np.hypot(lx, ly)))
    upper = np.exp(lmax) * (1.0 + gmax) + 1.0
    lower = np.exp(lmax) + gmax + 1.0
    return float(max(upper, lower) ** 2)

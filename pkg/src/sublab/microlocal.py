"""Circle Weyl quantization, E-marginals of separable modes and level diagnostics.

A separable mode ``psi = u(z) e^{i n.(x,y)} / (2 pi)`` on the flat torus has
``h H1 = E(z) = h^2 (n1 cos z + n2 sin z)``, ``H2 = h(n1 sin z - n2 cos z)``
and ``H3 = zeta``, the semiclassical circle momentum.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np
from scipy.optimize import brentq

from .circle_spectral import (SpectralPair, TrigSeries, assemble, eigensolve, mathieu_operator,
                              semiclassical_h, suggest_cutoff)
from .errors import DegenerateLevel, NotDegenerate, QuadratureFailure
from .phasespace import CutoffFamily, chi, tilde_chi

DECAY_TOL = 1e-12


@dataclass(frozen=True)
class CircleSymbol:
    """``a(z, zeta)``, vectorized in both arguments."""

    fn: Callable
    real: bool = True

    @classmethod
    def factorized(cls, b: Callable, c: Callable) -> "CircleSymbol":
        return cls(lambda z, zeta: b(z) * c(zeta))

    def __call__(self, z, zeta):
        return self.fn(z, zeta)


def _symbol_coefficients(symbol: Callable, zetas: np.ndarray, jmax: int, nz: int | None = None) -> np.ndarray:
    """``ahat[s, j + jmax]`` = j-th z-Fourier coefficient of ``symbol(., zetas[s])``.

    The z-grid is refined until coefficients in the upper half of the resolved
    range fall below ``DECAY_TOL`` relative to the largest one.
    """
    nz = nz or max(256, 1 << int(math.ceil(math.log2(4 * jmax + 4))))
    while True:
        z = 2 * np.pi * np.arange(nz) / nz
        out = np.empty((len(zetas), 2 * jmax + 1), dtype=complex)
        tail = 0.0
        scale = 0.0
        chunk = max(1, (1 << 22) // nz)
        for lo in range(0, len(zetas), chunk):
            zz = zetas[lo:lo + chunk]
            vals = np.asarray(symbol(z[None, :], zz[:, None]), dtype=complex)
            vals = np.broadcast_to(vals, (len(zz), nz))
            f = np.fft.fft(vals, axis=1) / nz
            absf = np.abs(f)
            scale = max(scale, float(absf.max()))
            k = np.arange(nz)
            kk = np.minimum(k, nz - k)
            tail = max(tail, float(absf[:, kk >= nz // 4].max()))
            j = np.arange(-jmax, jmax + 1)
            out[lo:lo + chunk] = f[:, j % nz]
        if tail <= DECAY_TOL * max(scale, 1e-300) or scale == 0.0:
            return out
        if nz >= 1 << 16:
            raise QuadratureFailure(f"symbol Fourier coefficients stall at {tail / scale:.2e}")
        nz *= 2


def weyl_circle(symbol, h: float, M: int) -> np.ndarray:
    """Matrix ``A[m', m] = ahat_{m'-m}(h (m + m') / 2)`` on ``|m| <= M``."""
    if not h > 0:
        raise ValueError("h must be positive")
    fn = symbol.fn if isinstance(symbol, CircleSymbol) else symbol
    s = np.arange(-2 * M, 2 * M + 1)
    ahat = _symbol_coefficients(fn, h * s / 2.0, 2 * M)
    tail = np.abs(ahat[:, np.abs(np.arange(-2 * M, 2 * M + 1)) >= M])
    if tail.size and tail.max() > DECAY_TOL * max(np.abs(ahat).max(), 1e-300):
        raise QuadratureFailure("symbol Fourier coefficients do not decay by index M")
    m = np.arange(-M, M + 1)
    mp, mm = np.meshgrid(m, m, indexing="ij")
    return ahat[mp + mm + 2 * M, mp - mm + 2 * M]


def _support(u: np.ndarray, rel: float = 1e-17) -> tuple[int, int]:
    a = np.abs(u)
    idx = np.nonzero(a > rel * a.max())[0]
    return int(idx[0]), int(idx[-1])


def weyl_pairing(fn: Callable, h: float, u: np.ndarray) -> complex:
    """``<Op^w(a) u, u>`` without forming the matrix."""
    M = (len(u) - 1) // 2
    lo, hi = _support(u)
    v = u[lo:hi + 1]
    ma, L = lo - M, hi - lo
    occupied = (np.abs(v) > 0).astype(float)
    hit = np.convolve(occupied, occupied) > 0.5
    s = np.arange(2 * ma, 2 * ma + 2 * L + 1)[hit]
    ahat = _symbol_coefficients(fn, h * s / 2.0, L)
    total = 0.0 + 0.0j
    for si, sv in enumerate(s):
        # m and m' = s - m both inside [ma, ma + L]
        m_lo = max(ma, sv - ma - L)
        m_hi = min(ma + L, sv - ma)
        if m_lo > m_hi:
            continue
        m = np.arange(m_lo, m_hi + 1)
        j = sv - 2 * m
        total += np.sum(np.conj(v[sv - m - ma]) * v[m - ma] * ahat[si, j + L])
    return complex(total)


def _mode_frame(n, h):
    n1, n2 = n

    def parts(z, zeta):
        h1 = h * (n1 * np.cos(z) + n2 * np.sin(z))
        h2 = h * (n1 * np.sin(z) - n2 * np.cos(z))
        return h1, h2, zeta
    return parts


def lifted_symbol(n, b: Callable, cutoffs: CutoffFamily, h: float) -> Callable:
    """``b(E) rho~(E) chi~_eps^C chi~_R^B`` in circle variables."""
    parts = _mode_frame(n, h)

    def kappa(z, zeta):
        h1, h2, h3 = parts(z, zeta)
        E = h * h1
        q = h2 * h2 + h3 * h3
        return (b(E) * chi(E / cutoffs.R1) * tilde_chi(cutoffs.eps * h1 / np.sqrt(1.0 + q))
                * tilde_chi((h1 * h1 + q) / cutoffs.R))
    return kappa


@dataclass(frozen=True)
class PairingResult:
    value: float
    surrogate: float
    gap: float


def _as_family(cutoffs, h) -> CutoffFamily:
    if isinstance(cutoffs, CutoffFamily):
        return cutoffs
    R, eps, R1 = cutoffs
    return CutoffFamily(R, eps, R1, h)


def schedule(n_norm: float, h: float) -> CutoffFamily:
    """Cutoff schedule ``R = n^{1/2}``, ``eps = n^{-1/8}`` with a large ``R1``."""
    return CutoffFamily(R=max(math.sqrt(n_norm), 1.0 + 1e-9), eps=min(n_norm ** -0.125, 0.999), R1=1e6, h=h)


def _grid_values(u: np.ndarray, nz: int):
    """``u`` on ``z_j = 2 pi j / nz`` by inverse FFT."""
    M = (len(u) - 1) // 2
    if nz < 2 * M + 1:
        raise ValueError("grid too coarse for the vector")
    buf = np.zeros(nz, dtype=complex)
    m = np.arange(-M, M + 1)
    buf[m % nz] = u
    return np.fft.ifft(buf) * nz / math.sqrt(2 * np.pi)


def surrogate_pairing(state: SpectralPair, b: Callable, h: float, nz: int | None = None) -> float:
    u = np.asarray(state.eigenvector)
    nz = nz or max(4096, 1 << int(math.ceil(math.log2(4 * len(u)))))
    z = 2 * np.pi * np.arange(nz) / nz
    w = np.abs(_grid_values(u, nz)) ** 2
    n1, n2 = state.n
    E = h * h * (n1 * np.cos(z) + n2 * np.sin(z))
    return float(np.sum(b(E) * w) * 2 * np.pi / nz)


def lifted_pairing(state: SpectralPair, b: Callable, cutoffs, h: float) -> PairingResult:
    fam = _as_family(cutoffs, h)
    val = weyl_pairing(lifted_symbol(state.n, b, fam, h), h, np.asarray(state.eigenvector))
    sur = surrogate_pairing(state, b, h)
    return PairingResult(float(val.real), sur, float(val.real) - sur)


class _CumulativeMass:
    """Exact ``G(w) = int_0^w |u(z_n + s)|^2 ds`` from the Fourier autocorrelation."""

    def __init__(self, u: np.ndarray, z_n: float):
        lo, hi = _support(u)
        v = u[lo:hi + 1]
        L = len(v) - 1
        d = np.convolve(v, np.conj(v[::-1]))  # d[j + L] = sum_m v_m conj(v_{m-j})
        self.j = np.arange(-L, L + 1)
        self.d = d * np.exp(1j * self.j * z_n) / (2 * np.pi)
        self.d0 = float(self.d[L].real)
        self.nz = self.j != 0

    def __call__(self, w):
        w = np.atleast_1d(np.asarray(w, dtype=float))
        j = self.j[self.nz]
        ph = (np.exp(1j * np.multiply.outer(w, j)) - 1.0) / (1j * j)
        return self.d0 * w + (ph @ self.d[self.nz]).real


@dataclass(frozen=True, eq=False)
class EMarginal:
    edges: np.ndarray
    masses: np.ndarray
    amplitude: float
    cdf: Callable | None = field(default=None, repr=False)

    @property
    def total_mass(self) -> float:
        return float(np.sum(self.masses))

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.edges[1:] + self.edges[:-1])

    def interval_mass(self, e1: float, e2: float) -> float:
        """Mass of ``e1 <= E <= e2``, exact when the state is attached."""
        if e2 < e1:
            return 0.0
        if self.cdf is not None:
            return float(self.cdf(np.array([e1]), np.array([e2]))[0])
        lo, hi = self.edges[:-1], self.edges[1:]
        frac = np.clip((np.minimum(hi, e2) - np.maximum(lo, e1)) / (hi - lo), 0, 1)
        return float(np.sum(frac * self.masses))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["E_bin_center", "mass"])
            for c, m in zip(self.centers, self.masses):
                w.writerow([repr(float(c)), repr(float(m))])


def e_marginal(state: SpectralPair, h: float, bins: int = 401, e_max: float | None = None) -> EMarginal:
    """Pushforward of ``|u|^2 dz`` under ``E(z) = h^2 (n1 cos z + n2 sin z)``."""
    u = np.asarray(state.eigenvector)
    n1, n2 = state.n
    A = h * h * math.hypot(n1, n2)
    z_n = math.atan2(n2, n1)
    span = 1.5 * (e_max if e_max is not None else (A if A > 0 else 1.0))
    edges = np.linspace(-span, span, bins + 1)
    G = _CumulativeMass(u, z_n)

    def interval(e1, e2):
        e1, e2 = np.asarray(e1, float), np.asarray(e2, float)
        if A == 0:
            return np.where((e1 <= 0) & (0 < e2), G(np.pi) - G(-np.pi), 0.0)
        w1 = np.arccos(np.clip(e2 / A, -1, 1))
        w2 = np.arccos(np.clip(e1 / A, -1, 1))
        g = G(np.concatenate([w1, w2, -w1, -w2]))
        k = len(w1)
        return (g[k:2 * k] - g[:k]) + (g[2 * k:3 * k] - g[3 * k:])

    masses = np.maximum(interval(edges[:-1], edges[1:]), 0.0)
    return EMarginal(edges, masses, A, interval)


@dataclass(frozen=True)
class LevelReport:
    k: int
    E_plus: float
    E_minus: float
    captured_mass_plus: float
    captured_mass_minus: float
    delta: float

    @property
    def captured_mass(self) -> float:
        return self.captured_mass_plus + self.captured_mass_minus

    def to_dict(self) -> dict:
        return {"k": self.k, "E_plus": self.E_plus, "E_minus": self.E_minus,
                "captured_mass_plus": self.captured_mass_plus,
                "captured_mass_minus": self.captured_mass_minus, "delta": self.delta}


def level_energies(k: int, lambda0: float, W: float = 0.0, Q: float = 0.0) -> tuple[float, float]:
    """Roots ``E+/-`` of ``+/-((lambda0 - W)/E - Q) = 2k + 1``."""
    dp, dm = 2 * k + 1 + Q, 2 * k + 1 - Q
    if dp <= 0 or dm <= 0:
        raise DegenerateLevel(f"2k+1 +/- Q must be positive (got {dp}, {dm})")
    if not lambda0 > W:
        raise ValueError("need lambda0 > W at the concentration point")
    return (lambda0 - W) / dp, -(lambda0 - W) / dm


def level_mass(marginal: EMarginal, k: int, lambda0: float, W_at_peak: float = 0.0,
               Q_at_peak: float = 0.0, delta: float = 0.1) -> LevelReport:
    if not delta > 0:
        raise ValueError("delta must be positive")
    ep, em = level_energies(k, lambda0, W_at_peak, Q_at_peak)
    mp = marginal.interval_mass(ep - delta, ep + delta)
    mm = marginal.interval_mass(em - delta, em + delta)
    return LevelReport(k, ep, em, min(max(mp, 0.0), 1.0), min(max(mm, 0.0), 1.0), delta)


def level_experiment(n: int, k: int = 0, delta: float = 0.1, bins: int = 401):
    """Mathieu doublet state at level ``k`` with ``h`` tuned so ``lambda_h = 1``."""
    pair = mathieu_levels_pair(n, k)
    h = semiclassical_h(pair)
    marg = e_marginal(pair, h, bins)
    return pair, h, marg, level_mass(marg, k, 1.0, 0.0, 0.0, delta)


def mathieu_levels_pair(n: int, k: int) -> SpectralPair:
    from .circle_spectral import mathieu_level
    return mathieu_level((n, 0), k)


@dataclass(frozen=True)
class SubcriticalResult:
    n: int
    K: int
    level: int
    h: float
    mass: float


def subcritical_mass(state: SpectralPair, h: float, K: int) -> float:
    """Marginal mass in ``|E| <= 2/K``."""
    return e_marginal(state, h).interval_mass(-2.0 / K, 2.0 / K)


def subcritical_experiment(n: int, K: int | None = None) -> SubcriticalResult:
    """Eigenstate nearest to ``1/(h n)^2 = K/n`` with ``h`` reset from its eigenvalue."""
    K = K or int(math.floor(n ** 0.25 + 1e-12))
    target = K / n
    kmax = K // 2 + 2
    op = mathieu_operator((n, 0), k=kmax)
    pairs = [p for p in eigensolve(op, 2 * kmax + 2) if p.parity in (0, None)]
    idx = int(np.argmin([abs(p.eigenvalue - target) for p in pairs]))
    pair = pairs[idx]
    h = semiclassical_h(pair)
    return SubcriticalResult(n, K, idx, h, subcritical_mass(pair, h, K))


def invariance_defect(states: Sequence[tuple[complex, SpectralPair]],
                      testfn: Mapping[tuple, Callable], W: TrigSeries | None, lambda0: float,
                      h: float | None = None, nz: int | None = None):
    """``int Y_W(a) |psi|^2`` for ``psi = sum_j c_j u_j(z) e^{i n_j.(x,y)} / (2 pi)``.

    ``testfn`` maps lattice frequencies ``J`` to ``g_J(z)`` with
    ``a = sum_J g_J(z) e^{i J.(x,y)}``.  Since ``W`` depends on ``z`` only,
    ``X_perp(ln(lambda0 - W)) = 0`` and ``Y_W = X + V(ln(lambda0 - W)) X_perp``.
    ``h`` is carried for bookkeeping; the states already encode it.
    """
    W = W or TrigSeries()
    evs = [p.eigenvalue for _, p in states]
    ref = evs[0]
    if any(abs(e - ref) > 1e-10 * max(abs(ref), 1e-300) for e in evs):
        raise NotDegenerate(f"eigenvalues differ: {evs}")
    Mmax = max(p.M for _, p in states)
    nz = nz or max(2048, 1 << int(math.ceil(math.log2(8 * Mmax + 8))))
    z = 2 * np.pi * np.arange(nz) / nz
    wz = W(z) if not W.is_zero() else np.zeros(nz)
    if np.any(lambda0 - wz <= 0):
        raise ValueError("need lambda0 > W everywhere")
    dl = -W.derivative()(z) / (lambda0 - wz) if not W.is_zero() else np.zeros(nz)
    vals = [_grid_values(np.asarray(p.eigenvector), nz) for _, p in states]
    total = 0.0 + 0.0j
    for (cj, pj), uj in zip(states, vals):
        for (cl, pl), ul in zip(states, vals):
            J = (pl.n[0] - pj.n[0], pl.n[1] - pj.n[1])
            g = testfn.get(J)
            if g is None:
                continue
            y = 1j * (J[0] * np.cos(z) + J[1] * np.sin(z)) + dl * 1j * (J[0] * np.sin(z) - J[1] * np.cos(z))
            total += cj * np.conj(cl) * np.sum(y * g(z) * uj * np.conj(ul)) * 2 * np.pi / nz
    if abs(total.imag) <= 1e-12 * (1 + abs(total.real)):
        return float(total.real)
    return complex(total)


def tuned_ground_state(n, W: TrigSeries, lambda0: float = 1.0, M: int | None = None):
    """Ground state of ``h^2(-d_z^2 + s^2) + W`` with ``h`` solved so the eigenvalue is ``lambda0``."""
    n = (int(n[0]), int(n[1]))
    nn = math.hypot(*n)
    M = M or suggest_cutoff(nn, 0)
    mop = mathieu_operator(n, M)
    h0 = 1.0 / (nn * math.sqrt(eigensolve(mop, 1, check=False)[0].eigenvalue))

    def f(h):
        return eigensolve(assemble(n, h, M, W=W), 1, check=False)[0].eigenvalue - lambda0

    h = brentq(f, 0.2 * h0, 5.0 * h0, xtol=1e-15, rtol=1e-15)
    op = assemble(n, h, M, W=W)
    return eigensolve(op, 1)[0], h, op

"""Ladder operators ``a = h(d_z + s(z))`` and ``a* = h(-d_z + s(z))`` on separable modes.

Here ``s = n1 sin z - n2 cos z``; for ``n = (n, 0)`` this is ``a = h(d_z + n sin z)``.
With ``c = n1 cos z + n2 sin z`` the flat separable identities read
``a*a = h^2 |n|^2 M_n - h^2 c`` and ``[a, a*] = 2 h^2 c``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .circle_spectral import frame_series, mathieu_operator, suggest_cutoff
from .errors import BandOverflow
from .quasimodes import Quasimode, build_quasimode


def _matvec(bands: dict, u: np.ndarray) -> np.ndarray:
    N = len(u)
    out = np.zeros(N, dtype=complex)
    for d, b in bands.items():
        lo, hi = max(0, -d), min(N, N - d)
        out[lo:hi] += b[lo:hi] * u[lo + d:hi + d]
    return out


def _adjoint(bands: dict) -> dict:
    out = {}
    for d, b in bands.items():
        N = len(b)
        a = np.zeros(N, dtype=complex)
        lo, hi = max(0, d), min(N, N + d)
        # (A^H)(i, i-d) = conj(A(i-d, i)) = conj(b[i-d])
        a[lo:hi] = np.conj(b[lo - d:hi - d])
        out[-d] = a
    return out


def _dense(bands: dict, N: int) -> np.ndarray:
    A = np.zeros((N, N), dtype=complex)
    for d, b in bands.items():
        i = np.arange(max(0, -d), min(N, N - d))
        A[i, i + d] = b[i]
    return A


@dataclass(frozen=True, eq=False)
class LadderPair:
    n: tuple
    h: float
    M: int
    a_bands: dict = field(repr=False)
    a_star_bands: dict = field(repr=False)

    @property
    def size(self) -> int:
        return 2 * self.M + 1

    @property
    def a_matrix(self) -> np.ndarray:
        return _dense(self.a_bands, self.size)

    @property
    def a_star_matrix(self) -> np.ndarray:
        return _dense(self.a_star_bands, self.size)


def ladder_pair(n, h: float, M: int | None = None) -> LadderPair:
    n = (int(n[0]), int(n[1]))
    if not h > 0:
        raise ValueError("h must be positive")
    M = M or suggest_cutoff(math.hypot(*n), 2)
    N = 2 * M + 1
    m = np.arange(-M, M + 1)
    bands = {0: (1j * h * m).astype(complex)}
    s, _ = frame_series(n)
    for j, c in s.coeffs.items():
        b = bands.setdefault(-j, np.zeros(N, dtype=complex))
        i = np.arange(max(0, j), min(N, N + j))
        b[i] += h * c
    return LadderPair(n, float(h), M, bands, _adjoint(bands))


def apply_ladder(pair: LadderPair, which, u: np.ndarray) -> np.ndarray:
    """Apply ``'a'``, ``'a_star'`` or a word of them (rightmost acts first).

    The input must vanish on the top ``max(2, len(word))`` modes at each end
    so that every product stays exact.
    """
    word: Sequence[str] = (which,) if isinstance(which, str) else tuple(which)
    u = np.asarray(u, dtype=complex)
    if len(u) != pair.size:
        raise ValueError("vector length does not match the ladder cutoff")
    margin = max(2, len(word))
    if np.any(u[:margin] != 0) or np.any(u[-margin:] != 0):
        raise BandOverflow(f"vector occupies the top {margin} Fourier modes")
    for w in reversed(word):
        if w == "a":
            u = _matvec(pair.a_bands, u)
        elif w == "a_star":
            u = _matvec(pair.a_star_bands, u)
        else:
            raise ValueError(f"unknown ladder operator {w!r}")
    return u


def identity_defects(pair: LadderPair, u: np.ndarray) -> dict:
    """Relative defects of ``a*a = h^2|n|^2 M_n - h^2 c`` and ``[a, a*] = 2h^2 c``."""
    h, n = pair.h, pair.n
    nn = n[0] ** 2 + n[1] ** 2
    _, c = frame_series(n)
    cu = np.zeros(pair.size, dtype=complex)
    for j, v in c.coeffs.items():
        cu[max(0, j):pair.size + min(0, j)] += v * u[max(0, -j):pair.size - max(0, j)]
    Mu = mathieu_operator(n, pair.M).matvec(u) if nn else None
    asa = apply_ladder(pair, ("a_star", "a"), u)
    aas = apply_ladder(pair, ("a", "a_star"), u)
    rhs1 = h * h * nn * Mu - h * h * cu if nn else -h * h * cu + h * h * (np.arange(-pair.M, pair.M + 1) ** 2) * u
    rhs2 = 2 * h * h * cu
    def rel(x, y):
        return float(np.linalg.norm(x - y) / max(np.linalg.norm(y), np.linalg.norm(x), 1e-300))
    return {"factorization": rel(asa, rhs1), "commutator": rel(aas - asa, rhs2)}


@dataclass(frozen=True)
class LadderReport:
    k: int
    n: int
    h: float
    lowering_defect: float
    raising_defect: float
    lowering_coeff: complex
    raising_coeff: complex


def _project(w: np.ndarray, t: np.ndarray):
    c = np.vdot(t, w) / np.vdot(t, t)
    return c, float(np.linalg.norm(w - c * t))


def ladder_on_quasimode(pair: LadderPair, quasimode: Quasimode) -> LadderReport:
    """Defects of ``a v_k`` against ``v_{k-1}`` and of ``a* v_k`` against ``v_{k+1}``."""
    if not isinstance(quasimode, Quasimode):
        raise TypeError("expected a Quasimode")
    k, n = quasimode.k, quasimode.n
    if pair.n != (n, 0):
        raise ValueError("ladder pair and quasimode live on different modes")
    if not math.isclose(pair.h, 1.0 / math.sqrt((2 * k + 1) * n), rel_tol=1e-9):
        raise ValueError("ladder pair must use h = 1/sqrt((2k+1)n)")

    def vec(q: Quasimode) -> np.ndarray:
        out = np.zeros(pair.size, dtype=complex)
        out[2:-2] = q.coefficients(pair.M - 2)
        return out

    v = vec(quasimode)
    av = apply_ladder(pair, "a", v)
    asv = apply_ladder(pair, "a_star", v)
    if k == 0:
        lc, ld = 0.0, float(np.linalg.norm(av))
    else:
        lc, ld = _project(av, vec(build_quasimode(k - 1, n, quasimode.delta)))
    rc, rd = _project(asv, vec(build_quasimode(k + 1, n, quasimode.delta)))
    return LadderReport(k, n, pair.h, ld, rd, complex(lc), complex(rc))

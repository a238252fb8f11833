"""Fourier-basis assembly and banded eigensolution of separable circle operators.

Coefficient vectors are indexed by ``m = -M..M`` (array index ``m + M``) and
represent ``u(z) = sum_m c_m e^{imz} / sqrt(2 pi)``, so the Euclidean norm of
the vector is the L^2(S^1) norm of ``u``.

Two operator families are supported:

* ``mathieu``: ``-(1/|n|^2) d_z^2 + sin^2(z - z_n)``, independent of ``h``;
* ``perturbed``: ``h^2(-d_z^2 + s(z)^2) + h^2 Q(z) c(z) + W(z)`` with
  ``s = n1 sin z - n2 cos z`` and ``c = n1 cos z + n2 sin z``.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np
from scipy.linalg import eig_banded

from .errors import CutoffNotConverged


class TrigSeries:
    """Finite Fourier series ``f(z) = sum_j c_j e^{ijz}``."""

    def __init__(self, coeffs: Mapping[int, complex] | None = None):
        self.coeffs = {int(j): complex(c) for j, c in (coeffs or {}).items() if c != 0}

    @classmethod
    def from_cos_sin(cls, const: float = 0.0, cos: Mapping[int, float] | None = None,
                     sin: Mapping[int, float] | None = None) -> "TrigSeries":
        """``const + sum a_j cos(jz) + sum b_j sin(jz)``."""
        c: dict[int, complex] = {0: complex(const)}
        for j, a in (cos or {}).items():
            c[j] = c.get(j, 0) + a / 2
            c[-j] = c.get(-j, 0) + a / 2
        for j, b in (sin or {}).items():
            c[j] = c.get(j, 0) - 1j * b / 2
            c[-j] = c.get(-j, 0) + 1j * b / 2
        return cls(c)

    @property
    def support(self) -> int:
        return max((abs(j) for j in self.coeffs), default=0)

    def is_zero(self) -> bool:
        return not self.coeffs

    def __call__(self, z):
        z = np.asarray(z, dtype=float)
        out = np.zeros(z.shape, dtype=complex)
        for j, c in self.coeffs.items():
            out = out + c * np.exp(1j * j * z)
        if self.is_real():
            return out.real
        return out

    def is_real(self, tol: float = 1e-14) -> bool:
        return all(abs(c - np.conj(self.coeffs.get(-j, 0))) <= tol for j, c in self.coeffs.items())

    def __add__(self, other: "TrigSeries") -> "TrigSeries":
        c = dict(self.coeffs)
        for j, v in other.coeffs.items():
            c[j] = c.get(j, 0) + v
        return TrigSeries(c)

    def __mul__(self, other):
        if not isinstance(other, TrigSeries):
            return TrigSeries({j: v * other for j, v in self.coeffs.items()})
        c: dict[int, complex] = {}
        for j, a in self.coeffs.items():
            for k, b in other.coeffs.items():
                c[j + k] = c.get(j + k, 0) + a * b
        return TrigSeries(c)

    __rmul__ = __mul__

    def shift(self, z0: float) -> "TrigSeries":
        """Series of ``f(z - z0)``."""
        return TrigSeries({j: c * np.exp(-1j * j * z0) for j, c in self.coeffs.items()})

    def derivative(self) -> "TrigSeries":
        return TrigSeries({j: 1j * j * c for j, c in self.coeffs.items()})

    def sup(self, npts: int = 4096) -> float:
        if self.is_zero():
            return 0.0
        z = np.linspace(0, 2 * np.pi, npts, endpoint=False)
        return float(np.max(np.abs(self(z))))

    def c1_norm(self) -> float:
        return self.sup() + self.derivative().sup()

    def to_dict(self) -> dict:
        return {str(j): [c.real, c.imag] for j, c in sorted(self.coeffs.items())}

    def __repr__(self) -> str:
        return f"TrigSeries({self.coeffs})"


ZERO = TrigSeries()


def frame_series(n) -> tuple[TrigSeries, TrigSeries]:
    """``s = n1 sin z - n2 cos z`` and ``c = n1 cos z + n2 sin z``."""
    n1, n2 = n
    s = TrigSeries.from_cos_sin(cos={1: -n2}, sin={1: n1})
    c = TrigSeries.from_cos_sin(cos={1: n1}, sin={1: n2})
    return s, c


@dataclass(frozen=True, eq=False)
class CircleOperator:
    n: tuple
    h: float | None
    M: int
    descriptor: str
    Q: TrigSeries
    W: TrigSeries
    z_offset: float
    bands: dict = field(repr=False)

    @property
    def size(self) -> int:
        return 2 * self.M + 1

    @property
    def norm_n(self) -> float:
        return math.hypot(*self.n)

    @property
    def bandwidth(self) -> int:
        return max(abs(d) for d in self.bands)

    @property
    def modes(self) -> np.ndarray:
        return np.arange(-self.M, self.M + 1)

    def entry(self, m: int, mp: int) -> complex:
        d = mp - m
        if d not in self.bands or abs(m) > self.M or abs(mp) > self.M:
            return 0.0
        return self.bands[d][m + self.M]

    def toarray(self) -> np.ndarray:
        N = self.size
        A = np.zeros((N, N), dtype=complex)
        for d, b in self.bands.items():
            i = np.arange(max(0, -d), min(N, N - d))
            A[i, i + d] = b[i]
        return A if np.iscomplexobj(self._dtype_probe()) else A.real

    def _dtype_probe(self):
        return np.concatenate([np.atleast_1d(b) for b in self.bands.values()])

    def matvec(self, c: np.ndarray) -> np.ndarray:
        c = np.asarray(c)
        N = self.size
        out = np.zeros(N, dtype=np.result_type(c, self._dtype_probe()))
        for d, b in self.bands.items():
            lo, hi = max(0, -d), min(N, N - d)
            out[lo:hi] += b[lo:hi] * c[lo + d:hi + d]
        return out

    def with_cutoff(self, M: int) -> "CircleOperator":
        return assemble(self.n, self.h, M, self.Q, self.W, self.z_offset, self.descriptor)

    def separable_parity(self) -> bool:
        return all(d % 2 == 0 for d in self.bands)

    def to_dict(self) -> dict:
        return {"n": list(self.n), "h": self.h, "M": self.M, "descriptor": self.descriptor,
                "Q": self.Q.to_dict(), "W": self.W.to_dict(), "z_offset": self.z_offset}


def _add_multiplier(bands: dict, f: TrigSeries, M: int, scale: complex = 1.0) -> None:
    N = 2 * M + 1
    for j, c in f.coeffs.items():
        d = -j
        if abs(d) >= N:
            continue
        b = bands.setdefault(d, np.zeros(N, dtype=complex))
        i = np.arange(max(0, -d), min(N, N - d))
        b[i] += scale * c


def assemble(n, h: float | None, M: int, Q: TrigSeries | None = None, W: TrigSeries | None = None,
             z_offset: float = 0.0, descriptor: str | None = None) -> CircleOperator:
    """Banded matrix of the circle operator for lattice mode ``n``."""
    Q = Q or ZERO
    W = W or ZERO
    n = (int(n[0]), int(n[1]))
    if M < 8:
        raise ValueError("Fourier cutoff M must be at least 8")
    if descriptor is None:
        descriptor = "mathieu" if (Q.is_zero() and W.is_zero() and h is None) else "perturbed"
    if descriptor not in ("mathieu", "perturbed"):
        raise ValueError(f"unknown descriptor {descriptor!r}")
    if not (Q.is_real() and W.is_real()):
        raise ValueError("Q and W must be real-valued")
    if Q.sup() >= 1.0:
        raise ValueError("the perturbation Q must satisfy sup|Q| < 1")
    N = 2 * M + 1
    m = np.arange(-M, M + 1, dtype=float)
    s, c = frame_series(n)
    nn = n[0] ** 2 + n[1] ** 2
    bands: dict[int, np.ndarray] = {}
    if descriptor == "mathieu":
        if nn == 0:
            raise ValueError("the Mathieu reduction needs a nonzero mode")
        if not (Q.is_zero() and W.is_zero()):
            raise ValueError("the Mathieu operator carries no Q or W")
        bands[0] = (m * m / nn).astype(complex)
        _add_multiplier(bands, (s * s).shift(z_offset), M, 1.0 / nn)
    else:
        if h is None or not h > 0:
            raise ValueError("the perturbed operator needs h > 0")
        h2 = h * h
        bands[0] = (h2 * m * m).astype(complex)
        _add_multiplier(bands, (s * s).shift(z_offset), M, h2)
        _add_multiplier(bands, (Q * c).shift(z_offset), M, h2)
        _add_multiplier(bands, W.shift(z_offset), M, 1.0)
    clean = {}
    for d, b in bands.items():
        if np.any(b != 0) or d == 0:
            clean[d] = b.real.copy() if np.all(b.imag == 0) else b
    return CircleOperator(n, h, M, descriptor, Q, W, float(z_offset), clean)


@dataclass(frozen=True, eq=False)
class SpectralPair:
    eigenvalue: float
    eigenvector: np.ndarray
    residual: float
    n: tuple = (0, 0)
    h: float | None = None
    parity: int | None = None

    def __post_init__(self):
        v = np.asarray(self.eigenvector)
        nrm = float(np.linalg.norm(v))
        if v.ndim != 1 or v.size % 2 != 1:
            raise ValueError("eigenvector must be a 1-D vector of odd length 2M+1")
        if abs(nrm - 1.0) > 1e-12:
            raise ValueError(f"eigenvector is not normalized (norm {nrm:.3e})")

    @property
    def M(self) -> int:
        return (len(self.eigenvector) - 1) // 2

    @property
    def modes(self) -> np.ndarray:
        return np.arange(-self.M, self.M + 1)

    def values(self, z) -> np.ndarray:
        """Pointwise values of ``u`` on the circle."""
        z = np.asarray(z, dtype=float)
        return np.exp(1j * np.multiply.outer(z, self.modes)) @ self.eigenvector / np.sqrt(2 * np.pi)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["m", "re", "im"])
            for m, c in zip(self.modes, self.eigenvector):
                w.writerow([int(m), repr(float(np.real(c))), repr(float(np.imag(c)))])


def _fix_phase(v: np.ndarray) -> np.ndarray:
    i = int(np.argmax(np.abs(v) > np.max(np.abs(v)) * (1 - 1e-9)))
    return v * (abs(v[i]) / v[i])


def _sector_bands(op: CircleOperator, parity: int | None):
    """Upper banded storage of the full matrix or of one parity sector."""
    N = op.size
    if parity is None:
        idx = np.arange(N)
        offs = {d: b for d, b in op.bands.items()}
    else:
        idx = np.arange(N)[(op.modes % 2) == parity]
        offs = {d // 2: b[idx] for d, b in op.bands.items()}
    L = len(idx)
    u = max(max(offs), 0)
    cplx = any(np.iscomplexobj(b) for b in offs.values())
    ab = np.zeros((u + 1, L), dtype=complex if cplx else float)
    for d, b in offs.items():
        if d < 0:
            continue
        ab[u - d, d:] = b[:L - d]
    return idx, ab


def _solve_sector(op: CircleOperator, parity: int | None, count: int, vectors: bool = True):
    idx, ab = _sector_bands(op, parity)
    L = ab.shape[1]
    k = min(count, L)
    if vectors:
        w, v = eig_banded(ab, lower=False, select="i", select_range=(0, k - 1))
        return idx, w, v
    w = eig_banded(ab, lower=False, eigvals_only=True, select="i", select_range=(0, k - 1))
    return idx, w, None


def _lowest(op: CircleOperator, count: int, vectors: bool = True):
    sectors = (0, 1) if op.separable_parity() else (None,)
    items = []
    for p in sectors:
        idx, w, v = _solve_sector(op, p, count, vectors)
        for j, lam in enumerate(w):
            vec = None
            if vectors:
                vec = np.zeros(op.size, dtype=complex)
                vec[idx] = v[:, j]
            items.append((float(lam), p, vec))
    items.sort(key=lambda t: t[0])
    # near-degenerate neighbours: even parity first
    for i in range(len(items) - 1):
        a, b = items[i], items[i + 1]
        if a[1] == 1 and b[1] == 0 and abs(a[0] - b[0]) <= 1e-12 * (1 + abs(a[0])):
            items[i], items[i + 1] = b, a
    return items[:count]


def eigensolve(op: CircleOperator, count: int, check: bool = True, tol: float = 1e-10) -> list[SpectralPair]:
    """Lowest ``count`` eigenpairs in ascending order.

    When every band offset is even the even-``m`` and odd-``m`` sectors
    decouple and are solved separately, which yields eigenvectors of definite
    parity under ``z -> z + pi``.
    """
    if not 1 <= count <= op.size:
        raise ValueError("count must lie in [1, 2M+1]")
    items = _lowest(op, count)
    if check:
        ref = _lowest(op.with_cutoff(2 * op.M), count, vectors=False)
        diff = max(abs(a[0] - b[0]) for a, b in zip(items, ref))
        if diff >= tol:
            raise CutoffNotConverged(f"doubling M={op.M} moved eigenvalues by {diff:.3e}")
    out = []
    for lam, p, vec in items:
        vec = _fix_phase(vec / np.linalg.norm(vec))
        res = float(np.linalg.norm(op.matvec(vec) - lam * vec))
        out.append(SpectralPair(lam, vec, res, op.n, op.h, p))
    return out


def suggest_cutoff(norm_n: float, k: int = 0) -> int:
    """Fourier cutoff resolving well states up to level ``k`` for mode size ``|n|``."""
    M = int(10.0 * math.sqrt(max(norm_n, 1.0)) * math.sqrt(2 * k + 2)) + 32
    return 8 * ((M + 7) // 8)


def mathieu_operator(n, M: int | None = None, z_offset: float = 0.0, k: int = 0) -> CircleOperator:
    n = (int(n[0]), int(n[1]))
    M = M or suggest_cutoff(math.hypot(*n), k)
    return assemble(n, None, M, z_offset=z_offset, descriptor="mathieu")


def mathieu_level(n, k: int, M: int | None = None) -> SpectralPair:
    """The ``pi``-periodic member of the ``k``-th tunnelling doublet of the Mathieu operator."""
    op = mathieu_operator(n, M, k=k)
    pairs = eigensolve(op, 2 * k + 2)
    even = [p for p in pairs if p.parity == 0]
    return even[k]


def semiclassical_h(pair: SpectralPair) -> float:
    """``h`` with ``h^2 |n|^2 lambda = 1`` so the Mathieu eigenvalue maps to ``lambda_h = 1``."""
    return 1.0 / (math.hypot(*pair.n) * math.sqrt(pair.eigenvalue))


@dataclass(frozen=True)
class AprioriReport:
    lhs: float
    rhs: float
    passed: bool


def _shift_mult(u: np.ndarray, f: TrigSeries) -> np.ndarray:
    """Coefficients of ``f u`` on the enlarged index range ``|m| <= M + support(f)``."""
    M = (len(u) - 1) // 2
    S = f.support
    out = np.zeros(len(u) + 2 * S, dtype=complex)
    for j, c in f.coeffs.items():
        out[S + j:S + j + len(u)] += c * u
    return out


def apriori_check(pair: SpectralPair, op: CircleOperator) -> AprioriReport:
    """Quadratic-form bound for ``psi = u(z) e^{i n.(x,y)}``."""
    if not isinstance(pair, SpectralPair):
        raise TypeError("apriori_check expects a SpectralPair")
    u = np.asarray(pair.eigenvector)
    if len(u) != op.size:
        raise ValueError("eigenvector length does not match the operator cutoff")
    nn = op.norm_n ** 2
    if op.descriptor == "mathieu":
        h = op.h if op.h else 1.0 / math.sqrt(nn * pair.eigenvalue)
        lam = h * h * nn * pair.eigenvalue
    else:
        h = op.h
        lam = pair.eigenvalue
    s, _ = frame_series(op.n)
    m = op.modes
    su = _shift_mult(u, s.shift(op.z_offset))
    lhs = h * h * (float(np.sum(m * m * np.abs(u) ** 2)) + float(np.sum(np.abs(su) ** 2)))
    q0, q1, w0 = op.Q.sup(), op.Q.c1_norm() if not op.Q.is_zero() else 0.0, op.W.sup()
    denom = 1.0 - q0 - h * q1 / 2.0
    norm2 = float(np.sum(np.abs(u) ** 2))
    if denom <= 0:
        return AprioriReport(lhs, math.inf, False)
    rhs = (w0 + abs(lam) + 2.0 * h * q1) / denom * norm2
    return AprioriReport(lhs, rhs, bool(lhs <= rhs * (1 + 1e-10) + 1e-14))


def manifest_entry(op: CircleOperator, pairs: list[SpectralPair]) -> dict:
    return {"n": list(op.n), "h": op.h, "M": op.M,
            "eigenvalues": [p.eigenvalue for p in pairs],
            "residuals": [p.residual for p in pairs]}


def write_manifest(path, op: CircleOperator, pairs: list[SpectralPair]) -> None:
    with open(path, "w") as fh:
        json.dump(manifest_entry(op, pairs), fh, indent=2, sort_keys=True)

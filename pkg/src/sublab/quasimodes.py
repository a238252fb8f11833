"""Hermite functions and cutoff Hermite quasimodes of the Mathieu operator."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .circle_spectral import CircleOperator, mathieu_operator
from .phasespace import chi

GRID = 8192


def hermite_eval(k: int, t):
    """Normalized Hermite function of degree ``k`` by the three-term recurrence."""
    if k < 0:
        raise ValueError("degree must be nonnegative")
    t = np.asarray(t, dtype=float)
    p0 = np.pi ** -0.25 * np.exp(-t * t / 2)
    if k == 0:
        return p0
    p1 = math.sqrt(2.0) * t * p0
    for j in range(1, k):
        p0, p1 = p1, math.sqrt(2.0 / (j + 1)) * t * p1 - math.sqrt(j / (j + 1)) * p0
    return p1


@dataclass(frozen=True)
class HermiteFunction:
    k: int

    def __call__(self, t):
        return hermite_eval(self.k, t)


@dataclass(frozen=True, eq=False)
class Quasimode:
    """``v(z) = chi(z/delta) n^{1/4} phi_k(sqrt(n) z)`` sampled on ``[-pi, pi)``."""

    k: int
    n: int
    delta: float
    z: np.ndarray
    values: np.ndarray
    coeffs: np.ndarray

    @property
    def energy(self) -> float:
        return (2 * self.k + 1) / self.n

    @property
    def norm(self) -> float:
        dz = 2 * np.pi / len(self.z)
        return float(np.sqrt(np.sum(self.values ** 2) * dz))

    def coefficients(self, M: int) -> np.ndarray:
        """Fourier vector on ``|m| <= M`` in the convention of :mod:`circle_spectral`."""
        K = (len(self.coeffs) - 1) // 2
        out = np.zeros(2 * M + 1, dtype=complex)
        L = min(M, K)
        out[M - L:M + L + 1] = self.coeffs[K - L:K + L + 1]
        return out

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["z", "v"])
            for z, v in zip(self.z, self.values):
                w.writerow([repr(float(z)), repr(float(v))])


def build_quasimode(k: int, n: int, delta: float = 0.5, grid: int = GRID) -> Quasimode:
    if not 0 < delta <= np.pi / 4:
        raise ValueError("delta must lie in (0, pi/4]")
    if n < 16:
        raise ValueError("n must be at least 16")
    z = -np.pi + 2 * np.pi * np.arange(grid) / grid
    v = chi(z / delta) * n ** 0.25 * hermite_eval(k, math.sqrt(n) * z)
    # c_m = sqrt(2 pi)/N sum_j v(z_j) e^{-i m z_j}, with z_j = -pi + 2 pi j / N
    f = np.fft.fft(v) * (math.sqrt(2 * np.pi) / grid)
    K = grid // 2 - 1
    m = np.arange(-K, K + 1)
    coeffs = f[m % grid] * np.exp(1j * m * np.pi)
    return Quasimode(k, n, delta, z, v, coeffs)


def quasimode_residual(op: CircleOperator, v: Quasimode) -> float:
    """``|| M_n v - ((2k+1)/n) v ||`` computed in the Fourier basis of ``op``."""
    if not isinstance(v, Quasimode):
        raise TypeError("expected a Quasimode")
    c = v.coefficients(op.M)
    return float(np.linalg.norm(op.matvec(c) - v.energy * c))


@dataclass(frozen=True)
class ResidualFit:
    k: int
    n: tuple
    residuals: tuple
    slope: float
    halfwidth: float

    @property
    def contract_ok(self) -> bool:
        return -1.8 <= self.slope <= -1.2

    def to_json(self) -> str:
        return json.dumps({"k": self.k, "n": list(self.n), "residuals": list(self.residuals),
                           "slope": self.slope, "halfwidth": self.halfwidth}, sort_keys=True)


def residual_rate(k: int, n_list: Sequence[int], delta: float = 0.5,
                  op_factory: Callable[[int], CircleOperator] | None = None) -> ResidualFit:
    """Least-squares slope of ``log r(n)`` against ``log n``."""
    from .experiments import fit_trend

    n_list = [int(n) for n in n_list]
    if len(n_list) < 3:
        raise ValueError("need at least three values of n")
    ratios = [b / a for a, b in zip(n_list, n_list[1:])]
    if not np.allclose(ratios, ratios[0]) or ratios[0] <= 1:
        raise ValueError("n_list must be an increasing geometric sequence")
    factory = op_factory or (lambda n: mathieu_operator((n, 0), k=k))
    res = tuple(quasimode_residual(factory(n), build_quasimode(k, n, delta)) for n in n_list)
    slope, hw = fit_trend(list(zip(n_list, res)))
    return ResidualFit(k, tuple(n_list), res, slope, hw)

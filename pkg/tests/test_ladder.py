import math

import numpy as np
import pytest

from sublab.circle_spectral import suggest_cutoff
from sublab.errors import BandOverflow
from sublab.ladder import apply_ladder, identity_defects, ladder_on_quasimode, ladder_pair
from sublab.quasimodes import build_quasimode


def band_limited(rng, size, margin=3):
    u = np.zeros(size, dtype=complex)
    u[margin:-margin] = rng.normal(size=size - 2 * margin) + 1j * rng.normal(size=size - 2 * margin)
    return u


def test_a_on_constant():
    n, h = 10, 0.05
    pair = ladder_pair((n, 0), h, 16)
    u = np.zeros(pair.size, dtype=complex)
    u[pair.M] = 1.0
    au = apply_ladder(pair, "a", u)
    z = np.linspace(0, 2 * np.pi, 9)
    modes = np.arange(-pair.M, pair.M + 1)
    vals = np.exp(1j * np.outer(z, modes)) @ au
    np.testing.assert_allclose(vals, h * n * np.sin(z), atol=1e-14)


def test_zero_mode_is_pure_derivative():
    pair = ladder_pair((0, 0), 0.1, 16)
    u = np.zeros(pair.size, dtype=complex)
    u[pair.M] = 1.0
    assert np.all(apply_ladder(pair, "a", u) == 0)


@pytest.mark.parametrize("n", [(8, 0), (64, 0), (3, 4)])
def test_identities_are_exact(n):
    rng = np.random.default_rng(0)
    pair = ladder_pair(n, 0.07, 48)
    for _ in range(5):
        d = identity_defects(pair, band_limited(rng, pair.size))
        assert d["factorization"] <= 1e-12
        assert d["commutator"] <= 1e-12


def test_adjointness():
    rng = np.random.default_rng(1)
    pair = ladder_pair((16, 0), 0.1, 40)
    for _ in range(50):
        u, w = band_limited(rng, pair.size), band_limited(rng, pair.size)
        lhs = np.vdot(w, apply_ladder(pair, "a", u))
        rhs = np.vdot(apply_ladder(pair, "a_star", w), u)
        assert abs(lhs - rhs) <= 1e-12 * max(1.0, abs(lhs))


def test_matrices_are_adjoint():
    pair = ladder_pair((5, 2), 0.2, 12)
    np.testing.assert_allclose(pair.a_star_matrix, pair.a_matrix.conj().T, atol=0)


def test_band_overflow():
    pair = ladder_pair((8, 0), 0.1, 16)
    u = np.zeros(pair.size, dtype=complex)
    u[-1] = 1.0
    with pytest.raises(BandOverflow):
        apply_ladder(pair, "a", u)
    u = np.zeros(pair.size, dtype=complex)
    u[2] = 1.0
    with pytest.raises(BandOverflow):
        apply_ladder(pair, ("a", "a", "a"), u)
    with pytest.raises(ValueError):
        apply_ladder(pair, "b", np.zeros(pair.size))


def report(k, n):
    h = 1 / math.sqrt((2 * k + 1) * n)
    return ladder_on_quasimode(ladder_pair((n, 0), h, suggest_cutoff(n, k + 2)), build_quasimode(k, n))


def test_ground_quasimode_is_annihilated():
    r1, r2 = report(0, 256), report(0, 1024)
    assert r2.lowering_defect / r2.h < r1.lowering_defect / r1.h
    assert r2.lowering_defect / r2.h < 0.05


@pytest.mark.parametrize("k", [1, 2])
def test_lowering_and_raising_targets(k):
    a, b = report(k, 256), report(k, 1024)
    assert b.lowering_defect / a.lowering_defect < 0.6
    assert b.raising_defect / a.raising_defect < 0.6
    # oscillator limit: a phi_k = sqrt(2k) * h sqrt(n) phi_{k-1}
    assert abs(b.lowering_coeff) == pytest.approx(math.sqrt(2 * k) * b.h * math.sqrt(1024), rel=0.05)


def test_ladder_on_quasimode_checks_inputs():
    q = build_quasimode(0, 64)
    with pytest.raises(TypeError):
        ladder_on_quasimode(ladder_pair((64, 0), 0.125), np.ones(3))
    with pytest.raises(ValueError):
        ladder_on_quasimode(ladder_pair((64, 0), 0.3), q)
    with pytest.raises(ValueError):
        ladder_on_quasimode(ladder_pair((32, 0), 1 / math.sqrt(64)), q)

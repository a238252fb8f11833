import math

import numpy as np
import pytest

from sublab.circle_spectral import (SpectralPair, TrigSeries, apriori_check, assemble, eigensolve, frame_series,
                                    mathieu_level, mathieu_operator, semiclassical_h, suggest_cutoff,
                                    write_manifest)
from sublab.errors import CutoffNotConverged
from oracles import dense_eigs, mathieu_even_levels, quadrature_matrix

Q = TrigSeries.from_cos_sin(cos={1: 0.3})
W = TrigSeries.from_cos_sin(sin={1: 0.1})


def test_trig_series_algebra():
    f = TrigSeries.from_cos_sin(1.0, cos={1: 2.0}, sin={2: 0.5})
    z = np.linspace(0, 6, 13)
    np.testing.assert_allclose(f(z).real, 1 + 2 * np.cos(z) + 0.5 * np.sin(2 * z), atol=1e-14)
    np.testing.assert_allclose((f * f)(z).real, f(z).real ** 2, atol=1e-12)
    np.testing.assert_allclose(f.shift(0.4)(z).real, f(z - 0.4).real, atol=1e-14)
    np.testing.assert_allclose(f.derivative()(z).real, -2 * np.sin(z) + np.cos(2 * z), atol=1e-14)
    assert f.support == 2 and f.is_real()
    assert Q.sup() == pytest.approx(0.3)


def test_mathieu_entries():
    op = mathieu_operator((2, 0), M=16)
    assert op.entry(0, 0) == pytest.approx(0.5)
    assert op.entry(1, 1) == pytest.approx(0.75)
    assert op.entry(0, 2) == pytest.approx(-0.25)
    assert op.entry(0, 1) == 0


def test_mathieu_matches_quadrature_oracle():
    op = mathieu_operator((3, 0), M=20, z_offset=0.7)
    ref = quadrature_matrix(lambda z: np.sin(z - 0.7) ** 2, (3, 0), 20)
    np.testing.assert_allclose(op.toarray(), ref, atol=1e-13)


def test_rotation_invariance():
    a = eigensolve(mathieu_operator((2, 0), M=32), 6)
    b = eigensolve(mathieu_operator((0, 2), M=32), 6)
    c = eigensolve(mathieu_operator((0, 2), M=32, z_offset=math.pi / 2), 6)
    np.testing.assert_allclose([p.eigenvalue for p in a], [p.eigenvalue for p in b], atol=1e-10)
    np.testing.assert_allclose([p.eigenvalue for p in a], [p.eigenvalue for p in c], atol=1e-10)
    d = eigensolve(mathieu_operator((3, 4), M=64), 4)
    e = eigensolve(mathieu_operator((5, 0), M=64), 4)
    np.testing.assert_allclose([p.eigenvalue for p in d], [p.eigenvalue for p in e], atol=1e-10)


def test_perturbed_operator_against_oracles():
    n, h, M = (4, 3), 0.1, 64
    op = assemble(n, h, M, Q=Q, W=W)
    A = op.toarray()
    assert np.allclose(A, A.conj().T, atol=0)
    assert op.bandwidth <= 3
    s = lambda z: 4 * np.sin(z) - 3 * np.cos(z)
    c = lambda z: 4 * np.cos(z) + 3 * np.sin(z)
    ref = quadrature_matrix(lambda z: h * h * s(z) ** 2 + h * h * 0.3 * np.cos(z) * c(z) + 0.1 * np.sin(z), n, M, h=h)
    np.testing.assert_allclose(A, ref, atol=1e-13)
    pairs = eigensolve(op, 5)
    fd = _finite_difference_levels(lambda z: h * h * s(z) ** 2 + h * h * 0.3 * np.cos(z) * c(z) + 0.1 * np.sin(z),
                                   h, 5)
    np.testing.assert_allclose([p.eigenvalue for p in pairs], fd, atol=1e-4)


def _finite_difference_levels(V, h, count, N=4000):
    z = 2 * np.pi * np.arange(N) / N
    dz = 2 * np.pi / N
    main = 2 * h * h / dz ** 2 + V(z)
    off = -h * h / dz ** 2 * np.ones(N)
    A = np.diag(main) + np.diag(off[:-1], 1) + np.diag(off[:-1], -1)
    A[0, -1] = A[-1, 0] = off[0]
    return np.linalg.eigvalsh(A)[:count]


def test_assemble_rejects_bad_input():
    with pytest.raises(ValueError):
        assemble((1, 0), 0.1, 32, Q=TrigSeries.from_cos_sin(cos={1: 1.0}))
    with pytest.raises(ValueError):
        assemble((1, 0), 0.1, 4)
    with pytest.raises(ValueError):
        assemble((1, 0), None, 32, W=W, descriptor="perturbed")


def test_eigensolve_ascending_and_residuals():
    op = assemble((4, 3), 0.1, 64, Q=Q, W=W)
    pairs = eigensolve(op, 8)
    ev = [p.eigenvalue for p in pairs]
    assert ev == sorted(ev)
    for p in pairs:
        assert p.residual <= 1e-8 * (1 + abs(p.eigenvalue))
        assert abs(np.linalg.norm(p.eigenvector) - 1) <= 1e-12


def test_dense_oracle_agreement():
    op = mathieu_operator((64, 0), M=256)
    pairs = eigensolve(op, 6)
    w, _ = dense_eigs(op.toarray(), 6)
    np.testing.assert_allclose([p.eigenvalue for p in pairs], w, atol=1e-12)


def test_small_n_examples():
    assert eigensolve(mathieu_operator((1, 0), M=16), 1)[0].eigenvalue >= 0
    lam = eigensolve(mathieu_operator((64, 0), M=256), 1)[0].eigenvalue
    assert 0.8 <= lam * 64 <= 1.0


def test_mathieu_level_selects_even_sector():
    for k in range(3):
        p = mathieu_level((64, 0), k)
        assert p.parity == 0
        assert np.all(p.eigenvector[p.modes % 2 != 0] == 0)
        ref = mathieu_even_levels(64, suggest_cutoff(64, k), k + 1)[k]
        assert p.eigenvalue == pytest.approx(ref, abs=1e-12)


def test_bloch_parity():
    p = mathieu_level((256, 0), 1)
    z = np.linspace(0, math.pi, 50)
    np.testing.assert_allclose(np.abs(p.values(z + math.pi)), np.abs(p.values(z)), atol=1e-8)


@pytest.mark.parametrize("n", [1024, 4096])
def test_tunnelling_splitting(n):
    pairs = eigensolve(mathieu_operator((n, 0)), 2)
    assert pairs[1].eigenvalue - pairs[0].eigenvalue < n ** -3.0


def test_degenerate_order_is_even_first():
    pairs = eigensolve(mathieu_operator((1024, 0)), 4)
    assert [p.parity for p in pairs] == [0, 1, 0, 1]


def test_cutoff_not_converged():
    with pytest.raises(CutoffNotConverged):
        eigensolve(mathieu_operator((4096, 0), M=16), 2)


def test_semiclassical_h():
    p = mathieu_level((256, 0), 0)
    h = semiclassical_h(p)
    assert h * h * 256 ** 2 * p.eigenvalue == pytest.approx(1.0)


def test_apriori_equality_for_mathieu():
    op = mathieu_operator((128, 0))
    for p in eigensolve(op, 4):
        rep = apriori_check(p, op)
        assert rep.passed
        assert rep.lhs == pytest.approx(rep.rhs, rel=1e-10)


def test_apriori_perturbed_case():
    op = assemble((40, 0), 0.05, suggest_cutoff(40, 3), Q=Q, W=W)
    for p in eigensolve(op, 4):
        assert apriori_check(p, op).passed


def test_apriori_rejects_non_pairs():
    op = mathieu_operator((16, 0))
    with pytest.raises(TypeError):
        apriori_check(np.zeros(op.size), op)
    with pytest.raises(ValueError):
        SpectralPair(0.0, np.zeros(op.size), 0.0)


def test_frame_series():
    s, c = frame_series((2, 1))
    z = np.linspace(0, 6, 7)
    np.testing.assert_allclose(s(z).real, 2 * np.sin(z) - np.cos(z), atol=1e-14)
    np.testing.assert_allclose(c(z).real, 2 * np.cos(z) + np.sin(z), atol=1e-14)


def test_manifest_and_csv(tmp_path):
    op = mathieu_operator((16, 0))
    pairs = eigensolve(op, 2)
    write_manifest(tmp_path / "m.json", op, pairs)
    pairs[0].to_csv(tmp_path / "v.csv")
    text = (tmp_path / "v.csv").read_text().splitlines()
    assert text[0] == "m,re,im" and len(text) == op.size + 1

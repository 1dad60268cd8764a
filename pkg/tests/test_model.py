import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nekhoroshev.lattice import FrequencyVector
from nekhoroshev.model import (
    ConvexityConstants, FourierField, HamiltonianSpec, PolynomialH0, QuadraticH0, SlowGrid,
    TrigPerturbation, estimate_convexity, fd4, fourier_norm, mu_of, split_resonant, taylor_split,
)

COS1 = FourierField.from_rows([[1, 0, 0.5, 0]], 2)


def test_fd4_exact_on_quartics():
    x = np.linspace(0, 1, 9)
    h = x[1] - x[0]
    np.testing.assert_allclose(fd4(x**4, h, 0), 4 * x**3, atol=1e-12)
    assert np.abs(fd4(np.sin(x), h, 0) - np.cos(x)).max() < 1e-4


@pytest.mark.parametrize("rho,expected", [(0.0, 1.0), (1.0, math.e)])
def test_fourier_norm_cos(rho, expected):
    assert fourier_norm(COS1, rho) == pytest.approx(expected, rel=1e-14)


def test_fourier_norm_zero_and_width():
    assert fourier_norm(FourierField.zeros(2), 1.0) == 0.0
    with pytest.raises(ValueError):
        fourier_norm(COS1, 2.0, rho=1.0)


def test_from_rows_adds_conjugates():
    f = FourierField.from_rows([[1, 2, 0.3, 0.4]], 2)
    assert f.modes[(-1, -2)] == pytest.approx(0.3 - 0.4j)
    with pytest.raises(ValueError):
        FourierField.from_rows([[1, 0, 1, 0], [-1, 0, 2, 0]], 2)


def test_split_resonant():
    g = FourierField.from_rows([[1, -1, 0.3, 0], [1, 0, 0.2, 0.1]], 2)
    res, non = split_resonant(g, FrequencyVector((1, 1), 1.0))
    assert set(res.modes) == {(1, -1), (-1, 1)}
    assert set(non.modes) == {(1, 0), (-1, 0)}
    only0 = FourierField.from_rows([[0, 0, 1.0, 0]], 2)
    r0, n0 = split_resonant(only0, FrequencyVector((1, 1), 1.0))
    assert set(r0.modes) == {(0, 0)} and not n0.modes
    rz, nz = split_resonant(FourierField.zeros(2), FrequencyVector((1, 1), 1.0))
    assert not rz.modes and not nz.modes


@pytest.mark.parametrize("A,m_minus,m_plus", [(np.eye(2), 1.0, 1.0), (np.diag([1.0, 4.0]), 1.0, 4.0)])
def test_convexity(A, m_minus, m_plus):
    spec = HamiltonianSpec(2, 0, QuadraticH0(A), COS1, 1.0, 1.0)
    c = spec.convexity
    assert c.m_minus == pytest.approx(m_minus) and c.m_plus == pytest.approx(m_plus)
    assert c.grad3_inf == 0.0


def test_indefinite_rejected():
    with pytest.raises(ValueError):
        HamiltonianSpec(2, 0, QuadraticH0(np.diag([2.0, -2.0])), COS1, 1.0, 1.0)


def test_convexity_constants_validate():
    with pytest.raises(ValueError):
        ConvexityConstants(2.0, 1.0, 1.0)


def test_polynomial_derivatives():
    p = PolynomialH0([((2, 0), 0.5), ((0, 2), 0.5), ((3, 0), 0.1)])
    I = np.array([1.0, 2.0])
    np.testing.assert_allclose(p.grad(I), [1.0 + 0.3, 2.0])
    np.testing.assert_allclose(p.hessian(I), [[1.6, 0.0], [0.0, 1.0]])
    assert p.third(I)[0, 0, 0] == pytest.approx(0.6)
    spec = HamiltonianSpec(2, 0, p, COS1, 1.0, 1.0, action_box=((0, 1), (0, 1)))
    assert estimate_convexity(spec, 5).grad3_inf == pytest.approx(0.6)


def test_taylor_split_bounds():
    w = FrequencyVector((1, 1), 1.0)
    spec = HamiltonianSpec(2, 0, QuadraticH0(np.eye(2), w.omega), COS1, 1.0, 1.0)
    g = taylor_split(spec, w, 1.0)
    assert g.g_max <= 0.5 + 1e-15 and g.grad_max <= 1.0 + 1e-15
    lin = HamiltonianSpec(2, 0, QuadraticH0(np.zeros((2, 2)), w.omega), COS1, 1.0, 1.0,
                          ConvexityConstants(1.0, 1.0, 1.0))
    g0 = taylor_split(lin, w, 1.0)
    assert g0.g_max == 0.0 and g0.grad_max == 0.0


def test_taylor_split_needs_translation():
    w = FrequencyVector((1, 1), 1.0)
    spec = HamiltonianSpec(2, 0, QuadraticH0(np.eye(2)), COS1, 1.0, 1.0)
    with pytest.raises(ValueError):
        taylor_split(spec, w, 1.0)


def test_shifted_quadratic():
    h = QuadraticH0(np.diag([1.0, 2.0]), [0.5, -1.0], 0.3)
    s = np.array([0.2, -0.4])
    hs = h.shifted(s)
    for J in (np.zeros(2), np.array([0.1, 0.7])):
        assert hs.value(J) == pytest.approx(h.value(J + s))
        np.testing.assert_allclose(hs.grad(J), h.grad(J + s))


@settings(max_examples=40, deadline=None)
@given(st.floats(-1, 1), st.floats(-1, 1), st.floats(0, 2 * math.pi), st.floats(0, 2 * math.pi))
def test_trig_perturbation_sample_matches_value(i1, i2, t1, t2):
    h1 = TrigPerturbation.from_rows([
        {"k": [1, 0], "re": 0.5, "slope_re": [0.1, 0.0]},
        {"k": [1, -1], "im": 0.2, "slope_im": [0.0, 0.3]},
    ], 2)
    grid = SlowGrid((np.array([i1, i1 + 1]), np.array([i2, i2 + 1])), 2)
    f = h1.sample(grid)
    assert f.reality_defect() < 1e-14
    direct = h1.value([i1, i2], [t1, t2])
    series = sum(np.real(v[0, 0] * np.exp(1j * (k[0] * t1 + k[1] * t2))) for k, v in f.modes.items())
    assert series == pytest.approx(direct, abs=1e-13)


def test_mu_uses_derivatives():
    grid = SlowGrid.box(2, 0, 0.5, 9)
    f = TrigPerturbation.from_rows([{"k": [1, 0], "re": 0.01, "slope_re": [2.0, 0.0]}], 2).sample(grid)
    assert mu_of(f, 0.5) >= fourier_norm(f.d_slow(0), 0.5)
    assert mu_of(f, 0.5) >= fourier_norm(f, 0.5)


def test_trig_rows_list_form_matches_tables():
    a = TrigPerturbation.from_rows([[1, 0, 0.5, 0.0], [1, -1, 0.2, 0.1]], 2)
    b = TrigPerturbation.from_rows([{"k": [1, 0], "re": 0.5}, {"k": [1, -1], "re": 0.2, "im": 0.1}], 2)
    np.testing.assert_array_equal(a.ks, b.ks)
    np.testing.assert_array_equal(a.c, b.c)
    with pytest.raises(ValueError):
        TrigPerturbation.from_rows([[1, 0, 0.5]], 2)

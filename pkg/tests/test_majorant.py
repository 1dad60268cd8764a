import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nekhoroshev.majorant import (
    DomainError, MajorantSeries, MajorantSolution, bound_to_majorant, check_tr_properties, check_W_pde,
    coefficient_tr_check, constant_rate, eval_W, eval_Wk, majorant_commutator, majorant_ops, majorizes,
    solve_burgers_1dof, system_stays_ordered,
)


def series(dim, cap, rng, nonneg=False):
    c = rng.normal(size=(cap + 1,) * dim)
    return MajorantSeries(np.abs(c) if nonneg else c, cap)


def test_majorizes_definitional():
    rng = np.random.default_rng(0)
    f = series(2, 5, rng)
    assert majorizes(f.abs(), f)
    Y = MajorantSeries.from_dict({1: 1.0}, cap=4)
    Y2 = MajorantSeries.from_dict({2: 1.0}, cap=4)
    assert not majorizes(Y2, Y)


def test_geometric_ordering():
    f = MajorantSeries.geometric(1.0, 10)
    assert majorizes(MajorantSeries.geometric(0.8, 10), f)
    assert not majorizes(f, MajorantSeries.geometric(0.8, 10))


def test_derivative_of_square():
    Y2 = MajorantSeries.from_dict({2: 1.0}, cap=4)
    np.testing.assert_array_equal(Y2.derivative().coeffs, MajorantSeries.from_dict({1: 2.0}, cap=3).coeffs)


@pytest.mark.parametrize("dims", [1, 2, 3])
def test_bound_to_majorant_geometric(dims):
    s = bound_to_majorant(1.0, 1.0, dims, cap=5)
    # 1/(1 - sum z) at z = (0.1,..)
    z = [0.1] * dims
    assert s(*z) == pytest.approx(1 / (1 - 0.1 * dims), rel=1e-3)
    assert not np.any(bound_to_majorant(0.0, 2.0, dims, cap=5).coeffs)


def test_bound_to_majorant_initial_data():
    mu, sigma, k = 0.3, 1.2, 2
    s = bound_to_majorant(mu * math.exp(-k), sigma, 1, cap=8)
    np.testing.assert_allclose(s.coeffs, mu * math.exp(-k) * sigma * MajorantSeries.geometric(sigma, 8).coeffs)


def test_commutator_examples():
    one = MajorantSeries.from_1d([1.0], 6)
    assert not np.any(majorant_commutator(one, one, (0, 0), (0, 0), 2, 0).coeffs)
    F = MajorantSeries.geometric(1.0, 8)
    got = majorant_commutator(F, F, (1, 0), (0, 1), 2, 0)
    sq = F * F
    want = sq.scale(2) + sq.derivative().scale(2)
    np.testing.assert_allclose(got.coeffs, want.coeffs)
    np.testing.assert_allclose(majorant_commutator(F.scale(2), F, (1, 0), (0, 1), 2, 0).coeffs, 2 * got.coeffs)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 2), st.integers(2, 8))
def test_majorant_closure_under_ops(seed, dim, cap):
    rng = np.random.default_rng(seed)
    f1, f2 = series(dim, cap, rng), series(dim, cap, rng)
    g1 = MajorantSeries(np.abs(f1.coeffs) + rng.uniform(0, 1, f1.coeffs.shape), cap)
    g2 = MajorantSeries(np.abs(f2.coeffs) + rng.uniform(0, 1, f2.coeffs.shape), cap)
    fo, go = majorant_ops(f1, f2), majorant_ops(g1, g2)
    for key in ("sum", "product", "derivative"):
        assert majorizes(go[key], fo[key]), key
    assert majorizes(g1.antiderivative(), f1.antiderivative())


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_partial_order(seed):
    rng = np.random.default_rng(seed)
    a = series(1, 6, rng, nonneg=True)
    b = MajorantSeries(a.coeffs + rng.uniform(0, 1, 7), 6)
    c = MajorantSeries(b.coeffs + rng.uniform(0, 1, 7), 6)
    assert majorizes(a, a)
    assert majorizes(b, a) and majorizes(c, b) and majorizes(c, a)
    assert not (majorizes(b, a) and majorizes(a, b)) or np.array_equal(a.coeffs, b.coeffs)


def test_linear_system_stays_ordered():
    rng = np.random.default_rng(3)
    M = rng.normal(size=(3, 3))
    Mbar = np.abs(M) + 0.05
    F0 = [series(1, 6, rng) for _ in range(3)]
    G0 = [MajorantSeries(np.abs(f.coeffs) + 0.01, 6) for f in F0]
    assert system_stays_ordered(M, Mbar, F0, G0, np.linspace(0, 2, 11))
    with pytest.raises(ValueError):
        system_stays_ordered(M, np.abs(M) * 0.5, F0, G0, [1.0])


def test_eval_W_examples():
    s = MajorantSolution(1.0, lambda d: 0.1875, 5)
    assert eval_W(s, 0.0, 1.0) == pytest.approx(4 / 3)
    assert eval_Wk(s, 0.0, 1.0, 10) == pytest.approx(4 / 3 * math.exp(0.5))
    assert eval_Wk(s, 0.0, 1.0, 4) == eval_W(s, 0.0, 1.0)
    zero = MajorantSolution(1.2, lambda d: 0.0, 5)
    for Y in (0.0, 0.3, 0.9):
        assert eval_W(zero, Y, 1.0) == pytest.approx(1 / (1.2 - Y))
        assert eval_Wk(zero, Y, 1.0, 17) == pytest.approx(1 / (1.2 - Y))
    with pytest.raises(DomainError):
        eval_W(MajorantSolution(1.0, lambda d: 0.25 + 1e-6, 5), 0.0, 1.0)


def test_W_at_zero_matches_geometric():
    a, A = constant_rate(0.1)
    s = MajorantSolution(1.3, A, 5, a_of_delta=a)
    geo = bound_to_majorant(1 / 1.3, 1.3, 1, cap=30)
    assert eval_W(s, 0.2, 0.0) == pytest.approx(geo(0.2), rel=1e-12)


@pytest.mark.parametrize("c", [0.0, 0.02, 0.05])
def test_pde_residual_constant_rate(c):
    a, A = constant_rate(c)
    s = MajorantSolution(1.0, A, 5, a_of_delta=a)
    rep = check_W_pde(s, np.linspace(0, 0.19, 10), np.linspace(0, 4, 21))
    assert rep.passed(1e-5)
    if c == 0.0:
        assert rep.max_residual == 0.0


def test_tr_properties_A_zero():
    s = MajorantSolution(0.9, lambda d: 0.0, 6)
    rep = check_tr_properties(s, [0.0, 0.1], [0.0, 1.0], [(2.0, 9.0), (7.0, 12.0)])
    assert rep.passed


def test_coefficient_check_sigma_one():
    assert all(coefficient_tr_check(1.0, 0.1, 5, 10).values())


@pytest.mark.parametrize("Y,delta,expected", [(0.0, 0.0, 1.0), (0.5, 0.0, 2.0), (0.0, 0.75, 4 / 3)])
def test_burgers_1dof(Y, delta, expected):
    assert solve_burgers_1dof(1.0, 1 / 8, Y, delta) == pytest.approx(expected)


def test_burgers_past_flow_time():
    with pytest.raises(DomainError):
        solve_burgers_1dof(1.0, 1 / 8, 0.0, 1.0 + 1e-9)

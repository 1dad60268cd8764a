import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad

from nekhoroshev.lattice import (
    FrequencyVector, PartitionParams, Region, classify, enumerate_diamond, s_k, stopping_time,
)
from nekhoroshev.sums import (
    SumQuery, adt_closed_form, bound_greater, bound_pm, bound_zero, bound_zero_many, brute_a,
    budget_A, sum_brute, sums_brute_many,
)

W10 = FrequencyVector((1, 0), 1.0)
W11 = FrequencyVector((1, 1), 1.0)


def test_zero_sum_worked_example():
    # rho3 + 2 rho2 = 0.5; l0 = (0, j), |j| <= 3
    params = PartitionParams((1.0, 0.1, 0.3), 4)
    got = sum_brute(SumQuery((1, 0), 0.0, params, W10), "zero")
    assert got == pytest.approx(1 + 2 * sum(math.exp(-j) for j in (1, 2, 3)), rel=1e-12)


def test_empty_sets_give_zero():
    small = PartitionParams((1, 1, 1), 0.5)
    assert sum_brute(SumQuery((1, 0), 0.0, small, W11), "pm") == 0.0


def _loop_oracle(k, delta, params, w, which):
    """Direct double loop over l+- in the diamond with l = k - l+-."""
    wgt = params.rho3 + 2 * params.rho2
    k = np.asarray(k)
    total = 0.0
    for lp in enumerate_diamond(params.K, w.n):
        c_lp = classify(lp, delta, params, w)
        if c_lp not in (Region.PLUS, Region.MINUS):
            continue
        l = k - lp
        c_l = classify(l, delta, params, w)
        if which == "pm" and not (c_lp == Region.PLUS and c_l == Region.MINUS):
            continue
        if which == "greater" and c_l != Region.GREATER:
            continue
        if which == "zero" and c_l != Region.ZERO:
            continue
        e = -(np.abs(lp).sum() + np.abs(l).sum() - np.abs(k).sum()) * wgt
        e -= (s_k(lp, delta, params, w) * w.inner(lp) + s_k(l, delta, params, w) * w.inner(l)
              - s_k(k, delta, params, w) * w.inner(k))
        total += math.exp(e)
    return total


@pytest.mark.parametrize("which", ["pm", "greater", "zero"])
@pytest.mark.parametrize("k,delta", [((6, 6), 0.0), ((2, -1), 0.7), ((1, 0), 1.3), ((0, 0), 0.2)])
def test_brute_matches_loop_oracle(which, k, delta):
    params = PartitionParams((1.0, 0.3, 0.6), 5)
    got = sum_brute(SumQuery(k, delta, params, W11), which)
    assert got == pytest.approx(_loop_oracle(k, delta, params, W11, which), rel=1e-12, abs=1e-300)


def test_unknown_sum_rejected():
    with pytest.raises(ValueError):
        sum_brute(SumQuery((1, 0), 0.0, PartitionParams((1, 1, 1), 4), W10), "plus")


@pytest.mark.parametrize("delta,expected", [(0.0, 25.0), (1.0, 5.0)])
def test_bound_pm_examples(delta, expected):
    # (2K)^n / (2 n!) = 100 / 4 at delta = 0
    assert bound_pm(delta, PartitionParams((1, 1, 1), 5), W11) == pytest.approx(expected)


def test_bound_pm_continuous_at_switch():
    params = PartitionParams((1, 1, 1), 5)
    s = W11.t_bar * 2 / (2 * 5)
    assert bound_pm(s, params, W11) == pytest.approx(bound_pm(s * (1 + 1e-12), params, W11), rel=1e-9)
    assert bound_greater(0.0, params, W11) == 2 * bound_pm(0.0, params, W11)


@pytest.mark.parametrize("n,expected", [(2, 8.0), (3, 32.0)])
def test_bound_zero_at_zero(n, expected):
    w = FrequencyVector((1,) + (0,) * (n - 1), 1.0)
    params = PartitionParams((1, 1, 1), 4)
    k = np.zeros(n, dtype=np.int64)
    assert bound_zero(k, 0.0, params, w)[0] == pytest.approx(expected)
    assert bound_zero((1,) + (0,) * (n - 1), 100.0, params, w)[0] == 0.0


def test_adt_worked_example():
    assert adt_closed_form(2, 1.0, 1e-3, 1.0, 1.0, 10, 0.1) == pytest.approx(23.2, abs=0.05)


def test_budget_zero_eps():
    b = budget_A(PartitionParams((1, 1, 0.1), 10), W11, 0.0, 1.0, 1.0)
    assert b.A_star == 0.0


def test_budget_rejects_negative():
    with pytest.raises(ValueError):
        budget_A(PartitionParams((1, 1, 1), 4), W11, -1.0, 1.0, 1.0)


@pytest.mark.parametrize("K,rho3", [(6, 0.5), (10, 0.1), (4, 1.0)])
def test_budget_antiderivative_matches_quadrature(K, rho3):
    params = PartitionParams((1.0, 0.25, rho3), K)
    b = budget_A(params, W11, 1e-4, 0.5, 1.0)
    dstar = K * W11.t_bar * rho3
    num, _ = quad(b.a, 0, dstar, points=[W11.t_bar * 2 / (2 * K)], limit=200)
    assert b.A_star == pytest.approx(num, rel=1e-6)


@settings(max_examples=25, deadline=None)
@given(st.lists(st.integers(-3, 3), min_size=2, max_size=2).filter(any), st.integers(4, 8),
       st.floats(0.25, 1.0), st.floats(0.25, 1.0), st.floats(0.0, 1.0))
def test_brute_sums_dominated(p, K, rho2, rho3, frac):
    w = FrequencyVector.from_integers(p, 1.0)
    params = PartitionParams((1.0, rho2, rho3), K)
    delta = frac * stopping_time(params, w)
    ks = enumerate_diamond(K, 2)
    s = sums_brute_many(ks, delta, params, w)
    assert s["pm"].max() <= bound_pm(delta, params, w)
    assert s["greater"].max() <= bound_greater(delta, params, w)
    assert np.all(s["zero"] <= bound_zero_many(ks, delta, params, w) + 1e-12)


def test_brute_a_below_closed_form_rate():
    params = PartitionParams((1.0, 0.5, 0.5), 6)
    b = budget_A(params, W11, 1e-4, 1.0, 1.0)
    for d in np.linspace(0, stopping_time(params, W11), 6):
        assert brute_a(d, params, W11, 1e-4, 1.0, 1.0) <= b.a(d)

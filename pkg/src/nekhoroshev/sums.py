"""Exponentially weighted convolution sums over the resonance lattice, their
closed-form upper bounds, and the averaging budget a(delta), A(delta)."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .lattice import (
    DIAMOND_CAP,
    FrequencyVector,
    PartitionParams,
    classify_from,
    enumerate_diamond,
    s_from,
)

WHICH = ("pm", "greater", "zero")
_CHUNK_PAIRS = 4_000_000


@dataclass(frozen=True)
class SumQuery:
    k: tuple[int, ...]
    delta: float
    params: PartitionParams
    omega: FrequencyVector


def _free_set(delta, params, omega):
    """Members of D+(delta) u D-(delta) with their lattice data."""
    lp = enumerate_diamond(params.K, omega.n)
    norm = np.abs(lp).sum(axis=1)
    level = lp @ omega.p_array
    code = classify_from(norm, level, delta, params, omega.t_bar)
    keep = np.abs(code) == 1
    lp, norm, level = lp[keep], norm[keep], level[keep]
    S = s_from(norm, level, delta, params, omega.t_bar)
    return lp, norm, level, S


def sums_brute_many(ks, delta: float, params: PartitionParams, omega: FrequencyVector,
                    cap: int = DIAMOND_CAP) -> dict[str, np.ndarray]:
    """Sigma_pm, Sigma_>, Sigma_0 for every row of ks at one delta.

    Weight E(k, l+-, l) = exp(-(|l+-|+|l|-|k|)(rho3+2rho2))
                          * exp(-(S_{l+-}<w,l+-> + S_l<w,l> - S_k<w,k>)).
    pm counts ordered pairs l+ in D+, l = k - l+ in D-; greater and zero take
    l+- over D+ u D- and l = k - l+- in D> or D0 respectively.
    """
    ks = np.atleast_2d(np.asarray(ks, dtype=np.int64))
    t = omega.t_bar
    lp, lp_norm, lp_level, lp_S = _free_set(delta, params, omega)
    out = {w: np.zeros(len(ks)) for w in WHICH}
    if len(lp) == 0 or len(ks) == 0:
        return out
    if len(ks) * len(lp) > cap:
        raise ValueError(f"brute sum needs {len(ks) * len(lp)} pairs > cap {cap}")
    k_norm = np.abs(ks).sum(axis=1)
    k_level = ks @ omega.p_array
    k_S = s_from(k_norm, k_level, delta, params, t)
    w = params.rho3 + 2 * params.rho2
    step = max(1, _CHUNK_PAIRS // (len(lp) * omega.n))
    lp_sign = np.sign(lp_level)
    for a in range(0, len(ks), step):
        b = min(a + step, len(ks))
        l = ks[a:b, None, :] - lp[None, :, :]
        l_norm = np.abs(l).sum(axis=2)
        l_level = k_level[a:b, None] - lp_level[None, :]
        code = classify_from(l_norm, l_level, delta, params, t)
        l_S = s_from(l_norm, l_level, delta, params, t)
        expo = -(lp_norm[None, :] + l_norm - k_norm[a:b, None]) * w
        expo -= (lp_S[None, :] * lp_level[None, :] + l_S * l_level
                 - (k_S[a:b] * k_level[a:b])[:, None]) / t
        E = np.exp(expo)
        out["pm"][a:b] = np.where((lp_sign[None, :] == 1) & (code == -1), E, 0.0).sum(axis=1)
        out["greater"][a:b] = np.where(code == 2, E, 0.0).sum(axis=1)
        out["zero"][a:b] = np.where(code == 0, E, 0.0).sum(axis=1)
    return out


def sum_brute(query: SumQuery, which: str) -> float:
    if which not in WHICH:
        raise ValueError(f"which must be one of {WHICH}")
    return float(sums_brute_many(np.asarray(query.k)[None, :], query.delta,
                                 query.params, query.omega)[which][0])


# ---------------------------------------------------------------- bounds

def _switch(params, omega) -> float:
    return omega.t_bar * omega.n / (2 * params.K)


def bound_pm(delta: float, params: PartitionParams, omega: FrequencyVector) -> float:
    n, K, t = omega.n, params.K, omega.t_bar
    if delta <= _switch(params, omega):
        return (2 * K) ** n / (2 * math.factorial(n))
    return (2 * K) ** (n - 1) * t / (2 * math.factorial(n - 1) * delta)


def bound_greater(delta: float, params: PartitionParams, omega: FrequencyVector) -> float:
    return 2.0 * bound_pm(delta, params, omega)


def bound_zero(k, delta: float, params: PartitionParams, omega: FrequencyVector) -> tuple[float, float]:
    """(k-dependent bound, k-free relaxation with |<w,k>| -> 1/T)."""
    n, K = omega.n, params.K
    fact = math.factorial(n - 1)

    def f(freq):
        base = max(0.0, 2 * K - 2 * freq * delta / params.rho3)
        return base ** (n - 1) / fact

    return f(abs(omega.inner(k))), f(1.0 / omega.t_bar)


def bound_zero_free(delta, params, omega) -> float:
    return bound_zero(np.zeros(omega.n, dtype=np.int64), delta, params, omega)[1]


def bound_zero_many(ks, delta, params, omega) -> np.ndarray:
    n = omega.n
    freq = np.abs(omega.inner(np.atleast_2d(ks)))
    base = np.maximum(0.0, 2 * params.K - 2 * freq * delta / params.rho3)
    return base ** (n - 1) / math.factorial(n - 1)


# ---------------------------------------------------------------- budget

@dataclass(frozen=True)
class Budget:
    """a(delta) = 6 K e^sigma eps sigma mu (2 S_pm + S_0 + S_>) with the closed
    bounds, A its exact antiderivative, A_star = A(K T rho3)."""

    params: PartitionParams
    omega: FrequencyVector
    eps: float
    mu: float
    sigma: float

    @property
    def prefactor(self) -> float:
        return 6 * self.params.K * math.exp(self.sigma) * self.eps * self.sigma * self.mu

    def a(self, delta: float) -> float:
        p, w = self.params, self.omega
        inner = 2 * bound_pm(delta, p, w) + bound_zero_free(delta, p, w) + bound_greater(delta, p, w)
        return self.prefactor * inner

    def A(self, delta) -> float:
        """Closed-form integral of a over [0, delta]."""
        delta = float(delta)
        if delta <= 0:
            return 0.0
        p, w = self.params, self.omega
        n, K, t, r3 = w.n, p.K, w.t_bar, p.rho3
        s1 = _switch(p, w)
        # 2 bound_pm + bound_greater = 4 bound_pm
        c0 = 2 * (2 * K) ** n / math.factorial(n)
        c1 = 2 * (2 * K) ** (n - 1) * t / math.factorial(n - 1)
        part = c0 * min(delta, s1)
        if delta > s1:
            part += c1 * math.log(delta / s1)
        # zero part: int_0^d (2K - 2s/(T r3))_+^{n-1}/(n-1)! ds
        d0 = min(delta, K * t * r3)
        zero = (t * r3 / 2) * ((2 * K) ** n - (2 * K - 2 * d0 / (t * r3)) ** n) / math.factorial(n)
        return self.prefactor * (part + zero)

    @property
    def A_star(self) -> float:
        return self.A(self.params.K * self.omega.t_bar * self.params.rho3)

    def __iter__(self):
        yield self.a
        yield self.A_star


def budget_A(params: PartitionParams, omega: FrequencyVector, eps: float, mu: float, sigma: float) -> Budget:
    if min(eps, mu, sigma) < 0:
        raise ValueError("eps, mu, sigma must be nonnegative")
    return Budget(params, omega, float(eps), float(mu), float(sigma))


def adt_closed_form(n: int, sigma: float, eps: float, mu: float, t_bar: float, K: float, rho3: float) -> float:
    """The printed closed form of A(delta*) (an upper bound of A(K T rho3)
    once 2K^2 rho3 / n >= 1)."""
    lead = 6 * math.exp(sigma) * sigma * eps * mu * t_bar * (2 * K) ** (n - 1) * K**2 * rho3 / math.factorial(n)
    return lead * (1 + (2 * n / (rho3 * K)) * (1 + math.log(2 * K**2 * rho3 / n)))


def brute_a(delta, params, omega, eps, mu, sigma, ks=None) -> float:
    """a(delta) with the brute sums (max over the diamond) in place of the bounds."""
    if ks is None:
        ks = enumerate_diamond(params.K, omega.n)
    s = sums_brute_many(ks, delta, params, omega)
    inner = np.max(2 * s["pm"] + s["zero"] + s["greater"])
    return 6 * params.K * math.exp(sigma) * eps * sigma * mu * float(inner)

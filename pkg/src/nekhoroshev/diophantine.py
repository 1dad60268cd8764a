"""Simultaneous Diophantine approximation: the Dirichlet step, the rescaled
variant with one unit component, and inversion of the frequency map onto a
periodic torus."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .lattice import FrequencyVector


@dataclass(frozen=True)
class ApproximationResult:
    q: int
    p: tuple[int, ...]
    t_bar: float
    err_inf: float
    alpha_star: np.ndarray
    pivot: int | None = None

    def frequency(self) -> FrequencyVector:
        """gcd(p, q) reduced jointly before building the frequency vector."""
        return FrequencyVector.from_integers(self.p, self.t_bar)


def round_half_away(x):
    x = np.asarray(x, dtype=float)
    return (np.sign(x) * np.floor(np.abs(x) + 0.5)).astype(np.int64)


def _search(alpha: np.ndarray, Q: float, bound: float) -> int:
    qmax = max(1, math.ceil(Q) - 1)
    qs = np.arange(1, qmax + 1, dtype=np.int64)
    # chunk so the q * alpha table stays small
    step = max(1, 2_000_000 // max(1, len(alpha)))
    for a in range(0, len(qs), step):
        block = qs[a:a + step, None] * alpha[None, :]
        dist = np.abs(block - round_half_away(block)).max(axis=1) if len(alpha) else np.zeros(len(block))
        hit = np.nonzero(dist <= bound * (1 + 1e-12))[0]
        if hit.size:
            return int(qs[a + hit[0]])
    raise AssertionError("Dirichlet search found no admissible q; implementation bug")


def dirichlet_classic(alpha, Q: float) -> ApproximationResult:
    """Smallest q in [1, ceil(Q)-1] with |q alpha - Z^n|_inf <= Q^{-1/n}."""
    alpha = np.atleast_1d(np.asarray(alpha, dtype=float))
    if not Q > 1:
        raise ValueError("Q must exceed 1")
    n = len(alpha)
    q = _search(alpha, Q, Q ** (-1.0 / n))
    p = round_half_away(q * alpha)
    err = float(np.abs(q * alpha - p).max()) if n else 0.0
    return ApproximationResult(q, tuple(int(v) for v in p), float(q), err, p / q)


def dirichlet_rescaled(alpha, Q: float) -> ApproximationResult:
    """alpha* of period T = q/|alpha_piv| with |alpha* - alpha|_inf <= 1/(T Q^{1/(n-1)}).

    Every nonzero component is tried as the unit pivot; the smallest q wins and
    ties go to the first index attaining |alpha|_inf, then to the lowest index.
    Pivots so small that Q |alpha / alpha_piv|_inf reaches 2^52 are skipped.
    """
    alpha = np.asarray(alpha, dtype=float)
    n = len(alpha)
    if n < 2:
        raise ValueError("rescaled approximation needs n >= 2; use dirichlet_classic")
    if not np.any(alpha):
        raise ValueError("alpha must be nonzero")
    if not Q > 1:
        raise ValueError("Q must exceed 1")
    first_max = int(np.argmax(np.abs(alpha)))
    order = [first_max] + [i for i in range(n) if i != first_max and alpha[i] != 0]
    best = None
    for piv in order:
        scale = abs(alpha[piv])
        if np.abs(alpha).max() * Q >= 2.0**52 * scale:
            continue    # q beta no longer resolves fractional parts in double precision
        beta = alpha / scale
        rest = np.delete(beta, piv)
        q = _search(rest, Q, Q ** (-1.0 / (n - 1)))
        if best is None or q < best[0]:
            best = (q, piv, scale)
    q, piv, scale = best
    beta = alpha / scale
    p = round_half_away(q * beta)
    p[piv] = int(np.sign(alpha[piv])) * q
    t_bar = q / scale
    star = p / t_bar
    err = float(np.abs(star - alpha).max())
    bound = 1.0 / (t_bar * Q ** (1.0 / (n - 1)))
    if err > bound * (1 + 1e-9):
        raise AssertionError(f"rescaled error {err} exceeds bound {bound}")
    return ApproximationResult(q, tuple(int(v) for v in p), t_bar, err, star, piv)


@dataclass(frozen=True)
class PeriodicAction:
    I_star: np.ndarray
    omega: FrequencyVector
    approximation: ApproximationResult
    distance: float
    bound: float
    chain: tuple[float, float, float]
    iterations: int

    def __iter__(self):
        yield self.I_star
        yield self.omega


def locate_periodic_action(spec, I, Q: float, tol: float = 1e-12, max_iter: int = 50) -> PeriodicAction:
    """Rational frequency alpha* near omega(I) and I* with omega(I*) = alpha*."""
    I = np.asarray(I, dtype=float)
    n = spec.n
    mm = spec.convexity.m_minus
    g3 = spec.convexity.grad3_inf
    if g3 > 0:
        lhs = math.sqrt(n - 1) / Q ** (1 / (n - 1))
        if not lhs < mm**2 / (4 * g3):
            raise ValueError(f"inversion hypothesis fails: {lhs} >= M-^2/(4|d3H0|) = {mm**2 / (4 * g3)}")
    w = spec.h0.grad(I)
    approx = dirichlet_rescaled(w, Q)
    target = approx.alpha_star
    x = I.copy()
    for it in range(1, max_iter + 1):
        res = spec.h0.grad(x) - target
        dx = np.linalg.solve(spec.h0.hessian(x), res)
        x = x - dx
        if np.abs(dx).max() <= tol * max(1.0, np.abs(x).max()) and \
                np.abs(spec.h0.grad(x) - target).max() <= 1e3 * tol * max(1.0, np.abs(target).max()):
            break
    else:
        raise RuntimeError(f"Newton inversion of the frequency map did not converge in {max_iter} iterations")
    dist = float(np.linalg.norm(I - x))
    bound = math.sqrt(n - 1) / (mm * approx.t_bar * Q ** (1 / (n - 1)))
    dw = spec.h0.grad(I) - spec.h0.grad(x)
    chain = (mm * dist, float(np.linalg.norm(dw)), math.sqrt(n - 1) * float(np.abs(dw).max()))
    slack = 1e-12 * max(1.0, chain[2])
    if not (chain[0] <= chain[1] + slack and chain[1] <= chain[2] + slack):
        raise ValueError(f"inequality chain M-|I-I*| <= |dw|_2 <= sqrt(n-1)|dw|_inf fails: {chain}")
    if dist > bound * (1 + 1e-9):
        raise ValueError(f"|I - I*| = {dist} exceeds certified radius {bound}")
    return PeriodicAction(x, approx.frequency(), approx, dist, bound, chain, it)

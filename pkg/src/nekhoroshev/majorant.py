"""Majorant calculus on truncated power series and the closed-form solutions
W, W^{|k|} of the majorant PDEs, plus the Burgers solution of the 1.5-dof
model problem."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.signal import convolve

DEFAULT_CAP = 24


class DomainError(ValueError):
    """Raised when a closed form leaves its validity region."""


# ---------------------------------------------------------------- series

def _degree_grid(dim: int, cap: int) -> np.ndarray:
    idx = np.indices((cap + 1,) * dim)
    return idx.sum(axis=0)


@dataclass(frozen=True)
class MajorantSeries:
    """Dense truncated power series sum_beta c_beta z^beta, |beta|_1 <= cap."""

    coeffs: np.ndarray
    degree_cap: int
    truncated: bool = False

    def __post_init__(self):
        c = np.array(self.coeffs, dtype=float)
        if c.ndim < 1 or any(s != self.degree_cap + 1 for s in c.shape):
            raise ValueError("coeffs must be a cube of side degree_cap + 1")
        c[_degree_grid(c.ndim, self.degree_cap) > self.degree_cap] = 0.0
        c.flags.writeable = False
        object.__setattr__(self, "coeffs", c)

    @property
    def dim(self) -> int:
        return self.coeffs.ndim

    @classmethod
    def zeros(cls, dim: int = 1, cap: int = DEFAULT_CAP) -> "MajorantSeries":
        return cls(np.zeros((cap + 1,) * dim), cap)

    @classmethod
    def from_dict(cls, terms: dict, dim: int = 1, cap: int = DEFAULT_CAP) -> "MajorantSeries":
        c = np.zeros((cap + 1,) * dim)
        for beta, v in terms.items():
            beta = (beta,) if np.ndim(beta) == 0 else tuple(beta)
            if sum(beta) <= cap:
                c[beta] += v
        return cls(c, cap)

    @classmethod
    def from_1d(cls, values, cap: int | None = None) -> "MajorantSeries":
        values = np.asarray(values, dtype=float)
        cap = len(values) - 1 if cap is None else cap
        c = np.zeros(cap + 1)
        m = min(len(values), cap + 1)
        c[:m] = values[:m]
        return cls(c, cap)

    @classmethod
    def geometric(cls, sigma: float, cap: int = DEFAULT_CAP) -> "MajorantSeries":
        """1/(sigma - Y)."""
        return cls(sigma ** -(np.arange(cap + 1) + 1.0), cap)

    def abs(self) -> "MajorantSeries":
        return MajorantSeries(np.abs(self.coeffs), self.degree_cap, self.truncated)

    def _aligned(self, other: "MajorantSeries"):
        if self.dim != other.dim:
            raise ValueError("dimension mismatch")
        cap = min(self.degree_cap, other.degree_cap)
        sl = (slice(0, cap + 1),) * self.dim
        return self.coeffs[sl], other.coeffs[sl], cap

    def __add__(self, other):
        a, b, cap = self._aligned(other)
        return MajorantSeries(a + b, cap, self.truncated or other.truncated)

    def __sub__(self, other):
        a, b, cap = self._aligned(other)
        return MajorantSeries(a - b, cap, self.truncated or other.truncated)

    def scale(self, c: float) -> "MajorantSeries":
        return MajorantSeries(c * self.coeffs, self.degree_cap, self.truncated)

    def __rmul__(self, c):
        return self.scale(float(c))

    def __mul__(self, other):
        if not isinstance(other, MajorantSeries):
            return self.scale(float(other))
        a, b, cap = self._aligned(other)
        full = convolve(a, b, method="direct")
        sl = (slice(0, cap + 1),) * self.dim
        out = full[sl].copy()
        deg = _degree_grid(self.dim, cap)
        mask = deg > cap
        # mass that falls beyond the cap: anything outside the kept cube or the simplex
        dropped = np.abs(full).sum() - np.abs(out[~mask]).sum()
        out[mask] = 0.0
        return MajorantSeries(out, cap, self.truncated or other.truncated or dropped > 0)

    def derivative(self, j: int = 0) -> "MajorantSeries":
        cap = self.degree_cap - 1
        if cap < 0:
            raise ValueError("cannot differentiate a degree-0 series")
        src = np.moveaxis(self.coeffs, j, 0)[1:]
        weights = np.arange(1, self.degree_cap + 1, dtype=float).reshape((-1,) + (1,) * (self.dim - 1))
        out = np.moveaxis(src * weights, 0, j)
        sl = (slice(0, cap + 1),) * self.dim
        return MajorantSeries(out[sl], cap, self.truncated)

    def antiderivative(self, j: int = 0) -> "MajorantSeries":
        """int_0^{z_j}; the top degree falls off the cap."""
        c = np.moveaxis(self.coeffs, j, 0)
        out = np.zeros_like(c)
        out[1:] = c[:-1] / np.arange(1, self.degree_cap + 1).reshape((-1,) + (1,) * (self.dim - 1))
        top = np.any(np.moveaxis(self.coeffs, j, 0)[-1] != 0)
        deg = _degree_grid(self.dim, self.degree_cap)
        lost = np.any(self.coeffs[deg == self.degree_cap] != 0)
        return MajorantSeries(np.moveaxis(out, 0, j), self.degree_cap, self.truncated or bool(top or lost))

    def __call__(self, *z) -> float:
        z = np.asarray(z, dtype=float)
        total = 0.0
        for beta in zip(*np.nonzero(self.coeffs)):
            total += self.coeffs[beta] * float(np.prod(z ** np.array(beta)))
        return total


def majorizes(g: MajorantSeries, f: MajorantSeries) -> bool:
    """g >> f: g_beta >= |f_beta| for every beta within both caps."""
    a, b, _ = g._aligned(f)
    return bool(np.all(a >= np.abs(b)))


def parametric_integral(family: Callable[[float], MajorantSeries], lo: float = 0.0,
                        hi: float = 1.0, nodes: int = 16) -> MajorantSeries:
    """int_lo^hi f_lambda d lambda by Gauss-Legendre; the weights are
    positive, so the quadrature preserves the ordering exactly."""
    x, w = np.polynomial.legendre.leggauss(nodes)
    lam = 0.5 * (hi - lo) * x + 0.5 * (hi + lo)
    w = 0.5 * (hi - lo) * w
    acc = None
    for li, wi in zip(lam, w):
        term = family(float(li)).scale(wi)
        acc = term if acc is None else acc + term
    return acc


def majorant_ops(f: MajorantSeries, g: MajorantSeries) -> dict[str, MajorantSeries]:
    """Sum, product, derivative and integral of one pair."""
    return {
        "sum": f + g,
        "product": f * g,
        "derivative": f.derivative(0),
        "integral": parametric_integral(lambda lam: f.scale(lam) + g.scale(1 - lam)),
    }


def bound_to_majorant(c: float, b: float, dims: int = 1, cap: int = DEFAULT_CAP) -> MajorantSeries:
    """b c / (b - (z_1 + ... + z_dims)); coefficients c b^{-|beta|} |beta|!/beta!."""
    if c < 0 or b <= 0:
        raise ValueError("need c >= 0 and b > 0")
    out = np.zeros((cap + 1,) * dims)
    for beta in itertools.product(range(cap + 1), repeat=dims):
        s = sum(beta)
        if s > cap:
            continue
        multinom = math.factorial(s) / math.prod(math.factorial(v) for v in beta)
        out[beta] = c * b ** (-s) * multinom
    return MajorantSeries(out, cap)


def majorant_commutator(F: MajorantSeries, G: MajorantSeries, l, k, n: int, m: int) -> MajorantSeries:
    """(|l|_1 + |k|_1) F G + (n + 2m) d/dY (F G)."""
    fg = F * G
    weight = float(np.abs(l).sum() + np.abs(k).sum())
    return fg.scale(weight) + fg.derivative(0).scale(n + 2 * m)


# ---------------------------------------------------------------- W, W^{|k|}

@dataclass(frozen=True)
class MajorantSolution:
    sigma: float
    A_of_delta: Callable[[float], float]
    K: float
    a_of_delta: Callable[[float], float] | None = None
    B_of_delta: Callable[[float], float] | None = None
    y_max: float | None = None

    @property
    def B(self):
        return self.A_of_delta if self.B_of_delta is None else self.B_of_delta

    def discriminant(self, Y, delta):
        return (self.sigma - Y) ** 2 - 4 * self.A_of_delta(delta)


def constant_rate(c: float) -> tuple[Callable, Callable]:
    """(a, A) for a(delta) = c."""
    return (lambda d: c), (lambda d: c * d)


def _sqrt_disc(sol: MajorantSolution, Y, delta):
    D = sol.discriminant(Y, delta)
    if np.any(np.asarray(D) < 0):
        raise DomainError(f"(sigma-Y)^2 - 4A(delta) < 0 at Y={Y}, delta={delta}: flow time exceeded")
    if np.any(np.asarray(Y) >= sol.sigma):
        raise DomainError("Y must stay below sigma")
    return np.sqrt(D)


def eval_W(sol: MajorantSolution, Y, delta):
    if sol.y_max is not None and np.any(np.abs(Y) > sol.y_max):
        raise DomainError(f"|Y| exceeds the configured window {sol.y_max}")
    r = _sqrt_disc(sol, Y, delta)
    return 2.0 / ((sol.sigma - Y) + r)


def eval_W_Y(sol: MajorantSolution, Y, delta):
    r = _sqrt_disc(sol, Y, delta)
    return eval_W(sol, Y, delta) / r


def eval_Wk(sol: MajorantSolution, Y, delta, k_norm):
    W = eval_W(sol, Y, delta)
    k_norm = np.asarray(k_norm, dtype=float)
    grown = W * np.exp(W * sol.B(delta) * k_norm / sol.K)
    out = np.where(k_norm > sol.K, grown, W)
    return float(out) if out.ndim == 0 else out


def eval_Wk_Y(sol: MajorantSolution, Y, delta, k_norm):
    W = eval_W(sol, Y, delta)
    WY = eval_W_Y(sol, Y, delta)
    c = sol.B(delta) * np.asarray(k_norm, dtype=float) / sol.K
    grown = WY * np.exp(c * W) * (1 + c * W)
    out = np.where(np.asarray(k_norm) > sol.K, grown, WY)
    return float(out) if out.ndim == 0 else out


@dataclass
class ResidualReport:
    max_residual_W: float
    max_residual_Wk: float
    points: int
    skipped: int
    worst: dict = field(default_factory=dict)

    @property
    def max_residual(self) -> float:
        return max(self.max_residual_W, self.max_residual_Wk)

    def passed(self, tol: float = 1e-5) -> bool:
        return self.max_residual <= tol


def check_W_pde(sol: MajorantSolution, Ys, deltas, k_norms=None, h: float = 1e-4,
                breakpoints=(), margin: float = 0.2) -> ResidualReport:
    """Central-difference residuals of W_d = a W W_Y and
    W^k_d = a (W W^k_Y + |k|/K W W^k), scaled by max(1, |rhs|).

    Points with (s-Y)^2 - 4A < margin (s-Y)^2 are skipped: W_Y is singular on
    the boundary of the validity region."""
    if sol.a_of_delta is None:
        raise ValueError("check_W_pde needs a_of_delta")
    k_norms = [2 * sol.K, 1.5 * sol.K + 1] if k_norms is None else list(k_norms)
    rw = rk = 0.0
    worst = {}
    pts = skipped = 0
    for d in deltas:
        hd = h * max(1.0, abs(d))
        if d - hd < 0 or any(abs(d - b) <= 2 * hd for b in breakpoints):
            skipped += 1
            continue
        a = sol.a_of_delta(d)
        for Y in Ys:
            hy = h * max(1.0, abs(Y))
            if sol.discriminant(Y + hy, d + hd) < margin * (sol.sigma - Y) ** 2:
                skipped += 1
                continue
            try:
                W = eval_W(sol, Y, d)
                Wd = (eval_W(sol, Y, d + hd) - eval_W(sol, Y, d - hd)) / (2 * hd)
                WY = (eval_W(sol, Y + hy, d) - eval_W(sol, Y - hy, d)) / (2 * hy)
            except DomainError:
                skipped += 1
                continue
            pts += 1
            rhs = a * W * WY
            r = abs(Wd - rhs) / max(1.0, abs(rhs))
            if r > rw:
                rw, worst["W"] = r, (Y, d)
            for kn in k_norms:
                Wk = eval_Wk(sol, Y, d, kn)
                Wkd = (eval_Wk(sol, Y, d + hd, kn) - eval_Wk(sol, Y, d - hd, kn)) / (2 * hd)
                WkY = (eval_Wk(sol, Y + hy, d, kn) - eval_Wk(sol, Y - hy, d, kn)) / (2 * hy)
                extra = (kn / sol.K) * W * Wk if kn > sol.K else 0.0
                rhs = a * (W * WkY + extra)
                r = abs(Wkd - rhs) / max(1.0, abs(rhs))
                if r > rk:
                    rk, worst["Wk"] = r, (Y, d, kn)
    return ResidualReport(rw, rk, pts, skipped, worst)


TR_ITEMS = (
    "1: 1/(s-Y) <= W <= W_Y",
    "2: W <= W^k",
    "3: W_Y W^k <= W W^k_Y",
    "4: W^k <= W e^{s|k|/K}",
    "5: W^k' <= W^k e^{s(|k'|-|k|)/K}",
)


@dataclass
class PropertyReport:
    checked: int
    failures: dict[str, int]
    examples: dict[str, tuple] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(v == 0 for v in self.failures.values())


def check_tr_properties(sol: MajorantSolution, Ys, deltas, k_pairs, rtol: float = 1e-12) -> PropertyReport:
    """Pointwise surrogate of the five ordering statements. k_pairs is a list
    of (|k|, |k'|) with |k| < |k'|; item 2-4 use both members."""
    fails = {name: 0 for name in TR_ITEMS}
    examples = {}
    checked = 0

    def le(x, y):
        return x <= y * (1 + rtol) + 1e-300

    def record(name, ok, info):
        if not ok:
            fails[name] += 1
            examples.setdefault(name, info)

    for d in deltas:
        for Y in Ys:
            try:
                W = eval_W(sol, Y, d)
                WY = eval_W_Y(sol, Y, d)
            except DomainError:
                continue
            checked += 1
            info = (sol.sigma, sol.K, Y, d, sol.A_of_delta(d))
            record(TR_ITEMS[0], le(1 / (sol.sigma - Y), W) and le(W, WY), info)
            for kn, kpn in k_pairs:
                for q in (kn, kpn):
                    Wk = eval_Wk(sol, Y, d, q)
                    WkY = eval_Wk_Y(sol, Y, d, q)
                    record(TR_ITEMS[1], le(W, Wk), info + (q,))
                    record(TR_ITEMS[2], le(WY * Wk, W * WkY), info + (q,))
                    record(TR_ITEMS[3], le(Wk, W * math.exp(sol.sigma * q / sol.K)), info + (q,))
                lhs = eval_Wk(sol, Y, d, kpn)
                rhs = eval_Wk(sol, Y, d, kn) * math.exp(sol.sigma * (kpn - kn) / sol.K)
                record(TR_ITEMS[4], le(lhs, rhs), info + (kn, kpn))
    return PropertyReport(checked, fails, examples)


def coefficient_tr_check(sigma: float, A: float, K: float, k_norm: float, cap: int = 12) -> dict[str, bool]:
    """Coefficientwise versions of items 1-2 from the Taylor series of W in Y
    at fixed delta (A fixed), via the quadratic A W^2 - (s-Y) W + 1 = 0."""
    # W(Y) = sum w_j Y^j solves A W^2 - (sigma - Y) W + 1 = 0 order by order
    w = np.zeros(cap + 2)
    w[0] = 2 / (sigma + math.sqrt(sigma**2 - 4 * A))
    denom = sigma - 2 * A * w[0]
    for j in range(1, cap + 2):
        conv = sum(w[i] * w[j - i] for i in range(1, j))
        w[j] = (w[j - 1] + A * conv) / denom
    W = MajorantSeries.from_1d(w[: cap + 1], cap)
    W_full = MajorantSeries.from_1d(w, cap + 1)
    WY = W_full.derivative(0)
    geo = MajorantSeries.geometric(sigma, cap)
    # W^k = W exp(c W) with c = A|k|/K, expanded by series composition
    c = A * k_norm / K if k_norm > K else 0.0
    expo = MajorantSeries.from_1d([1.0], cap)
    term = MajorantSeries.from_1d([1.0], cap)
    cw = W.scale(c)
    for j in range(1, cap + 1):
        term = (term * cw).scale(1.0 / j)
        expo = expo + term
    Wk = W * expo
    return {
        "geo<<W": majorizes(W, geo),
        "W<<W_Y": majorizes(WY, W),
        "W<<W^k": majorizes(Wk, W),
    }


def solve_burgers_1dof(sigma: float, C: float, Y, delta):
    """U = 2 sigma / ((sigma-Y) + sqrt((sigma-Y)^2 - 8 sigma C delta))."""
    D = (sigma - np.asarray(Y, dtype=float)) ** 2 - 8 * sigma * C * delta
    if np.any(D < 0):
        raise DomainError(f"maximal flow time sigma/(8C) = {sigma / (8 * C) if C else math.inf} exceeded")
    out = 2 * sigma / ((sigma - np.asarray(Y, dtype=float)) + np.sqrt(D))
    return float(out) if out.ndim == 0 else out


def sample_admissible(rng: np.random.Generator, n: int = 2, m: int = 0):
    """Random (sigma, K, Y, A) inside the validity region: 5 (sqrt n + 2 sqrt m) R < sigma,
    |Y| < (sqrt n + 2 sqrt m) R and A <= (sigma - Y_max)^2 / 4."""
    sigma = float(rng.uniform(0.1, 2.0))
    K = float(rng.integers(2 * (n + 2 * m), 13))
    y_max = float(rng.uniform(0.0, 1.0)) * sigma / 5
    A = float(rng.uniform(0.0, 1.0)) * (sigma - y_max) ** 2 / 4
    Y = float(rng.uniform(0.0, y_max)) if y_max > 0 else 0.0
    return sigma, K, Y, A, y_max


@dataclass
class SuiteReport:
    residual_constant: ResidualReport
    residual_piecewise: ResidualReport
    properties: PropertyReport
    samples: int
    tol: float

    @property
    def residuals_passed(self) -> bool:
        return self.residual_constant.passed(self.tol) and self.residual_piecewise.passed(self.tol)

    @property
    def passed(self) -> bool:
        return self.residuals_passed and self.properties.passed

    def rows(self):
        yield "pde W/W^k, constant a", self.residual_constant.max_residual, self.residual_constant.passed(self.tol)
        yield "pde W/W^k, piecewise a", self.residual_piecewise.max_residual, self.residual_piecewise.passed(self.tol)
        for name, count in self.properties.failures.items():
            yield f"item {name}", float(count), count == 0


def majorant_suite(seed: int = 0, samples: int = 1000, tol: float = 1e-5) -> SuiteReport:
    """Residuals on the standard grid (constant a, then the piecewise budget
    rate of a 2-dof partition) and the ordering items on random admissible
    samples."""
    from .lattice import FrequencyVector, PartitionParams
    from .sums import _switch, budget_A

    a, A = constant_rate(0.05)
    const = MajorantSolution(1.0, A, 5.0, a_of_delta=a)
    r_const = check_W_pde(const, np.linspace(0.0, 0.19, 10), np.linspace(0.0, 4.0, 21))

    params = PartitionParams((1.0, 0.25, 0.5), 6.0)
    omega = FrequencyVector.from_integers((1, 1), 1.0)
    bud = budget_A(params, omega, 1e-4, 0.05, 1.0)
    pw = MajorantSolution(1.0, bud.A, params.K, a_of_delta=bud.a)
    d_star = params.K * omega.t_bar * params.rho3
    breaks = (_switch(params, omega), d_star)
    r_pw = check_W_pde(pw, np.linspace(0.0, 0.19, 10), np.linspace(0.0, d_star, 21), breakpoints=breaks)

    rng = np.random.default_rng(seed)
    fails = {name: 0 for name in TR_ITEMS}
    examples: dict = {}
    checked = 0
    for _ in range(samples):
        sg, K, Y, Aval, _ym = sample_admissible(rng)
        sol = MajorantSolution(sg, lambda d, Aval=Aval: Aval * d, K)
        kp = tuple(sorted(rng.uniform(0.0, 3 * K, 2)))
        rep = check_tr_properties(sol, [Y], [1.0], [kp])
        checked += rep.checked
        for k, v in rep.failures.items():
            fails[k] += v
        for k, v in rep.examples.items():
            examples.setdefault(k, v)
    return SuiteReport(r_const, r_pw, PropertyReport(checked, fails, examples), samples, tol)


def integrate_linear_system(M, F0: list[MajorantSeries], times) -> list[list[MajorantSeries]]:
    """Solutions of the series system f_delta = M f (M a constant real matrix
    acting on the vector of series) at each output time."""
    from scipy.linalg import expm

    M = np.asarray(M, dtype=float)
    cap = F0[0].degree_cap
    stack = np.stack([f.coeffs for f in F0])
    flat = stack.reshape(len(F0), -1)
    out = []
    for t in times:
        vals = (expm(float(t) * M) @ flat).reshape(stack.shape)
        out.append([MajorantSeries(v, cap) for v in vals])
    return out


def system_stays_ordered(M, Mbar, F0, G0, times) -> bool:
    """Comparison for linear series systems: |M| <= Mbar entrywise and G0 >> F0 imply
    G(delta) >> F(delta) at every output time."""
    M, Mbar = np.asarray(M, dtype=float), np.asarray(Mbar, dtype=float)
    if np.any(np.abs(M) > Mbar) or not all(majorizes(g, f) for f, g in zip(F0, G0)):
        raise ValueError("hypotheses of the comparison do not hold")
    fs = integrate_linear_system(M, F0, times)
    gs = integrate_linear_system(Mbar, G0, times)
    return all(majorizes(g, f) for Fs, Gs in zip(fs, gs) for f, g in zip(Fs, Gs))

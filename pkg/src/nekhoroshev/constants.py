"""Explicit stability constants: closed forms for the confinement radius and
stability time, the constraint bullets of the global, local and normal-form
statements, and the rho-split optimizer."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class ConstraintRow:
    name: str
    lhs: float
    rhs: float
    strict: bool = False
    detail: str = ""

    @property
    def relation(self) -> str:
        return "<" if self.strict else "<="

    @property
    def satisfied(self) -> bool:
        return self.lhs < self.rhs if self.strict else self.lhs <= self.rhs

    @property
    def lhs_str(self) -> str:
        return repr(float(self.lhs))

    @property
    def rhs_str(self) -> str:
        return repr(float(self.rhs))

    def audit(self) -> bool:
        """Recompute the verdict from the printed strings."""
        a, b = float(self.lhs_str), float(self.rhs_str)
        return (a < b if self.strict else a <= b) == self.satisfied


class InfeasibleError(ValueError):
    def __init__(self, message: str, binding: str, report: "StabilityReport | None" = None):
        super().__init__(message)
        self.binding = binding
        self.report = report


@dataclass
class StabilityReport:
    regime: str
    confinement: float
    time_log: float
    rho_split: tuple
    K: float
    R: float
    t_bar: float
    Q: float
    r: float
    constraints: list
    eps: float = 0.0
    mu: float = 0.0
    extra: dict = field(default_factory=dict)
    diagnostics: list = field(default_factory=list)

    @property
    def feasible(self) -> bool:
        return all(c.satisfied for c in self.constraints)

    @property
    def violated(self) -> list:
        return [c for c in self.constraints if not c.satisfied]

    @property
    def binding(self) -> str | None:
        """Name of the first violated row, else the row with least slack."""
        bad = self.violated
        if bad:
            return bad[0].name
        def slack(c):
            return (c.rhs - c.lhs) / max(abs(c.rhs), 1e-300) if math.isfinite(c.rhs) else math.inf
        return min(self.constraints, key=slack).name if self.constraints else None

    def rows(self) -> list[dict]:
        return [{"name": c.name, "lhs": c.lhs_str, "relation": c.relation, "rhs": c.rhs_str,
                 "satisfied": c.satisfied, "detail": c.detail} for c in self.constraints]

    def table(self) -> str:
        head = [
            f"regime          {self.regime}",
            f"eps             {self.eps:.17g}",
            f"mu              {self.mu:.17g}",
            f"rho_split       " + ", ".join(f"{v:.17g}" for v in self.rho_split),
            f"confinement     {self.confinement:.17g}",
            f"time_log        {self.time_log:.17g}",
            f"K               {self.K:.17g}",
            f"R               {self.R:.17g}",
            f"t_bar           {self.t_bar:.17g}",
            f"Q               {self.Q:.17g}",
            f"r               {self.r:.17g}",
            f"feasible        {self.feasible}",
        ]
        for k, v in self.extra.items():
            head.append(f"{k:<15} {v:.17g}" if isinstance(v, float) else f"{k:<15} {v}")
        lines = head + ["", f"{'constraint':<34} {'lhs':>24} rel {'rhs':>24}  ok"]
        for c in self.constraints + self.diagnostics:
            lines.append(f"{c.name:<34} {c.lhs_str:>24} {c.relation:^3} {c.rhs_str:>24}  "
                         f"{'yes' if c.satisfied else 'NO'}{'  ' + c.detail if c.detail else ''}")
        return "\n".join(lines)


# ---------------------------------------------------------------- shared bullets

def nf_budget_lhs(n: int, sigma: float, eps: float, mu: float, t_bar: float, K: float, rho3: float) -> float:
    """(3/pi) e^sigma eps mu T (2K)^{n-1} K^2 rho3 / n! (1 + 2n/(rho3 K)(1 + ln(2K^2 rho3/n)))."""
    T = 2 * math.pi * t_bar
    core = 3 / math.pi * math.exp(sigma) * eps * mu * T * (2 * K) ** (n - 1) * K**2 * rho3 / math.factorial(n)
    if core == 0:
        return 0.0
    return core * (1 + (2 * n / (rho3 * K)) * (1 + math.log(2 * K**2 * rho3 / n)))


def normal_form_constraints(n: int, m: int, R: float, sigma: float, rho1: float, rho3: float,
                            K: float, eps: float, mu: float, t_bar: float) -> list[ConstraintRow]:
    """The bullet list of the normal-form statement."""
    return [
        ConstraintRow("nf.width: 5(sqrt n+2sqrt m)R < sigma",
                      5 * (math.sqrt(n) + 2 * math.sqrt(m)) * R, sigma, strict=True),
        ConstraintRow("nf.K_dim: 2(n+2m) <= K", 2 * (n + 2 * m), K),
        ConstraintRow("nf.K_rho1: 2sigma/(5rho1) <= K", 2 * sigma / (5 * rho1), K),
        ConstraintRow("nf.budget: A(delta*) <= 4sigma/25",
                      nf_budget_lhs(n, sigma, eps, mu, t_bar, K, rho3), 4 * sigma / 25),
    ]


# ---------------------------------------------------------------- global

def _spec_consts(spec):
    c = spec.convexity
    return spec.n, spec.m, c.m_minus, c.m_plus, c.grad_inf, c.grad3_inf, spec.sigma


def global_constraints(n, m, mm, mp, g, g3, sigma, eps, mu, rho_split):
    rho1, rho2, rho3 = rho_split
    s = eps ** (1 / (2 * n))
    sq = math.sqrt(n - 1)
    c = mm**2 / (8 * sq * mp)
    terms = {
        "averaging (rho2+rho3)^n": sq * g**2 * (rho2 + rho3) ** n / (5 * n * mu * mm) if mu > 0 else math.inf,
        "frequency-map inversion": mm**2 / (4 * sq * g3) if g3 > 0 else math.inf,
        "width sigma": c * sigma / (5 * (math.sqrt(n) + 2 * math.sqrt(m)) * g),
        "K >= 2(n+2m)": c * rho1 / (2 * (n + 2 * m) * rho3),
        "K >= 2sigma/(5rho1)": c * 5 * rho1**2 / (2 * sigma * rho3),
    }
    binding = min(terms, key=terms.get)
    b3a = 3 * math.exp(sigma) * rho3 / (math.factorial(n) * g) * (rho1 * mm**2 / (rho3 * 4 * sq * mp)) ** (n + 1)
    if s > 0:
        inner = rho1**2 * mm**4 * eps ** (-1 / n) / (32 * n * (n - 1) * mp**2 * rho3)
        b3b = s * 16 * n * sq * mp / (rho1 * mm**2) * (1 + math.log(inner))
    else:
        b3b = 0.0
    rows = [
        ConstraintRow("global.1: 6mu/rho2^n <= M+^2 g^2/M-^3", 6 * mu / rho2**n, mp**2 * g**2 / mm**3),
        ConstraintRow("global.2: eps^(1/2n) <= min{...}", s, terms[binding], detail=f"binding term: {binding}"),
        ConstraintRow("global.3a: n! inequality < 4sigma/25", b3a, 4 * sigma / 25, strict=True),
        ConstraintRow("global.3b: log inequality <= 1", b3b, 1.0),
    ]
    diag = [ConstraintRow("diag.3a with mu factor", mu * b3a, 4 * sigma / 25, strict=True,
                          detail="substitution keeps mu; printed form omits it")]
    return rows, diag, terms


def global_constants(spec, eps: float, rho_split, mu: float | None = None) -> "StabilityReport":
    """Closed-form global estimates with a = b = 1/2n."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    rho_split = tuple(float(v) for v in rho_split)
    if min(rho_split) <= 0 or abs(sum(rho_split) + rho_split[1] - spec.rho) > 1e-12 * max(1, spec.rho):
        raise ValueError("rho_split must be positive with rho1 + 2rho2 + rho3 = rho")
    mu = spec.mu if mu is None else float(mu)
    n, m, mm, mp, g, g3, sigma = _spec_consts(spec)
    rho1, rho2, rho3 = rho_split
    s = eps ** (1 / (2 * n))
    sq = math.sqrt(n - 1)
    confinement = 8 * sq * mp / mm**2 * s * g
    exponent = (mm / mp) ** 2 * rho1 / (8 * sq * s)
    Q = eps ** (-(n - 1) / (2 * n))
    RT = 8 * sq * mp * s / mm**2
    t_bar = Q / g                       # largest admissible period
    r = sq / (mm * t_bar * Q ** (1 / (n - 1)))
    R = 8 * r * mp / mm
    K = rho1 / (rho3 * mp * RT)
    rows, diag, terms = global_constraints(n, m, mm, mp, g, g3, sigma, eps, mu, rho_split)
    extra = {"time_exponent": exponent, "R_times_Tbar": RT, "eps_pow": s}
    extra.update({f"min term [{k}]": v for k, v in terms.items()})
    return StabilityReport("global", confinement, exponent - math.log(g), rho_split, K, R, t_bar, Q, r,
                           rows, eps, mu, extra, diag)


# ---------------------------------------------------------------- local

def local_constants(spec, eps: float, mu: float, r: float, t_bar: float, rho_split,
                    omega_norm: float | None = None) -> "StabilityReport":
    """Stability near a periodic orbit of period T = 2 pi t_bar with |I(0)| <= r."""
    if min(r, t_bar) <= 0 or eps < 0 or mu < 0:
        raise ValueError("need r, t_bar > 0 and eps, mu >= 0")
    rho_split = tuple(float(v) for v in rho_split)
    n, m, mm, mp, g, _, sigma = _spec_consts(spec)
    rho1, rho2, rho3 = rho_split
    R = 8 * r * mp / mm
    K = rho1 / (rho3 * mp * R * t_bar)
    wn = g if omega_norm is None else float(omega_norm)
    exponent = rho1 / (mp * R * t_bar)
    rows = [
        ConstraintRow("local.1: 6 eps mu M-/rho2^n <= M+^2 r^2", 6 * eps * mu * mm / rho2**n, mp**2 * r**2),
        ConstraintRow("local.2: 5n eps mu T/(rho2+rho3)^n <= r", 5 * n * eps * mu * t_bar / (rho2 + rho3) ** n, r),
    ] + normal_form_constraints(n, m, R, sigma, rho1, rho3, K, eps, mu, t_bar)
    confinement = 2 * r + 5 * r * mp / mm
    extra = {"time_exponent": exponent, "stability_time_log": exponent - math.log(wn), "omega_norm": wn}
    return StabilityReport("local", confinement, exponent - math.log(wn), rho_split, K, R, t_bar,
                           math.nan, r, rows, eps, mu, extra)


# ---------------------------------------------------------------- optimizer

def _report_for(spec, eps, regime, split, mu, r, t_bar, omega_norm):
    if regime == "global":
        return global_constants(spec, eps, split, mu)
    return local_constants(spec, eps, mu, r, t_bar, split, omega_norm)


def optimize_rho_split(spec, eps: float, regime: str = "global", *, mu: float | None = None,
                       r: float | None = None, t_bar: float | None = None,
                       omega_norm: float | None = None, grid: int = 200, tol: float = 1e-10):
    """Maximise rho1 = rho - 2 rho2 - rho3 subject to every bullet of the regime.

    For fixed rho3 the feasible rho2 form an interval (bullets are monotone in
    rho2 through rho2 itself or through rho1), so the inner problem is a
    bisection for the smallest feasible rho2; the outer one is a grid scan in
    (rho2, rho3) followed by golden-section refinement in rho3.
    """
    if regime not in ("global", "local"):
        raise ValueError("regime must be 'global' or 'local'")
    if regime == "local" and (r is None or t_bar is None):
        raise ValueError("local regime needs r and t_bar")
    mu = spec.mu if mu is None else float(mu)
    rho = spec.rho

    def feasible(r2, r3):
        r1 = rho - 2 * r2 - r3
        if min(r1, r2, r3) <= 0:
            return False
        return _report_for(spec, eps, regime, (r1, r2, r3), mu, r, t_bar, omega_norm).feasible

    # open interval grid: rho2 in (0, rho/2), rho3 in (0, rho)
    r2s = (np.arange(grid) + 0.5) / grid * rho / 2
    r3s = (np.arange(grid) + 0.5) / grid * rho
    best, counts = None, {}
    for r3 in r3s:
        for r2 in r2s:
            r1 = rho - 2 * r2 - r3
            if r1 <= 0:
                break
            rep = _report_for(spec, eps, regime, (r1, r2, r3), mu, r, t_bar, omega_norm)
            if rep.feasible:
                if best is None or r1 > best[0]:
                    best = (r1, r2, r3)
                break   # larger rho2 only lowers rho1
            for c in rep.violated:
                counts[c.name] = counts.get(c.name, 0) + 1
    if best is None:
        binding = max(counts, key=counts.get) if counts else "rho budget"
        probe = _report_for(spec, eps, regime, (rho / 2, rho / 8, rho / 4), mu, r, t_bar, omega_norm)
        raise InfeasibleError(f"no feasible rho split for eps={eps!r}; binding constraint: {binding}",
                              binding, probe)

    def min_r2(r3, hint_feasible):
        """Smallest feasible rho2 for this rho3 (bisection); None if none."""
        hi = hint_feasible
        if hi is None:
            cand = [v for v in r2s if rho - 2 * v - r3 > 0 and feasible(v, r3)]
            if not cand:
                return None
            hi = cand[0]
        lo = 0.0
        while hi - lo > tol * max(1.0, hi):
            mid = 0.5 * (lo + hi)
            if feasible(mid, r3):
                hi = mid
            else:
                lo = mid
        return hi

    def objective(r3):
        r2 = min_r2(r3, None)
        return -math.inf if r2 is None else rho - 2 * r2 - r3

    _, b2, b3 = best
    step = rho / grid
    lo, hi = max(b3 - step, tol), min(b3 + step, rho - tol)
    g = (math.sqrt(5) - 1) / 2
    x1, x2 = hi - g * (hi - lo), lo + g * (hi - lo)
    f1, f2 = objective(x1), objective(x2)
    it = 0
    while hi - lo > tol and it < 200:
        it += 1
        if f1 >= f2:
            hi, x2, f2 = x2, x1, f1
            x1 = hi - g * (hi - lo)
            f1 = objective(x1)
        else:
            lo, x1, f1 = x1, x2, f2
            x2 = lo + g * (hi - lo)
            f2 = objective(x2)
    r2 = min_r2(b3, b2)
    cands = [(rho - 2 * r2 - b3, r2, b3)]
    for x in (x1, x2, 0.5 * (lo + hi)):
        y = min_r2(x, None)
        if y is not None:
            cands.append((rho - 2 * y - x, y, x))
    # trust but verify
    for r1, r2, r3 in sorted(cands, reverse=True):
        split = (r1, r2, r3)
        rep = _report_for(spec, eps, regime, split, mu, r, t_bar, omega_norm)
        if rep.feasible:
            return split, rep
    raise AssertionError("optimizer produced no verified feasible split")


# ---------------------------------------------------------------- qualitative fit

class FitDegeneracyError(ValueError):
    pass


def fit_qualitative(mu, rho1, rho: float, n: int) -> tuple[float, float]:
    """Least squares for rho - rho1 = c0 mu^{1/n} + c1 rho1^{1+1/n}."""
    mu = np.asarray(mu, dtype=float)
    rho1 = np.asarray(rho1, dtype=float)
    ok = np.isfinite(rho1)
    mu, rho1 = mu[ok], rho1[ok]
    if len(mu) < 2 or mu.max() / mu.min() < 10:
        raise FitDegeneracyError("mu grid must span at least one decade with two or more feasible points")
    M = np.column_stack([mu ** (1 / n), rho1 ** (1 + 1 / n)])
    coef, *_ = np.linalg.lstsq(M, rho - rho1, rcond=None)
    return float(coef[0]), float(coef[1])


def qualitative_rho1(rho: float, c0: float, c1: float, mu: float, n: int) -> float:
    """Root of rho1 + c1 rho1^{1+1/n} = rho - c0 mu^{1/n}."""
    from scipy.optimize import brentq
    target = rho - c0 * mu ** (1 / n)
    if target <= 0:
        return 0.0
    return brentq(lambda x: x + c1 * x ** (1 + 1 / n) - target, 0.0, target)


def qualitative_split(spec, eps: float, mu_grid, grid: int = 60):
    """Fit the two-constant qualitative rho split to optimizer output."""
    mu_grid = np.asarray(mu_grid, dtype=float)
    if len(mu_grid) < 2 or mu_grid.max() / mu_grid.min() < 10:
        raise FitDegeneracyError("mu grid must span at least one decade")
    rho1 = []
    for mu in mu_grid:
        try:
            split, _ = optimize_rho_split(spec, eps, "global", mu=float(mu), grid=grid)
            rho1.append(split[0])
        except InfeasibleError:
            rho1.append(math.nan)
    rho1 = np.array(rho1)
    c0, c1 = fit_qualitative(mu_grid, rho1, spec.rho, spec.n)
    return c0, c1, rho1

"""Continuous averaging of the Fourier coefficients H^k(I, x, y, delta) on a
slow-variable grid, the closed-form imaginary flow g, and the one-degree
reference problem with its Burgers majorant."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numba
import numpy as np
from scipy.integrate import solve_ivp, trapezoid

from .constants import ConstraintRow, normal_form_constraints
from .lattice import (
    FrequencyVector,
    PartitionParams,
    classify_from,
    enumerate_diamond,
    exit_breakpoints,
    s_from,
    stopping_time,
)
from .majorant import DomainError, MajorantSolution, eval_Wk, solve_burgers_1dof
from .model import FourierField, GPart, QuadraticH0, SlowGrid, fd4, fourier_norm, split_resonant
from .sums import budget_A


class ConstraintViolation(ValueError):
    def __init__(self, row: ConstraintRow):
        super().__init__(f"constraint violated: {row.name} (lhs={row.lhs_str}, rhs={row.rhs_str})")
        self.row = row
        self.bullet = row.name


class StepSizeUnderflow(RuntimeError):
    pass


class GrowthOverflow(OverflowError):
    pass


@dataclass(frozen=True)
class AveragingOptions:
    homogeneous: bool = False       # drop the convolution terms
    rtol: float = 1e-9
    atol_rel: float = 1e-14         # absolute tolerance relative to max |H^k(0)|
    n_output: int = 33
    check_constraints: bool = True
    envelope_tol: float = 1e-9      # relative slack on the majorant envelope
    exponent_cap: float = 700.0


@dataclass
class AveragingState:
    delta: float
    field: FourierField
    params: PartitionParams
    omega: FrequencyVector
    g_part: GPart
    transform_log: np.ndarray | None = None
    eps: float = 0.0
    mu: float = 0.0
    sigma: float = 1.0
    m: int = 0

    def __post_init__(self):
        if self.field.grid is None:
            raise ValueError("averaging state needs a field sampled on a slow grid")
        if self.field.grid.m != self.m:
            raise ValueError("grid degenerate dimension differs from m")


def default_radius(params: PartitionParams, n: int) -> int:
    return int(math.ceil(params.K)) + n


def zero_g(omega: FrequencyVector) -> GPart:
    """G = 0: H0 linear with gradient omega*."""
    h0 = QuadraticH0(np.zeros((omega.n, omega.n)), omega.omega)
    return GPart(h0, omega.omega, 0.0, 0.0, 0.0, 0.0)


def initial_state(field: FourierField, grid: SlowGrid, params: PartitionParams, omega: FrequencyVector,
                  g_part: GPart, eps: float, mu: float, sigma: float, radius: int | None = None) -> AveragingState:
    radius = default_radius(params, omega.n) if radius is None else radius
    f = FourierField(field.n, field.modes, radius, None).on_grid(grid) if field.grid is None else field
    f = FourierField(f.n, f.modes, radius, grid)
    return AveragingState(0.0, f, params, omega, g_part, None, float(eps), float(mu), float(sigma), grid.m)


# ---------------------------------------------------------------- closed-form g

def apply_g(coeff, k, t: float, g_part: GPart, actions, exponent_cap: float = 700.0):
    """g_k^t on a scalar coefficient: multiply by exp(-t <k, grad G(I)>)."""
    k = np.asarray(k, dtype=float)
    expo = -t * (np.asarray(g_part.grad(actions)) @ k)
    if np.any(expo > exponent_cap):
        raise GrowthOverflow(f"t <k, grad G> = {float(-expo.min())} exceeds the exponent cap; "
                             "the rho1 budget is exhausted")
    return np.asarray(coeff) * np.exp(expo)


# ---------------------------------------------------------------- kernels

@numba.njit(cache=True)
def _convolve(C, dC, ks, pk, pa, pb, psig, n, m, out):
    """out[pk] += i sig {H^{pa} e, H^{pb} e} coefficientwise."""
    G = C.shape[1]
    for p in range(pk.shape[0]):
        a = pa[p]
        b = pb[p]
        k = pk[p]
        s = psig[p]
        for g in range(G):
            ca = C[a, g]
            cb = C[b, g]
            acc = 0j
            for j in range(n):
                acc += ks[a, j] * ca * dC[j, b, g] - ks[b, j] * cb * dC[j, a, g]
            br = 1j * acc
            for j in range(m):
                x = n + j
                y = n + m + j
                br += dC[y, a, g] * dC[x, b, g] - dC[x, a, g] * dC[y, b, g]
            out[k, g] += 1j * s * br


class _Engine:
    def __init__(self, state: AveragingState, options: AveragingOptions):
        f = state.field
        self.state = state
        self.options = options
        self.grid = f.grid
        self.n, self.m = f.n, state.m
        self.radius = f.truncation_radius
        self.ks = np.ascontiguousarray(enumerate_diamond(self.radius, self.n))
        self.N = len(self.ks)
        self.Gsize = int(np.prod(self.grid.shape))
        R = self.radius
        self.table = -np.ones((2 * R + 1,) * self.n, dtype=np.int64)
        self.table[tuple((self.ks + R).T)] = np.arange(self.N)
        self.norms = np.abs(self.ks).sum(axis=1)
        self.levels = self.ks @ state.omega.p_array
        C = np.zeros((self.N, self.Gsize), dtype=complex)
        for k, v in f.modes.items():
            C[self._index(k)] = np.broadcast_to(v, self.grid.shape).ravel()
        self.C0 = C
        acts = self.grid.actions().reshape(-1, self.n)
        self.actions = acts
        self.grad_g = np.asarray(state.g_part.grad(acts)).T        # (n, G)
        self.kgradg = self.ks @ self.grad_g                        # (N, G)
        self.freq = np.abs(self.levels) / state.omega.t_bar
        self._pair_cache: dict = {}

    def _index(self, k) -> int:
        k = np.asarray(k, dtype=np.int64)
        if np.abs(k).sum() > self.radius:
            raise ValueError(f"mode {tuple(k)} outside truncation radius")
        return int(self.table[tuple(k + self.radius)])

    def codes(self, delta):
        s = self.state
        return classify_from(self.norms, self.levels, delta, s.params, s.omega.t_bar)

    def pairs(self, delta):
        """Pair lists (inside radius) and leak pairs (outside) for the sets at delta."""
        code = self.codes(delta)
        key = code.tobytes()
        if key in self._pair_cache:
            return self._pair_cache[key]
        free = np.nonzero(np.abs(code) == 1)[0]
        R = self.radius
        tgt = self.ks[free][:, None, :] + self.ks[None, :, :]            # (F, N, n)
        inside = np.abs(tgt).sum(axis=2) <= R
        fa, fb = np.nonzero(inside)
        pk = self.table[tuple((tgt[fa, fb] + R).T)]
        pa = free[fa]
        psig = code[pa].astype(np.float64)
        la, lb = np.nonzero(~inside)
        if len(la):
            out_k = tgt[la, lb]
            uniq, inv = np.unique(out_k, axis=0, return_inverse=True)
            leak = (np.ascontiguousarray(inv.ravel().astype(np.int64)), free[la].astype(np.int64),
                    lb.astype(np.int64), code[free[la]].astype(np.float64), len(uniq))
        else:
            leak = None
        res = (code, (pk.astype(np.int64), pa.astype(np.int64), fb.astype(np.int64), psig), leak)
        self._pair_cache[key] = res
        return res

    def derivatives(self, C):
        shaped = C.reshape((self.N,) + self.grid.shape)
        return np.ascontiguousarray(np.stack(
            [self.grid.derivative(shaped, j).reshape(self.N, self.Gsize) for j in range(self.grid.dims)]))

    def rate(self, C, delta, code=None, pairs=None):
        """dH/ddelta for every mode (array (N, G))."""
        s = self.state
        if code is None:
            code, pairs, _ = self.pairs(delta)
        sig = np.where(np.abs(code) == 1, code, 0).astype(float)
        active = sig != 0
        out = np.zeros_like(C)
        out[active] = (-self.freq[active, None] - sig[active, None] * self.kgradg[active]) * C[active]
        if not self.options.homogeneous and s.eps != 0 and len(pairs[0]):
            dC = self.derivatives(C)
            conv = np.zeros_like(C)
            _convolve(C, dC, self.ks, *pairs, self.n, self.m, conv)
            out += s.eps * conv
        return out

    def leak_rate(self, C, delta) -> float:
        """sum over dropped modes of sup_grid |rate| (convolution pushed past the radius)."""
        s = self.state
        if self.options.homogeneous or s.eps == 0:
            return 0.0
        _, _, leak = self.pairs(delta)
        if leak is None:
            return 0.0
        inv, la, lb, lsig, nu = leak
        dC = self.derivatives(C)
        buf = np.zeros((nu, self.Gsize), dtype=complex)
        _convolve(C, dC, self.ks, inv, la, lb, lsig, self.n, self.m, buf)
        return float(s.eps * np.abs(buf).max(axis=1).sum())


def rhs_3cont(state: AveragingState, options: AveragingOptions = AveragingOptions()) -> FourierField:
    """Right-hand side of the averaging system at state.delta as a FourierField."""
    eng = _Engine(state, options)
    C = eng.C0
    out = eng.rate(C, state.delta)
    shape = eng.grid.shape
    modes = {tuple(int(v) for v in k): out[i].reshape(shape) for i, k in enumerate(eng.ks)}
    return FourierField(state.field.n, modes, eng.radius, eng.grid)


# ---------------------------------------------------------------- driver

@dataclass
class NormalFormResult:
    resonant: FourierField
    nonresonant: FourierField
    deviation_inf: float
    bounds: dict
    delta_star: float
    outputs: list = field(default_factory=list)   # (delta, k tuple, abs_coeff, envelope)
    leaked_mass: float = 0.0
    reality_defect: float = 0.0
    envelope_ok: bool = True
    envelope_worst: float = 0.0
    constraints: list = field(default_factory=list)
    state: AveragingState | None = None

    @property
    def bounds_hold(self) -> bool:
        b = self.bounds
        return all(b[name] <= b[name + "_bound"] for name in
                   ("nonresonant_norm", "nonresonant_dtheta_norm", "resonant_norm", "total_norm", "deviation"))


def averaging_constraints(state: AveragingState) -> list[ConstraintRow]:
    p, w = state.params, state.omega
    n, m = w.n, state.m
    if not math.isfinite(p.R):
        raise ValueError("params.R must be set to check the normal-form bullets")
    rows = normal_form_constraints(n, m, p.R, state.sigma, p.rho1, p.rho3, p.K, state.eps, state.mu, w.t_bar)
    y_max = (math.sqrt(n) + 2 * math.sqrt(m)) * p.R
    A_star = budget_A(p, w, state.eps, state.mu, state.sigma).A_star
    rows.append(ConstraintRow("restriction: A(delta*) <= (sigma-Y_max)^2/4", A_star, (state.sigma - y_max) ** 2 / 4))
    return rows


def _output_grid(dstar: float, n_output: int) -> np.ndarray:
    if dstar <= 0:
        return np.array([0.0])
    return np.linspace(0.0, dstar, max(n_output, 2))


def run_averaging(state: AveragingState, options: AveragingOptions = AveragingOptions()) -> NormalFormResult:
    """Integrate the averaging system from delta = 0 to the stopping time."""
    n, m = state.omega.n, state.m
    rows = averaging_constraints(state) if math.isfinite(state.params.R) else []
    if options.check_constraints:
        if not rows:
            raise ValueError("params.R must be set to check the normal-form bullets")
        for row in rows:
            if not row.satisfied:
                raise ConstraintViolation(row)
    eng = _Engine(state, options)
    p, w = state.params, state.omega
    dstar = stopping_time(p, w)
    # G growth guard: |delta <k, grad G>| must stay within the exponent cap
    worst = dstar * float(np.abs(eng.kgradg[eng.norms <= p.K]).max(initial=0.0))
    if worst > options.exponent_cap:
        raise GrowthOverflow(f"delta* max|<k, grad G>| = {worst} exceeds the exponent cap")
    outs = _output_grid(dstar, options.n_output)
    bps = exit_breakpoints(p, w)
    edges = np.unique(np.concatenate([[0.0], bps[bps < dstar], [dstar]]))
    NG = eng.N * eng.Gsize
    scale = float(np.abs(eng.C0).max(initial=0.0)) or 1.0
    atol = options.atol_rel * scale
    y = np.concatenate([eng.C0.ravel(), np.zeros(NG, dtype=complex)])

    budget = budget_A(p, w, state.eps, state.mu, state.sigma)
    sol_w = MajorantSolution(state.sigma, budget.A, p.K, a_of_delta=budget.a)
    y_max = (math.sqrt(n) + 2 * math.sqrt(m)) * p.R if math.isfinite(p.R) else 0.0
    decay_w = p.rho3 + 2 * p.rho2

    records, leak_samples = [], []
    env_ok, env_worst, real_def = True, 0.0, 0.0

    def observe(delta, yv):
        nonlocal env_ok, env_worst, real_def
        C = yv[:NG].reshape(eng.N, eng.Gsize)
        amp = np.abs(C).max(axis=1)
        S = s_from(eng.norms, eng.levels, delta, p, w.t_bar)
        try:
            Wk = eval_Wk(sol_w, y_max, delta, eng.norms.astype(float))
        except DomainError:
            Wk = np.full(eng.N, np.nan)
        env = state.sigma * state.mu * np.exp(-eng.norms * decay_w - S * eng.levels / w.t_bar) * Wk
        ratio = np.where(env > 0, amp / np.where(env > 0, env, 1.0), np.where(amp > 0, np.inf, 0.0))
        ratio = np.nan_to_num(ratio, nan=np.inf)
        env_worst = max(env_worst, float(ratio.max(initial=0.0)))
        if np.any(amp > env * (1 + options.envelope_tol)):
            env_ok = False
        neg = eng.table[tuple((-eng.ks + eng.radius).T)]
        real_def = max(real_def, float(np.abs(C[neg] - np.conj(C)).max(initial=0.0)))
        leak_samples.append((delta, eng.leak_rate(C, delta)))
        for i in range(eng.N):
            records.append((float(delta), tuple(int(v) for v in eng.ks[i]), float(amp[i]), float(env[i])))

    observe(0.0, y)
    for a, b in zip(edges[:-1], edges[1:]):
        mid = 0.5 * (a + b)
        code, pairs, _ = eng.pairs(mid)
        sig = np.where(np.abs(code) == 1, code, 0).astype(float)

        def f(_t, yv, code=code, pairs=pairs, sig=sig):
            C = yv[:NG].reshape(eng.N, eng.Gsize)
            dH = eng.rate(C, _t, code, pairs)
            return np.concatenate([dH.ravel(), (sig[:, None] * C).ravel()])

        inner = outs[(outs > a) & (outs <= b)]
        t_eval = np.unique(np.concatenate([inner, [b]]))
        res = solve_ivp(f, (a, b), y, method="RK45", t_eval=t_eval, rtol=options.rtol, atol=atol)
        if res.status != 0:
            raise StepSizeUnderflow(f"integration failed on [{a}, {b}]: {res.message}")
        for j, t in enumerate(res.t):
            if t in inner:
                observe(t, res.y[:, j])
        y = res.y[:, -1]

    C = y[:NG].reshape(eng.N, eng.Gsize)
    Phi = y[NG:].reshape(eng.N, eng.Gsize)
    shape = eng.grid.shape
    modes = {tuple(int(v) for v in k): C[i].reshape(shape) for i, k in enumerate(eng.ks)
             if np.any(C[i] != 0)}
    final = FourierField(n, modes, eng.radius, eng.grid)
    resonant, nonresonant = split_resonant(final, w)

    # deviation: eps * max( max_j sup sum_k |k_j||Phi^k|, max_j sup sum_k |d_j Phi^k| )
    absPhi = np.abs(Phi)
    dev_I = max(float((np.abs(eng.ks[:, j])[:, None] * absPhi).sum(axis=0).max()) for j in range(n))
    dPhi = eng.derivatives(Phi)
    dev_slow = max(float(np.abs(dPhi[j]).sum(axis=0).max()) for j in range(eng.grid.dims))
    deviation = state.eps * max(dev_I, dev_slow)

    ts = np.array([t for t, _ in leak_samples])
    vs = np.array([v for _, v in leak_samples])
    leaked = float(trapezoid(vs, ts)) if len(ts) > 1 else 0.0

    rho2 = p.rho2
    lead = 5 * state.mu / rho2**n
    bounds = {
        "nonresonant_norm": fourier_norm(nonresonant, rho2),
        "nonresonant_norm_bound": lead * math.exp(-p.rho3 * p.K),
        "nonresonant_dtheta_norm": max(fourier_norm(nonresonant.d_theta(j), rho2) for j in range(n)),
        "nonresonant_dtheta_norm_bound": lead * math.exp(-p.rho3 * p.K),
        "resonant_norm": fourier_norm(resonant, rho2),
        "resonant_norm_bound": lead,
        "total_norm": fourier_norm(final, rho2),
        "total_norm_bound": lead,
        "deviation": deviation,
        "deviation_bound": 5 * state.eps * state.mu * (2 * math.pi * w.t_bar) / (2 * math.pi * (rho2 + p.rho3) ** n),
    }
    end = replace(state, delta=dstar, field=final, transform_log=Phi.reshape((eng.N,) + shape))
    return NormalFormResult(resonant, nonresonant, deviation, bounds, dstar, records, leaked, real_def,
                            env_ok, env_worst, rows, end)


def homogeneous_oracle(state: AveragingState, delta: float) -> FourierField:
    """Closed-form solution with convolutions off:
    H^k(delta) = exp(-S_k <w,k>) g_k^{S_k} H^k(0)."""
    f = state.field
    p, w = state.params, state.omega
    acts = f.grid.actions()
    modes = {}
    for k, v in f.modes.items():
        ka = np.array(k, dtype=np.int64)
        norm, level = int(np.abs(ka).sum()), int(ka @ w.p_array)
        S = float(s_from(np.array([norm]), np.array([level]), delta, p, w.t_bar)[0])
        modes[k] = math.exp(-S * level / w.t_bar) * apply_g(v, ka, S, state.g_part, acts)
    return FourierField(f.n, modes, f.truncation_radius, f.grid)


# ---------------------------------------------------------------- one-degree reference

@dataclass(frozen=True)
class ReferenceConfig:
    """H = I + eps sum_k H^k(x, y) e^{i k theta}; modes given as callables of (x, y)."""

    modes: dict                         # k -> complex array on the (x, y) grid or callable
    eps: float = 1e-3
    rho: float = 1.0
    sigma: float = 1.0
    delta_end: float = 5.0
    k_max: int = 8
    half_width: float = 0.3
    points: int = 17
    n_output: int = 26
    rtol: float = 1e-10
    tol: float = 1e-6

    @classmethod
    def pendulum(cls, **kw) -> "ReferenceConfig":
        """H1 = cos(theta) cos(x)."""
        return cls(modes={1: lambda x, y: 0.5 * np.cos(x), -1: lambda x, y: 0.5 * np.cos(x)}, **kw)


@dataclass
class ReferenceReport:
    deltas: np.ndarray
    ks: np.ndarray
    amplitudes: np.ndarray           # (T, K) sup over grid of |H^k|
    majorant: np.ndarray             # (T, K) sup-ratio target e^{-|k| delta} mu e^{-|k| rho} U
    worst_ratio: float
    bound_held: bool
    C: float
    mu: float
    delta_max: float
    halted: bool
    final_delta: float


def _grid_2d(cfg: ReferenceConfig):
    ax = np.linspace(-cfg.half_width, cfg.half_width, cfg.points)
    X, Y = np.meshgrid(ax, ax, indexing="ij")
    return ax, X, Y


def run_1dof_reference(cfg: ReferenceConfig) -> ReferenceReport:
    """H^k_d = -|k| H^k + i eps sum_{l+m=k, m!=0} sgn(m) {H^l, H^m}_(x,y)."""
    if cfg.half_width * 2 >= cfg.sigma:
        raise ValueError("grid must sit inside |x|+|y| < sigma")
    ax, X, Y = _grid_2d(cfg)
    h = ax[1] - ax[0]
    ks = np.arange(-cfg.k_max, cfg.k_max + 1)
    nk = len(ks)
    C0 = np.zeros((nk,) + X.shape, dtype=complex)
    for k, v in cfg.modes.items():
        if abs(k) > cfg.k_max:
            raise ValueError(f"mode {k} beyond k_max")
        C0[k + cfg.k_max] = v(X, Y) if callable(v) else np.broadcast_to(v, X.shape)
    # mu = max(||H1||_rho, ||grad H1||_rho) on the grid
    w = np.exp(np.abs(ks) * cfg.rho)[:, None, None]
    parts = [np.abs(C0), np.abs(ks)[:, None, None] * np.abs(C0),
             np.abs(fd4(C0, h, 1)), np.abs(fd4(C0, h, 2))]
    mu = max(float((w * q).sum(axis=0).max()) for q in parts)
    Cc = 4 * mu * cfg.eps * (1 + 1 / cfg.rho)
    dmax = cfg.sigma / (8 * Cc) if Cc > 0 else math.inf
    halted = cfg.delta_end > dmax
    dend = dmax if halted else cfg.delta_end
    # pair list l + m = k with m != 0, all inside the window
    trip = [(k + cfg.k_max, l + cfg.k_max, (k - l) + cfg.k_max, float(np.sign(k - l)))
            for k in ks for l in ks if k - l != 0 and abs(k - l) <= cfg.k_max]
    pk, pl, pm, ps = (np.array(v) for v in zip(*trip))
    shape = (nk,) + X.shape

    def f(_t, yv):
        Hc = yv.reshape(shape)
        Hx, Hy = fd4(Hc, h, 1), fd4(Hc, h, 2)
        out = -np.abs(ks)[:, None, None] * Hc
        if cfg.eps:
            br = Hy[pl] * Hx[pm] - Hx[pl] * Hy[pm]
            conv = np.zeros_like(Hc)
            np.add.at(conv, pk, ps[:, None, None] * br)
            out = out + 1j * cfg.eps * conv
        return out.ravel()

    outs = np.linspace(0.0, dend, cfg.n_output)
    res = solve_ivp(f, (0.0, dend), C0.ravel(), method="RK45", t_eval=outs, rtol=cfg.rtol,
                    atol=1e-14 * max(1.0, float(np.abs(C0).max())))
    if res.status != 0:
        raise StepSizeUnderflow(res.message)
    Yabs = np.abs(X) + np.abs(Y)
    amps, majs, worst, ok = [], [], 0.0, True
    for j, t in enumerate(res.t):
        Hc = np.abs(res.y[:, j].reshape(shape))
        disc = (cfg.sigma - Yabs) ** 2 - 8 * cfg.sigma * Cc * t
        valid = disc >= 0
        U = np.full(X.shape, np.nan)
        U[valid] = solve_burgers_1dof(cfg.sigma, Cc, Yabs[valid], t)
        bound = np.exp(-np.abs(ks) * (t + cfg.rho))[:, None, None] * mu * U[None]
        amp_k = np.where(valid[None], Hc, 0.0).max(axis=(1, 2))
        ratio = np.where(valid[None], Hc / np.where(valid[None], bound, 1.0), 0.0)
        worst = max(worst, float(ratio.max()))
        ok &= bool(np.all(np.where(valid[None], Hc <= bound * (1 + cfg.tol), True)))
        amps.append(amp_k)
        majs.append(np.nanmin(np.where(valid[None], bound, np.nan), axis=(1, 2)))
    return ReferenceReport(res.t, ks, np.array(amps), np.array(majs), worst, ok, Cc, mu, dmax,
                           halted, float(res.t[-1]))

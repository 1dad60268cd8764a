"""Symplectic integration of the full system, the stability predictions it is
compared against, and the end-to-end pipeline."""
from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numba
import numpy as np

from .averaging import (
    AveragingOptions,
    NormalFormResult,
    initial_state,
    run_averaging,
)
from .config import ScenarioConfig
from .constants import InfeasibleError, StabilityReport, global_constants, local_constants, optimize_rho_split
from .diophantine import PeriodicAction, locate_periodic_action
from .lattice import PartitionParams
from .model import HamiltonianSpec, PolynomialH0, QuadraticH0, SlowGrid, taylor_split

NEWTON_TOL = 1e-12
NEWTON_MAX = 50
TWO_PI = 2.0 * math.pi


class NewtonFailure(RuntimeError):
    pass


class PipelineError(RuntimeError):
    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"[{stage}] {type(cause).__name__}: {cause}")
        self.stage = stage
        self.cause = cause


# ---------------------------------------------------------------- kernels
# state layout: I[0:n], theta[n:2n], x[2n:2n+m], y[2n+m:2n+2m]; slow z = (I, x, y)

@numba.njit(cache=True, nogil=True)
def _vector_field(X, A, b, pe, pc, ks, c, d, eps, n, m, F, DF, jac):
    D = 2 * n + 2 * m
    for i in range(D):
        F[i] = 0.0
        if jac:
            for j in range(D):
                DF[i, j] = 0.0
    for a in range(n):
        s = b[a]
        for j in range(n):
            s += A[a, j] * X[j]
            if jac:
                DF[n + a, j] = A[a, j]
        F[n + a] = s
    # monomial part of H0: sum_t pc[t] prod_i I_i^pe[t, i]
    for t in range(pe.shape[0]):
        for a in range(n):
            if pe[t, a] == 0:
                continue
            g = pc[t] * pe[t, a]
            for i in range(n):
                g *= X[i] ** (pe[t, i] - (1 if i == a else 0))
            F[n + a] += g
            if jac:
                for j in range(n):
                    e_j = pe[t, j] - (1 if j == a else 0)
                    if e_j == 0:
                        continue
                    h = pc[t] * pe[t, a] * e_j
                    for i in range(n):
                        h *= X[i] ** (pe[t, i] - (1 if i == a else 0) - (1 if i == j else 0))
                    DF[n + a, j] += h
    if eps == 0.0:
        return
    for q in range(ks.shape[0]):
        phase = 0.0
        for j in range(n):
            phase += ks[q, j] * X[n + j]
        e = complex(math.cos(phase), math.sin(phase))
        fz = c[q]
        for j in range(n):
            fz += d[q, j] * X[j]
        for j in range(2 * m):
            fz += d[q, n + j] * X[2 * n + j]
        fe = fz * e
        for a in range(n):
            F[a] += eps * (-(1j * ks[q, a] * fe).real)
            F[n + a] += eps * (d[q, a] * e).real
        for j in range(m):
            F[2 * n + j] += eps * (-(d[q, n + m + j] * e).real)
            F[2 * n + m + j] += eps * (d[q, n + j] * e).real
        if jac:
            for a in range(n):
                for j in range(n):
                    DF[a, j] += eps * (-(1j * ks[q, a] * d[q, j] * e).real)
                    DF[a, n + j] += eps * (ks[q, a] * ks[q, j] * fe).real
                    DF[n + a, n + j] += eps * (1j * ks[q, j] * d[q, a] * e).real
                for j in range(2 * m):
                    DF[a, 2 * n + j] += eps * (-(1j * ks[q, a] * d[q, n + j] * e).real)
            for a in range(m):
                for j in range(n):
                    DF[2 * n + a, n + j] += eps * (-(1j * ks[q, j] * d[q, n + m + a] * e).real)
                    DF[2 * n + m + a, n + j] += eps * (1j * ks[q, j] * d[q, n + a] * e).real


@numba.njit(cache=True, nogil=True)
def _energy(X, A, b, pe, pc, ks, c, d, eps, n, m):
    h = 0.0
    for a in range(n):
        h += b[a] * X[a]
        for j in range(n):
            h += 0.5 * X[a] * A[a, j] * X[j]
    for t in range(pe.shape[0]):
        v = pc[t]
        for i in range(n):
            v *= X[i] ** pe[t, i]
        h += v
    if eps != 0.0:
        s = 0.0
        for q in range(ks.shape[0]):
            phase = 0.0
            for j in range(n):
                phase += ks[q, j] * X[n + j]
            fz = c[q]
            for j in range(n):
                fz += d[q, j] * X[j]
            for j in range(2 * m):
                fz += d[q, n + j] * X[2 * n + j]
            s += (fz * complex(math.cos(phase), math.sin(phase))).real
        h += eps * s
    return h


@numba.njit(cache=True, nogil=True)
def _solve(M, r):
    """Gaussian elimination with partial pivoting; M and r are overwritten."""
    D = r.shape[0]
    for col in range(D):
        piv = col
        best = abs(M[col, col])
        for i in range(col + 1, D):
            if abs(M[i, col]) > best:
                best = abs(M[i, col])
                piv = i
        if piv != col:
            for j in range(D):
                t = M[col, j]
                M[col, j] = M[piv, j]
                M[piv, j] = t
            t = r[col]
            r[col] = r[piv]
            r[piv] = t
        for i in range(col + 1, D):
            f = M[i, col] / M[col, col]
            for j in range(col, D):
                M[i, j] -= f * M[col, j]
            r[i] -= f * r[col]
    for i in range(D - 1, -1, -1):
        s = r[i]
        for j in range(i + 1, D):
            s -= M[i, j] * r[j]
        r[i] = s / M[i, i]


@numba.njit(cache=True, nogil=True)
def _midpoint(X0, dt, A, b, pe, pc, ks, c, d, eps, n, m, Xm, F, DF, M, r):
    """Solve Xm = X0 + dt/2 F(Xm) by Newton; returns iterations or -1."""
    D = X0.shape[0]
    _vector_field(X0, A, b, pe, pc, ks, c, d, eps, n, m, F, DF, False)
    for i in range(D):
        Xm[i] = X0[i] + 0.5 * dt * F[i]
    for it in range(1, 51):
        _vector_field(Xm, A, b, pe, pc, ks, c, d, eps, n, m, F, DF, True)
        scale = 1.0
        for i in range(D):
            r[i] = Xm[i] - X0[i] - 0.5 * dt * F[i]
            if abs(Xm[i]) > scale:
                scale = abs(Xm[i])
            for j in range(D):
                M[i, j] = -0.5 * dt * DF[i, j]
            M[i, i] += 1.0
        _solve(M, r)
        worst = 0.0
        for i in range(D):
            Xm[i] -= r[i]
            if abs(r[i]) > worst:
                worst = abs(r[i])
        if worst <= 1e-12 * scale:
            return it
    return -1


@numba.njit(cache=True, nogil=True)
def _run(X0, n_steps, dt, A, b, pe, pc, ks, c, d, eps, n, m, every, xy_lo, xy_hi, wrap):
    """Advance n_steps; returns (X, max drift, max rel energy error, samples, status, xy_exit)."""
    D = X0.shape[0]
    X = X0.copy()
    Xm = np.empty(D)
    F = np.empty(D)
    DF = np.empty((D, D))
    M = np.empty((D, D))
    r = np.empty(D)
    h0 = _energy(X, A, b, pe, pc, ks, c, d, eps, n, m)
    href = max(abs(h0), 1e-300)
    n_samples = n_steps // every + 1
    samples = np.zeros((n_samples, D + 3))
    drift = 0.0
    herr = 0.0
    status = -1
    xy_exit = -1
    samples[0, 0] = 0.0
    for i in range(D):
        samples[0, 3 + i] = X[i]
    si = 1
    for step in range(1, n_steps + 1):
        it = _midpoint(X, dt, A, b, pe, pc, ks, c, d, eps, n, m, Xm, F, DF, M, r)
        if it < 0:
            status = step
            break
        for i in range(D):
            X[i] = 2.0 * Xm[i] - X[i]
        if wrap:
            for j in range(n):
                X[n + j] = X[n + j] % (2.0 * math.pi)
        s = 0.0
        for j in range(n):
            s += (X[j] - X0[j]) ** 2
        s = math.sqrt(s)
        if s > drift:
            drift = s
        e = abs(_energy(X, A, b, pe, pc, ks, c, d, eps, n, m) - h0) / href
        if e > herr:
            herr = e
        if xy_exit < 0:
            for j in range(2 * m):
                v = X[2 * n + j]
                if v < xy_lo[j] or v > xy_hi[j]:
                    xy_exit = step
        if step % every == 0 and si < n_samples:
            samples[si, 0] = step * dt
            samples[si, 1] = s
            samples[si, 2] = e
            for i in range(D):
                samples[si, 3 + i] = X[i]
            si += 1
    return X, drift, herr, samples[:si], status, xy_exit


# ---------------------------------------------------------------- python wrappers

@dataclass(frozen=True)
class _System:
    A: np.ndarray
    b: np.ndarray
    pe: np.ndarray          # monomial exponents of H0 beyond the quadratic part
    pc: np.ndarray
    ks: np.ndarray
    c: np.ndarray
    d: np.ndarray
    eps: float
    n: int
    m: int

    @classmethod
    def from_config(cls, cfg: ScenarioConfig) -> "_System":
        h0, n = cfg.spec.h0, cfg.spec.n
        if isinstance(h0, QuadraticH0):
            A, b = h0.A, h0.b
            pe, pc = np.zeros((0, n), dtype=np.int64), np.zeros(0)
        elif isinstance(h0, PolynomialH0):
            A, b = np.zeros((n, n)), np.zeros(n)
            pe, pc = h0.exps, h0.coefs
        else:
            raise NotImplementedError(f"no integrator kernel for {type(h0).__name__}")
        h1 = cfg.h1
        arr = np.ascontiguousarray
        return cls(arr(A, dtype=float), arr(b, dtype=float), arr(pe, dtype=np.int64), arr(pc, dtype=float),
                   arr(h1.ks), arr(h1.c), arr(h1.d), float(cfg.eps), n, cfg.spec.m)

    @property
    def args(self):
        return self.A, self.b, self.pe, self.pc, self.ks, self.c, self.d, self.eps, self.n, self.m

    def field(self, X):
        D = len(X)
        F, DF = np.empty(D), np.empty((D, D))
        _vector_field(np.asarray(X, float), *self.args, F, DF, True)
        return F, DF

    def energy(self, X) -> float:
        return float(_energy(np.asarray(X, float), *self.args))

    def step(self, X, dt: float) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        D = len(X)
        Xm = np.empty(D)
        if _midpoint(X, dt, *self.args, Xm, np.empty(D), np.empty((D, D)), np.empty((D, D)), np.empty(D)) < 0:
            raise NewtonFailure("implicit midpoint Newton iteration did not converge")
        return 2 * Xm - X

    def step_jacobian(self, X, dt: float) -> np.ndarray:
        """dX1/dX0 = (1 - dt/2 DF(Xm))^{-1} (1 + dt/2 DF(Xm))."""
        X1 = self.step(X, dt)
        _, DF = self.field(0.5 * (X + X1))
        E = np.eye(len(X))
        return np.linalg.solve(E - 0.5 * dt * DF, E + 0.5 * dt * DF)

    def omega(self) -> np.ndarray:
        n, m = self.n, self.m
        D = 2 * n + 2 * m
        O = np.zeros((D, D))
        for j in range(n):
            O[j, n + j], O[n + j, j] = -1.0, 1.0
        for j in range(m):
            O[2 * n + j, 2 * n + m + j], O[2 * n + m + j, 2 * n + j] = -1.0, 1.0
        return O


def state_vector(ic) -> np.ndarray:
    return np.concatenate([np.asarray(v, dtype=float) for v in ic])


def symplectic_defect(system: _System, X, dt: float) -> float:
    J = system.step_jacobian(X, dt)
    O = system.omega()
    return float(np.abs(J.T @ O @ J - O).max())


def reversal_error(system: _System, X0, dt: float, steps: int) -> float:
    """Integrate forward then backward; angles compared on the circle."""
    X0 = np.asarray(X0, dtype=float)
    X, *_ = _run(X0, steps, dt, *system.args, max(steps, 1), np.full(2 * system.m, -np.inf),
                 np.full(2 * system.m, np.inf), False)
    Xb, *_ = _run(X, steps, -dt, *system.args, max(steps, 1), np.full(2 * system.m, -np.inf),
                  np.full(2 * system.m, np.inf), False)
    diff = Xb - X0
    n = system.n
    diff[n:2 * n] = (diff[n:2 * n] + math.pi) % TWO_PI - math.pi
    return float(np.abs(diff).max())


# ---------------------------------------------------------------- predictions

@dataclass
class Prediction:
    regime: str
    report: StabilityReport | None      # None for the unperturbed flow
    stability_time: float
    periodic: PeriodicAction | None = None
    ic_index: int = 0

    @property
    def confinement(self) -> float:
        return 0.0 if self.report is None else self.report.confinement


def _split_or_optimize(cfg, regime, **kw):
    if cfg.rho_split is not None:
        split = tuple(cfg.rho_split)
        if regime == "global":
            return global_constants(cfg.spec, cfg.eps, split)
        return local_constants(cfg.spec, cfg.eps, kw["mu"], kw["r"], kw["t_bar"], split, kw["omega_norm"])
    _, rep = optimize_rho_split(cfg.spec, cfg.eps, regime, **kw)
    return rep


def predict(cfg: ScenarioConfig, ic_index: int = 0) -> Prediction:
    """Stability constants for one initial condition."""
    spec = cfg.spec
    I0 = cfg.initial_conditions[ic_index][0]
    if cfg.eps == 0 and cfg.regime == "global":
        return Prediction("global", None, math.inf, None, ic_index)
    if cfg.regime == "global":
        rep = _split_or_optimize(cfg, "global", mu=spec.mu)
        return Prediction("global", rep, math.exp(rep.time_log), None, ic_index)
    if cfg.Q is None:
        raise ValueError("local regime needs Q")
    pa = locate_periodic_action(spec, I0, cfg.Q)
    r = pa.bound if cfg.r is None else float(cfg.r)
    if pa.distance > r * (1 + 1e-12):
        raise ValueError(f"|I(0) - I*| = {pa.distance} exceeds r = {r}")
    rep = _split_or_optimize(cfg, "local", mu=spec.mu, r=r, t_bar=pa.omega.t_bar,
                             omega_norm=pa.omega.norm)
    rep = replace(rep, Q=float(cfg.Q))
    return Prediction("local", rep, math.exp(rep.time_log), pa, ic_index)


# ---------------------------------------------------------------- integrate

@dataclass
class TrajectoryReport:
    max_action_drift: float
    predicted_confinement: float
    energy_drift: float
    steps: int
    dt: float
    horizon: float
    stability_time: float
    covered_fraction: float
    symplectic_defect: float
    reversal_error: float
    xy_exit_step: int
    constants_feasible: bool
    max_distance_from_center: float = math.nan
    radius_bound: float = math.nan
    final_state: np.ndarray | None = None
    samples: np.ndarray | None = None

    @property
    def bound_held(self) -> bool:
        return self.max_action_drift <= self.predicted_confinement


@dataclass
class RunReport:
    max_action_drift: float
    predicted_confinement: float
    energy_drift: float
    bound_held: bool
    csv_path: str | None
    trajectories: list = field(default_factory=list)
    predictions: list = field(default_factory=list)

    @property
    def covered_fraction(self) -> float:
        return min(t.covered_fraction for t in self.trajectories)

    def summary(self) -> str:
        lines = [f"{'ic':>3} {'max_drift':>24} {'confinement':>24} {'energy_drift':>24} "
                 f"{'steps':>9} {'covered':>10} {'held':>5}"]
        for i, t in enumerate(self.trajectories):
            lines.append(f"{i:>3} {t.max_action_drift:>24.17g} {t.predicted_confinement:>24.17g} "
                         f"{t.energy_drift:>24.17g} {t.steps:>9d} {t.covered_fraction:>10.4g} "
                         f"{'yes' if t.bound_held else 'NO':>5}")
        lines.append(f"bound_held {self.bound_held}")
        return "\n".join(lines)


def _schedule(cfg: ScenarioConfig, stability_time: float) -> tuple[int, float]:
    """Steps and dt under the horizon policy min(stability time, cap)."""
    if cfg.horizon is not None:
        if cfg.dt is not None:
            steps = int(round(cfg.horizon / cfg.dt))
            if steps > cfg.max_steps:
                raise ValueError(f"horizon/dt = {steps} steps exceeds max_steps {cfg.max_steps}")
            return steps, cfg.dt
        return cfg.max_steps, cfg.horizon / cfg.max_steps
    target = stability_time
    if cfg.dt is not None:
        cap = cfg.max_steps * cfg.dt
        T = min(target, cap)
        return max(1, int(math.ceil(T / cfg.dt))), cfg.dt
    if not math.isfinite(target):
        raise ValueError("stability time is infinite; configure horizon or dt")
    return cfg.max_steps, target / cfg.max_steps


def _one(cfg: ScenarioConfig, system: _System, i: int, pred: Prediction, rng_seed: int) -> TrajectoryReport:
    X0 = state_vector(cfg.initial_conditions[i])
    steps, dt = _schedule(cfg, pred.stability_time)
    every = cfg.csv_every or max(1, steps // 10_000)
    m = cfg.spec.m
    lo = np.array([b[0] for b in cfg.xy_box], dtype=float) if m else np.zeros(0)
    hi = np.array([b[1] for b in cfg.xy_box], dtype=float) if m else np.zeros(0)
    X, drift, herr, samples, status, xy_exit = _run(X0, steps, dt, *system.args, every, lo, hi, True)
    if status >= 0:
        raise NewtonFailure(f"Newton failed at step {status} (dt={dt})")
    rng = np.random.default_rng(rng_seed + i)
    picks = rng.choice(len(samples), size=min(cfg.symplectic_samples, len(samples)), replace=False)
    sdef = max(symplectic_defect(system, samples[j, 3:], dt) for j in picks)
    rev = reversal_error(system, X0, dt, min(cfg.reversal_steps, steps))
    horizon = steps * dt
    n = cfg.spec.n
    dist, bound = math.nan, math.nan
    if pred.periodic is not None:
        dist = float(np.linalg.norm(samples[:, 3:3 + n] - pred.periodic.I_star, axis=1).max())
        bound = pred.report.R
    return TrajectoryReport(
        float(drift), pred.confinement, float(herr), steps, dt, horizon, pred.stability_time,
        horizon / pred.stability_time if pred.stability_time > 0 else math.inf, sdef, rev, int(xy_exit),
        pred.report is None or pred.report.feasible, dist, bound, X, samples)


def write_trajectory_csv(path: Path, samples: np.ndarray, n: int, m: int) -> None:
    names = ["t", "action_drift", "energy_rel_err"] + [f"I{j}" for j in range(n)] + \
        [f"theta{j}" for j in range(n)] + [f"x{j}" for j in range(m)] + [f"y{j}" for j in range(m)]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(names)
        for row in samples:
            w.writerow(["%.17g" % v for v in row])


def integrate(cfg: ScenarioConfig, out_dir=None, threads: int = 1, seed: int = 0,
              predictions: list | None = None) -> RunReport:
    """Implicit-midpoint runs for every initial condition, compared to the constants."""
    system = _System.from_config(cfg)
    if predictions is None:
        predictions = [predict(cfg, i) for i in range(len(cfg.initial_conditions))]
    idx = range(len(cfg.initial_conditions))
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            trajs = list(ex.map(lambda i: _one(cfg, system, i, predictions[i], seed), idx))
    else:
        trajs = [_one(cfg, system, i, predictions[i], seed) for i in idx]
    csv_path = None
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        for i, t in enumerate(trajs):
            p = out / f"{cfg.name}_trajectory_{i}.csv"
            write_trajectory_csv(p, t.samples, cfg.spec.n, cfg.spec.m)
            csv_path = csv_path or str(p)
    drift = max(t.max_action_drift for t in trajs)
    conf = min(t.predicted_confinement for t in trajs)
    return RunReport(drift, conf, max(t.energy_drift for t in trajs), drift <= conf, csv_path, trajs,
                     predictions)


# ---------------------------------------------------------------- pipeline

@dataclass
class PipelineReport:
    prediction: Prediction
    normal_form: NormalFormResult
    run: RunReport
    checks: dict

    @property
    def passed(self) -> bool:
        return all(ok for ok, *_ in self.checks.values())

    def table(self) -> str:
        lines = [f"{'check':<36} {'value':>24} {'bound':>24}  ok"]
        for name, (ok, val, bound) in self.checks.items():
            lines.append(f"{name:<36} {val:>24.17g} {bound:>24.17g}  {'yes' if ok else 'NO'}")
        return "\n".join(lines)


def averaging_setup(cfg: ScenarioConfig, pred: Prediction):
    """Translate actions to I*, build G on the ball of radius R and the initial state."""
    spec = cfg.spec
    pa = pred.periodic
    rep = pred.report
    shift = pa.I_star
    h0t = spec.h0.shifted(shift)
    box = tuple((a - s, b - s) for (a, b), s in zip(spec.action_box, shift))
    spec_t = HamiltonianSpec(spec.n, spec.m, h0t, spec.perturbation, spec.rho, spec.sigma,
                             spec.convexity, box)
    R = rep.R
    g_part = taylor_split(spec_t, pa.omega, R, points=cfg.grid_points)
    n, m = spec.n, spec.m
    grid = SlowGrid.box(n, m, R / math.sqrt(n), cfg.grid_points)
    full_shift = np.concatenate([shift, np.zeros(2 * m)])
    params = PartitionParams(rep.rho_split, rep.K, R)
    field_ = cfg.h1.sample(grid, None, full_shift)
    state = initial_state(field_, grid, params, pa.omega, g_part, cfg.eps, spec.mu, spec.sigma)
    return state


def run_pipeline(cfg: ScenarioConfig, out_dir=None, threads: int = 1, seed: int = 0,
                 options: AveragingOptions = AveragingOptions()) -> PipelineReport:
    """Dirichlet -> constants -> averaging -> integration, with cross-checks."""
    if cfg.regime != "local":
        raise ValueError("the pipeline follows the local construction; set regime = 'local'")
    try:
        pa = locate_periodic_action(cfg.spec, cfg.initial_conditions[0][0], cfg.Q)
    except Exception as exc:  # noqa: BLE001
        raise PipelineError("dirichlet", exc) from exc
    try:
        pred = predict(cfg, 0)
        if not pred.report.feasible:
            raise InfeasibleError(f"constraint {pred.report.binding} violated", pred.report.binding, pred.report)
    except Exception as exc:  # noqa: BLE001
        raise PipelineError("constants", exc) from exc
    preds = [pred]
    try:
        for i in range(1, len(cfg.initial_conditions)):
            preds.append(predict(cfg, i))
    except Exception as exc:  # noqa: BLE001
        raise PipelineError("constants", exc) from exc
    try:
        state = averaging_setup(cfg, pred)
        nf = run_averaging(state, options)
    except Exception as exc:  # noqa: BLE001
        raise PipelineError("averaging", exc) from exc
    try:
        run = integrate(cfg, out_dir, threads, seed, preds)
    except Exception as exc:  # noqa: BLE001
        raise PipelineError("integrate", exc) from exc
    b = nf.bounds
    traj = run.trajectories[0]
    checks = {
        "dirichlet |I0-I*| <= r": (pa.distance <= pred.report.r, pa.distance, pred.report.r),
        "nonresonant norm (rho2)": (b["nonresonant_norm"] <= b["nonresonant_norm_bound"],
                                    b["nonresonant_norm"], b["nonresonant_norm_bound"]),
        "nonresonant d/dtheta norm": (b["nonresonant_dtheta_norm"] <= b["nonresonant_dtheta_norm_bound"],
                                      b["nonresonant_dtheta_norm"], b["nonresonant_dtheta_norm_bound"]),
        "resonant norm": (b["resonant_norm"] <= b["resonant_norm_bound"], b["resonant_norm"],
                          b["resonant_norm_bound"]),
        "total norm": (b["total_norm"] <= b["total_norm_bound"], b["total_norm"], b["total_norm_bound"]),
        "deviation": (b["deviation"] <= b["deviation_bound"], b["deviation"], b["deviation_bound"]),
        "majorant envelope (worst ratio)": (nf.envelope_ok, nf.envelope_worst, 1.0),
        "leaked mass": (nf.leaked_mass <= 1e-9 * state.mu, nf.leaked_mass, 1e-9 * state.mu),
        "action drift": (run.bound_held, run.max_action_drift, run.predicted_confinement),
        "|I(t)-I*| <= R": (traj.max_distance_from_center <= traj.radius_bound,
                           traj.max_distance_from_center, traj.radius_bound),
        "energy drift": (run.energy_drift <= 1e-7, run.energy_drift, 1e-7),
    }
    report = PipelineReport(pred, nf, run, checks)
    if out_dir is not None:
        write_pipeline_outputs(Path(out_dir), cfg, report)
    return report


def write_decay_csv(path: Path, nf: NormalFormResult) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["delta"] + [f"k{j}" for j in range(len(nf.outputs[0][1]))] + ["abs_coeff", "majorant_envelope"])
        for delta, k, amp, env in nf.outputs:
            w.writerow(["%.17g" % delta] + [str(v) for v in k] + ["%.17g" % amp, "%.17g" % env])


def write_pipeline_outputs(out: Path, cfg: ScenarioConfig, rep: PipelineReport) -> None:
    out.mkdir(parents=True, exist_ok=True)
    write_decay_csv(out / f"{cfg.name}_decay.csv", rep.normal_form)
    with open(out / f"{cfg.name}_constants.txt", "w") as fh:
        fh.write(rep.prediction.report.table() + "\n")
    with open(out / f"{cfg.name}_summary.txt", "w") as fh:
        fh.write(rep.table() + "\n\n" + rep.run.summary() + "\n")


__all__ = [
    "NewtonFailure", "PipelineError", "Prediction", "RunReport", "TrajectoryReport", "PipelineReport",
    "integrate", "predict", "run_pipeline", "averaging_setup", "symplectic_defect", "reversal_error",
    "state_vector", "replace",
]

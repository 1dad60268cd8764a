"""Acceptance criteria 1-10. Each test prints one line
``CRITERION n: PASS|FAIL - detail``; run with ``pytest tests/test_acceptance.py -s``
or ``python tests/test_acceptance.py``."""
import math
import sys
import time
from dataclasses import replace

import numpy as np
import pytest
from scipy.integrate import quad

from nekhoroshev.averaging import (
    AveragingOptions, ReferenceConfig, homogeneous_oracle, initial_state, run_1dof_reference, run_averaging,
)
from nekhoroshev.config import load_config
from nekhoroshev.constants import global_constants, optimize_rho_split
from nekhoroshev.diophantine import dirichlet_classic, dirichlet_rescaled
from nekhoroshev.harness import predict
from nekhoroshev.lattice import (
    FrequencyVector, PartitionParams, enumerate_diamond, exit_breakpoints, stopping_time,
)
from nekhoroshev.majorant import MajorantSeries, majorant_ops, majorant_suite, majorizes, system_stays_ordered
from nekhoroshev.model import (
    ConvexityConstants, FourierField, HamiltonianSpec, QuadraticH0, SlowGrid, mu_of, taylor_split,
)
from nekhoroshev.sums import (
    adt_closed_form, bound_greater, bound_pm, bound_zero_many, brute_a, sums_brute_many,
)


def verdict(capsys, n: int, ok: bool, detail: str) -> None:
    with capsys.disabled():
        print(f"\nCRITERION {n}: {'PASS' if ok else 'FAIL'} - {detail}", flush=True)
    assert ok, detail


def random_omega(rng, n):
    while True:
        p = rng.integers(-5, 6, size=n)
        if np.any(p):
            return FrequencyVector.from_integers(p, float(rng.uniform(0.5, 2.0)))


def test_criterion_1_domination(capsys):
    rng = np.random.default_rng(2024)
    t0 = time.perf_counter()
    violations = checks = 0
    worst = 0.0
    for n in (2, 3):
        for K in range(4, 13):
            ks = enumerate_diamond(K, n)
            for _ in range(50):
                w = random_omega(rng, n)
                P = PartitionParams((1.0, float(rng.uniform(0.25, 1)), float(rng.uniform(0.25, 1))), float(K))
                for d in np.linspace(0.0, stopping_time(P, w), 20):
                    s = sums_brute_many(ks, d, P, w)
                    bpm, bgr, bz = bound_pm(d, P, w), bound_greater(d, P, w), bound_zero_many(ks, d, P, w)
                    violations += int(np.any(s["pm"] > bpm)) + int(np.any(s["greater"] > bgr)) \
                        + int(np.any(s["zero"] > bz))
                    checks += 3
                    worst = max(worst, s["pm"].max() / bpm, s["greater"].max() / bgr)
    elapsed = time.perf_counter() - t0
    verdict(capsys, 1, violations == 0 and elapsed <= 300,
            f"{violations} violations in {checks} sum/bound checks, worst ratio {worst:.4f}, {elapsed:.0f} s")


def test_criterion_2_budget(capsys):
    rng = np.random.default_rng(7)
    bad, slacks = 0, []
    for _ in range(20):
        n = int(rng.integers(2, 4))
        K = float(rng.integers(4, 11 if n == 2 else 8))
        w = random_omega(rng, n)
        P = PartitionParams((1.0, float(rng.uniform(0.25, 1)), float(rng.uniform(0.25, 1))), K)
        eps, mu, sigma = 10 ** rng.uniform(-6, -3), float(rng.uniform(0.1, 1)), float(rng.uniform(0.5, 1.5))
        ks = enumerate_diamond(K, n)
        dstar = stopping_time(P, w)
        cuts = np.unique(np.concatenate([[0.0], exit_breakpoints(P, w), [dstar]]))
        cuts = cuts[(cuts >= 0) & (cuts <= dstar)]
        f = lambda d: brute_a(d, P, w, eps, mu, sigma, ks)  # noqa: E731
        num = sum(quad(f, a, b, limit=100, epsrel=1e-8)[0] for a, b in zip(cuts[:-1], cuts[1:]) if b > a)
        closed = adt_closed_form(n, sigma, eps, mu, w.t_bar, K, P.rho3)
        slacks.append((closed - num) / closed)
        bad += closed < num
    verdict(capsys, 2, bad == 0,
            f"{bad}/20 violations, relative slack min {min(slacks):.3f} median {np.median(slacks):.3f}")


def test_criterion_3_majorant(capsys):
    rep = majorant_suite(seed=0, samples=1000, tol=1e-5)
    fails = {k: v for k, v in rep.properties.failures.items() if v}
    detail = (f"residual const {rep.residual_constant.max_residual:.2e}, "
              f"piecewise {rep.residual_piecewise.max_residual:.2e} (tol 1e-5); "
              f"property failures {fails or 'none'} over {rep.properties.checked} checks")
    verdict(capsys, 3, rep.passed, detail)


def test_criterion_4_series_closure(capsys):
    rng = np.random.default_rng(11)
    bad = 0
    for _ in range(10_000):
        dim, cap = int(rng.integers(1, 3)), int(rng.integers(2, 7))
        shape = (cap + 1,) * dim
        f1 = MajorantSeries(rng.normal(size=shape), cap)
        f2 = MajorantSeries(rng.normal(size=shape), cap)
        g1 = MajorantSeries(np.abs(f1.coeffs) + rng.uniform(0, 1, shape) * rng.integers(0, 2, shape), cap)
        g2 = MajorantSeries(np.abs(f2.coeffs) + rng.uniform(0, 1, shape) * rng.integers(0, 2, shape), cap)
        fo, go = majorant_ops(f1, f2), majorant_ops(g1, g2)
        ok = all(majorizes(go[k], fo[k]) for k in ("sum", "product", "derivative"))
        ok &= majorizes(g1.antiderivative(), f1.antiderivative())
        bad += not ok
    sys_bad = 0
    times = np.linspace(0.0, 2.0, 11)
    for _ in range(100):
        d = int(rng.integers(2, 5))
        M = rng.normal(size=(d, d))
        Mbar = np.abs(M) + rng.uniform(0, 0.1, (d, d))
        F0 = [MajorantSeries(rng.normal(size=7), 6) for _ in range(d)]
        G0 = [MajorantSeries(np.abs(f.coeffs) + rng.uniform(0, 0.1, 7), 6) for f in F0]
        sys_bad += not system_stays_ordered(M, Mbar, F0, G0, times)
    verdict(capsys, 4, bad == 0 and sys_bad == 0,
            f"{bad}/10000 closure failures, {sys_bad}/100 linear systems lost ordering")


def test_criterion_5_homogeneous(capsys):
    R = 0.12
    w = FrequencyVector((1, 1), 1.0)
    P = PartitionParams((0.36, 0.25, 0.5), 0.36 / (0.5 * R), R)
    grid = SlowGrid.box(2, 0, R / math.sqrt(2), 9)
    z = grid.points()
    rows = {(1, 0): 1e-3 * (1 + 0.5 * z[..., 0]), (0, 1): 1e-3 * (1 - 0.3 * z[..., 1] + 0.2 * z[..., 0]),
            (1, -1): 5e-4 * (1 + z[..., 1]), (2, 1): 2e-4 + 0 * z[..., 0], (1, 1): 1e-4 * (1 + z[..., 0])}
    modes = {}
    for k, v in rows.items():
        modes[k] = v.astype(complex)
        modes[tuple(-x for x in k)] = np.conj(modes[k])
    f = FourierField(2, modes, 9, grid)
    spec = HamiltonianSpec(2, 0, QuadraticH0(np.eye(2), w.omega), FourierField.from_rows([[1, 0, 1e-3, 0]], 2),
                           1.36, 1.0, action_box=((-.2, .2), (-.2, .2)))
    st = initial_state(f, grid, P, w, taylor_split(spec, w, R), 0.0, mu_of(f, 1.36), 1.0)
    res = run_averaging(st, AveragingOptions(homogeneous=True))
    orc = homogeneous_oracle(st, res.delta_star)
    worst = 0.0
    for k, v in orc.modes.items():
        got = np.asarray(res.state.field.modes.get(k, 0.0))
        worst = max(worst, float(np.max(np.abs(got - v) / np.maximum(np.abs(v), 1e-300))))
    verdict(capsys, 5, worst <= 1e-8, f"worst relative error {worst:.2e} over {len(orc.modes)} modes")


def test_criterion_6_normal_form(capsys, convex2d_run):
    _, rep, _ = convex2d_run
    names = ("nonresonant norm (rho2)", "deviation", "majorant envelope (worst ratio)")
    ok = all(rep.checks[k][0] for k in names)
    detail = "; ".join(f"{k} {rep.checks[k][1]:.3g} vs {rep.checks[k][2]:.3g}" for k in names)
    verdict(capsys, 6, ok, detail)


def test_criterion_7_dirichlet(capsys):
    rng = np.random.default_rng(3)
    bad = 0
    for _ in range(10_000):
        n = int(rng.integers(2, 5))
        Q = float(rng.choice([10, 100, 1000]))
        alpha = rng.uniform(-3, 3, n)
        c = dirichlet_classic(alpha, Q)
        r = dirichlet_rescaled(alpha, Q)
        bad += c.err_inf > Q ** (-1 / n) * (1 + 1e-12)
        bad += r.err_inf > 1 / (r.t_bar * Q ** (1 / (n - 1))) * (1 + 1e-9)
    w = dirichlet_rescaled([1.0, math.sqrt(2)], 10)
    worked = w.q == 5 and abs(w.err_inf - 0.0142) < 1e-4
    verdict(capsys, 7, bad == 0 and worked,
            f"{bad} violations over 10^4 alphas; worked instance q={w.q}, err={w.err_inf:.4f}")


def test_criterion_8_constants(capsys):
    cos1 = FourierField.from_rows([[1, 0, 0.5, 0]], 2)
    spec = HamiltonianSpec(2, 0, QuadraticH0(np.eye(2)), cos1, 2.0, 1.0, ConvexityConstants(1.0, 1.0, 1.0, 0.0))
    rho1 = 1.0
    rep = global_constants(spec, 1e-4, (rho1, 0.25, 0.5))
    closed = abs(rep.confinement - 0.8) <= 1e-12 and abs(rep.time_log - 1.25 * rho1) <= 1e-12
    sweep_spec = HamiltonianSpec(2, 0, QuadraticH0(np.eye(2)), cos1, 6.0, 1.0,
                                 ConvexityConstants(1.0, 1.0, 1.0, 0.0))
    eps_grid = (1e-8, 1e-9, 1e-10, 1e-11, 1e-12, 1e-13, 1e-14)
    rho1s = [optimize_rho_split(sweep_spec, e, mu=1e-3, grid=80)[0][0] for e in eps_grid]
    # the shipped local scenario, where the binding bullet depends on eps
    cfg = replace(load_config("convex2d"), rho_split=None)
    local_eps = (6e-8, 3e-8, 1e-8, 1e-9, 1e-10, 1e-12, 1e-14)
    local = [predict(cfg.with_eps(e)).report.rho_split[0] for e in local_eps]
    mono = all(b >= a - 1e-9 for seq in (rho1s, local) for a, b in zip(seq, seq[1:]))
    verdict(capsys, 8, closed and mono,
            f"confinement {rep.confinement:.15g}, time_log/rho1 {rep.time_log / rho1:.15g}; "
            f"global rho1 over eps 1e-8..1e-14: {', '.join(f'{r:.4f}' for r in rho1s)}; "
            f"convex2d rho1 over eps 6e-8..1e-14: {', '.join(f'{r:.4f}' for r in local)}")


def test_criterion_9_confinement(capsys, convex2d_run):
    _, rep, _ = convex2d_run
    run = rep.run
    steps = min(t.steps for t in run.trajectories)
    ok = run.bound_held and run.energy_drift <= 1e-7 and steps >= 10_000_000
    verdict(capsys, 9, ok,
            f"max drift {run.max_action_drift:.3e} <= {run.predicted_confinement:.3e}, energy drift "
            f"{run.energy_drift:.2e}, {steps} steps, covered fraction of stability time {run.covered_fraction:.3g}")


def test_criterion_10_reference(capsys):
    rep = run_1dof_reference(ReferenceConfig.pendulum(eps=1e-2))
    pushed = run_1dof_reference(ReferenceConfig.pendulum(eps=0.2, delta_end=100.0))
    ok = rep.bound_held and rep.worst_ratio <= 1 + 1e-6 and pushed.halted and pushed.final_delta == pushed.delta_max
    verdict(capsys, 10, ok,
            f"worst amplitude/majorant ratio {rep.worst_ratio:.4f}; pushed run halted at {pushed.final_delta:.6g} "
            f"(maximal flow time {pushed.delta_max:.6g})")


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-p", "no:cacheprovider"]))

"""`nekh` command line entry point."""
from __future__ import annotations

import argparse
import csv
import math
import sys
from pathlib import Path

import numpy as np

from . import constants as C
from .averaging import AveragingOptions, ConstraintViolation, run_averaging, averaging_constraints
from .config import load_config
from .diophantine import dirichlet_classic, dirichlet_rescaled, locate_periodic_action
from .harness import PipelineError, averaging_setup, integrate, predict, run_pipeline, write_decay_csv
from .lattice import FrequencyVector, PartitionParams, enumerate_diamond, partition_counts, stopping_time
from .majorant import majorant_suite
from .sums import bound_greater, bound_pm, bound_zero_free, budget_A, sums_brute_many

DEFAULT_CONFIG = "convex2d"


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return "%.17g" % v
    return str(v)


def write_csv(path: Path, header, rows) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def _out(args) -> Path:
    return Path(args.out)


def _floats(text: str) -> list[float]:
    return [float(v) for v in text.replace(",", " ").split()]


def _ints(text: str) -> list[int]:
    return [int(v) for v in text.replace(",", " ").split()]


def _lattice_args(args):
    params = PartitionParams(tuple(_floats(args.rho_split)), args.K)
    omega = FrequencyVector.from_integers(_ints(args.p), args.t_bar)
    deltas = np.linspace(0.0, stopping_time(params, omega), args.deltas)
    return params, omega, deltas


# ---------------------------------------------------------------- subcommands

def cmd_constants(args) -> int:
    cfg = load_config(args.config)
    if args.rho_split:
        from dataclasses import replace
        cfg = replace(cfg, rho_split=tuple(_floats(args.rho_split)))
    out = _out(args)
    if args.sweep:
        rows = []
        for eps in _floats(args.sweep):
            c = cfg.with_eps(eps)
            try:
                split, rep = _optimize(c)
                rows.append((eps, *split, rep.confinement, rep.time_log, rep.binding))
                print(f"eps={eps:.3g}  rho1={split[0]:.10f}  binding={rep.binding}")
            except C.InfeasibleError as exc:
                rows.append((eps, math.nan, math.nan, math.nan, math.nan, math.nan, exc.binding))
                print(f"eps={eps:.3g}  infeasible  binding={exc.binding}")
        write_csv(out / "constants_sweep.csv",
                  ["eps", "rho1", "rho2", "rho3", "confinement", "time_log", "binding"], rows)
        return 0
    if args.eps is not None:
        cfg = cfg.with_eps(args.eps)
    try:
        rep = predict(cfg).report
    except C.InfeasibleError as exc:
        print(f"infeasible: binding constraint {exc.binding}")
        return 2
    print(rep.table())
    write_csv(out / "constants.csv", ["name", "lhs", "relation", "rhs", "satisfied"],
              [(c.name, c.lhs, c.relation, c.rhs, c.satisfied) for c in rep.constraints + rep.diagnostics])
    return 0 if rep.feasible else 2


def _optimize(cfg):
    if cfg.regime == "global":
        return C.optimize_rho_split(cfg.spec, cfg.eps, "global", mu=cfg.spec.mu)
    pa = locate_periodic_action(cfg.spec, cfg.initial_conditions[0][0], cfg.Q)
    r = pa.bound if cfg.r is None else cfg.r
    return C.optimize_rho_split(cfg.spec, cfg.eps, "local", mu=cfg.spec.mu, r=r, t_bar=pa.omega.t_bar,
                                omega_norm=pa.omega.norm)


def cmd_partition(args) -> int:
    params, omega, deltas = _lattice_args(args)
    rows = []
    print(f"{'delta':>12} {'n_plus':>8} {'n_minus':>8} {'n_zero':>8} {'n_greater':>9}")
    for d in deltas:
        c = partition_counts(float(d), params, omega)
        rows.append((float(d), c["n_plus"], c["n_minus"], c["n_zero"], c["n_greater"]))
        print(f"{d:>12.6g} {c['n_plus']:>8} {c['n_minus']:>8} {c['n_zero']:>8} {c['n_greater']:>9}")
    write_csv(_out(args) / "partition.csv", ["delta", "n_plus", "n_minus", "n_zero", "n_greater"], rows)
    return 0


def cmd_sums(args) -> int:
    params, omega, deltas = _lattice_args(args)
    ks = enumerate_diamond(params.K, omega.n)
    bud = budget_A(params, omega, args.eps, args.mu, args.sigma)
    rows, bad = [], 0
    for d in deltas:
        d = float(d)
        s = sums_brute_many(ks, d, params, omega)
        row = (d, s["pm"].max(), bound_pm(d, params, omega), s["greater"].max(), bound_greater(d, params, omega),
               s["zero"].max(), bound_zero_free(d, params, omega), bud.a(d), bud.A(d))
        bad += (row[1] > row[2]) + (row[3] > row[4]) + (row[5] > row[6])
        rows.append(row)
    header = ["delta", "sigma_pm_brute", "sigma_pm_bound", "sigma_gt_brute", "sigma_gt_bound",
              "sigma_0_brute", "sigma_0_bound", "a", "A"]
    write_csv(_out(args) / "sums.csv", header, rows)
    print(f"{len(rows)} delta points, {bad} bound violations, A(delta*) = {bud.A_star:.6g}")
    return 0 if bad == 0 else 1


def cmd_majorant(args) -> int:
    rep = majorant_suite(args.seed, args.samples)
    print(f"{'check':<48} {'value':>14}  ok")
    for name, val, ok in rep.rows():
        print(f"{name:<48} {val:>14.6g}  {'yes' if ok else 'NO'}")
    rows = []
    for label, r in (("constant", rep.residual_constant), ("piecewise", rep.residual_piecewise)):
        for which, res in (("W", r.max_residual_W), ("Wk", r.max_residual_Wk)):
            loc = r.worst.get(which, ())
            rows.append((label, which, res, *(list(loc) + [math.nan] * (3 - len(loc)))))
    write_csv(_out(args) / "majorant_residuals.csv", ["rate", "function", "residual", "Y", "delta", "k_norm"], rows)
    return 0 if rep.passed else 1


def cmd_average(args) -> int:
    cfg = load_config(args.config)
    pred = predict(cfg)
    state = averaging_setup(cfg, pred)
    try:
        nf = run_averaging(state, AveragingOptions())
    except ConstraintViolation as exc:
        print(f"averaging refused: {exc}")
        return 2
    out = _out(args)
    out.mkdir(parents=True, exist_ok=True)
    write_decay_csv(out / f"{cfg.name}_decay.csv", nf)
    lines = [f"{'quantity':<28} {'value':>24} {'bound':>24}  ok"]
    for key in ("nonresonant_norm", "nonresonant_dtheta_norm", "resonant_norm", "total_norm", "deviation"):
        v, b = nf.bounds[key], nf.bounds[key + "_bound"]
        lines.append(f"{key:<28} {v:>24.17g} {b:>24.17g}  {'yes' if v <= b else 'NO'}")
    lines.append(f"{'envelope worst ratio':<28} {nf.envelope_worst:>24.17g} {1.0:>24.17g}  "
                 f"{'yes' if nf.envelope_ok else 'NO'}")
    lines.append(f"{'leaked mass':<28} {nf.leaked_mass:>24.17g}")
    lines.append(f"{'delta*':<28} {nf.delta_star:>24.17g}")
    for row in averaging_constraints(state):
        lines.append(f"{row.name:<28} {row.lhs:>24.17g} {row.rhs:>24.17g}  {'yes' if row.satisfied else 'NO'}")
    text = "\n".join(lines)
    (out / f"{cfg.name}_normal_form.txt").write_text(text + "\n")
    print(text)
    return 0 if nf.bounds_hold and nf.envelope_ok else 1


def cmd_dirichlet(args) -> int:
    if args.action:
        cfg = load_config(args.config)
        pa = locate_periodic_action(cfg.spec, _floats(args.action), args.Q)
        res = pa.approximation
        print(f"I*         {pa.I_star.tolist()}")
        print(f"|I - I*|   {pa.distance:.17g}  (bound {pa.bound:.17g})")
    else:
        alpha = _floats(args.alpha)
        res = dirichlet_classic(alpha, args.Q) if args.classic else dirichlet_rescaled(alpha, args.Q)
    print(f"q          {res.q}")
    print(f"p          {list(map(int, res.p))}")
    print(f"t_bar      {res.t_bar:.17g}")
    print(f"err_inf    {res.err_inf:.17g}")
    print(f"alpha*     {np.asarray(res.alpha_star).tolist()}")
    print(f"pivot      {res.pivot}")
    return 0


def cmd_simulate(args) -> int:
    cfg = load_config(args.config)
    if args.eps is not None:
        cfg = cfg.with_eps(args.eps)
    if args.steps is not None:
        from dataclasses import replace
        cfg = replace(cfg, max_steps=args.steps)
    rep = integrate(cfg, _out(args), args.threads, args.seed)
    text = rep.summary() + f"\ncovered fraction of stability time {rep.covered_fraction:.6g}"
    (_out(args) / f"{cfg.name}_simulate.txt").write_text(text + "\n")
    print(text)
    return 0 if rep.bound_held else 1


def cmd_pipeline(args) -> int:
    cfg = load_config(args.config)
    if args.eps is not None:
        cfg = cfg.with_eps(args.eps)
    try:
        rep = run_pipeline(cfg, _out(args), args.threads, args.seed)
    except PipelineError as exc:
        print(f"pipeline halted at stage '{exc.stage}': {exc.cause}")
        return 2
    print(rep.prediction.report.table())
    print()
    print(rep.table())
    print()
    print(rep.run.summary())
    return 0 if rep.passed else 1


# ---------------------------------------------------------------- parser

def _global(p: argparse.ArgumentParser, suppress: bool) -> None:
    d = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    p.add_argument("--config", default=d(DEFAULT_CONFIG), help="scenario TOML file or shipped name")
    p.add_argument("--out", default=d("out"), help="output directory")
    p.add_argument("--seed", type=int, default=d(0))
    p.add_argument("--threads", type=int, default=d(1))


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="nekh", description="Exponential stability estimates toolkit")
    _global(ap, False)
    sub = ap.add_subparsers(dest="command", required=True)

    def add(name, fn, help_):
        p = sub.add_parser(name, help=help_)
        _global(p, True)
        p.set_defaults(func=fn)
        return p

    def lattice_opts(p):
        p.add_argument("--p", default="1 1", help="integer frequency vector")
        p.add_argument("--t-bar", type=float, default=1.0)
        p.add_argument("--K", type=float, default=6.0)
        p.add_argument("--rho-split", default="1 0.25 0.5")
        p.add_argument("--deltas", type=int, default=20)

    p = add("constants", cmd_constants, "stability constants for a scenario")
    p.add_argument("--eps", type=float)
    p.add_argument("--sweep", help="list of eps values; optimizes the split at each")
    p.add_argument("--rho-split")
    p = add("partition", cmd_partition, "lattice class counts per delta")
    lattice_opts(p)
    p = add("sums", cmd_sums, "brute lattice sums against their bounds")
    lattice_opts(p)
    p.add_argument("--eps", type=float, default=1e-4)
    p.add_argument("--mu", type=float, default=1.0)
    p.add_argument("--sigma", type=float, default=1.0)
    p = add("majorant", cmd_majorant, "majorant PDE residual and property suites")
    p.add_argument("--samples", type=int, default=1000)
    add("average", cmd_average, "run the averaging flow on a scenario")
    p = add("dirichlet", cmd_dirichlet, "simultaneous Diophantine approximation")
    p.add_argument("--alpha", default="1 1.4142135623730951")
    p.add_argument("--Q", type=float, default=10.0)
    p.add_argument("--classic", action="store_true", help="classic bound Q^{-1/n} instead of the rescaled one")
    p.add_argument("--action", help="locate the periodic action near I for the config's H0")
    p = add("simulate", cmd_simulate, "symplectic integration against the confinement")
    p.add_argument("--eps", type=float)
    p.add_argument("--steps", type=int)
    p = add("pipeline", cmd_pipeline, "dirichlet, constants, averaging and integration")
    p.add_argument("--eps", type=float)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())

"""Scenario configuration: TOML files with [system], [perturbation], [run]."""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:          # python < 3.11
    import tomli as tomllib

from .model import HamiltonianSpec, PolynomialH0, QuadraticH0, SlowGrid, TrigPerturbation

CONFIG_DIR = Path(__file__).resolve().parent / "configs"


@dataclass(frozen=True)
class ScenarioConfig:
    spec: HamiltonianSpec
    h1: TrigPerturbation
    eps: float
    initial_conditions: tuple               # (I, theta, x, y) tuples
    horizon: float | None = None            # None: min(stability time, max_steps * dt)
    dt: float | None = None                 # None: horizon / max_steps
    max_steps: int = 10_000_000
    regime: str = "local"
    Q: float | None = None
    r: float | None = None
    rho_split: tuple | None = None
    xy_box: tuple = ()
    grid_points: int = 9
    csv_every: int | None = None            # None: at most ~10^4 CSV rows
    symplectic_samples: int = 8
    reversal_steps: int = 10_000
    name: str = "scenario"
    output: str = "out"

    def __post_init__(self):
        if self.eps < 0:
            raise ValueError("eps must be nonnegative")
        if self.dt is not None and not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.horizon is not None and self.horizon < 0:
            raise ValueError("horizon must be nonnegative")
        if self.max_steps < 1:
            raise ValueError("max_steps must be >= 1")
        if self.regime not in ("local", "global"):
            raise ValueError("regime must be 'local' or 'global'")
        n, m = self.spec.n, self.spec.m
        ics = []
        for ic in self.initial_conditions:
            I, th, x, y = (np.asarray(v, dtype=float) for v in ic)
            if I.shape != (n,) or th.shape != (n,) or x.shape != (m,) or y.shape != (m,):
                raise ValueError("initial condition has wrong shape")
            if not self.spec.in_domain(I):
                raise ValueError(f"initial action {I.tolist()} outside the action box")
            ics.append((I, th, x, y))
        if not ics:
            raise ValueError("need at least one initial condition")
        object.__setattr__(self, "initial_conditions", tuple(ics))

    def with_eps(self, eps: float) -> "ScenarioConfig":
        return replace(self, eps=float(eps))


def _h0(system: dict, n: int):
    kind = system.get("H0", "quadratic")
    if kind == "quadratic":
        A = system.get("A", np.eye(n).tolist())
        return QuadraticH0(A, system.get("b"), system.get("c", 0.0))
    if kind == "polynomial":
        return PolynomialH0([(t["exps"], t["coef"]) for t in system["terms"]], n)
    raise ValueError(f"unknown H0 kind {kind!r}")


def _split_ic(row, n: int, m: int):
    row = list(map(float, row))
    if len(row) == n:
        row = row + [0.0] * n
    if len(row) == 2 * n:
        row = row + [0.0] * (2 * m)
    if len(row) != 2 * n + 2 * m:
        raise ValueError(f"initial condition needs {2 * n + 2 * m} entries, got {len(row)}")
    return row[:n], row[n:2 * n], row[2 * n:2 * n + m], row[2 * n + m:]


def config_from_dict(data: dict, name: str = "scenario") -> ScenarioConfig:
    for section in ("system", "perturbation", "run"):
        if section not in data:
            raise ValueError(f"missing [{section}] section")
    system, pert, run = data["system"], data["perturbation"], data["run"]
    n, m = int(system["n"]), int(system.get("m", 0))
    h0 = _h0(system, n)
    h1 = TrigPerturbation.from_rows(pert.get("modes", []), n, m)
    box = tuple(tuple(b) for b in system.get("action_box", [(-1.0, 1.0)] * n))
    xy_box = tuple(tuple(b) for b in system.get("xy_box", [(-1.0, 1.0)] * (2 * m)))
    pts = int(run.get("grid_points", 9))
    axes = [np.linspace(a, b, pts) for a, b in box + xy_box]
    sample = h1.sample(SlowGrid(tuple(axes), n), max(h1.radius, 1))
    spec = HamiltonianSpec(n, m, h0, sample, float(system["rho"]), float(system["sigma"]), action_box=box)
    ics = tuple(_split_ic(r, n, m) for r in run["initial_conditions"])
    opt = lambda key: run.get(key) if run.get(key, "auto") != "auto" else None  # noqa: E731
    rs = opt("rho_split")
    return ScenarioConfig(
        spec=spec, h1=h1, eps=float(pert.get("eps", 0.0)), initial_conditions=ics,
        horizon=None if opt("horizon") is None else float(opt("horizon")),
        dt=None if opt("dt") is None else float(opt("dt")),
        max_steps=int(run.get("max_steps", 10_000_000)), regime=run.get("regime", "local"),
        Q=None if opt("Q") is None else float(opt("Q")),
        r=None if opt("r") is None else float(opt("r")),
        rho_split=None if rs is None else tuple(float(v) for v in rs),
        xy_box=xy_box, grid_points=pts,
        csv_every=None if opt("csv_every") is None else int(opt("csv_every")),
        symplectic_samples=int(run.get("symplectic_samples", 8)),
        reversal_steps=int(run.get("reversal_steps", 10_000)),
        name=str(run.get("name", name)), output=str(run.get("output", "out")),
    )


def load_config(path) -> ScenarioConfig:
    """Read a scenario file; bare names resolve to the shipped configs."""
    p = Path(path)
    if not p.exists():
        cand = CONFIG_DIR / (p.name if p.suffix else p.name + ".toml")
        if not cand.exists():
            raise FileNotFoundError(f"no config {path!r} (shipped: {sorted(x.stem for x in CONFIG_DIR.glob('*.toml'))})")
        p = cand
    with open(p, "rb") as fh:
        data = tomllib.load(fh)
    return config_from_dict(data, p.stem)


def shipped(name: str) -> Path:
    return CONFIG_DIR / f"{name}.toml"

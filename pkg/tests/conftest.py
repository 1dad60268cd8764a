import pytest

from nekhoroshev.config import config_from_dict, load_config
from nekhoroshev.harness import run_pipeline


@pytest.fixture(scope="session")
def convex2d_run(tmp_path_factory):
    """The shipped reference scenario through the full pipeline (10^7 steps)."""
    out = tmp_path_factory.mktemp("convex2d")
    cfg = load_config("convex2d")
    return cfg, run_pipeline(cfg, out_dir=out), out


def make_config(eps=1e-3, modes=None, ics=((1.0, 0.7, 0.0, 0.0),), n=2, m=0, run=None, system=None):
    """Small scenario builder for tests."""
    data = {
        "system": {"n": n, "m": m, "H0": "quadratic", "A": [[1.0, 0.0], [0.0, 1.0]],
                   "action_box": [[0.5, 1.5], [0.5, 1.5]], "rho": 1.0, "sigma": 1.0},
        "perturbation": {"eps": eps, "modes": modes if modes is not None else [{"k": [1, 0], "re": 0.5}]},
        "run": {"regime": "global", "rho_split": [0.5, 0.125, 0.25], "initial_conditions": [list(r) for r in ics],
                "horizon": 100.0, "dt": 0.01},
    }
    data["system"].update(system or {})
    data["run"].update(run or {})
    return config_from_dict(data, "test")

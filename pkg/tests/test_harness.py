import csv
import math
from dataclasses import replace

import numpy as np
import pytest

from conftest import make_config
from nekhoroshev.harness import (
    NewtonFailure, PipelineError, _System, integrate, predict, reversal_error, run_pipeline, state_vector,
    symplectic_defect,
)
from nekhoroshev.config import load_config


def test_eps_zero_integrable_flow():
    cfg = make_config(eps=0.0, run={"horizon": 50.0, "dt": 0.01, "csv_every": 100})
    rep = integrate(cfg)
    t = rep.trajectories[0]
    assert t.max_action_drift <= 1e-12
    s = t.samples
    for j, I in enumerate((1.0, 0.7)):      # theta_j(t) = I_j t
        np.testing.assert_allclose(np.unwrap(s[:, 5 + j]), I * s[:, 0], atol=1e-9)


def test_energy_drift_default_schedule():
    # H0 = |I|^2/2, H1 = cos(theta_1), horizon 1e4 with dt = horizon / max_steps
    cfg = make_config(eps=1e-3, run={"horizon": 1e4, "dt": "auto"})
    rep = integrate(cfg)
    assert rep.trajectories[0].dt == pytest.approx(1e-3)
    assert rep.energy_drift <= 1e-8
    assert rep.bound_held
    assert rep.predicted_confinement == predict(cfg).confinement


def test_energy_error_second_order():
    drift = {dt: integrate(make_config(eps=1e-3, run={"horizon": 1e4, "dt": dt})).energy_drift
             for dt in (0.02, 0.01)}
    assert drift[0.01] == pytest.approx(drift[0.02] / 4, rel=0.05)


@pytest.mark.parametrize("dt", [0.05, 0.3])
def test_symplectic_and_reversible(dt):
    modes = [{"k": [1, 0], "re": 0.5, "slope_re": [0.2, 0.0]}, {"k": [1, -1], "im": 0.3, "slope_im": [0.0, 0.1]}]
    cfg = make_config(eps=1e-2, modes=modes)
    sysm = _System.from_config(cfg)
    rng = np.random.default_rng(5)
    for _ in range(5):
        X = np.concatenate([rng.uniform(0.6, 1.4, 2), rng.uniform(0, 2 * math.pi, 2)])
        assert symplectic_defect(sysm, X, dt) <= 1e-9
    assert reversal_error(sysm, state_vector(cfg.initial_conditions[0]), dt, 2000) <= 1e-9


def test_degenerate_block_symplectic_and_flagged():
    system = {"A": [[1.0, 0.0], [0.0, 1.0]], "xy_box": [[-1e-4, 1e-4], [-1e-4, 1e-4]]}
    modes = [{"k": [1, 0], "re": 0.5, "slope_re": [0.0, 0.0, 1.0, 0.3]}]
    cfg = make_config(eps=1e-2, modes=modes, m=1, system=system, ics=((1.0, 0.7, 0.0, 0.0, 0.0, 0.0),),
                      run={"horizon": 20.0, "dt": 0.01})
    sysm = _System.from_config(cfg)
    X = np.array([1.0, 0.7, 0.3, 1.1, 0.05, -0.02])
    assert symplectic_defect(sysm, X, 0.1) <= 1e-9
    rep = integrate(cfg)
    t = rep.trajectories[0]
    assert t.xy_exit_step > 0           # flagged
    assert t.steps == 2000              # but not truncated


def test_polynomial_h0_kernel_matches_quadratic():
    quad = make_config(eps=1e-2, run={"horizon": 5.0, "dt": 0.01})
    poly = make_config(eps=1e-2, run={"horizon": 5.0, "dt": 0.01},
                       system={"H0": "polynomial", "terms": [{"exps": [2, 0], "coef": 0.5},
                                                              {"exps": [0, 2], "coef": 0.5}]})
    a, b = integrate(quad).trajectories[0], integrate(poly).trajectories[0]
    np.testing.assert_allclose(a.final_state, b.final_state, atol=1e-12)


def test_polynomial_h0_jacobian():
    cfg = make_config(eps=1e-2, system={"H0": "polynomial", "terms": [
        {"exps": [2, 0], "coef": 0.5}, {"exps": [0, 2], "coef": 0.5}, {"exps": [3, 0], "coef": 0.05},
        {"exps": [1, 2], "coef": 0.02}]})
    sysm = _System.from_config(cfg)
    X = np.array([0.9, 1.1, 0.4, 2.0])
    F, DF = sysm.field(X)
    h = 1e-6
    for j in range(4):
        e = np.zeros(4)
        e[j] = h
        num = (sysm.field(X + e)[0] - sysm.field(X - e)[0]) / (2 * h)
        np.testing.assert_allclose(DF[:, j], num, atol=1e-8)
    assert symplectic_defect(sysm, X, 0.1) <= 1e-9


def test_csv_schema(tmp_path):
    cfg = make_config(eps=1e-3, run={"horizon": 1.0, "dt": 0.01})
    rep = integrate(cfg, tmp_path)
    with open(rep.csv_path) as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["t", "action_drift", "energy_rel_err", "I0", "I1", "theta0", "theta1"]
    assert len(rows) == 101 + 1
    for v in rows[5]:
        assert float(v) == float("%.17g" % float(v))


def test_reports_merge_in_input_order():
    ics = ((1.0, 0.7, 0, 0), (1.2, 0.6, 1.0, 0.0), (0.8, 1.3, 2.0, 1.0))
    cfg = make_config(eps=1e-2, ics=ics, run={"horizon": 20.0, "dt": 0.01})
    one = integrate(cfg, threads=1)
    many = integrate(cfg, threads=3)
    for a, b in zip(one.trajectories, many.trajectories):
        np.testing.assert_array_equal(a.final_state, b.final_state)
    assert one.max_action_drift == max(t.max_action_drift for t in one.trajectories)


def test_newton_failure_reported():
    modes = [{"k": [3, 0], "re": 1.0}, {"k": [1, 2], "im": 1.0, "slope_im": [2.0, 1.0]}]
    cfg = make_config(eps=1e6, modes=modes, run={"horizon": 100.0, "dt": 1.0})
    with pytest.raises(NewtonFailure):
        integrate(cfg)


def test_config_rejects_outside_domain():
    with pytest.raises(ValueError):
        make_config(ics=((3.0, 0.7, 0, 0),))


def test_pipeline_halts_at_constants():
    cfg = load_config("convex2d").with_eps(1e-5)
    with pytest.raises(PipelineError) as exc:
        run_pipeline(cfg)
    assert exc.value.stage == "constants"
    assert "local.1" in str(exc.value)


def test_pipeline_eps_zero(tmp_path):
    cfg = replace(load_config("convex2d").with_eps(0.0), max_steps=20_000)
    rep = run_pipeline(cfg, tmp_path)
    assert rep.passed
    assert rep.run.max_action_drift == 0.0
    assert rep.normal_form.deviation_inf == 0.0


def test_convex2d_all_checks_pass(convex2d_run):
    _, rep, out = convex2d_run
    assert rep.passed, rep.table()
    assert (out / "convex2d_decay.csv").exists() and (out / "convex2d_summary.txt").exists()

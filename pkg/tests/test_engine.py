import math

import numpy as np
import pytest

from resilient_microgrid.attack import AttackProfile, AttackSegment
from resilient_microgrid.engine import (
    InitialState, ScenarioError, initial_vector, kernel_params, run, step, validate)
from resilient_microgrid.kernels import rhs_numpy
from resilient_microgrid.netgraph import build_graph
from resilient_microgrid.scenario import override

W0 = 2 * math.pi * 60


def perturbed(cfg):
    ini = InitialState(omega_n=W0 + np.array([1.0, -0.5, 0.8, -1.2]), V_n=np.array([345.0, 335.0, 350.0, 330.0]),
                       delta=np.array([0.1, -0.1, 0.05, 0.0]))
    return override(cfg.with_(attack=AttackProfile(4), initial=ini), controller="conventional", t_end=1.0)


def test_fixed_point_with_zero_coupling(golden_cfg):
    # a graph whose followers hear nobody and leaders pin nobody has xi = 0
    g = build_graph(np.zeros((4, 4)), np.zeros((2, 4)))
    cfg = golden_cfg.with_(graph=g, attack=AttackProfile(4), controller="conventional")
    prm = kernel_params(cfg)
    x = initial_vector(cfg)
    # make the angles a fixed point: omega equal to nominal
    P = cfg.droop.b * (x[:4] - ((x[:4] @ cfg.droop.b) - cfg.load.P_L) / cfg.droop.b.sum())
    x[4:8] = W0 + cfg.droop.m_P * P
    y = step(x.copy(), 0.0, 1e-3, cfg, prm)
    np.testing.assert_allclose(y, x, rtol=0, atol=1e-12 * np.abs(x).max())


def test_step_matches_kernel_block(golden_cfg):
    from resilient_microgrid.engine import _mu_table
    from resilient_microgrid.kernels import integrate_block_numpy
    cfg = golden_cfg.with_(t_end=0.01)
    prm = kernel_params(cfg)
    x0 = initial_vector(cfg)
    a = x0.copy()
    t = 0.0
    for k in range(10):
        a = step(a, k * cfg.dt, cfg.dt, cfg, prm)
    b = x0.copy()
    integrate_block_numpy(b, 0, 10, cfg.dt, 1, _mu_table(cfg, 0, 10), prm, 1e7, np.empty((10, b.size)))
    np.testing.assert_array_equal(a, b)


@pytest.mark.parametrize("dt", [1e-2, 8e-3])
def test_fourth_order_self_convergence(golden_cfg, dt):
    base = perturbed(golden_cfg)
    finals = {}
    for d in (dt, dt / 2, dt / 8):
        ts = run(override(base, dt=d))
        assert ts.t[-1] == pytest.approx(1.0)
        finals[d] = ts.states[-1]
    ratio = np.abs(finals[dt] - finals[dt / 8]).max() / np.abs(finals[dt / 2] - finals[dt / 8]).max()
    assert 12 <= ratio <= 20


def test_short_run_has_two_samples(golden_cfg):
    ts = run(golden_cfg.with_(t_end=0.01))
    assert ts.completed and ts.t.size >= 2
    assert np.all(np.diff(ts.t) > 0)
    np.testing.assert_allclose(np.diff(ts.t), ts.t[1] - ts.t[0])


def test_divergence_is_reported_not_raised(golden_cfg):
    cfg = override(golden_cfg, dt=5e-4, t_end=1.0).with_(blowup=1e3)
    ts = run(cfg)
    assert ts.status == "diverged" and 0 < ts.t_diverged < 1.0
    assert np.all(np.isfinite(ts.states))


def test_conventional_matches_resilient_without_attack(quiet_cfg):
    a = run(override(quiet_cfg, controller="resilient"))
    b = run(override(quiet_cfg, controller="conventional"))
    assert np.abs(a.omega_n - b.omega_n).max() <= 0.01 * np.abs(b.omega_n).max()


def test_runs_are_deterministic(golden_cfg):
    cfg = golden_cfg.with_(t_end=2.0)
    a, b = run(cfg), run(cfg)
    assert a.states.tobytes() == b.states.tobytes()


def test_signals_reconstructed(golden_cfg):
    ts = run(golden_cfg.with_(t_end=0.1))
    for name in ("P", "Q", "omega", "v_od", "xi_f", "xi_v", "Gamma_f", "Gamma_v", "mu_f", "mu_v"):
        assert getattr(ts, name).shape == (ts.t.size, 4)
    np.testing.assert_allclose(ts.P.sum(axis=1), golden_cfg.load.P_L, rtol=1e-12)
    np.testing.assert_allclose(ts.freq_hz, ts.omega / (2 * math.pi))


def test_attack_enters_setpoint_rate(golden_cfg):
    seg = AttackSegment(0.0, 1.0, "constant", value=3.0)
    cfg = override(golden_cfg.with_(attack=AttackProfile.from_segments(4, [("voltage", 1, seg)])),
                   controller="conventional")
    prm = kernel_params(cfg)
    x = initial_vector(cfg)
    clean = rhs_numpy(0.1, x, np.zeros(4), np.zeros(4), prm)
    hit = rhs_numpy(0.1, x, np.zeros(4), np.array([0, 3.0, 0, 0]), prm)
    d = hit - clean
    assert d[9] == 3.0 and np.count_nonzero(d) == 1


@pytest.mark.parametrize("change, msg", [
    (dict(dt=-1.0), "dt"),
    (dict(t_end=1e-5), "t_end"),
    (dict(blowup=0.0), "blow-up"),
    (dict(controller="pid"), "controller"),
    (dict(initial=InitialState(np.full(4, W0), np.full(4, 340.0), phi=0.0)), "phi"),
])
def test_validate_rejects(golden_cfg, change, msg):
    with pytest.raises(ScenarioError, match=msg):
        validate(golden_cfg.with_(**change))


def test_validate_rejects_unreachable(golden_cfg):
    a = np.array([[0, 1, 0, 0], [1, 0, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], float)
    g = build_graph(a, [[1, 0, 0, 0], [0, 1, 0, 0]])
    with pytest.raises(ScenarioError, match="reachability"):
        run(golden_cfg.with_(graph=g))


def test_attack_injected_after_compensator(golden_cfg):
    # corrupting xi instead of the input would pass mu through the compensator and change the rate
    from resilient_microgrid.kernels import stage_numpy
    cfg = override(golden_cfg, controller="resilient")
    prm = kernel_params(cfg)
    x = initial_vector(cfg)
    mu = np.array([0.5, 0.0, 0.0, 0.0])
    hit = stage_numpy(1.0, x, mu, np.zeros(4), prm)
    clean = stage_numpy(1.0, x, np.zeros(4), np.zeros(4), prm)
    assert hit["dx"][4] - clean["dx"][4] == pytest.approx(0.5)
    xi_bad = clean["xi_f"][0] + 0.5
    gam_bad = xi_bad * np.exp(x[12]) / (abs(xi_bad) + clean["eta_f"][0])
    assert (xi_bad + gam_bad) != pytest.approx(hit["dx"][4])

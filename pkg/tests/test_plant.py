import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from resilient_microgrid.plant import (
    OMEGA_NOMINAL, DroopParams, LoadSpec, PlantError, PlantState, droop_equilibrium_angles,
    droop_frequency, droop_voltage, plant_derivative, solve_active_power, solve_outputs,
    solve_reactive_power)

REF = DroopParams(m_P=[9.4e-5, 9.4e-5, 18.8e-5, 18.8e-5], n_Q=[1.3e-3, 1.3e-3, 2.6e-3, 2.6e-3],
                    b=[1e4] * 4, q=[1e3] * 4)
LOAD = LoadSpec(36000.0, 8000.0)


def network_oracle(delta, V_n, p: DroopParams, load: LoadSpec):
    """Solve the full bus equations as one dense linear system.

    Unknowns: P (N), delta_L, Q (N), V_L.
    """
    n = p.n
    m = np.zeros((2 * n + 2, 2 * n + 2))
    r = np.zeros(2 * n + 2)
    for i in range(n):
        m[i, i], m[i, n] = 1.0, p.b[i]           # P_i + b_i delta_L = b_i delta_i
        r[i] = p.b[i] * delta[i]
        # Q_i = q_i (V_n_i - n_Q_i Q_i - V_L)
        m[n + 1 + i, n + 1 + i] = 1.0 + p.q[i] * p.n_Q[i]
        m[n + 1 + i, 2 * n + 1] = p.q[i]
        r[n + 1 + i] = p.q[i] * V_n[i]
    m[n, :n] = 1.0
    r[n] = load.P_L
    m[2 * n + 1, n + 1:2 * n + 1] = 1.0
    r[2 * n + 1] = load.Q_L
    sol = np.linalg.solve(m, r)
    return sol[:n], sol[n], sol[n + 1:2 * n + 1], sol[2 * n + 1]


def test_droop_laws():
    np.testing.assert_allclose(droop_frequency(REF, np.full(4, 377.0), np.full(4, 1000.0)),
                               377.0 - 1000.0 * REF.m_P)
    np.testing.assert_allclose(droop_voltage(REF, np.full(4, 340.0), np.full(4, 2000.0)),
                               [337.4, 337.4, 334.8, 334.8])
    with pytest.raises(PlantError, match="length mismatch"):
        droop_frequency(REF, np.zeros(4), np.zeros(3))


def test_equal_angles_split_load_evenly():
    P, dL = solve_active_power(np.full(4, 0.2), REF, LOAD)
    np.testing.assert_allclose(P, 9000.0)
    assert dL == pytest.approx(0.2 - 0.9)


def test_droop_equilibrium_shares_in_inverse_proportion():
    delta = droop_equilibrium_angles(REF, LOAD)
    P, dL = solve_active_power(delta, REF, LOAD)
    assert dL == pytest.approx(0.0, abs=1e-12)
    # m_P P equal for all units: units 1,2 carry twice the power of 3,4
    np.testing.assert_allclose(P, [12000, 12000, 6000, 6000], rtol=1e-12)


@settings(max_examples=80, deadline=None)
@given(arrays(float, 4, elements=st.floats(-1, 1)), arrays(float, 4, elements=st.floats(300, 380)))
def test_power_flow_matches_dense_network_solve(delta, V_n):
    P, dL = solve_active_power(delta, REF, LOAD)
    Q, v_od, VL = solve_reactive_power(V_n, REF, LOAD)
    P_o, dL_o, Q_o, VL_o = network_oracle(delta, V_n, REF, LOAD)
    np.testing.assert_allclose(P, P_o, rtol=1e-9, atol=1e-6)
    np.testing.assert_allclose(Q, Q_o, rtol=1e-9, atol=1e-6)
    assert dL == pytest.approx(dL_o, abs=1e-12)
    assert VL == pytest.approx(VL_o, rel=1e-12)
    assert P.sum() == pytest.approx(LOAD.P_L, rel=1e-12)
    assert Q.sum() == pytest.approx(LOAD.Q_L, rel=1e-12)
    np.testing.assert_allclose(Q, REF.q * (v_od - VL), rtol=1e-9, atol=1e-6)


@settings(max_examples=50, deadline=None)
@given(arrays(float, 4, elements=st.floats(-1, 1)), st.floats(-5, 5))
def test_common_angle_shift_leaves_power_unchanged(delta, shift):
    P0, _ = solve_active_power(delta, REF, LOAD)
    P1, _ = solve_active_power(delta + shift, REF, LOAD)
    np.testing.assert_allclose(P0, P1, atol=1e-6)


def test_outputs_and_kinematics():
    delta = droop_equilibrium_angles(REF, LOAD)
    st_ = PlantState(delta, np.full(4, OMEGA_NOMINAL), np.full(4, 340.0))
    out = solve_outputs(st_, REF, LOAD)
    rate = plant_derivative(st_, out)
    # all units share one droop frequency, so angles drift together
    np.testing.assert_allclose(rate, rate[0], atol=1e-12)
    assert rate[0] == pytest.approx(-12000 * 9.4e-5)


@pytest.mark.parametrize("field", ["m_P", "n_Q", "b", "q"])
def test_params_must_be_positive(field):
    kw = dict(m_P=[1e-4] * 2, n_Q=[1e-3] * 2, b=[1.0] * 2, q=[1.0] * 2)
    kw[field] = [1.0, 0.0]
    with pytest.raises(PlantError, match=field):
        DroopParams(**kw)


def test_params_length_mismatch():
    with pytest.raises(PlantError, match="length"):
        DroopParams(m_P=[1.0] * 3, n_Q=[1.0] * 2, b=[1.0] * 2, q=[1.0] * 2)

"""Reduced-order electrical model of droop-controlled inverters on one load bus.

Active power flows through per-inverter susceptances ``b`` (DC power flow)
and reactive power through a linear coupling ``q`` between terminal voltage
and load-bus voltage. Both algebraic solves are closed form, so the network
adds no states beyond the inverter angles.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

OMEGA_NOMINAL = 2.0 * np.pi * 60.0


class PlantError(ValueError):
    pass


def _vec(x, name: str) -> np.ndarray:
    a = np.array(x, dtype=float).ravel()
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class DroopParams:
    m_P: np.ndarray
    n_Q: np.ndarray
    b: np.ndarray
    q: np.ndarray

    def __post_init__(self):
        n = None
        for name in ("m_P", "n_Q", "b", "q"):
            v = _vec(getattr(self, name), name)
            object.__setattr__(self, name, v)
            if n is None:
                n = v.size
            elif v.size != n:
                raise PlantError(f"droop parameter {name} has length {v.size}, expected {n}")
            if not np.all(np.isfinite(v)) or np.any(v <= 0):
                raise PlantError(f"droop parameter {name} must be finite and strictly positive")

    @property
    def n(self) -> int:
        return self.m_P.size


@dataclass(frozen=True)
class LoadSpec:
    P_L: float
    Q_L: float

    def __post_init__(self):
        if not (np.isfinite(self.P_L) and np.isfinite(self.Q_L)):
            raise PlantError("load must be finite")


@dataclass(frozen=True, eq=False)
class PlantState:
    delta: np.ndarray
    omega_n: np.ndarray
    V_n: np.ndarray


@dataclass(frozen=True, eq=False)
class PlantOutputs:
    P: np.ndarray
    Q: np.ndarray
    omega: np.ndarray
    v_od: np.ndarray
    delta_L: float
    V_L: float


def _check_len(a, b, what):
    if np.shape(a) != np.shape(b):
        raise PlantError(f"{what}: length mismatch {np.shape(a)} vs {np.shape(b)}")


def droop_frequency(params: DroopParams, omega_n, P) -> np.ndarray:
    omega_n, P = np.asarray(omega_n, dtype=float), np.asarray(P, dtype=float)
    _check_len(omega_n, P, "droop_frequency")
    _check_len(omega_n, params.m_P, "droop_frequency")
    return omega_n - params.m_P * P


def droop_voltage(params: DroopParams, V_n, Q) -> np.ndarray:
    V_n, Q = np.asarray(V_n, dtype=float), np.asarray(Q, dtype=float)
    _check_len(V_n, Q, "droop_voltage")
    _check_len(V_n, params.n_Q, "droop_voltage")
    return V_n - params.n_Q * Q


def solve_active_power(delta, params: DroopParams, load: LoadSpec):
    """Return ``(P, delta_L)`` with ``sum(P) == P_L``."""
    delta = np.asarray(delta, dtype=float)
    _check_len(delta, params.b, "solve_active_power")
    bsum = params.b.sum()
    if not bsum > 0:
        raise PlantError("sum of coupling susceptances must be positive")
    delta_L = (params.b @ delta - load.P_L) / bsum
    return params.b * (delta - delta_L), float(delta_L)


def reactive_weights(params: DroopParams) -> np.ndarray:
    """Effective conductance ``q / (1 + q n_Q)`` from setpoint to load bus."""
    return params.q / (1.0 + params.q * params.n_Q)


def solve_reactive_power(V_n, params: DroopParams, load: LoadSpec):
    """Return ``(Q, v_od, V_L)`` solving ``Q = q (v_od - V_L)`` with droop closure."""
    V_n = np.asarray(V_n, dtype=float)
    _check_len(V_n, params.q, "solve_reactive_power")
    w = reactive_weights(params)
    wsum = w.sum()
    if not wsum > 0:
        raise PlantError("degenerate reactive coupling (zero total weight)")
    V_L = (w @ V_n - load.Q_L) / wsum
    Q = w * (V_n - V_L)
    return Q, V_n - params.n_Q * Q, float(V_L)


def solve_outputs(state: PlantState, params: DroopParams, load: LoadSpec) -> PlantOutputs:
    P, delta_L = solve_active_power(state.delta, params, load)
    Q, v_od, V_L = solve_reactive_power(state.V_n, params, load)
    return PlantOutputs(P=P, Q=Q, omega=droop_frequency(params, state.omega_n, P), v_od=v_od,
                        delta_L=delta_L, V_L=V_L)


def plant_derivative(state: PlantState, outputs: PlantOutputs, nominal_omega: float = OMEGA_NOMINAL):
    """Angle kinematics in the frame rotating at ``nominal_omega``."""
    return np.asarray(outputs.omega, dtype=float) - nominal_omega


def droop_equilibrium_angles(params: DroopParams, load: LoadSpec) -> np.ndarray:
    """Angles giving proportional sharing (equal ``m_P P``) with ``delta_L = 0``.

    This is the primary-droop steady state reached before secondary control
    acts when all frequency setpoints are equal.
    """
    y = load.P_L / np.sum(1.0 / params.m_P)
    return (y / params.m_P) / params.b

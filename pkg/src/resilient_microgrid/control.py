"""Secondary control laws: consensus terms, conventional and resilient inputs.

Follower indices are 0-based. Each follower augments the leader reference
with its own droop term, ``omega_k + m_P[i] P[i]`` and ``v_k + n_Q[i] Q[i]``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .netgraph import CommGraph
from .plant import DroopParams

ETA_FLOOR = 1e-300
ETA_FORMS = ("gaussian", "exponential")


class ControlError(ValueError):
    pass


def _pos(v, name, n=None):
    a = np.array(v, dtype=float).ravel()
    if n is not None and a.size == 1:
        a = np.full(n, a[0])
    if not np.all(np.isfinite(a)) or np.any(a <= 0):
        raise ControlError(f"gain {name} must be finite and strictly positive")
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class GainSet:
    """Controller constants, one entry per inverter."""

    c_f: np.ndarray
    c_v: np.ndarray
    beta_f: np.ndarray
    beta_v: np.ndarray
    upsilon_f: np.ndarray
    upsilon_v: np.ndarray
    kappa_f: np.ndarray
    kappa_v: np.ndarray
    alpha_f: np.ndarray
    alpha_v: np.ndarray
    eta_form: str = "gaussian"

    FIELDS = ("c_f", "c_v", "beta_f", "beta_v", "upsilon_f", "upsilon_v",
              "kappa_f", "kappa_v", "alpha_f", "alpha_v")

    def __post_init__(self):
        n = max(np.size(getattr(self, f)) for f in self.FIELDS)
        for f in self.FIELDS:
            a = _pos(getattr(self, f), f, n)
            if a.size != n:
                raise ControlError(f"gain {f} has length {a.size}, expected {n}")
            object.__setattr__(self, f, a)
        if self.eta_form not in ETA_FORMS:
            raise ControlError(f"eta_form must be one of {ETA_FORMS}, got {self.eta_form!r}")

    @property
    def n(self) -> int:
        return self.c_f.size

    @classmethod
    def uniform(cls, n, *, c_f=20.0, c_v=10.0, beta_f=350.0, beta_v=20.0, upsilon=1.0,
                kappa=1.0, alpha=0.01, eta_form="gaussian"):
        full = lambda x: np.full(n, float(x))  # noqa: E731
        return cls(full(c_f), full(c_v), full(beta_f), full(beta_v), full(upsilon), full(upsilon),
                   full(kappa), full(kappa), full(alpha), full(alpha), eta_form)


@dataclass
class ControllerState:
    phi_f: np.ndarray
    phi_hat_f: np.ndarray
    phi_v: np.ndarray
    phi_hat_v: np.ndarray


@dataclass(frozen=True)
class LeaderSignals:
    """Reference values of the two leaders, upper voltage first."""

    omega_ref: tuple = field(default=(2.0 * math.pi * 60.0, 2.0 * math.pi * 60.0))
    v_ref: tuple = (350.0, 330.0)

    def __post_init__(self):
        if len(self.omega_ref) != 2 or len(self.v_ref) != 2:
            raise ControlError("need exactly two leader values per loop")
        if not all(math.isfinite(x) for x in (*self.omega_ref, *self.v_ref)):
            raise ControlError("leader values must be finite")
        if self.v_ref[0] < self.v_ref[1]:
            raise ControlError("upper voltage reference must not be below the lower one")

    @classmethod
    def from_hz(cls, f_ref_hz=60.0, v_upper=350.0, v_lower=330.0):
        w = 2.0 * math.pi * f_ref_hz
        return cls((w, w), (v_upper, v_lower))


def _xi(i, x_n, droop_term, graph: CommGraph, c, refs):
    n = graph.n_followers
    if not 0 <= i < n:
        raise IndexError(f"follower index {i} out of range 0..{n - 1}")
    a = graph.adjacency[i]
    s = 0.0
    for j in range(n):
        if a[j] != 0.0:
            s += a[j] * (x_n[j] - x_n[i])
    for k in range(2):
        gk = graph.pinning[k, i]
        if gk != 0.0:
            s += gk * (refs[k] + droop_term - x_n[i])
    return c[i] * s


def xi_frequency(i, omega_n, P, graph: CommGraph, gains: GainSet, leaders: LeaderSignals,
                 params: DroopParams) -> float:
    """Local frequency consensus term of follower ``i``."""
    return _xi(i, np.asarray(omega_n, float), params.m_P[i] * P[i], graph, gains.c_f, leaders.omega_ref)


def xi_voltage(i, V_n, Q, graph: CommGraph, gains: GainSet, leaders: LeaderSignals,
               params: DroopParams) -> float:
    """Local voltage consensus term of follower ``i``."""
    return _xi(i, np.asarray(V_n, float), params.n_Q[i] * Q[i], graph, gains.c_v, leaders.v_ref)


def leader_targets(refs, droop_terms):
    """Per-follower leader vectors ``x_k + droop`` for both leaders."""
    d = np.asarray(droop_terms, dtype=float)
    return (refs[0] + d, refs[1] + d)


def xi_global(x_n, targets, graph: CommGraph, c) -> np.ndarray:
    """Stacked consensus terms in matrix form.

    ``-diag(c) [sum_k Phi_k x_n - sum_k G_k w_k]``; with uniform leader vectors
    the second sum equals ``sum_k Phi_k (1_N x_k)``.
    """
    x_n = np.asarray(x_n, dtype=float)
    acc = graph.phi_sum @ x_n
    for k in range(2):
        acc = acc - graph.pinning[k] * np.asarray(targets[k], dtype=float)
    return -np.asarray(c) * acc


def eta(t, alpha, form: str = "gaussian"):
    """Decaying gate ``exp(-alpha t^2)``, floored at ``ETA_FLOOR``."""
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ControlError("eta requires t >= 0")
    if form == "gaussian":
        e = np.exp(-alpha * t * t)
    elif form == "exponential":
        e = np.exp(-alpha * t)
    else:
        raise ControlError(f"unknown eta form {form!r}")
    e = np.maximum(e, ETA_FLOOR)
    return float(e) if e.ndim == 0 else e


def resilient_input(xi, phi, eta_t):
    """Return ``(u, Gamma)`` with ``Gamma = xi e^phi / (|xi| + eta)``."""
    if np.any(np.asarray(eta_t) <= 0):
        raise ControlError("eta must be strictly positive")
    gamma = xi * np.exp(phi) / (np.abs(xi) + eta_t)
    return xi + gamma, gamma


def conventional_input(xi):
    return xi


def adaptive_derivatives(xi, phi, phi_hat, beta, upsilon, kappa):
    """Return ``(phi_dot, phi_hat_dot)`` of the adaptive tuning law."""
    mismatch = phi - phi_hat
    lam = upsilon * mismatch
    return beta * (np.abs(xi) - lam), kappa * mismatch

"""Scenario configuration, fixed-step integration and trajectory sampling."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import kernels
from .attack import LOOPS, AttackProfile, evaluate_grid
from .control import ETA_FORMS, GainSet, LeaderSignals
from .netgraph import CommGraph, check_reachability
from .plant import OMEGA_NOMINAL, DroopParams, LoadSpec, droop_equilibrium_angles, reactive_weights

CONTROLLERS = ("conventional", "resilient")
BLOCK_STEPS = 1 << 15


class ScenarioError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class InitialState:
    """Initial setpoints and adaptive states.

    ``delta=None`` selects the primary-droop steady state (proportional
    sharing with equal frequency setpoints).
    """

    omega_n: np.ndarray
    V_n: np.ndarray
    delta: np.ndarray | None = None
    phi: float = 0.1
    phi_hat: float = 0.0


@dataclass(frozen=True, eq=False)
class ScenarioConfig:
    graph: CommGraph
    droop: DroopParams
    load: LoadSpec
    gains: GainSet
    leaders: LeaderSignals
    attack: AttackProfile
    initial: InitialState
    controller: str = "resilient"
    dt: float = 5e-4
    t_end: float = 20.0
    sample_stride: int = 4
    blowup: float = 1e7
    envelope_gamma: float = 5.0
    envelope_rho: float = 0.5
    omega0: float = OMEGA_NOMINAL
    name: str = "scenario"
    source: dict = field(default_factory=dict, repr=False)

    @property
    def n(self) -> int:
        return self.graph.n_followers

    @property
    def n_steps(self) -> int:
        return int(round(self.t_end / self.dt))

    def with_(self, **changes) -> "ScenarioConfig":
        return replace(self, **changes)


def validate(cfg: ScenarioConfig) -> None:
    """Raise :class:`ScenarioError` on any structural or physical inconsistency."""
    n = cfg.n
    for what, m in (("droop", cfg.droop.n), ("gains", cfg.gains.n), ("attack", cfg.attack.n_inverters)):
        if m != n:
            raise ScenarioError(f"{what} defined for {m} inverters but graph has {n}")
    if cfg.controller not in CONTROLLERS:
        raise ScenarioError(f"controller must be one of {CONTROLLERS}, got {cfg.controller!r}")
    if not (cfg.dt > 0 and math.isfinite(cfg.dt)):
        raise ScenarioError("dt must be positive")
    if not cfg.t_end > cfg.dt:
        raise ScenarioError("t_end must exceed dt")
    if abs(cfg.n_steps * cfg.dt - cfg.t_end) > 1e-9 * max(1.0, cfg.t_end):
        raise ScenarioError(f"t_end={cfg.t_end} is not an integer number of steps dt={cfg.dt}")
    if cfg.sample_stride < 1:
        raise ScenarioError("sample stride must be >= 1 step")
    if not cfg.blowup > 0:
        raise ScenarioError("blow-up threshold must be positive")
    if not (cfg.envelope_gamma > 0 and cfg.envelope_rho > 0):
        raise ScenarioError("envelope gamma and rho must be positive")
    if not check_reachability(cfg.graph):
        raise ScenarioError("communication graph violates leader reachability: "
                            "some inverter has no directed path from a leader")
    ini = cfg.initial
    if ini.omega_n.shape != (n,) or ini.V_n.shape != (n,):
        raise ScenarioError("initial setpoints must have one entry per inverter")
    if ini.delta is not None and np.shape(ini.delta) != (n,):
        raise ScenarioError("initial angles must have one entry per inverter")
    if not ini.phi > 0 or ini.phi - ini.phi_hat < 0:
        raise ScenarioError("adaptive initialisation needs phi(0) > 0 and phi(0) - phi_hat(0) >= 0")


def kernel_params(cfg: ScenarioConfig) -> kernels.KernelParams:
    g, d, gn = cfg.graph, cfg.droop, cfg.gains
    f = lambda a: np.ascontiguousarray(a, dtype=np.float64)  # noqa: E731
    scalars = np.array([cfg.load.P_L, cfg.load.Q_L, cfg.omega0, ETA_FORMS.index(gn.eta_form),
                        1.0 if cfg.controller == "resilient" else 0.0])
    return kernels.KernelParams(
        f(g.adjacency), f(g.pinning), f(d.m_P), f(d.n_Q), f(d.b), f(reactive_weights(d)),
        f(cfg.leaders.omega_ref), f(cfg.leaders.v_ref), f(gn.c_f), f(gn.c_v), f(gn.beta_f),
        f(gn.beta_v), f(gn.upsilon_f), f(gn.upsilon_v), f(gn.kappa_f), f(gn.kappa_v),
        f(gn.alpha_f), f(gn.alpha_v), scalars)


def initial_vector(cfg: ScenarioConfig) -> np.ndarray:
    n = cfg.n
    ini = cfg.initial
    delta = droop_equilibrium_angles(cfg.droop, cfg.load) if ini.delta is None else ini.delta
    x = np.empty(7 * n)
    x[:n] = delta
    x[n:2 * n] = ini.omega_n
    x[2 * n:3 * n] = ini.V_n
    x[3 * n:4 * n] = ini.phi
    x[4 * n:5 * n] = ini.phi_hat
    x[5 * n:6 * n] = ini.phi
    x[6 * n:7 * n] = ini.phi_hat
    return x


def _mu_table(cfg: ScenarioConfig, k0: int, n_steps: int) -> np.ndarray:
    j = np.arange(2 * n_steps + 1)
    t = (2 * k0 + j) * (0.5 * cfg.dt)
    return np.ascontiguousarray(evaluate_grid(cfg.attack, t))


@dataclass(eq=False)
class TimeSeries:
    """Sampled trajectory plus reconstructed algebraic signals.

    ``states`` has shape ``(S, 7N)``; signal arrays have shape ``(S, N)``.
    """

    t: np.ndarray
    states: np.ndarray
    signals: dict
    status: str
    t_diverged: float | None
    config: ScenarioConfig = field(repr=False)

    @property
    def n(self) -> int:
        return self.config.n

    def block(self, r: int) -> np.ndarray:
        n = self.n
        return self.states[:, r * n:(r + 1) * n]

    delta = property(lambda self: self.block(0))
    omega_n = property(lambda self: self.block(1))
    V_n = property(lambda self: self.block(2))
    phi_f = property(lambda self: self.block(3))
    phi_hat_f = property(lambda self: self.block(4))
    phi_v = property(lambda self: self.block(5))
    phi_hat_v = property(lambda self: self.block(6))

    def __getattr__(self, name):
        sig = self.__dict__.get("signals")
        if sig is not None and name in sig:
            return sig[name]
        raise AttributeError(name)

    @property
    def freq_hz(self) -> np.ndarray:
        return self.signals["omega"] / (2.0 * math.pi)

    @property
    def completed(self) -> bool:
        return self.status == "completed"


def reconstruct_signals(cfg: ScenarioConfig, t: np.ndarray, states: np.ndarray,
                        prm: kernels.KernelParams | None = None) -> dict:
    """Algebraic outputs, consensus terms and compensator signals at sample times."""
    prm = prm or kernel_params(cfg)
    mu = evaluate_grid(cfg.attack, t)
    sig = kernels.stage_numpy(t, states, mu[:, 0], mu[:, 1], prm)
    sig.pop("dx")
    sig["mu_f"] = mu[:, 0]
    sig["mu_v"] = mu[:, 1]
    return sig


def step(x, t, dt, cfg: ScenarioConfig, prm=None) -> np.ndarray:
    """One classical RK4 step from time ``t`` (no divergence check)."""
    prm = prm or kernel_params(cfg)
    ts = np.array([t, t + 0.5 * dt, t + dt])
    mu = evaluate_grid(cfg.attack, ts)
    f = kernels.rhs_numpy
    k1 = f(t, x, mu[0, 0], mu[0, 1], prm)
    k2 = f(ts[1], x + 0.5 * dt * k1, mu[1, 0], mu[1, 1], prm)
    k3 = f(ts[1], x + 0.5 * dt * k2, mu[1, 0], mu[1, 1], prm)
    k4 = f(ts[2], x + dt * k3, mu[2, 0], mu[2, 1], prm)
    return x + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def run(cfg: ScenarioConfig, *, integrator=None) -> TimeSeries:
    """Integrate a validated scenario to ``t_end`` or until divergence."""
    validate(cfg)
    integrator = integrator or kernels.integrate_block
    prm = kernel_params(cfg)
    x = initial_vector(cfg)
    n_steps, stride = cfg.n_steps, cfg.sample_stride
    samples = np.empty((n_steps // stride + 1, x.size))
    samples[0] = x
    n_written = 1
    status, t_div = "completed", None
    k = 0
    while k < n_steps:
        m = min(BLOCK_STEPS, n_steps - k)
        mu = _mu_table(cfg, k, m)
        code, done, wrote = integrator(x, k, m, cfg.dt, stride, mu, prm, cfg.blowup,
                                       samples[n_written:])
        n_written += wrote
        k += done
        if code == kernels.STATUS_DIVERGED:
            status, t_div = "diverged", k * cfg.dt
            break
    samples = samples[:n_written]
    t = np.arange(n_written) * (stride * cfg.dt)
    if status == "diverged":
        keep = np.all(np.isfinite(samples), axis=1) & np.all(np.abs(samples) <= cfg.blowup, axis=1)
        samples, t = samples[keep], t[keep]
    with np.errstate(over="ignore", invalid="ignore"):
        sig = reconstruct_signals(cfg, t, samples, prm)
    return TimeSeries(t=t, states=samples, signals=sig, status=status, t_diverged=t_div, config=cfg)


def loop_index(loop: str) -> int:
    return LOOPS.index(loop)

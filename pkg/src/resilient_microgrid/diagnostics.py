"""Post-hoc verification metrics computed from a sampled trajectory."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .engine import ScenarioConfig, TimeSeries, run
from .netgraph import CommGraph, containment_reference

TAIL_FRACTION = 0.25


class DiagnosticsError(ValueError):
    pass


def containment_errors(ts: TimeSeries, graph: CommGraph | None = None, leaders=None, params=None):
    """Frequency and voltage containment errors, each of shape ``(S, N)``."""
    cfg = ts.config
    graph = graph or cfg.graph
    leaders = leaders or cfg.leaders
    params = params or cfg.droop
    dP = (params.m_P * ts.P).T
    dQ = (params.n_Q * ts.Q).T
    ref_f = containment_reference(graph, [leaders.omega_ref[0] + dP, leaders.omega_ref[1] + dP])
    ref_v = containment_reference(graph, [leaders.v_ref[0] + dQ, leaders.v_ref[1] + dQ])
    return ts.omega_n - ref_f.T, ts.V_n - ref_v.T


def lyapunov_energy(xi, phi_sum_inverse) -> np.ndarray | float:
    """Quadratic form ``0.5 xi^T M xi``; ``xi`` may carry samples on axis 0."""
    xi = np.asarray(xi, dtype=float)
    m = np.asarray(phi_sum_inverse, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1] or xi.shape[-1] != m.shape[0]:
        raise DiagnosticsError(f"dimension mismatch: xi {xi.shape} vs matrix {m.shape}")
    e = 0.5 * np.einsum("...i,ij,...j->...", xi, m, xi)
    return float(e) if e.ndim == 0 else e


def tail_mask(t: np.ndarray, boundaries=(), fraction: float = TAIL_FRACTION) -> np.ndarray:
    """Final ``fraction`` of the run, truncated so it does not cross a phase boundary."""
    t = np.asarray(t)
    start = t[0] + (1.0 - fraction) * (t[-1] - t[0])
    inside = [b for b in boundaries if start < b < t[-1]]
    if inside:
        start = max(inside)
    return t >= start


def phase_windows(t_end: float, boundaries, fraction: float = TAIL_FRACTION):
    """``(phase_start, phase_end, tail_start)`` for every phase between boundaries."""
    edges = sorted({0.0, t_end, *[b for b in boundaries if 0.0 < b < t_end]})
    return [(a, b, a + (1.0 - fraction) * (b - a)) for a, b in zip(edges, edges[1:])]


@dataclass
class MonitorResult:
    t: np.ndarray
    energy: np.ndarray
    energy_rate: np.ndarray
    bound: float
    tolerance: float
    violations: np.ndarray  # sample times
    settling_time: float | None

    @property
    def ok(self) -> bool:
        return self.violations.size == 0


def lyapunov_monitor(ts: TimeSeries, graph: CommGraph | None = None, *, loop: str = "frequency",
                     bound: float | None = None, rel_tol: float = 1e-3, t_min: float = 0.0,
                     ) -> MonitorResult:
    """Flag samples where the consensus energy grows outside the ultimate ball.

    ``bound`` is the radius of that ball in ``||xi||``. By default it is the
    sup of ``||xi||`` over the tail window of a completed run. A diverged run
    has no ultimate bound, so the default there is 0 and every energy increase
    counts. Pass the bound measured on a reference run to compare controllers.
    """
    graph = graph or ts.config.graph
    if ts.t.size < 3:
        raise DiagnosticsError("need at least 3 samples to difference the energy")
    xi = ts.xi_f if loop == "frequency" else ts.xi_v
    energy = lyapunov_energy(xi, graph.phi_sum_inverse)
    rate = np.gradient(energy, ts.t)
    norm = np.linalg.norm(xi, axis=1)
    if bound is None:
        if ts.completed:
            bound = float(norm[tail_mask(ts.t, ts.config.attack.phase_boundaries())].max())
        else:
            bound = 0.0
    tol = rel_tol * float(np.abs(rate).max())
    bad = (norm > bound) & (rate > tol) & (ts.t >= t_min)
    viol = ts.t[bad]
    if viol.size == 0:
        settle = float(max(t_min, ts.t[0]))
    else:
        after = np.flatnonzero(ts.t > viol[-1])
        settle = float(ts.t[after[0]]) if after.size else None
    return MonitorResult(ts.t, energy, rate, bound, tol, viol, settle)


@dataclass
class PhiTildeBound:
    psi_f: np.ndarray
    psi_v: np.ndarray
    nonnegative: bool

    @property
    def psi(self) -> float:
        return float(max(self.psi_f.max(), self.psi_v.max()))


def phi_tilde_bound(ts: TimeSeries) -> PhiTildeBound:
    """Max of ``|phi - phi_hat|`` over the final quarter of samples, per inverter and loop."""
    pt_f = ts.phi_f - ts.phi_hat_f
    pt_v = ts.phi_v - ts.phi_hat_v
    s = ts.t.size
    tail = slice(s - max(1, int(np.ceil(TAIL_FRACTION * s))), s)
    nonneg = bool(np.all(pt_f >= -1e-12) and np.all(pt_v >= -1e-12))
    return PhiTildeBound(np.abs(pt_f[tail]).max(axis=0), np.abs(pt_v[tail]).max(axis=0), nonneg)


def sharing_dispersion(ts: TimeSeries) -> np.ndarray:
    """``max_i |m_P P_i - mean| / |mean|`` per sample."""
    y = ts.config.droop.m_P * ts.P
    mean = y.mean(axis=1)
    return np.abs(y - mean[:, None]).max(axis=1) / np.abs(mean)


@dataclass
class DiagnosticsReport:
    status: str
    t_diverged: float | None
    t_end: float
    e_f_norm: np.ndarray = field(repr=False)
    e_v_norm: np.ndarray = field(repr=False)
    energy_f: np.ndarray = field(repr=False)
    energy_v: np.ndarray = field(repr=False)
    tail_start: float
    e_f_tail_sup: float
    e_v_tail_sup: float
    phase_tails: list
    monitor_f: MonitorResult = field(repr=False)
    monitor_v: MonitorResult = field(repr=False)
    phi_tilde: PhiTildeBound
    sharing_dispersion_tail: float
    max_freq_dev_hz_tail: float
    v_od_range_tail: tuple
    flags: dict

    def to_dict(self) -> dict:
        def nz(x):
            return None if x is None or not np.isfinite(x) else float(x)

        def mon(m: MonitorResult):
            return {"bound": nz(m.bound), "tolerance": nz(m.tolerance),
                    "n_violations": int(m.violations.size),
                    "first_violation": nz(m.violations[0]) if m.violations.size else None,
                    "last_violation": nz(m.violations[-1]) if m.violations.size else None,
                    "settling_time": nz(m.settling_time),
                    "energy_nonnegative": bool(np.all(m.energy >= -1e-12))}

        return {
            "status": self.status,
            "t_diverged": nz(self.t_diverged),
            "t_end": nz(self.t_end),
            "tail_start": nz(self.tail_start),
            "e_f_tail_sup": nz(self.e_f_tail_sup),
            "e_v_tail_sup": nz(self.e_v_tail_sup),
            "e_f_final": nz(self.e_f_norm[-1]) if self.e_f_norm.size else None,
            "e_v_final": nz(self.e_v_norm[-1]) if self.e_v_norm.size else None,
            "phase_tails": self.phase_tails,
            "lyapunov_frequency": mon(self.monitor_f),
            "lyapunov_voltage": mon(self.monitor_v),
            "phi_tilde": {"psi_f": [float(x) for x in self.phi_tilde.psi_f],
                          "psi_v": [float(x) for x in self.phi_tilde.psi_v],
                          "psi": self.phi_tilde.psi,
                          "nonnegative": self.phi_tilde.nonnegative},
            "sharing_dispersion_tail": nz(self.sharing_dispersion_tail),
            "max_freq_dev_hz_tail": nz(self.max_freq_dev_hz_tail),
            "v_od_range_tail": [nz(x) for x in self.v_od_range_tail],
            "flags": dict(self.flags),
        }


def diagnose(ts: TimeSeries, *, sharing_tol: float = 0.02, voltage_margin: float = 1.0) -> DiagnosticsReport:
    cfg = ts.config
    g = cfg.graph
    e_f, e_v = containment_errors(ts)
    nf, nv = np.linalg.norm(e_f, axis=1), np.linalg.norm(e_v, axis=1)
    ef_energy = lyapunov_energy(ts.xi_f, g.phi_sum_inverse)
    ev_energy = lyapunov_energy(ts.xi_v, g.phi_sum_inverse)
    bounds = cfg.attack.phase_boundaries()
    tail = tail_mask(ts.t, bounds)
    phases = []
    for a, b, ts0 in phase_windows(float(ts.t[-1]), bounds):
        m = (ts.t >= ts0) & (ts.t < b) if b < ts.t[-1] else (ts.t >= ts0)
        if np.any(m):
            phases.append({"start": a, "end": b, "tail_start": ts0,
                           "e_f_sup": float(nf[m].max()), "e_v_sup": float(nv[m].max())})
    mf = lyapunov_monitor(ts, loop="frequency")
    mv = lyapunov_monitor(ts, loop="voltage")
    ptb = phi_tilde_bound(ts)
    disp = sharing_dispersion(ts)
    fdev = np.abs(ts.freq_hz - cfg.leaders.omega_ref[0] / (2 * np.pi))
    v_lo, v_hi = min(cfg.leaders.v_ref), max(cfg.leaders.v_ref)
    vt = ts.v_od[tail]
    flags = {
        "completed": ts.completed,
        "energy_nonnegative": bool(np.all(ef_energy >= -1e-12) and np.all(ev_energy >= -1e-12)),
        "power_sharing": bool(disp[tail].max() <= sharing_tol),
        "voltage_containment": bool(vt.min() >= v_lo - voltage_margin and vt.max() <= v_hi + voltage_margin),
        "phi_tilde_nonnegative": ptb.nonnegative,
    }
    return DiagnosticsReport(
        status=ts.status, t_diverged=ts.t_diverged, t_end=float(ts.t[-1]),
        e_f_norm=nf, e_v_norm=nv, energy_f=ef_energy, energy_v=ev_energy,
        tail_start=float(ts.t[tail][0]), e_f_tail_sup=float(nf[tail].max()),
        e_v_tail_sup=float(nv[tail].max()), phase_tails=phases, monitor_f=mf, monitor_v=mv,
        phi_tilde=ptb, sharing_dispersion_tail=float(disp[tail].max()),
        max_freq_dev_hz_tail=float(fdev[tail].max()),
        v_od_range_tail=(float(vt.min()), float(vt.max())), flags=flags)


@dataclass
class SweepRow:
    beta: float
    status: str
    t_diverged: float | None
    e_f_tail_sup: float | None
    e_v_tail_sup: float | None


def sweep_beta(cfg: ScenarioConfig, beta_values, *, loop: str = "frequency", workers: int = 1) -> list[SweepRow]:
    """One run per adaptation gain, everything else fixed; rows ordered by beta."""
    betas = [float(b) for b in beta_values]
    if not betas:
        raise DiagnosticsError("need at least one beta value")
    if any(b2 <= b1 for b1, b2 in zip(betas, betas[1:])):
        raise DiagnosticsError("beta values must be strictly ascending")
    attr = "beta_f" if loop == "frequency" else "beta_v"

    def one(beta):
        gains = cfg.gains.__class__(**{**{f: getattr(cfg.gains, f) for f in cfg.gains.FIELDS},
                                       attr: [beta] * cfg.n, "eta_form": cfg.gains.eta_form})
        ts = run(cfg.with_(gains=gains))
        if not ts.completed:
            return SweepRow(beta, ts.status, ts.t_diverged, None, None)
        e_f, e_v = containment_errors(ts)
        tail = tail_mask(ts.t, cfg.attack.phase_boundaries())
        return SweepRow(beta, ts.status, None, float(np.linalg.norm(e_f, axis=1)[tail].max()),
                        float(np.linalg.norm(e_v, axis=1)[tail].max()))

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            return list(ex.map(one, betas))
    return [one(b) for b in betas]

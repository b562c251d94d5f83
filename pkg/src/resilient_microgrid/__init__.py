"""Resilient secondary control of inverter-based microgrids under unbounded false data injection."""

from .attack import AttackProfile, AttackSegment, check_envelope, evaluate, table1_profile
from .control import GainSet, LeaderSignals
from .diagnostics import diagnose, lyapunov_energy, lyapunov_monitor, phi_tilde_bound, sweep_beta
from .engine import InitialState, ScenarioConfig, ScenarioError, TimeSeries, run, step
from .netgraph import CommGraph, build_graph, check_lemma1, check_reachability, containment_reference
from .plant import DroopParams, LoadSpec
from .scenario import golden_path, parse_scenario

__all__ = [
    "AttackProfile", "AttackSegment", "CommGraph", "DroopParams", "GainSet", "InitialState",
    "LeaderSignals", "LoadSpec", "ScenarioConfig", "ScenarioError", "TimeSeries", "build_graph",
    "check_envelope", "check_lemma1", "check_reachability", "containment_reference", "diagnose",
    "evaluate", "golden_path", "lyapunov_energy", "lyapunov_monitor", "parse_scenario",
    "phi_tilde_bound", "run", "step", "sweep_beta", "table1_profile",
]

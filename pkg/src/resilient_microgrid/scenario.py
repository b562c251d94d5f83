"""TOML scenario files: parsing, validation and fully-resolved echo.

Keys carry their units. Unknown tables or keys are rejected.
"""

from __future__ import annotations

import math
from importlib import resources
from pathlib import Path

import numpy as np
import tomli
import tomli_w

from .attack import KINDS, LOOPS, AttackError, AttackProfile, AttackSegment
from .control import ETA_FORMS, ControlError, GainSet, LeaderSignals
from .engine import CONTROLLERS, InitialState, ScenarioConfig, ScenarioError, validate
from .netgraph import GraphError, build_graph
from .plant import DroopParams, LoadSpec, PlantError

GOLDEN = ("paper.toml", "paper-conventional.toml")


class ScenarioParseError(ScenarioError):
    """Malformed TOML; the message carries the line number."""


class SchemaError(ScenarioError):
    """Missing, unknown or mistyped key; the message carries the key path."""


class PhysicsError(ScenarioError):
    """Values that parse but make no physical sense."""


_SCHEMA = {
    "graph": {"adjacency": True, "pinning": True},
    "droop": {"m_p_rad_s_per_w": True, "n_q_v_per_var": True, "b_w_per_rad": False,
              "q_var_per_v": False},
    "load": {"p_w": False, "q_var": False},
    "gains": {k: False for k in ("c_f", "c_v", "beta_f", "beta_v", "upsilon", "kappa", "alpha",
                                 "upsilon_f", "upsilon_v", "kappa_f", "kappa_v", "alpha_f",
                                 "alpha_v", "eta_form")},
    "leaders": {"f_ref_hz": False, "v_upper_v": False, "v_lower_v": False},
    "sim": {"dt_s": False, "t_end_s": False, "sample_ms": False, "controller": False,
            "blowup": False},
    "initial": {"f_n_hz": False, "v_n_v": False, "delta_rad": False, "phi": False,
                "phi_hat": False},
    "envelope": {"gamma": False, "rho_per_s": False},
    "attack": {"frequency": False, "voltage": False},
}
_TOP = {"name"}
_SEG_KEYS = {"inverter", "t_start_s", "t_end_s", "kind", "value", "scale", "rate", "offset",
             "expression"}
_KIND_KEYS = {"none": set(), "constant": {"value"}, "cubic": {"scale", "offset"},
              "exponential": {"rate", "offset"}, "expression": {"expression"}}

DEFAULTS = {
    "droop": {"b_w_per_rad": 1.0e4, "q_var_per_v": 1.0e3},
    "load": {"p_w": 36_000.0, "q_var": 8_000.0},
    "gains": {"c_f": 20.0, "c_v": 10.0, "beta_f": 350.0, "beta_v": 20.0, "upsilon": 1.0,
              "kappa": 1.0, "alpha": 0.01, "eta_form": "gaussian"},
    "leaders": {"f_ref_hz": 60.0, "v_upper_v": 350.0, "v_lower_v": 330.0},
    "sim": {"dt_s": 5e-4, "t_end_s": 20.0, "sample_ms": 2.0, "controller": "resilient",
            "blowup": 1e7},
    "initial": {"phi": 0.1, "phi_hat": 0.0, "delta_rad": "droop"},
    "envelope": {"gamma": 5.0, "rho_per_s": 0.5},
}


def _is_num(x):
    return isinstance(x, (int, float)) and not isinstance(x, bool)


def _num(x, path):
    if not _is_num(x):
        raise SchemaError(f"{path}: expected a number, got {type(x).__name__}")
    return float(x)


def _vec(x, n, path):
    """Scalar broadcast or length-n list of numbers."""
    if _is_num(x):
        return np.full(n, float(x))
    if isinstance(x, list) and len(x) == n and all(_is_num(v) for v in x):
        return np.array(x, dtype=float)
    raise SchemaError(f"{path}: expected a number or a list of {n} numbers")


def _check_keys(table, allowed, path):
    if not isinstance(table, dict):
        raise SchemaError(f"{path}: expected a table")
    for k in table:
        if k not in allowed:
            raise SchemaError(f"{path}.{k}: unknown key (allowed: {', '.join(sorted(allowed))})")


def load_toml(path) -> dict:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"file not found: {path}")
    try:
        return tomli.loads(path.read_text())
    except tomli.TOMLDecodeError as exc:
        raise ScenarioParseError(f"{path}: {exc}") from None


def parse_scenario(path) -> ScenarioConfig:
    """Read, validate and resolve a scenario file."""
    path = Path(path)
    return scenario_from_dict(load_toml(path), name=path.stem)


def _segment(d, loop, idx, n):
    path = f"attack.{loop}[{idx}]"
    _check_keys(d, _SEG_KEYS, path)
    for k in ("inverter", "t_start_s", "t_end_s", "kind"):
        if k not in d:
            raise SchemaError(f"{path}.{k}: required key missing")
    inv = d["inverter"]
    if not isinstance(inv, int) or isinstance(inv, bool) or not 1 <= inv <= n:
        raise SchemaError(f"{path}.inverter: expected an integer in 1..{n}")
    kind = d["kind"]
    if kind not in KINDS:
        raise SchemaError(f"{path}.kind: unknown kind {kind!r} (allowed: {', '.join(KINDS)})")
    extra = set(d) - {"inverter", "t_start_s", "t_end_s", "kind"}
    if extra != _KIND_KEYS[kind]:
        raise SchemaError(f"{path}: kind {kind!r} takes keys {sorted(_KIND_KEYS[kind])}, got {sorted(extra)}")
    kw = {k: _num(d[k], f"{path}.{k}") for k in extra if k != "expression"}
    if kind == "expression":
        if not isinstance(d["expression"], str):
            raise SchemaError(f"{path}.expression: expected a string")
        kw["expression"] = d["expression"]
    try:
        seg = AttackSegment(_num(d["t_start_s"], f"{path}.t_start_s"), _num(d["t_end_s"], f"{path}.t_end_s"),
                            kind, **kw)
    except AttackError as exc:
        raise PhysicsError(f"{path}: {exc}") from None
    return loop, inv - 1, seg


def scenario_from_dict(doc: dict, name: str = "scenario") -> ScenarioConfig:
    for k in doc:
        if k not in _SCHEMA and k not in _TOP:
            raise SchemaError(f"{k}: unknown table or key")
    for table, keys in _SCHEMA.items():
        if table in doc:
            _check_keys(doc[table], keys, table)
        for key, required in keys.items():
            if required and key not in doc.get(table, {}):
                raise SchemaError(f"{table}.{key}: required key missing")
    if "name" in doc and not isinstance(doc["name"], str):
        raise SchemaError("name: expected a string")
    name = doc.get("name", name)

    def get(table, key):
        return doc.get(table, {}).get(key, DEFAULTS.get(table, {}).get(key))

    gdoc = doc["graph"]
    adj = gdoc["adjacency"]
    if not (isinstance(adj, list) and adj and all(isinstance(r, list) for r in adj)):
        raise SchemaError("graph.adjacency: expected a list of rows")
    n = len(adj)
    rows = [_vec(r, n, f"graph.adjacency[{i}]") for i, r in enumerate(adj)]
    pin = gdoc["pinning"]
    if not (isinstance(pin, list) and len(pin) == 2):
        raise SchemaError("graph.pinning: expected two rows (upper leader, lower leader)")
    pins = [_vec(p, n, f"graph.pinning[{k}]") for k, p in enumerate(pin)]
    try:
        graph = build_graph(np.array(rows), pins)
    except GraphError as exc:
        raise PhysicsError(f"graph: {exc}") from None

    try:
        droop = DroopParams(_vec(get("droop", "m_p_rad_s_per_w"), n, "droop.m_p_rad_s_per_w"),
                            _vec(get("droop", "n_q_v_per_var"), n, "droop.n_q_v_per_var"),
                            _vec(get("droop", "b_w_per_rad"), n, "droop.b_w_per_rad"),
                            _vec(get("droop", "q_var_per_v"), n, "droop.q_var_per_v"))
    except PlantError as exc:
        raise PhysicsError(f"droop: {exc}") from None
    load = LoadSpec(_num(get("load", "p_w"), "load.p_w"), _num(get("load", "q_var"), "load.q_var"))

    g = {}
    for key in ("c_f", "c_v", "beta_f", "beta_v"):
        g[key] = _vec(get("gains", key), n, f"gains.{key}")
    for key in ("upsilon", "kappa", "alpha"):
        base = get("gains", key)
        for loop in ("f", "v"):
            k2 = f"{key}_{loop}"
            raw = doc.get("gains", {}).get(k2, base)
            g[k2] = _vec(raw, n, f"gains.{k2}")
    eta_form = get("gains", "eta_form")
    if eta_form not in ETA_FORMS:
        raise SchemaError(f"gains.eta_form: expected one of {ETA_FORMS}, got {eta_form!r}")
    try:
        gains = GainSet(**g, eta_form=eta_form)
    except ControlError as exc:
        raise PhysicsError(f"gains: {exc}") from None

    f_ref = _num(get("leaders", "f_ref_hz"), "leaders.f_ref_hz")
    try:
        leaders = LeaderSignals.from_hz(f_ref, _num(get("leaders", "v_upper_v"), "leaders.v_upper_v"),
                                        _num(get("leaders", "v_lower_v"), "leaders.v_lower_v"))
    except ControlError as exc:
        raise PhysicsError(f"leaders: {exc}") from None

    f_n = get("initial", "f_n_hz")
    v_n = get("initial", "v_n_v")
    omega_n0 = 2 * math.pi * (_vec(f_n, n, "initial.f_n_hz") if f_n is not None else np.full(n, f_ref))
    V_n0 = (_vec(v_n, n, "initial.v_n_v") if v_n is not None
            else np.full(n, 0.5 * (leaders.v_ref[0] + leaders.v_ref[1])))
    d0 = get("initial", "delta_rad")
    if d0 == "droop":
        delta0 = None
    else:
        delta0 = _vec(d0, n, "initial.delta_rad")
    initial = InitialState(omega_n0, V_n0, delta0, _num(get("initial", "phi"), "initial.phi"),
                           _num(get("initial", "phi_hat"), "initial.phi_hat"))

    items = []
    adoc = doc.get("attack", {})
    for loop in LOOPS:
        segs = adoc.get(loop, [])
        if not isinstance(segs, list):
            raise SchemaError(f"attack.{loop}: expected an array of tables")
        items += [_segment(s, loop, i, n) for i, s in enumerate(segs)]
    try:
        attack = AttackProfile.from_segments(n, items)
    except AttackError as exc:
        raise PhysicsError(f"attack: {exc}") from None

    dt = _num(get("sim", "dt_s"), "sim.dt_s")
    t_end = _num(get("sim", "t_end_s"), "sim.t_end_s")
    sample_ms = _num(get("sim", "sample_ms"), "sim.sample_ms")
    if not dt > 0:
        raise PhysicsError("sim.dt_s must be positive")
    stride = sample_ms * 1e-3 / dt
    if stride < 1 - 1e-9 or abs(stride - round(stride)) > 1e-6 * stride:
        raise PhysicsError(f"sim.sample_ms={sample_ms} is not a whole number of steps dt={dt}")
    controller = get("sim", "controller")
    if controller not in CONTROLLERS:
        raise SchemaError(f"sim.controller: expected one of {CONTROLLERS}, got {controller!r}")

    cfg = ScenarioConfig(
        graph=graph, droop=droop, load=load, gains=gains, leaders=leaders, attack=attack,
        initial=initial, controller=controller, dt=dt, t_end=t_end, sample_stride=int(round(stride)),
        blowup=_num(get("sim", "blowup"), "sim.blowup"),
        envelope_gamma=_num(get("envelope", "gamma"), "envelope.gamma"),
        envelope_rho=_num(get("envelope", "rho_per_s"), "envelope.rho_per_s"), name=name)
    try:
        validate(cfg)
    except ScenarioError as exc:
        raise PhysicsError(str(exc)) from None
    return cfg


def _lst(a):
    return [float(x) for x in np.asarray(a).ravel()]


def config_to_dict(cfg: ScenarioConfig) -> dict:
    """Fully-resolved scenario document; parsing it back gives the same config."""
    n = cfg.n
    gains = {f: _lst(getattr(cfg.gains, f)) for f in cfg.gains.FIELDS}
    gains["eta_form"] = cfg.gains.eta_form
    attack = {}
    for loop in LOOPS:
        rows = []
        for inv in range(n):
            for s in cfg.attack.segments(loop, inv):
                row = {"inverter": inv + 1, "t_start_s": float(s.t_start), "t_end_s": float(s.t_end),
                       "kind": s.kind}
                for k in sorted(_KIND_KEYS[s.kind]):
                    row[k] = getattr(s, k) if k == "expression" else float(getattr(s, k))
                rows.append(row)
        attack[loop] = rows
    ini = cfg.initial
    return {
        "name": cfg.name,
        "graph": {"adjacency": [_lst(r) for r in cfg.graph.adjacency],
                  "pinning": [_lst(r) for r in cfg.graph.pinning]},
        "droop": {"m_p_rad_s_per_w": _lst(cfg.droop.m_P), "n_q_v_per_var": _lst(cfg.droop.n_Q),
                  "b_w_per_rad": _lst(cfg.droop.b), "q_var_per_v": _lst(cfg.droop.q)},
        "load": {"p_w": float(cfg.load.P_L), "q_var": float(cfg.load.Q_L)},
        "gains": gains,
        "leaders": {"f_ref_hz": cfg.leaders.omega_ref[0] / (2 * math.pi),
                    "v_upper_v": float(cfg.leaders.v_ref[0]), "v_lower_v": float(cfg.leaders.v_ref[1])},
        "sim": {"dt_s": cfg.dt, "t_end_s": cfg.t_end, "sample_ms": cfg.sample_stride * cfg.dt * 1e3,
                "controller": cfg.controller, "blowup": cfg.blowup},
        "initial": {"f_n_hz": _lst(ini.omega_n / (2 * math.pi)), "v_n_v": _lst(ini.V_n),
                    "delta_rad": "droop" if ini.delta is None else _lst(ini.delta),
                    "phi": float(ini.phi), "phi_hat": float(ini.phi_hat)},
        "envelope": {"gamma": cfg.envelope_gamma, "rho_per_s": cfg.envelope_rho},
        "attack": attack,
    }


def write_config_echo(cfg: ScenarioConfig, path) -> Path:
    path = Path(path)
    path.write_text(tomli_w.dumps(config_to_dict(cfg)))
    return path


def golden_path(name: str) -> Path:
    """Location of a scenario file shipped with the package (suffix optional)."""
    if not name.endswith(".toml"):
        name += ".toml"
    if name not in GOLDEN:
        raise KeyError(f"no shipped scenario {name!r}; available: {GOLDEN}")
    return Path(str(resources.files("resilient_microgrid") / "scenarios" / name))


def resolve_scenario_path(arg: str) -> Path:
    """Accept a filesystem path or the bare name of a shipped scenario."""
    p = Path(arg)
    if p.is_file() or arg not in GOLDEN:
        return p
    return golden_path(arg)


def override(cfg: ScenarioConfig, *, controller=None, dt=None, t_end=None, beta_f=None) -> ScenarioConfig:
    """Re-resolve a config with command-line overrides.

    A new ``dt`` keeps the sampling period when it divides it; otherwise the
    period snaps to the nearest whole number of steps (at least one).
    """
    doc = config_to_dict(cfg)
    if controller is not None:
        doc["sim"]["controller"] = controller
    if dt is not None:
        dt = float(dt)
        stride = max(1, round(doc["sim"]["sample_ms"] * 1e-3 / dt))
        doc["sim"]["dt_s"] = dt
        doc["sim"]["sample_ms"] = stride * dt * 1e3
    if t_end is not None:
        doc["sim"]["t_end_s"] = float(t_end)
    if beta_f is not None:
        doc["gains"]["beta_f"] = float(beta_f)
    return scenario_from_dict(doc, name=cfg.name)

"""False-data-injection signals on the secondary control input channels.

A profile holds, for every (loop, inverter) channel, a time-ordered list of
non-overlapping segments active on ``[t_start, t_end)``. Formulas use the
absolute simulation clock ``t``.
"""

from __future__ import annotations

import ast
import math
from dataclasses import dataclass, field

import numpy as np

LOOPS = ("frequency", "voltage")
KINDS = ("none", "constant", "cubic", "exponential", "expression")


class AttackError(ValueError):
    pass


_ALLOWED_FUNCS = {"exp": np.exp, "sqrt": np.sqrt, "log": np.log, "sin": np.sin, "cos": np.cos,
                  "abs": np.abs}
_ALLOWED_NODES = (ast.Expression, ast.BinOp, ast.UnaryOp, ast.Constant, ast.Name, ast.Load,
                  ast.Call, ast.Add, ast.Sub, ast.Mult, ast.Div, ast.Pow, ast.USub, ast.UAdd)


def compile_expression(src: str):
    """Compile an arithmetic expression in ``t`` into a vectorized function."""
    try:
        tree = ast.parse(src, mode="eval")
    except SyntaxError as exc:
        raise AttackError(f"cannot parse attack expression {src!r}: {exc.msg}") from None
    for node in ast.walk(tree):
        if not isinstance(node, _ALLOWED_NODES):
            raise AttackError(f"disallowed construct {type(node).__name__} in {src!r}")
        if isinstance(node, ast.Name) and node.id not in _ALLOWED_FUNCS and node.id not in ("t", "pi", "e"):
            raise AttackError(f"unknown name {node.id!r} in {src!r}")
        if isinstance(node, ast.Call) and not (isinstance(node.func, ast.Name) and node.func.id in _ALLOWED_FUNCS):
            raise AttackError(f"only {sorted(_ALLOWED_FUNCS)} may be called in {src!r}")
        if isinstance(node, ast.Constant) and not isinstance(node.value, (int, float)):
            raise AttackError(f"non-numeric constant in {src!r}")
    code = compile(tree, "<attack>", "eval")
    env = {"__builtins__": {}, "pi": math.pi, "e": math.e, **_ALLOWED_FUNCS}

    def fn(t):
        t = np.asarray(t, dtype=float)
        with np.errstate(over="ignore", invalid="ignore"):
            return np.broadcast_to(eval(code, env, {"t": t}), t.shape).astype(float)

    return fn


@dataclass(frozen=True)
class AttackSegment:
    t_start: float
    t_end: float
    kind: str = "constant"
    value: float = 0.0  # constant level
    scale: float = 0.0  # cubic: (scale t)^3 + offset
    rate: float = 0.0  # exponential: exp(rate t) + offset
    offset: float = 0.0
    expression: str | None = None
    _fn: object = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise AttackError(f"unknown attack kind {self.kind!r}; expected one of {KINDS}")
        if not (math.isfinite(self.t_start) and self.t_start >= 0 and self.t_end > self.t_start):
            raise AttackError(f"segment needs 0 <= t_start < t_end, got [{self.t_start}, {self.t_end})")
        if self.kind == "expression":
            if not self.expression:
                raise AttackError("expression segment without expression text")
            object.__setattr__(self, "_fn", compile_expression(self.expression))

    def formula(self, t):
        t = np.asarray(t, dtype=float)
        if self.kind == "none":
            return np.zeros_like(t)
        if self.kind == "constant":
            return np.full_like(t, self.value)
        if self.kind == "cubic":
            return (self.scale * t) ** 3 + self.offset
        if self.kind == "exponential":
            with np.errstate(over="ignore"):
                return np.exp(self.rate * t) + self.offset
        return self._fn(t)

    def describe(self) -> str:
        if self.kind == "constant":
            return f"{self.value:g}"
        if self.kind == "cubic":
            return f"({self.scale:g}t)^3+{self.offset:g}"
        if self.kind == "exponential":
            return f"exp({self.rate:g}t)+{self.offset:g}"
        return self.expression or "0"


@dataclass(frozen=True)
class AttackProfile:
    """``channels[(loop, inverter)]`` is a tuple of segments; inverters are 0-based."""

    n_inverters: int
    channels: dict = field(default_factory=dict)

    def __post_init__(self):
        for (loop, inv), segs in self.channels.items():
            if loop not in LOOPS:
                raise AttackError(f"unknown loop {loop!r}")
            if not 0 <= inv < self.n_inverters:
                raise AttackError(f"attack on inverter {inv + 1} but only {self.n_inverters} exist")
            for a, b in zip(segs, segs[1:]):
                if b.t_start < a.t_end:
                    raise AttackError(
                        f"overlapping or unordered segments on {loop} loop of inverter {inv + 1}: "
                        f"[{a.t_start}, {a.t_end}) and [{b.t_start}, {b.t_end})")

    @classmethod
    def from_segments(cls, n_inverters, items):
        """Build from ``(loop, inverter, segment)`` triples in any order."""
        ch: dict = {}
        for loop, inv, seg in items:
            ch.setdefault((loop, inv), []).append(seg)
        return cls(n_inverters, {k: tuple(sorted(v, key=lambda s: s.t_start)) for k, v in ch.items()})

    def segments(self, loop, inverter):
        return self.channels.get((loop, inverter), ())

    def phase_boundaries(self) -> list[float]:
        """Sorted distinct segment start/end times."""
        ts = set()
        for segs in self.channels.values():
            for s in segs:
                ts.update((s.t_start, s.t_end))
        return sorted(ts)

    def onset(self) -> float | None:
        starts = [s.t_start for segs in self.channels.values() for s in segs if s.kind != "none"]
        return min(starts) if starts else None


def _check_channel(profile: AttackProfile, loop, inverter):
    if loop not in LOOPS:
        raise AttackError(f"unknown loop {loop!r}")
    if not 0 <= inverter < profile.n_inverters:
        raise IndexError(f"inverter index {inverter} out of range 0..{profile.n_inverters - 1}")


def evaluate(profile: AttackProfile, inverter: int, loop: str, t):
    """Attack value on one channel at time(s) ``t`` (0 outside every segment)."""
    _check_channel(profile, loop, inverter)
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < 0):
        raise AttackError("attack evaluated at negative time")
    out = np.zeros_like(t_arr)
    for seg in profile.segments(loop, inverter):
        mask = (t_arr >= seg.t_start) & (t_arr < seg.t_end)
        if np.any(mask):
            out = np.where(mask, seg.formula(t_arr), out)
    return float(out) if out.ndim == 0 else out


def evaluate_grid(profile: AttackProfile, times) -> np.ndarray:
    """All channels on a time grid, shape ``(len(times), 2, N)``."""
    times = np.asarray(times, dtype=float)
    out = np.zeros((times.size, 2, profile.n_inverters))
    for (loop, inv), segs in profile.channels.items():
        if segs:
            out[:, LOOPS.index(loop), inv] = evaluate(profile, inv, loop, times)
    return out


def check_envelope(profile: AttackProfile, gamma: float, rho: float, horizon: float,
                   samples: int = 10_000) -> bool:
    """Sampled check of ``|mu(t)| <= gamma exp(rho t)`` on a uniform grid.

    Only the grid points are tested, so passing is evidence, not a proof.
    """
    if horizon <= 0 or samples < 2:
        raise AttackError("need horizon > 0 and at least 2 samples")
    t = np.linspace(0.0, horizon, samples)
    mu = evaluate_grid(profile, t)
    bound = gamma * np.exp(rho * t)
    with np.errstate(invalid="ignore"):
        ok = np.abs(mu) <= bound[:, None, None]
    return bool(np.all(ok))


def inject(u, mu):
    """Corrupted control input received by the actuator."""
    return u + mu


def table1_profile() -> AttackProfile:
    """Four-inverter attack schedule with bias, cubic and exponential phases."""
    rows_f = [(0.5, 0.15, 0.7, 0.25, 0.8), (0.5, 0.25, 0.6, 0.2, 1.0),
              (0.23, 0.35, 0.3, 0.15, 1.4), (0.6, 0.15, 0.7, 0.3, 0.8)]
    rows_v = [(2.0, 0.35, 2.1, 0.3, 3.2), (1.0, 0.45, 1.0, 0.25, 3.5),
              (2.0, 0.25, 2.1, 0.35, 2.6), (1.5, 0.15, 1.5, 0.45, 1.7)]
    items = []
    for loop, rows in (("frequency", rows_f), ("voltage", rows_v)):
        for i, (c, a, d1, r, d2) in enumerate(rows):
            items += [(loop, i, AttackSegment(5.0, 8.0, "constant", value=c)),
                      (loop, i, AttackSegment(8.0, 12.0, "cubic", scale=a, offset=d1)),
                      (loop, i, AttackSegment(12.0, 20.0, "exponential", rate=r, offset=d2))]
    return AttackProfile.from_segments(4, items)

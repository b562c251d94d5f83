"""Run artifacts: time-series CSV, JSON report, config echo."""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from .diagnostics import DiagnosticsReport, containment_errors, lyapunov_energy
from .engine import TimeSeries

REPORT_SCHEMA_VERSION = 1
PER_INVERTER = ("omega_hz", "v_od", "P", "Q", "omega_n", "V_n", "xi_f", "xi_v", "phi_f",
                "phitilde_f", "Gamma_f", "mu_f", "phi_v", "phitilde_v", "Gamma_v", "mu_v")
TRAILING = ("e_f_norm", "e_v_norm", "E_f", "E_v")
FLOAT_FMT = "%.17g"


def timeseries_columns(n: int) -> list[str]:
    cols = ["t"]
    for i in range(1, n + 1):
        cols += [f"{c}_{i}" for c in PER_INVERTER]
    return cols + list(TRAILING)


def timeseries_table(ts: TimeSeries) -> np.ndarray:
    """Matrix with one row per sample in :func:`timeseries_columns` order."""
    n = ts.n
    per = {
        "omega_hz": ts.omega / (2 * math.pi), "v_od": ts.v_od, "P": ts.P, "Q": ts.Q,
        "omega_n": ts.omega_n, "V_n": ts.V_n, "xi_f": ts.xi_f, "xi_v": ts.xi_v,
        "phi_f": ts.phi_f, "phitilde_f": ts.phi_f - ts.phi_hat_f, "Gamma_f": ts.Gamma_f,
        "mu_f": ts.mu_f, "phi_v": ts.phi_v, "phitilde_v": ts.phi_v - ts.phi_hat_v,
        "Gamma_v": ts.Gamma_v, "mu_v": ts.mu_v,
    }
    e_f, e_v = containment_errors(ts)
    inv = ts.config.graph.phi_sum_inverse
    cols = [ts.t]
    for i in range(n):
        cols += [per[c][:, i] for c in PER_INVERTER]
    cols += [np.linalg.norm(e_f, axis=1), np.linalg.norm(e_v, axis=1),
             lyapunov_energy(ts.xi_f, inv), lyapunov_energy(ts.xi_v, inv)]
    return np.column_stack(cols)


def write_timeseries(ts: TimeSeries, path) -> Path:
    """Write the sampled trajectory; frequencies in Hz, 17 significant digits."""
    path = Path(path)
    table = timeseries_table(ts)
    try:
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(timeseries_columns(ts.n))
            for row in table:
                w.writerow([FLOAT_FMT % v for v in row])
    except OSError as exc:
        raise OSError(f"cannot write time series to {path}: {exc.strerror}") from exc
    return path


def read_timeseries(path) -> tuple[list[str], np.ndarray]:
    with Path(path).open(newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], np.array([[float(v) for v in r] for r in rows[1:]])


def report_dict(ts: TimeSeries, report: DiagnosticsReport, extra: dict | None = None) -> dict:
    cfg = ts.config
    out = {
        "schema_version": REPORT_SCHEMA_VERSION,
        "scenario": cfg.name,
        "controller": cfg.controller,
        "dt_s": cfg.dt,
        "n_samples": int(ts.t.size),
        **report.to_dict(),
    }
    if extra:
        out.update(extra)
    return out


def write_json(data: dict, path) -> Path:
    path = Path(path)
    try:
        path.write_text(json.dumps(data, indent=2, allow_nan=False) + "\n")
    except OSError as exc:
        raise OSError(f"cannot write report to {path}: {exc.strerror}") from exc
    return path

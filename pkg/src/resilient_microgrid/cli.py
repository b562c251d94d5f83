"""Command-line interface: ``run``, ``sweep``, ``verify`` and ``compare``."""

from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

import numpy as np

from . import diagnostics as dg
from .attack import check_envelope
from .engine import ScenarioError, TimeSeries, run
from .io import report_dict, write_json, write_timeseries
from .netgraph import check_lemma1, check_reachability
from .scenario import override, parse_scenario, resolve_scenario_path, write_config_echo

POST_BOUNDARY_WINDOW = 0.5


def _load(args):
    cfg = parse_scenario(resolve_scenario_path(args.scenario))
    return override(cfg, controller=getattr(args, "controller", None), dt=getattr(args, "dt", None),
                    t_end=getattr(args, "t_end", None))


def _write_run(ts: TimeSeries, out: Path, *, reference_bound=None) -> dict:
    out.mkdir(parents=True, exist_ok=True)
    report = dg.diagnose(ts)
    extra = {}
    if reference_bound is not None:
        m = dg.lyapunov_monitor(ts, bound=reference_bound)
        extra["lyapunov_frequency_vs_reference"] = {
            "bound": reference_bound, "n_violations": int(m.violations.size)}
    data = report_dict(ts, report, extra)
    write_timeseries(ts, out / "timeseries.csv")
    write_json(data, out / "report.json")
    write_config_echo(ts.config, out / "config-echo.toml")
    return data


def cmd_run(args) -> int:
    cfg = _load(args)
    ts = run(cfg)
    data = _write_run(ts, Path(args.out))
    msg = f"{cfg.name} [{cfg.controller}] status={ts.status}"
    if ts.t_diverged is not None:
        msg += f" t_diverged={ts.t_diverged:.4f}s"
    else:
        msg += f" e_f_tail={data['e_f_tail_sup']:.3e} e_v_tail={data['e_v_tail_sup']:.3e}"
    print(msg)
    return 0


def _parse_list(text: str) -> list[float]:
    try:
        return [float(x) for x in text.replace(";", ",").split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated list of numbers: {text!r}") from None


def cmd_sweep(args) -> int:
    cfg = _load(args)
    rows = dg.sweep_beta(cfg, args.beta_f, workers=args.workers)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with (out / "sweep.csv").open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["beta_f", "status", "t_diverged", "e_f_tail_sup", "e_v_tail_sup"])
        for r in rows:
            w.writerow([r.beta, r.status, "" if r.t_diverged is None else "%.17g" % r.t_diverged,
                        "" if r.e_f_tail_sup is None else "%.17g" % r.e_f_tail_sup,
                        "" if r.e_v_tail_sup is None else "%.17g" % r.e_v_tail_sup])
    write_json({"scenario": cfg.name, "rows": [r.__dict__ for r in rows]}, out / "sweep.json")
    for r in rows:
        tail = "diverged" if r.status != "completed" else f"{r.e_f_tail_sup:.6e}"
        print(f"beta_f={r.beta:g}  tail |e_f| = {tail}")
    return 0


def post_boundary_only(times, boundaries, window=POST_BOUNDARY_WINDOW) -> bool:
    """True if every time lies within ``window`` seconds after some boundary."""
    b = np.asarray(sorted(boundaries))
    return all(np.any((t >= b) & (t < b + window)) for t in times)


def verify_suite(cfg, *, beta_factors=(0.5, 1.0, 2.0), log=print) -> bool:
    """Structural checks plus a resilient run with its UUB diagnostics."""
    results = []

    def check(name, ok, detail=""):
        results.append(bool(ok))
        log(f"[{'PASS' if ok else 'FAIL'}] {name}" + (f": {detail}" if detail else ""))

    g = cfg.graph
    check("leader reachability", check_reachability(g))
    check("summed leader matrix nonsingular and positive definite", check_lemma1(g),
          f"min eig {np.linalg.eigvals(g.phi_sum).real.min():.4f}")
    check("attack envelope", check_envelope(cfg.attack, cfg.envelope_gamma, cfg.envelope_rho, cfg.t_end),
          f"gamma={cfg.envelope_gamma:g} rho={cfg.envelope_rho:g} horizon={cfg.t_end:g}s")

    res = override(cfg, controller="resilient")
    ts = run(res)
    check("resilient run completes", ts.completed, ts.status)
    if ts.completed:
        bounds = [b for b in res.attack.phase_boundaries() if b < res.t_end]
        for loop in ("frequency", "voltage"):
            m = dg.lyapunov_monitor(ts, loop=loop)
            ok = m.settling_time is not None and post_boundary_only(m.violations, bounds)
            check(f"{loop} energy decreases outside the ultimate ball", ok,
                  f"bound={m.bound:.4g}, {m.violations.size} transient violations, settled at {m.settling_time}")
        ptb = dg.phi_tilde_bound(ts)
        check("phi mismatch stays nonnegative and bounded", ptb.nonnegative and np.isfinite(ptb.psi),
              f"psi={ptb.psi:.4g}")
        betas = sorted(float(res.gains.beta_f.max()) * f for f in beta_factors)
        rows = dg.sweep_beta(res, betas)
        tails = [r.e_f_tail_sup for r in rows]
        ok = all(t is not None for t in tails) and all(b <= a + 1e-9 for a, b in zip(tails, tails[1:]))
        check("tail |e_f| nonincreasing in beta_f", ok,
              ", ".join(f"{r.beta:g}:{'div' if r.e_f_tail_sup is None else f'{r.e_f_tail_sup:.4e}'}" for r in rows))
    return all(results)


def cmd_verify(args) -> int:
    cfg = _load(args)
    ok = verify_suite(cfg)
    print("verify:", "all checks passed" if ok else "FAILED")
    return 0 if ok else 1


def cmd_compare(args) -> int:
    cfg = _load(args)
    out = Path(args.out)
    ts_r = run(override(cfg, controller="resilient"))
    ref = dg.lyapunov_monitor(ts_r).bound if ts_r.completed else None
    ts_c = run(override(cfg, controller="conventional"))
    data_r = _write_run(ts_r, out / "resilient")
    data_c = _write_run(ts_c, out / "conventional", reference_bound=ref)
    keys = ("status", "t_diverged", "e_f_tail_sup", "e_v_tail_sup", "max_freq_dev_hz_tail",
            "sharing_dispersion_tail", "v_od_range_tail")
    side = {k: {"resilient": data_r.get(k), "conventional": data_c.get(k)} for k in keys}
    write_json({"scenario": cfg.name, "comparison": side}, out / "compare.json")
    print(f"{'metric':<26}{'resilient':>24}{'conventional':>24}")
    for k in keys:
        print(f"{k:<26}{str(side[k]['resilient']):>24}{str(side[k]['conventional']):>24}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="resilient-mg", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="simulate one scenario")
    r.add_argument("--scenario", required=True)
    r.add_argument("--out", required=True)
    r.add_argument("--controller", choices=("conventional", "resilient"))
    r.add_argument("--dt", type=float)
    r.add_argument("--t-end", type=float, dest="t_end")
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("sweep", help="tail containment error versus frequency adaptation gain")
    s.add_argument("--scenario", required=True)
    s.add_argument("--beta-f", required=True, type=_parse_list, dest="beta_f")
    s.add_argument("--out", required=True)
    s.add_argument("--workers", type=int, default=1)
    s.set_defaults(func=cmd_sweep)

    v = sub.add_parser("verify", help="run the invariant suite; nonzero exit on failure")
    v.add_argument("--scenario", required=True)
    v.set_defaults(func=cmd_verify)

    c = sub.add_parser("compare", help="run both controllers side by side")
    c.add_argument("--scenario", required=True)
    c.add_argument("--out", required=True)
    c.set_defaults(func=cmd_compare)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ScenarioError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())

"""Time the compiled and pure-numpy RK4 block integrators on the shipped golden scenario.

    python benchmarks/bench_kernels.py --steps 20000 --repeat 3
"""

import argparse
import time

import numpy as np

from resilient_microgrid import kernels
from resilient_microgrid._accel import HAVE_NUMBA
from resilient_microgrid.engine import _mu_table, initial_vector, kernel_params
from resilient_microgrid.scenario import golden_path, parse_scenario


def time_block(fn, cfg, steps, repeat):
    prm = kernel_params(cfg)
    mu = _mu_table(cfg, 0, steps)
    best, final = np.inf, None
    for _ in range(repeat):
        x = initial_vector(cfg)
        samples = np.empty((steps // cfg.sample_stride + 1, x.size))
        t0 = time.perf_counter()
        fn(x, 0, steps, cfg.dt, cfg.sample_stride, mu, prm, cfg.blowup, samples)
        best = min(best, time.perf_counter() - t0)
        final = x
    return best, final


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--steps", type=int, default=20_000)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--scenario", default="paper")
    args = ap.parse_args(argv)

    cfg = parse_scenario(golden_path(args.scenario))
    print(f"scenario={cfg.name} controller={cfg.controller} dt={cfg.dt:g} steps={args.steps}")

    t_np, x_np = time_block(kernels.integrate_block_numpy, cfg, args.steps, args.repeat)
    print(f"numpy  {t_np:8.3f} s  {1e6 * t_np / args.steps:8.2f} us/step")
    if not HAVE_NUMBA:
        print("numba  disabled (RESILIENT_MG_DISABLE_NUMBA set or numba missing)")
        return 0
    time_block(kernels.integrate_block_loops, cfg, 10, 1)  # compile / load cache
    t_nb, x_nb = time_block(kernels.integrate_block_loops, cfg, args.steps, args.repeat)
    print(f"numba  {t_nb:8.3f} s  {1e6 * t_nb / args.steps:8.2f} us/step")
    print(f"speedup x{t_np / t_nb:.1f}, max state gap {np.abs(x_np - x_nb).max():.2e}")
    full = cfg.n_steps
    print(f"projected full run ({full} steps): numpy {t_np / args.steps * full:.1f} s, "
          f"numba {t_nb / args.steps * full:.1f} s")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())

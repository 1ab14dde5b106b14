"""Compiled vs numpy kernels: per-call right-hand-side cost and a short run.

Usage: python benchmarks/bench_kernels.py [--repeat 50]
The end-to-end column runs the solver in a subprocess with and without
MIXLIMIT_DISABLE_NUMBA=1, since the backend is fixed at import time.
"""
import argparse
import os
import subprocess
import sys
import time

import numpy as np

from mixlimit import kernels
from mixlimit.thermo import default_spec

RUN_SNIPPET = """
import time
from mixlimit import config
from mixlimit.solver1d import run
import dataclasses
c = config.from_dict(config.preset("n2"))
rc = dataclasses.replace(c.run_config(100.0), t_end=0.01)
run(dataclasses.replace(rc, t_end=1e-4))  # warm-up / compile
t0 = time.perf_counter()
tr = run(rc)
print(time.perf_counter() - t0, tr.steps)
"""


def _state(n, rng):
    spec = default_spec()
    y = 0.5 + 0.05 * rng.standard_normal(n)
    rho = np.column_stack([y, 1 - y]) / (y * 1 + (1 - y) * 2)[:, None]
    mom = np.zeros(n + 1)
    mom[1:-1] = 1e-3 * rng.standard_normal(n - 1)
    return spec, rho, mom


def time_rhs(fn, n, repeat, rng):
    spec, rho, mom = _state(n, rng)
    N = spec.N
    out = (np.empty((n, N)), np.empty(n + 1), np.empty(n), np.empty((n, N)))
    args = (rho, mom, spec.vbar, spec.alpha, spec.M, 1.0, 100.0, 1e-3, 0.0, 0.1, -1.0, 1.0 / n)
    fn(*args, *out)
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args, *out)
        best = min(best, time.perf_counter() - t0)
    return best


def time_run(disable):
    env = dict(os.environ)
    if disable:
        env["MIXLIMIT_DISABLE_NUMBA"] = "1"
    else:
        env.pop("MIXLIMIT_DISABLE_NUMBA", None)
    out = subprocess.run([sys.executable, "-c", RUN_SNIPPET], env=env, capture_output=True,
                         text=True, check=True).stdout.split()
    return float(out[0]), int(out[1])


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=50)
    args = ap.parse_args()
    rng = np.random.default_rng(0)
    print(f"{'n':>6} {'numba [us]':>12} {'numpy [us]':>12} {'speedup':>8}")
    for n in (100, 200, 400, 800):
        tj = time_rhs(kernels._compressible_rhs_jit, n, args.repeat, rng)
        tn = time_rhs(kernels._compressible_rhs_np, n, args.repeat, rng)
        print(f"{n:>6} {tj * 1e6:>12.1f} {tn * 1e6:>12.1f} {tn / tj:>8.2f}")
    tj, steps = time_run(False)
    tn, _ = time_run(True)
    print(f"\nsolver run, n2 preset, m=100, t_end=0.01 ({steps} steps): "
          f"numba {tj:.2f} s, numpy {tn:.2f} s, speedup {tn / tj:.2f}")


if __name__ == "__main__":
    main()

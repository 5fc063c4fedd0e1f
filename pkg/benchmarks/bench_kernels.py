#!/usr/bin/env python3
"""Time each kernel under numba and pure numpy, then a whole preset run per backend.

    python3 benchmarks/bench_kernels.py [--repeat 5] [--skip-sim]

The whole-run comparison spawns a subprocess with DYNIMS_PURE_NUMPY=1, since
the backend is fixed at import time.
"""

import argparse
import os
import subprocess
import sys
import time

import numpy as np

from dynims import kernels
from dynims.units import GB


def best_of(fn, repeat):
    fn()  # warm-up / JIT compile
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def cases(rng):
    n = 4096
    counts = rng.integers(1, 50, n).astype(np.int64)
    last = rng.integers(0, 10**6, n).astype(np.int64)
    ids = np.arange(n, dtype=np.int64)
    sizes = np.full(n, 256 * 2**20, dtype=np.int64)
    r = rng.uniform(0.8, 1.05, 200_000)
    swap = rng.uniform(0.0, 0.015, 200_000)
    ts = np.cumsum(rng.uniform(1, 1000, 2000))
    vals = rng.uniform(0, 75 * GB, 2000)
    q = np.linspace(0, ts[-1], 180_000)
    lams = np.array([0.1, 0.25, 0.5, 1.0, 1.5, 1.9, 2.0])
    return {
        "lfu_order (4096 blocks, evict 25%)": lambda k: k["lfu_order"](counts, last, ids, sizes, 1024 * 256 * 2**20),
        "closed_loop (7 gains x 5000 steps)": lambda k: k["closed_loop"](
            lams, 0.95, 125 * GB, 0, 60 * GB, 75 * GB, 60 * GB, 5000),
        "slowdown_many (200k points)": lambda k: k["slowdown_many"](r, swap, 0.95, 1.0, 2.0, 5.0, 10.0),
        "sample_timeline (180k queries)": lambda k: k["sample_timeline"](ts, vals, q),
    }


def kernel_table(repeat):
    rng = np.random.default_rng(0)
    names = ("lfu_order", "closed_loop", "slowdown_many", "sample_timeline")
    nb = {n: getattr(kernels, n + "_nb") for n in names}
    npy = {n: getattr(kernels, n + "_np") for n in names}
    print(f"{'kernel':<40} {'numba ms':>10} {'numpy ms':>10} {'ratio':>7}")
    for label, call in cases(rng).items():
        t_nb = best_of(lambda: call(nb), repeat) * 1e3
        t_np = best_of(lambda: call(npy), repeat) * 1e3
        print(f"{label:<40} {t_nb:10.3f} {t_np:10.3f} {t_np / t_nb:7.2f}")


def sim_once(env_flag):
    code = ("import time; from dynims.scenario import load_scenario; from dynims.sim import Simulation; "
            "from dynims import kernels; t=time.perf_counter(); "
            "Simulation(load_scenario('config3-dynims'), record_timeline=False).run(); "
            "print(kernels.BACKEND, time.perf_counter()-t)")
    env = dict(os.environ)
    if env_flag:
        env["DYNIMS_PURE_NUMPY"] = "1"
    else:
        env.pop("DYNIMS_PURE_NUMPY", None)
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    backend, secs = out.stdout.split()
    return backend, float(secs)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--skip-sim", action="store_true")
    a = ap.parse_args()
    if not kernels.HAVE_NUMBA:
        print("numba is not installed; nothing to compare")
        return 1
    kernel_table(a.repeat)
    if not a.skip_sim:
        print()
        for flag in (False, True):
            backend, secs = sim_once(flag)
            print(f"config3-dynims full run, {backend:<6} backend: {secs:6.2f} s")
    return 0


if __name__ == "__main__":
    sys.exit(main())

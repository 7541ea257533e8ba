"""Time the numba and numpy paths of the hot kernels on the same problem.

Each path runs in its own interpreter because the backend is fixed at
import time:

    python3 benchmarks/bench_kernels.py [--iters 20000]
"""
import argparse
import json
import os
import subprocess
import sys
import time

CHILD = r"""
import json, sys, time
import numpy as np
from robustmc import _jit, _kernels, sampling, synth

iters = int(sys.argv[1])
inst = synth.gen_instance(8, 8, 2, 1, 1.0, "columnwise", 0)
pi = sampling.uniform_on(inst.noncorrupted_set)
obs = synth.gen_observations(inst, pi, 48, 6, 0.1, "uniform_support", 0)
s = obs.samples()
cnt, sm, sumsq = s.cell_stats()
args = (cnt, sm, sumsq, s.N, 0.02, 0.02, _kernels.REG_L21, 1.0, 0.2, iters)

_kernels.oracle_subgradient(*args[:-1], 10)  # compile outside the timed region
t0 = time.perf_counter()
out = _kernels.oracle_subgradient(*args)
t_oracle = time.perf_counter() - t0

rng = np.random.default_rng(0)
rows = rng.integers(0, 200, 10**6)
cols = rng.integers(0, 200, 10**6)
vals = rng.standard_normal(10**6)
_kernels.cell_stats(rows[:10], cols[:10], vals[:10], 200, 200)
t0 = time.perf_counter()
for _ in range(5):
    _kernels.cell_stats(rows, cols, vals, 200, 200)
t_cells = (time.perf_counter() - t0) / 5

print(json.dumps({"numba": _jit.HAVE_NUMBA, "oracle_s": t_oracle,
                  "oracle_us_per_step": 1e6 * t_oracle / iters,
                  "cell_stats_s": t_cells, "f_best": float(out[2])}))
"""


def run(iters, disable):
    env = dict(os.environ)
    env["ROBUSTMC_DISABLE_NUMBA"] = "1" if disable else "0"
    proc = subprocess.run([sys.executable, "-c", CHILD, str(iters)], env=env,
                          capture_output=True, text=True, check=True)
    return json.loads(proc.stdout.strip().splitlines()[-1])


def main():
    p = argparse.ArgumentParser()
    p.add_argument("--iters", type=int, default=20000)
    args = p.parse_args()
    t0 = time.perf_counter()
    fast = run(args.iters, disable=False)
    slow = run(args.iters, disable=True)
    print(f"{'backend':8s} {'oracle us/step':>15s} {'cell_stats ms':>14s} {'best objective':>16s}")
    for name, r in (("numba", fast), ("numpy", slow)):
        print(f"{name:8s} {r['oracle_us_per_step']:15.2f} {1e3 * r['cell_stats_s']:14.2f} {r['f_best']:16.10f}")
    print(f"oracle speedup: {slow['oracle_s'] / fast['oracle_s']:.1f}x  "
          f"(total wall {time.perf_counter() - t0:.1f}s)")


if __name__ == "__main__":
    main()

"""Timing comparison of the numba and numpy kernel implementations.

Usage:   python3 benchmarks/bench_backends.py [--n 3] [--h 0.03125]
                                              [--repeats 5] [--trials 200000]

Runs each hot kernel on a ball-lattice workload under both backends and
prints per-call medians plus the speedup. Numba compile time is excluded
by a warmup call.
"""

import argparse
import time

import numpy as np

from stable_lab import _kernels
from stable_lab._backend import HAS_NUMBA
from stable_lab.grid import build_ball_domain


def median_time(fn, repeats):
    samples = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        samples.append(time.perf_counter() - t0)
    return sorted(samples)[len(samples) // 2]


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, default=3)
    ap.add_argument("--h", type=float, default=1 / 32)
    ap.add_argument("--repeats", type=int, default=5)
    ap.add_argument("--trials", type=int, default=200000)
    args = ap.parse_args()

    d = build_ball_domain(args.n, None, 1.0, args.h)
    rng = np.random.default_rng(0)
    u = rng.standard_normal(d.num_interior)
    bvals = rng.standard_normal(d.num_boundary)
    inv_h2 = 1.0 / d.spacing ** 2

    mats = rng.standard_normal((args.trials, 4, 4))
    mats = 0.5 * (mats + np.transpose(mats, (0, 2, 1)))
    vecs = rng.standard_normal((args.trials, 4))
    vecs /= np.linalg.norm(vecs, axis=1, keepdims=True)

    workloads = {
        "apply_pointwise": lambda k: k["apply_pointwise"](
            u, bvals, d.nbr, d.theta, inv_h2),
        "apply_flux": lambda k: k["apply_flux"](
            u, bvals, d.nbr, d.theta, inv_h2),
        "gradient": lambda k: k["gradient"](
            u, bvals, d.nbr, d.theta, d.spacing),
        "second_diffs": lambda k: k["second_diffs"](
            u, bvals, d.nbr, d.theta, inv_h2),
        "sweep_margins": lambda k: k["sweep_margins"](mats, vecs),
    }

    backends = ["numpy"] + (["numba"] if HAS_NUMBA else [])
    impls = {b: _kernels.get_impl(b) for b in backends}
    print(f"lattice: n={args.n}, h={args.h:g}, {d.num_interior} nodes; "
          f"sweep: {args.trials} matrices")
    header = f"{'kernel':16s}" + "".join(f"{b:>12s}" for b in backends)
    if HAS_NUMBA:
        header += f"{'speedup':>10s}"
    print(header)

    for name, call in workloads.items():
        times = {}
        for b in backends:
            call(impls[b])  # warmup (jit compile, cache touch)
            times[b] = median_time(lambda: call(impls[b]), args.repeats)
        row = f"{name:16s}" + "".join(f"{times[b] * 1e3:>10.3f}ms"
                                      for b in backends)
        if HAS_NUMBA:
            row += f"{times['numpy'] / times['numba']:>9.1f}x"
        print(row)


if __name__ == "__main__":
    main()

"""Compare the compiled kernels with the numpy fallback.

    python3 benchmarks/bench_kernels.py [--repeat 5]

Times each kernel on fixed inputs with both backends, then an end-to-end
solver run on two_stage_qp in a subprocess per backend.
"""

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from zop import _kernels_py as py

try:
    from zop import _kernels as cy
except ImportError:
    cy = None


def cases():
    rng = np.random.default_rng(0)
    m = 4
    M = rng.normal(size=(m, m))
    P = M.T @ M + np.eye(m)
    w = np.linalg.eigvalsh(P)
    q = rng.normal(size=m) * 3
    lo, hi = -np.ones(m), np.ones(m)
    P3 = P[:3, :3].copy()
    Q3 = rng.normal(size=(256, 3))
    X, XI = rng.normal(size=(4096, 4)), rng.normal(size=(4096, 6))
    G = rng.normal(size=(16, 4))
    step = 1.0 / float(np.linalg.eigvalsh(G @ G.T)[-1])
    return {
        "hash_noise (4096 rows)": lambda k: k.hash_noise(X, XI, 1),
        "qp_solve box m=4 tol 1e-10": lambda k: k.qp_solve(P, q, 0, lo, hi, 1.0, w[-1], w[0],
                                                           1e-10, 10_000),
        "qp_solve ball m=4 tol 1e-10": lambda k: k.qp_solve(P, q, 1, lo, hi, 1.0, w[-1], w[0],
                                                            1e-10, 10_000),
        "box_qp_exact m=3 (256 rhs)": lambda k: k.box_qp_exact(P3, Q3, lo[:3], hi[:3]),
        "minnorm_simplex 16x4, 1000 it": lambda k: k.minnorm_simplex(G, 1000, step),
    }


END_TO_END = """
import time, zop
pb = zop.build_problem(zop.ProblemSpec('two_stage_qp', 2, m=4))
orc = zop.make_inner_min_oracle(pb, 1e-6)
t0 = time.perf_counter()
zop.run_ziproxsg(pb, orc, zop.SolverConfig(mu=0.05, T=2000, x0=[0.0, 0.0]))
print(zop.BACKEND, time.perf_counter() - t0)
"""


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    if cy is None:
        print("compiled extension not built; only the fallback is available")
    print(f"{'kernel':34s} {'python [ms]':>12s} {'cython [ms]':>12s} {'speedup':>8s}")
    for name, fn in cases().items():
        tp = min(timeit.repeat(lambda: fn(py), number=1, repeat=args.repeat)) * 1e3
        if cy is None:
            print(f"{name:34s} {tp:12.3f} {'-':>12s} {'-':>8s}")
            continue
        tc = min(timeit.repeat(lambda: fn(cy), number=1, repeat=args.repeat)) * 1e3
        print(f"{name:34s} {tp:12.3f} {tc:12.3f} {tp / tc:7.1f}x")
    print("\nend to end: two_stage_qp n=2 m=4, inner tol 1e-6, T=2000")
    for flag in ("1", "0"):
        env = dict(os.environ, ZOP_PURE_PYTHON=flag)
        out = subprocess.run([sys.executable, "-c", END_TO_END], capture_output=True, text=True,
                             env=env, check=True).stdout.split()
        print(f"  {out[0]:8s} {float(out[1]):8.2f} s")


if __name__ == "__main__":
    main()

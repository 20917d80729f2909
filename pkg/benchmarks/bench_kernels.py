"""Throughput comparison of the compiled and the vectorized cell kernels.

Runs every hot kernel on the full cell batch of a refined unit-square
mesh in both variants (``*_numba``, ``*_numpy``) and prints median
timings.  The first compiled call is excluded as JIT warmup.

    python3 benchmarks/bench_kernels.py --n 6 --repeats 7
"""

import argparse
import statistics
import time

import numpy as np

from stokesrec import _kernels as kern
from stokesrec import quadrature as quad
from stokesrec.mesh import generate_unit_square


def time_call(fn, args, repeats):
    fn(*args)  # warmup / JIT compile
    samples = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn(*args)
        samples.append(time.perf_counter() - t0)
    return statistics.median(samples)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, default=6,
                    help="square mesh refinements (4^n cells)")
    ap.add_argument("--npts", type=int, default=3,
                    help="Gauss points per direction")
    ap.add_argument("--repeats", type=int, default=7)
    args = ap.parse_args(argv)

    mesh = generate_unit_square(args.n)
    xy = mesh.vertices[mesh.cells]
    pts, wq = quad.gauss_2d(args.npts)
    n1 = quad.q1_shape(pts)
    dn1 = quad.q1_grad(pts)
    n2 = quad.q2_shape(pts)
    dn2 = quad.q2_grad(pts)
    xq, det, invjt = kern.cell_geometry_numpy(xy, n1, dn1)

    rng = np.random.default_rng(7)
    coeffs = rng.normal(size=(mesh.cells.shape[0], 9))
    weights = det * wq

    cases = [
        ("cell_geometry", (xy, n1, dn1)),
        ("cell_system", (det, invjt, dn2, n1, wq)),
        ("q2_values", (coeffs, n2)),
        ("q2_gradients", (coeffs, invjt, dn2)),
        ("node_loads", (weights, n2)),
    ]

    print(f"{mesh.cells.shape[0]} cells, {wq.size} quadrature points per cell,"
          f" median of {args.repeats} runs")
    print(f"{'kernel':<14} {'numba (ms)':>12} {'numpy (ms)':>12} {'speedup':>9}")
    for name, call_args in cases:
        t_np = time_call(getattr(kern, f"{name}_numpy"), call_args,
                         args.repeats)
        if kern.HAS_NUMBA:
            t_nb = time_call(getattr(kern, f"{name}_numba"), call_args,
                             args.repeats)
            print(f"{name:<14} {t_nb * 1e3:>12.3f} {t_np * 1e3:>12.3f}"
                  f" {t_np / t_nb:>8.1f}x")
        else:
            print(f"{name:<14} {'n/a':>12} {t_np * 1e3:>12.3f} {'':>9}")
    if not kern.HAS_NUMBA:
        print("numba not importable: only the vectorized variant was timed")


if __name__ == "__main__":
    main()

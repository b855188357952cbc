"""Time the compiled kernels against the numpy fallback.

    python3 benchmarks/bench_kernels.py [--repeat N] [--size Q]
"""
import argparse
import timeit

import numpy as np

from mpfem._backend import BACKENDS, _kernels_py


def cases(size, rng):
    A = rng.normal(size=(size, size))
    B = rng.normal(size=(size, size))
    lam = rng.normal(size=size)
    v = rng.normal(size=size)
    side = int(np.sqrt(size))
    centers = np.stack(np.meshgrid(np.linspace(-1, 1, side), np.linspace(-1, 1, side),
                                   indexing="ij"), -1).reshape(-1, 2)
    points = rng.uniform(-1, 1, size=(4 * size, 2))
    coeffs = rng.normal(size=centers.shape[0])
    grid = rng.normal(size=(81, 81))
    interp_pts = rng.uniform(-1.2, 1.2, size=(200_000, 2))
    lower, step = np.array([-1.0, -1.0]), np.array([0.025, 0.025])
    return {
        "maxplus_matvec": lambda k: k.maxplus_matvec(A, lam),
        "minplus_residuate": lambda k: k.minplus_residuate(A, v),
        "fe_step": lambda k: k.fe_step(A, B, lam),
        "envelope": lambda k: k.envelope(points, centers, coeffs, 0, 0.1),
        "multilinear_interp": lambda k: k.multilinear_interp(grid, lower, step, interp_pts),
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--size", type=int, default=1681)
    args = ap.parse_args(argv)
    rng = np.random.default_rng(0)
    table = cases(args.size, rng)
    backends = dict(BACKENDS)
    backends.setdefault("python", _kernels_py)
    if "compiled" not in backends:
        print("compiled extension not built; timing the numpy fallback only")
    names = sorted(backends)
    print(f"{'kernel':<20}" + "".join(f"{n + ' (ms)':>16}" for n in names) + f"{'speedup':>10}")
    for kernel, fn in table.items():
        ref = fn(_kernels_py)
        times = {}
        for n in names:
            out = fn(backends[n])
            if not np.array_equal(out, ref):
                raise SystemExit(f"{kernel}: {n} disagrees with the numpy fallback")
            times[n] = 1e3 * min(timeit.repeat(lambda: fn(backends[n]), number=1, repeat=args.repeat))
        speed = times["python"] / times["compiled"] if "compiled" in times else float("nan")
        print(f"{kernel:<20}" + "".join(f"{times[n]:>16.2f}" for n in names) + f"{speed:>10.2f}")


if __name__ == "__main__":
    main()

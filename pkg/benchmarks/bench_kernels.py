"""Time the numba and numpy kernel paths against each other.

Usage::

    python benchmarks/bench_kernels.py [--rows N] [--repeat R]

Prints one CSV line per kernel: name, numpy seconds, numba seconds,
speed-up. The first numba call (compilation) is excluded from timing.
"""

import argparse
import timeit

import numpy as np

from hetpower import kernels


def cases(rows: int, rng):
    X = rng.normal(size=(rows, 12)) * 1e7
    y = rng.normal(size=rows)
    measured = rng.uniform(0.5, 3.0, rows)
    predicted = measured + rng.normal(0, 0.2, rows)
    codes = rng.integers(0, 200, rows)
    return {
        "pearson_columns": (X, y),
        "percent_errors": (measured, predicted),
        "group_sums": (codes, X, 200),
    }


def main(argv=None) -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--rows", type=int, default=200_000)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    rng = np.random.default_rng(0)
    print("kernel,numpy_s,numba_s,speedup")
    for name, call_args in cases(args.rows, rng).items():
        np_fn = getattr(kernels.numpy_impl, name)
        t_np = min(timeit.repeat(lambda: np_fn(*call_args), number=1, repeat=args.repeat))
        if kernels.numba_impl is None:
            print(f"{name},{t_np:.5f},,")
            continue
        nb_fn = getattr(kernels.numba_impl, name)
        nb_fn(*call_args)  # compile
        t_nb = min(timeit.repeat(lambda: nb_fn(*call_args), number=1, repeat=args.repeat))
        print(f"{name},{t_np:.5f},{t_nb:.5f},{t_np / t_nb:.2f}")


if __name__ == "__main__":
    main()

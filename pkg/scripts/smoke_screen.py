"""Timing smoke test: screen p = 100,000 random columns.

    python scripts/smoke_screen.py --n 300 --p 100000 --jobs 4

Performance only; the columns are noise apart from X1.
"""

import argparse
import time

import numpy as np

from causalball.screening import screen


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=300)
    ap.add_argument("--p", type=int, default=100_000)
    ap.add_argument("--q", type=int, default=30)
    ap.add_argument("--jobs", type=int, default=1)
    ap.add_argument("--seed", type=int, default=2024)
    args = ap.parse_args()
    gen = np.random.default_rng(args.seed)
    x = gen.normal(size=(args.n, args.p))
    d = gen.integers(0, 2, args.n)
    y = x[:, 0] + d + gen.normal(size=args.n)
    screen(x[:, :10], y, d, 5, n_jobs=args.jobs)  # compile outside the timer
    t = time.perf_counter()
    sr = screen(x, y, d, args.q, n_jobs=args.jobs)
    took = time.perf_counter() - t
    print(f"screened n={args.n} p={args.p} in {took:.1f}s with {args.jobs} thread(s); "
          f"X1 rank {list(sr.order).index(0) + 1}")


if __name__ == "__main__":
    main()

"""Monte Carlo reproduction of the CBS rows of the linear-design table.

    python scripts/table1.py --runs 200 --seed 2024 --jobs 4 --out table1.json
"""

import argparse
import json
import time

from causalball.simharness import DgpSpec, provenance, run_mc

DESIGNS = ((300, 100), (600, 200))


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--runs", type=int, default=200)
    ap.add_argument("--seed", type=int, default=2024)
    ap.add_argument("--jobs", type=int, default=1)
    ap.add_argument("--out", default=None)
    args = ap.parse_args()
    rows = []
    for n, p in DESIGNS:
        t = time.perf_counter()
        s = run_mc(DgpSpec(n=n, p=p, seed=args.seed), args.runs, n_jobs=args.jobs)
        row = {"n": n, "p": p, **s.to_dict(), "seconds": round(time.perf_counter() - t, 1),
               **{f"{k}_ps_rate": s.selection_rate(k) for k in ("X1", "X2", "X5", "X6")}}
        rows.append(row)
        print(f"({n},{p}) bias x100 {s.bias_x100:.2f} ({s.bias_se_x100:.2f})  "
              f"MSE x100 {s.mse_x100:.2f} ({s.mse_se_x100:.3f})  coverage {s.coverage_pct:.1f}%",
              flush=True)
    if args.out:
        with open(args.out, "w") as fh:
            json.dump({"designs": rows, "provenance": provenance(args.seed)}, fh, indent=2)


if __name__ == "__main__":
    main()

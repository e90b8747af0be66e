#!/usr/bin/env python3
"""Solve one instance and print the five-category per-iteration cost split.

The categories mirror the trace columns: shift generation, the shifted row
solves, the stacked-block products, the truncated SVD, and everything else.

Example:
    python scripts/timing_breakdown.py --n 1357 --noise 1e-5,1e-4,1e-3,1e-2
"""

import argparse
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from scare_radi.bench import gen_heat_problem, load_problem, with_noise_blocks
from scare_radi.engine import SolveOptions, radi_solve
from scare_radi.problems import OriginalProblem, adapt_in_place
from scare_radi.shifts import ShiftConfig


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--problem", help="problem directory (Matrix Market files)")
    ap.add_argument("--n", type=int, default=1357)
    ap.add_argument("--m", type=int, default=7)
    ap.add_argument("--l", type=int, default=6)
    ap.add_argument("--scale", type=float, default=100.0)
    ap.add_argument("--damping", type=float, default=100.0)
    ap.add_argument("--noise", default=None, help="comma-separated noise scales")
    ap.add_argument("--shift", choices=["hami", "proj"], default="hami")
    ap.add_argument("--window", type=int, default=1)
    ap.add_argument("--mode", choices=["cached", "per-iter"], default="cached")
    ap.add_argument("--cap-cols", type=int, default=1500)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    if args.problem:
        p = load_problem(args.problem)
        if isinstance(p, OriginalProblem):
            p = adapt_in_place(p)
    else:
        p = gen_heat_problem(args.n, args.m, args.l, seed=args.seed,
                             scale=args.scale, damping=args.damping)
    if args.noise:
        p = with_noise_blocks(p, [float(x) for x in args.noise.split(",")],
                              seed=args.seed)

    strategy = "hamiltonian" if args.shift == "hami" else "projection"
    mode = "cached" if args.mode == "cached" else "per_iteration"
    opts = SolveOptions(shift=ShiftConfig(strategy, args.window, mode),
                        cap_cols=args.cap_cols)
    _, rep = radi_solve(p, opts)

    cats = ["t_shift", "t_solve", "t_ltimes", "t_svd", "t_other"]
    totals = {c: sum(getattr(row, c) for row in rep.rows) for c in cats}
    wall = sum(totals.values())
    status = "converged" if rep.converged else f"stopped ({rep.flags or 'max-iter'})"
    print(f"n={p.n} m={p.m} l={p.l} r={p.r}: {status} in {rep.iterations} iterations, "
          f"nres={rep.final_nres:.2e}, width={rep.xi_width}")
    print(f"{'category':10s} {'seconds':>9s} {'share':>7s}")
    for c in cats:
        share = totals[c] / wall if wall else 0.0
        print(f"{c:10s} {totals[c]:9.3f} {share:6.1%}")
    print(f"{'total':10s} {wall:9.3f}")


if __name__ == "__main__":
    main()

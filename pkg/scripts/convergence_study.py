"""Refinement table for the three residual checks on every built-in chart.

    python scripts/convergence_study.py --levels 8 16 32 --out out/convergence.json
"""
import argparse
import json
from pathlib import Path

from subflow.checks import refinement_study
from subflow.config import CHECK_SUITES
from subflow.domain import CHART_NAMES
from subflow.target import Target, make_potential


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--levels", type=int, nargs="+", default=[8, 16, 32])
    ap.add_argument("--charts", nargs="+", default=list(CHART_NAMES), choices=CHART_NAMES)
    ap.add_argument("--orders", type=int, nargs="+", default=[2, 4])
    ap.add_argument("--potential", default="height")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", type=Path)
    args = ap.parse_args()

    target = Target("sphere", 2)
    G = lambda t: make_potential(args.potential, t)
    records = []
    print(f"{'check':22s} {'chart':15s} p  " + "  ".join(f"n={n:<9d}" for n in args.levels) + "  orders")
    for chart in args.charts:
        for p in args.orders:
            for check in CHECK_SUITES:
                s = refinement_study(check, chart, p, args.levels, target, G, seed=args.seed)
                res = "  ".join(f"{r.residual:.3e}" for r in s.reports)
                orders = "exact" if s.exact else " ".join(f"{o:.2f}" for o in s.pair_orders)
                print(f"{check:22s} {chart:15s} {p}  {res}  {orders}  {'ok' if s.passed else 'FAIL'}")
                records.append(s.to_record())
    if args.out:
        args.out.parent.mkdir(parents=True, exist_ok=True)
        args.out.write_text(json.dumps(records, indent=2))


if __name__ == "__main__":
    main()

#!/usr/bin/env python3
"""Growth of completion time when survivors shrink to a fractional polynomial.

With survivors bounded below by n**a, estimability is throttled by the few
live workers, so completion time grows like n**(1-a) times log factors
rather than log n.  Prints mean times and successive ratios across a grid.
"""

import argparse

from relsim.adversary import FractionalPolynomial, UpfrontCrashes
from relsim.engine import RunConfig
from relsim.estimator import EstimationParams
from relsim.harness import ExperimentSpec, sweep


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--grid", default="256,1024,4096")
    parser.add_argument("--trials", type=int, default=3)
    parser.add_argument("--a", type=float, default=0.5)
    parser.add_argument("--epsilon", type=float, default=0.5)
    parser.add_argument("--delta", type=float, default=0.1)
    parser.add_argument("--seed", type=int, default=600)
    parser.add_argument("--jobs", type=int, default=2)
    args = parser.parse_args()

    grid = tuple(int(x) for x in args.grid.split(","))
    base = RunConfig(
        n=grid[0],
        params=EstimationParams(args.epsilon, args.delta),
        model=FractionalPolynomial(args.a, 1.0),
        crash_pattern=UpfrontCrashes(),
        seed=args.seed,
    )
    rows = sweep(ExperimentSpec(grid=grid, trials=args.trials, base=base,
                                jobs=args.jobs))
    aggregates = [r for r in rows if r["row_type"] == "aggregate"]

    print(f"{'n':>6} {'survivors>=':>11} {'mean T':>9} {'T ratio':>8}")
    prev = None
    for agg in aggregates:
        n = agg["n"]
        floor = base.model.survivor_floor(n)
        ratio = "" if prev is None else f"{agg['T'] / prev:8.2f}"
        print(f"{n:>6} {floor:>11.0f} {agg['T']:>9.1f} {ratio:>8}")
        prev = agg["T"]
    return 0


if __name__ == "__main__":
    raise SystemExit(main())

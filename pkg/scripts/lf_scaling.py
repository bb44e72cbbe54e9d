#!/usr/bin/env python3
"""Measure growth of time/work/messages under the linear-fraction model.

Runs a grid of population sizes, several seeds each, and prints the raw
means plus how flat each metric is against its expected growth model
(time ~ log2 n, work ~ n log2 n, messages ~ n log2^2 n).  Writes the
per-run rows as CSV when --out is given.
"""

import argparse
import math
from pathlib import Path

from relsim.adversary import LinearFraction, UpfrontCrashes
from relsim.engine import RunConfig
from relsim.estimator import EstimationParams
from relsim.harness import ExperimentSpec, sweep, write_sweep_csv
from relsim.metrics import scaling_fit


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--grid", default="128,256,512,1024,2048")
    parser.add_argument("--trials", type=int, default=10)
    parser.add_argument("--f", type=float, default=0.25)
    parser.add_argument("--epsilon", type=float, default=0.5)
    parser.add_argument("--delta", type=float, default=0.1)
    parser.add_argument("--seed", type=int, default=500)
    parser.add_argument("--jobs", type=int, default=2)
    parser.add_argument("--out", type=Path)
    args = parser.parse_args()

    grid = tuple(int(x) for x in args.grid.split(","))
    base = RunConfig(
        n=grid[0],
        params=EstimationParams(args.epsilon, args.delta),
        model=LinearFraction(args.f),
        crash_pattern=UpfrontCrashes(),
        seed=args.seed,
    )
    rows = sweep(ExperimentSpec(grid=grid, trials=args.trials, base=base,
                                jobs=args.jobs))
    aggregates = {r["n"]: r for r in rows if r["row_type"] == "aggregate"}

    print(f"{'n':>6} {'T':>8} {'T/log2n':>9} {'W/(nlog2n)':>11} {'M/(nlog2^2n)':>13}")
    for n in grid:
        agg = aggregates[n]
        log2n = math.log2(n)
        print(f"{n:>6} {agg['T']:>8.1f} {agg['T'] / log2n:>9.2f} "
              f"{agg['W'] / (n * log2n):>11.2f} "
              f"{agg['M'] / (n * log2n ** 2):>13.2f}")

    for name, key, model in (("time", "T", "log2"), ("work", "W", "nlog2"),
                             ("messages", "M", "nlog2sq")):
        fit = scaling_fit([(n, aggregates[n][key]) for n in grid], model)
        print(f"{name}: normalized spread +/-{fit.max_rel_deviation:.0%}, "
              f"log-log slope {fit.loglog_slope:.2f}")

    if args.out:
        args.out.mkdir(parents=True, exist_ok=True)
        write_sweep_csv(rows, args.out / "lf_scaling.csv")
        print(f"rows written to {args.out / 'lf_scaling.csv'}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())

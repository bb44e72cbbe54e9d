#!/usr/bin/env python3
"""Runs where the failure probability shrinks with the population.

Preset tying delta to 1/n**alpha, the regime in which the estimation error
probability vanishes as populations grow.  Reports the pooled in-band
fraction per size; it should rise toward 1 with n.
"""

import argparse

from relsim.adversary import LinearFraction, NoCrashes, UniformReliability
from relsim.engine import RunConfig, run
from relsim.estimator import EstimationParams
from relsim.metrics import accuracy


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--grid", default="64,128,256")
    parser.add_argument("--alpha", type=float, default=1.0)
    parser.add_argument("--epsilon", type=float, default=0.5)
    parser.add_argument("--trials", type=int, default=5)
    parser.add_argument("--seed", type=int, default=900)
    args = parser.parse_args()

    print(f"{'n':>6} {'delta=1/n^a':>12} {'in-band':>8} {'undetermined':>13}")
    for n in (int(x) for x in args.grid.split(",")):
        delta = 1.0 / n**args.alpha
        within = numeric = undetermined = 0
        for trial in range(args.trials):
            config = RunConfig(
                n=n,
                params=EstimationParams(args.epsilon, delta),
                model=LinearFraction(0.0),
                crash_pattern=NoCrashes(),
                reliability=UniformReliability(0.3, 1.0),
                seed=args.seed + trial,
            )
            result = run(config)
            report = accuracy(result, result.truth, result.schedule,
                              config.params)
            within += report.n_within
            numeric += report.n_numeric_live
            undetermined += report.undetermined
        print(f"{n:>6} {delta:>12.5f} {within / numeric:>8.4f} {undetermined:>13}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())

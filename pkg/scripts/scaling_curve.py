#!/usr/bin/env python3
"""Measure per-iteration EM wall time against dataset size.

Generates a planted-model dataset (1M ratings by default), then times EM
iterations on nested random subsets.  Each doubling of the rating count
should roughly double the time per iteration.

    python scripts/scaling_curve.py
    python scripts/scaling_curve.py --users 40000 --ratings-per-user 50
"""

import argparse
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from mmsbm_rec import (  # noqa: E402
    FitConfig, SyntheticConfig, generate_synthetic, planted_partition_params,
    scale_from_values, scaling_benchmark,
)


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--users", type=int, default=20_000)
    parser.add_argument("--items", type=int, default=20_000)
    parser.add_argument("--ratings-per-user", type=int, default=50)
    parser.add_argument("--groups", type=int, default=10)
    parser.add_argument("--fractions", default="0.125,0.25,0.5,1.0")
    parser.add_argument("--iterations", type=int, default=6)
    parser.add_argument("--seed", type=int, default=9)
    args = parser.parse_args()

    scale = scale_from_values([1, 2, 3, 4, 5])
    params = planted_partition_params(args.users, args.items, 5, 5, 5,
                                      peak_mass=0.7, membership_purity=0.8)
    gen = SyntheticConfig(n_users=args.users, n_items=args.items,
                          ratings_per_user=args.ratings_per_user,
                          seed=args.seed, scale=scale, params=params)
    print("generating ...")
    dataset, _ = generate_synthetic(gen)
    print(f"{dataset.n_ratings} ratings")

    fractions = [float(f) for f in args.fractions.split(",")]
    points = scaling_benchmark(
        dataset, fractions,
        FitConfig(args.groups, args.groups, seed=0),
        iterations=args.iterations, warmup=2,
    )
    print(f"\n{'ratings':>12} {'s/iteration':>12} {'ratio':>8}")
    previous = None
    for point in points:
        ratio = ("" if previous is None
                 else f"{point.seconds_per_iteration / previous:8.2f}")
        print(f"{point.n_ratings:>12} {point.seconds_per_iteration:>12.4f}"
              f" {ratio}")
        previous = point.seconds_per_iteration


if __name__ == "__main__":
    main()

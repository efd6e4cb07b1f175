"""Capacity sweeps on shipped-distribution markets, one frontier.csv per dataset.

Each frontier holds one row per (integrator, q) with every expected metric,
ready for plotting effective dates against dates or against receiver dating
probability. A summary of the best capacity per integrator is printed.

    python scripts/capacity_frontier.py --datasets 3 --jobs 2 --out frontiers/
"""
from __future__ import annotations

import argparse
from pathlib import Path

from tworec import harness
from tworec.synth import RateDistribution, SynthConfig, example_distribution, sample_market


def parse_grid(text: str) -> list[float]:
    return [float(x) for x in text.split(",")]


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--dist", default="example")
    ap.add_argument("--datasets", type=int, default=10)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--empirical-scale", action="store_true")
    ap.add_argument("--integrators", default="one_sided,da,ecda:like,ecda:date")
    ap.add_argument("--grid-for", action="append", default=[], metavar="NAME=Q1,Q2,...")
    ap.add_argument("--jobs", type=int, default=1)
    ap.add_argument("--out", type=Path, default=Path("frontiers"))
    args = ap.parse_args(argv)

    dist = example_distribution() if args.dist == "example" else RateDistribution.load(args.dist)
    make = SynthConfig.empirical_scale if args.empirical_scale else SynthConfig.synthetic
    cfg = make(seed=args.seed, n_datasets=args.datasets)
    grids = {}
    for item in args.grid_for:
        name, _, values = item.partition("=")
        grids[name] = parse_grid(values)
    integrators = args.integrators.split(",")
    spec = harness.SweepSpec(harness.RunConfig(synth="frontier"), integrators=integrators, grids=grids)

    for k in range(cfg.n_datasets):
        market = sample_market(dist, cfg, k)
        # with jobs > 1 the market is inherited by forked workers
        rows = harness.sweep(spec, args.out / f"dataset_{k:02d}", jobs=args.jobs, market=market)
        summary = []
        for name in integrators:
            kind, _, exposure = name.partition(":")
            sub = [r for r in rows if r["integrator"] == kind and r["exposure"] == exposure and r["status"] == "ok"]
            if not sub:
                continue
            idx, interior = harness.interior_maximum(sub) if len(sub) > 2 else (0, False)
            best = sub[idx]
            where = f"q={best['q']:g}" if best["q"] != "" else "-"
            summary.append(f"{name} {best['avg_effective_dates']:.4f} at {where}{' (interior)' if interior else ''}")
        print(f"dataset {k}: " + "; ".join(summary))


if __name__ == "__main__":
    main()

"""Regenerate src/tworec/data/example_distribution.json.

Recipe (independent Beta draws, then 0.1-width binning):

    proposer login  ~ Beta(1.0, 2.3)
    proposer like   ~ Beta(2.0, 7.0)
    receiver login  ~ Beta(2.1, 2.5)
    receiver relike ~ Beta(1.5, 11.0)

Like and relike levels are right-skewed; the relike tail produces a small set
of very responsive receivers, which is what drives congestion under one-sided
ranking. Markets drawn from it use log-odds pair noise 0.7 by default.
"""
from __future__ import annotations

import argparse
from pathlib import Path

import numpy as np

from tworec.synth import bin_distribution

RECIPE = {
    "proposer_login": (1.0, 2.3),
    "proposer_like": (2.0, 7.0),
    "receiver_login": (2.1, 2.5),
    "receiver_relike": (1.5, 11.0),
}

DEFAULT_OUT = Path(__file__).resolve().parents[1] / "src" / "tworec" / "data" / "example_distribution.json"


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", type=Path, default=DEFAULT_OUT)
    ap.add_argument("--samples", type=int, default=200_000)
    ap.add_argument("--seed", type=int, default=20241106)
    args = ap.parse_args(argv)

    rng = np.random.default_rng(args.seed)
    n = args.samples
    draw = {k: rng.beta(a, b, size=n) for k, (a, b) in RECIPE.items()}
    dist = bin_distribution(
        np.column_stack([draw["proposer_login"], draw["proposer_like"]]),
        np.column_stack([draw["receiver_login"], draw["receiver_relike"]]),
        width=0.1,
    )
    # round weights so the shipped file is short and stable across numpy versions
    for cells in (dist.proposer_cells, dist.receiver_cells):
        cells[:, 2] = np.round(cells[:, 2], 6)
    args.out.parent.mkdir(parents=True, exist_ok=True)
    dist.save(args.out)
    print(f"wrote {args.out}: {len(dist.proposer_cells)} proposer cells, {len(dist.receiver_cells)} receiver cells")


if __name__ == "__main__":
    main()

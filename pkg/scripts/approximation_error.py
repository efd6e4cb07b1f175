"""How far the Poisson-discounted rate is from the exact one as rates shrink.

For each scale eps, draws random markets whose dating rates are at most eps,
runs ECDA(date) and records the largest per-pair gap between the discounted
rate delta* and the exact delta-dagger, together with gap / eps^2.
"""
from __future__ import annotations

import argparse

import numpy as np

from tworec.integrators import exposure_weights, greedy_ecda
from tworec.market import Market
from tworec.metrics import effective_rates, exact_effective_rates


def small_market(rng: np.random.Generator, n: int, eps: float) -> Market:
    return Market.from_dense(
        rng.random(n), rng.random(n), rng.random((n, n)) * eps, rng.random((n, n)), rng.integers(1, 6, size=n)
    )


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--size", type=int, default=30)
    ap.add_argument("--markets", type=int, default=50)
    ap.add_argument("--eps", default="0.2,0.1,0.05,0.02,0.01,0.005")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    rng = np.random.default_rng(args.seed)
    print(f"{'eps':>8}{'max gap':>12}{'gap/eps^2':>12}")
    for eps in (float(x) for x in args.eps.split(",")):
        worst = 0.0
        for _ in range(args.markets):
            m = small_market(rng, args.size, eps)
            M = greedy_ecda(m, float(rng.uniform(0.5, 2.0)) * eps, exposure_weights("date", m))
            worst = max(worst, float(np.abs(effective_rates(M, m) - exact_effective_rates(M, m)).max()))
        print(f"{eps:>8g}{worst:>12.3e}{worst / eps**2:>12.4f}")


if __name__ == "__main__":
    main()

"""Expected performance indicators of a recommendation matrix.

Effective dates discount every date of receiver j by ``(1 - exp(-mu_j)) / mu_j``
where ``mu_j`` is the receiver's expected number of dates: the Poisson
approximation of the chance that date is picked when j chooses one of its dates
uniformly at random.
The exact version of that chance (Poisson-binomial) is available as an oracle.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .integrators import RecommendationMatrix
from .market import Market

ORACLE_MAX_LEN = 10_000


class OracleScaleError(ValueError):
    """Exact Poisson-binomial computation requested beyond the configured size bound."""


@dataclass(frozen=True, eq=False)
class MetricsReport:
    avg_dates_proposer: float
    avg_dates_receiver: float
    avg_effective_dates: float
    dating_prob_proposer: float
    dating_prob_receiver: float
    avg_likes_receiver: float
    avg_likes_proposer: float
    receiver_load: np.ndarray = field(repr=False)
    receiver_like_load: np.ndarray = field(repr=False)

    SCALARS = (
        "avg_dates_proposer",
        "avg_dates_receiver",
        "avg_effective_dates",
        "dating_prob_proposer",
        "dating_prob_receiver",
        "avg_likes_receiver",
        "avg_likes_proposer",
    )

    def as_row(self) -> dict[str, float]:
        d = asdict(self)
        return {k: float(d[k]) for k in self.SCALARS}


def discount_factor(mu):
    """(1 - e^-mu) / mu, extended by its limit 1 at mu = 0."""
    mu = np.asarray(mu, dtype=np.float64)
    out = np.empty_like(mu)
    small = mu < 1e-8
    ms = mu[small]
    out[small] = 1.0 - ms / 2.0 + ms * ms / 6.0
    mb = mu[~small]
    out[~small] = -np.expm1(-mb) / mb
    return out if out.ndim else float(out)


def receiver_load(M: RecommendationMatrix, market: Market) -> np.ndarray:
    """mu_j: expected dates formed by each receiver."""
    return np.bincount(market.receiver, weights=market.dating_rates * M.values, minlength=market.n_receivers)


def receiver_like_load(M: RecommendationMatrix, market: Market) -> np.ndarray:
    """Expected likes received by each receiver."""
    return np.bincount(market.receiver, weights=market.like_exposure * M.values, minlength=market.n_receivers)


def effective_rates(M: RecommendationMatrix, market: Market, mu: np.ndarray | None = None) -> np.ndarray:
    """delta*_ij for every pair, using the receiver's full load mu_j."""
    if mu is None:
        mu = receiver_load(M, market)
    return discount_factor(mu)[market.receiver] * market.dating_rates


def _no_date_product(group, n_groups, x):
    # prod over the group of (1 - x); log1p keeps the product accurate for small x
    with np.errstate(divide="ignore"):
        logs = np.log1p(-np.minimum(x, 1.0))
    return np.exp(np.bincount(group, weights=logs, minlength=n_groups))


def expected_metrics(M: RecommendationMatrix, market: Market) -> MetricsReport:
    I, J = market.shape
    delta = market.dating_rates
    v = M.values
    dates = delta * v
    total_dates = float(dates.sum())
    mu = np.bincount(market.receiver, weights=dates, minlength=J)
    eff = float((effective_rates(M, market, mu) * v).sum())

    lp = market.proposer_login[market.proposer]
    lr = market.receiver_login[market.receiver]
    # P(date on pair | proposer logged in), and likewise for the receiver side
    given_p = v * lr * market.like * market.relike
    given_r = v * lp * market.like * market.relike
    prob_p = market.proposer_login * (1.0 - _no_date_product(market.proposer, I, given_p))
    prob_r = market.receiver_login * (1.0 - _no_date_product(market.receiver, J, given_r))

    like_load = np.bincount(market.receiver, weights=market.like_exposure * v, minlength=J)
    total_likes = float(like_load.sum())
    return MetricsReport(
        avg_dates_proposer=total_dates / I,
        avg_dates_receiver=total_dates / J,
        avg_effective_dates=eff / I,
        dating_prob_proposer=float(prob_p.sum()) / I,
        dating_prob_receiver=float(prob_r.sum()) / J,
        avg_likes_receiver=total_likes / J,
        avg_likes_proposer=total_likes / I,
        receiver_load=mu,
        receiver_like_load=like_load,
    )


# ---------------------------------------------------------------------------
# exact oracle


def poisson_binomial_pmf(probs) -> np.ndarray:
    """P(X = k), k = 0..n, for X a sum of independent Bernoulli(probs), by direct convolution."""
    pmf = np.zeros(len(probs) + 1)
    pmf[0] = 1.0
    for n, p in enumerate(probs, start=1):
        pmf[1 : n + 1] = pmf[1 : n + 1] * (1.0 - p) + pmf[:n] * p
        pmf[0] *= 1.0 - p
    return pmf


def exact_expected_inverse(probs, max_len: int = ORACLE_MAX_LEN) -> float:
    """E[1 / (1 + X)] for X ~ PoissonBinomial(probs)."""
    probs = np.asarray(probs, dtype=np.float64).ravel()
    if len(probs) > max_len:
        raise OracleScaleError(f"{len(probs)} probabilities exceed the oracle bound {max_len}")
    if np.any((probs < 0) | (probs > 1)):
        raise ValueError("probabilities must lie in [0, 1]")
    pmf = poisson_binomial_pmf(probs)
    return float(np.dot(pmf, 1.0 / np.arange(1, len(pmf) + 1)))


def exact_effective_rates(M: RecommendationMatrix, market: Market, max_len: int = ORACLE_MAX_LEN) -> np.ndarray:
    """delta-dagger_ij = delta_ij * E[1 / (1 + X_{j,-i})] for every pair.

    X_{j,-i} counts the dates receiver j forms with proposers other than i,
    each pair an independent Bernoulli(delta_kj * M_kj).
    """
    delta = market.dating_rates
    succ = delta * M.values
    out = np.array(delta, dtype=np.float64)
    order = np.argsort(market.receiver, kind="stable")
    bounds = np.searchsorted(market.receiver[order], np.arange(market.n_receivers + 1))
    for j in range(market.n_receivers):
        idx = order[bounds[j] : bounds[j + 1]]
        n = len(idx)
        if n > max_len + 1:
            raise OracleScaleError(f"receiver {j} has {n} pairs; oracle bound is {max_len}")
        s = succ[idx]
        if n <= 1 or not np.any(s > 0):
            continue
        for a in range(n):
            others = np.delete(s, a)
            out[idx[a]] = delta[idx[a]] * exact_expected_inverse(others[others > 0], max_len)
    return out

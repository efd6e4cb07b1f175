"""Monte Carlo realization of the recommendation -> login -> like -> relike funnel.

Random draws come from Philox (counter-based) streams keyed by
``(seed, stream id)``. Each kind of draw has its own stream and entities
consume it in index order, so a log does not depend on evaluation order:

    stream 0: proposer logins (one uniform per proposer)
    stream 1: receiver logins (one uniform per receiver)
    stream 2: per-pair uniforms, three per candidate pair (show, like, relike)
    stream 3: per-pair logins when ``login="pair"`` (two per candidate pair)
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .integrators import RecommendationMatrix
from .market import Market

STREAM_PROPOSER_LOGIN = 0
STREAM_RECEIVER_LOGIN = 1
STREAM_PAIR = 2
STREAM_PAIR_LOGIN = 3

LOGIN_MODES = ("user", "pair")


def stream(seed: int, stream_id: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed) & (2**64 - 1), stream_id])))


@dataclass(frozen=True, eq=False)
class EventLog:
    """One simulated day over the candidate pairs (pairs with M_ij > 0).

    ``pairs`` indexes into the market's pair list; all flag arrays align with it.
    ``p_login``/``r_login`` are the login outcomes seen by each pair, which under
    user-level logins are copies of the per-user draws.
    """

    seed: int
    day: int
    n_proposers: int
    n_receivers: int
    pairs: np.ndarray
    proposer: np.ndarray
    receiver: np.ndarray
    shown: np.ndarray
    p_login: np.ndarray
    liked: np.ndarray
    r_login: np.ndarray
    reliked: np.ndarray

    @property
    def dated(self) -> np.ndarray:
        return self.liked & self.reliked

    def to_rows(self, only_shown: bool = True):
        mask = self.shown if only_shown else np.ones_like(self.shown)
        cols = [self.p_login, self.liked, self.r_login, self.reliked, self.dated]
        for k in np.flatnonzero(mask):
            yield [self.day, int(self.proposer[k]), int(self.receiver[k]), int(self.shown[k])] + [int(c[k]) for c in cols]


EVENT_HEADER = ["day", "proposer_id", "receiver_id", "shown", "p_login", "liked", "r_login", "reliked", "dated"]


def write_event_logs(logs, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(EVENT_HEADER)
        for log in logs:
            w.writerows(log.to_rows())


def simulate_day(M: RecommendationMatrix, market: Market, seed: int, day: int = 0, login: str = "user") -> EventLog:
    """Sample one day of events.

    ``login="user"``: one login draw per user per day shared by all of that
    user's pairs. The closed-form dating probabilities hold exactly here.
    ``login="pair"``: an independent login draw per pair, so the dates a
    receiver forms are independent across proposers, as the exact effective
    rate oracle assumes.
    """
    if login not in LOGIN_MODES:
        raise ValueError(f"login must be one of {LOGIN_MODES}")
    pairs = np.flatnonzero(M.values > 0)
    pi = market.proposer[pairs]
    pj = market.receiver[pairs]
    n = len(pairs)
    u = stream(seed, STREAM_PAIR).random((n, 3)) if n else np.zeros((0, 3))
    if login == "user":
        up = stream(seed, STREAM_PROPOSER_LOGIN).random(market.n_proposers)
        ur = stream(seed, STREAM_RECEIVER_LOGIN).random(market.n_receivers)
        p_login = (up < market.proposer_login)[pi]
        r_login = (ur < market.receiver_login)[pj]
    else:
        ul = stream(seed, STREAM_PAIR_LOGIN).random((n, 2)) if n else np.zeros((0, 2))
        p_login = ul[:, 0] < market.proposer_login[pi]
        r_login = ul[:, 1] < market.receiver_login[pj]
    shown = u[:, 0] < M.values[pairs]
    liked = shown & p_login & (u[:, 1] < market.like[pairs])
    reliked = liked & r_login & (u[:, 2] < market.relike[pairs])
    return EventLog(
        seed=int(seed),
        day=int(day),
        n_proposers=market.n_proposers,
        n_receivers=market.n_receivers,
        pairs=pairs,
        proposer=pi,
        receiver=pj,
        shown=shown,
        p_login=p_login,
        liked=liked,
        r_login=r_login,
        reliked=reliked,
    )


REALIZED_FIELDS = (
    "avg_dates_proposer",
    "avg_effective_dates",
    "dating_prob_proposer",
    "dating_prob_receiver",
    "avg_likes_receiver",
)


@dataclass(frozen=True, eq=False)
class RealizedReport:
    avg_dates_proposer: float
    avg_effective_dates: float
    dating_prob_proposer: float
    dating_prob_receiver: float
    avg_likes_receiver: float
    receiver_dates: np.ndarray = field(repr=False, default=None)
    effective_per_proposer: np.ndarray = field(repr=False, default=None)

    def as_row(self) -> dict[str, float]:
        return {f"{k}_realized": float(getattr(self, k)) for k in REALIZED_FIELDS}


def realized_metrics(log: EventLog, market: Market | None = None) -> RealizedReport:
    """Realized outcomes of one day.

    Effective dates are the conditional expectation given the date events: a
    receiver with n dates hands 1/n to each dated proposer.
    """
    I = log.n_proposers
    J = log.n_receivers
    dated = log.dated
    dp = log.proposer[dated]
    dr = log.receiver[dated]
    per_receiver = np.bincount(dr, minlength=J)
    share = 1.0 / per_receiver[dr] if len(dr) else np.zeros(0)
    eff = np.bincount(dp, weights=share, minlength=I)
    per_proposer = np.bincount(dp, minlength=I)
    return RealizedReport(
        avg_dates_proposer=len(dp) / I,
        avg_effective_dates=float(eff.sum()) / I,
        dating_prob_proposer=np.count_nonzero(per_proposer) / I,
        dating_prob_receiver=np.count_nonzero(per_receiver) / J,
        avg_likes_receiver=int(log.liked.sum()) / J,
        receiver_dates=per_receiver,
        effective_per_proposer=eff,
    )


@dataclass(frozen=True)
class MonteCarloReport:
    n_days: int
    mean: dict[str, float]
    se: dict[str, float]

    def as_row(self) -> dict[str, float]:
        row = {}
        for k in REALIZED_FIELDS:
            row[f"{k}_realized"] = self.mean[k]
            row[f"{k}_se"] = self.se[k]
        row["n_days"] = self.n_days
        return row


def monte_carlo(
    M: RecommendationMatrix, market: Market, n_days: int, seed: int, login: str = "user", keep_logs: bool = False
):
    """Mean and standard error of each realized metric over days seeded ``seed + day``.

    Returns the report, plus the list of event logs when ``keep_logs`` is set.
    """
    if n_days < 1:
        raise ValueError("n_days must be >= 1")
    values = {k: np.empty(n_days) for k in REALIZED_FIELDS}
    logs = []
    for d in range(n_days):
        log = simulate_day(M, market, seed + d, day=d, login=login)
        rep = realized_metrics(log, market)
        for k in REALIZED_FIELDS:
            values[k][d] = getattr(rep, k)
        if keep_logs:
            logs.append(log)
    mean = {k: float(v.mean()) for k, v in values.items()}
    if n_days > 1:
        se = {k: float(v.std(ddof=1) / math.sqrt(n_days)) for k, v in values.items()}
    else:
        se = {k: 0.0 for k in values}
    report = MonteCarloReport(n_days, mean, se)
    return (report, logs) if keep_logs else report

import csv

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tworec.integrators import RecommendationMatrix, exposure_weights, greedy_ecda
from tworec.market import Market
from tworec.metrics import expected_metrics
from tworec.realization import (
    EVENT_HEADER,
    EventLog,
    monte_carlo,
    realized_metrics,
    simulate_day,
    write_event_logs,
)

from conftest import markets, random_market


def one_pair(lp=1.0, a=1.0, lr=1.0, b=1.0, m=1.0):
    market = Market.from_dense([lp], [lr], [[a]], [[b]], 1)
    return market, RecommendationMatrix(market, [m])


def make_log(I, J, proposer, receiver, dated) -> EventLog:
    n = len(proposer)
    ones = np.ones(n, dtype=bool)
    dated = np.asarray(dated, dtype=bool)
    return EventLog(0, 0, I, J, np.arange(n), np.asarray(proposer), np.asarray(receiver), ones, ones, ones, ones, dated)


def test_certain_date():
    market, M = one_pair()
    log = simulate_day(M, market, seed=1)
    assert log.dated.tolist() == [True]


def test_no_login_no_likes():
    market = Market.from_dense([0.0, 1.0], [1.0, 1.0], np.ones((2, 2)), np.ones((2, 2)), 2)
    M = RecommendationMatrix(market, np.ones(4))
    for seed in range(20):
        log = simulate_day(M, market, seed)
        assert not np.any(log.liked[log.proposer == 0])


def test_show_frequency():
    market, M = one_pair(m=0.5)
    shown = np.array([simulate_day(M, market, s).shown[0] for s in range(10_000)])
    n = len(shown)
    assert abs(shown.mean() - 0.5) <= 3 * np.sqrt(0.25 / n)


@given(markets(max_side=8), st.floats(0.1, 2.0), st.integers(0, 2**40), st.sampled_from(["user", "pair"]))
@settings(max_examples=60)
def test_chain_and_accounting(m, q, seed, login):
    M = greedy_ecda(m, q, exposure_weights("date", m))
    log = simulate_day(M, m, seed, login=login)
    # date => like => shown and logged in; relike => receiver logged in
    assert np.all(~log.dated | log.liked)
    assert np.all(~log.liked | (log.shown & log.p_login))
    assert np.all(~log.reliked | log.r_login)
    rep = realized_metrics(log, m)
    assert rep.avg_effective_dates <= rep.avg_dates_proposer + 1e-12
    n_receivers_with_date = np.count_nonzero(rep.receiver_dates)
    assert rep.effective_per_proposer.sum() == pytest.approx(n_receivers_with_date, abs=1e-9)


def test_user_level_login_shared():
    m = random_market(np.random.default_rng(0), 5, 6)
    M = RecommendationMatrix(m, np.ones(m.n_pairs))
    log = simulate_day(M, m, 3)
    for i in range(5):
        assert len(set(log.p_login[log.proposer == i].tolist())) == 1
    for j in range(6):
        assert len(set(log.r_login[log.receiver == j].tolist())) == 1


def test_determinism():
    m = random_market(np.random.default_rng(0), 7, 6)
    M = RecommendationMatrix(m, np.full(m.n_pairs, 0.5))
    a, b = simulate_day(M, m, 99), simulate_day(M, m, 99)
    for f in ("shown", "p_login", "liked", "r_login", "reliked"):
        assert getattr(a, f).tobytes() == getattr(b, f).tobytes()
    c = simulate_day(M, m, 100)
    assert any(getattr(a, f).tobytes() != getattr(c, f).tobytes() for f in ("shown", "liked"))


def test_realized_zero_dates():
    rep = realized_metrics(make_log(3, 2, [0, 1], [0, 1], [False, False]))
    assert rep.avg_dates_proposer == 0 and rep.avg_effective_dates == 0
    assert rep.dating_prob_proposer == 0 and rep.dating_prob_receiver == 0


def test_realized_shared_receiver():
    # receiver 0 dates proposers 0 and 1; each gets half an effective date
    rep = realized_metrics(make_log(3, 2, [0, 1, 2], [0, 0, 1], [True, True, False]))
    assert rep.effective_per_proposer.tolist() == [0.5, 0.5, 0.0]
    assert rep.avg_dates_proposer == pytest.approx(2 / 3)
    assert rep.dating_prob_receiver == 0.5


def test_realized_single_date():
    rep = realized_metrics(make_log(4, 3, [2], [1], [True]))
    assert rep.avg_dates_proposer == rep.avg_effective_dates == 0.25


def test_monte_carlo_single_day():
    m = random_market(np.random.default_rng(1), 6, 6)
    M = RecommendationMatrix(m, np.full(m.n_pairs, 0.7))
    mc = monte_carlo(M, m, 1, seed=5)
    day = realized_metrics(simulate_day(M, m, 5), m)
    assert mc.mean["avg_dates_proposer"] == day.avg_dates_proposer
    assert mc.mean["avg_effective_dates"] == day.avg_effective_dates


def test_monte_carlo_rejects_zero_days():
    market, M = one_pair()
    with pytest.raises(ValueError):
        monte_carlo(M, market, 0, seed=0)


def test_user_login_matches_closed_form_dating_prob():
    # a user's pairs all have distinct counterparts, so one shared login per user
    # is exactly the independence structure of the product formula
    m = random_market(np.random.default_rng(8), 10, 10)
    M = greedy_ecda(m, 1.0, exposure_weights("date", m))
    mc = monte_carlo(M, m, 2000, seed=11, login="user")
    exp = expected_metrics(M, m)
    for k in ("dating_prob_proposer", "dating_prob_receiver", "avg_dates_proposer"):
        assert abs(mc.mean[k] - getattr(exp, k)) <= 4 * mc.se[k]


def test_effective_dates_near_analytic_small_rates():
    m = random_market(np.random.default_rng(9), 40, 40, scale=0.2)
    M = greedy_ecda(m, 0.5, exposure_weights("date", m))
    assert m.dating_rates.max() <= 0.2
    mc = monte_carlo(M, m, 2000, seed=3, login="pair")
    exp = expected_metrics(M, m)
    # per pair, |delta* - delta_dagger| <= delta * (p_ij / 2 + sum_k p_kj^2) with p = delta * M:
    # dropping the pair from mu_j moves f by at most p_ij / 2, then Le Cam
    p = m.dating_rates * M.values
    sq = np.bincount(m.receiver, weights=p**2, minlength=m.n_receivers)
    bias = float((p * (p / 2 + sq[m.receiver])).sum()) / m.n_proposers
    gap = abs(mc.mean["avg_effective_dates"] - exp.avg_effective_dates)
    assert gap <= 4 * mc.se["avg_effective_dates"] + bias


def test_event_log_csv(tmp_path):
    m = random_market(np.random.default_rng(2), 4, 3)
    M = RecommendationMatrix(m, np.full(m.n_pairs, 0.5))
    _, logs = monte_carlo(M, m, 3, seed=0, keep_logs=True)
    write_event_logs(logs, tmp_path / "e.csv")
    with open(tmp_path / "e.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == EVENT_HEADER
    assert len(rows) - 1 == sum(int(l.shown.sum()) for l in logs)
    assert {r[0] for r in rows[1:]} <= {"0", "1", "2"}
    for r in rows[1:]:
        shown, pl, liked, rl, rel, dated = map(int, r[3:])
        assert dated == (liked and rel)

import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tworec.integrators import RecommendationMatrix, greedy_ecda, exposure_weights, one_sided
from tworec.market import Market, build_rols
from tworec.metrics import (
    OracleScaleError,
    discount_factor,
    effective_rates,
    exact_effective_rates,
    exact_expected_inverse,
    expected_metrics,
    poisson_binomial_pmf,
    receiver_load,
)

from conftest import markets, random_market


def brute_expected_inverse(probs) -> float:
    total = 0.0
    for bits in itertools.product((0, 1), repeat=len(probs)):
        w = 1.0
        for b, p in zip(bits, probs):
            w *= p if b else 1.0 - p
        total += w / (1 + sum(bits))
    return total


def single_receiver(deltas, M=None) -> tuple[Market, RecommendationMatrix]:
    d = np.asarray(deltas, dtype=np.float64).reshape(-1, 1)
    m = Market.from_dense(np.ones(len(d)), [1.0], d, np.ones_like(d), 1)
    return m, RecommendationMatrix(m, np.ones(len(d)) if M is None else M)


# -- discount factor -----------------------------------------------------------


def test_discount_factor_grid():
    mu = np.concatenate([[0.0, 1e-12, 1e-9, 1e-8], np.logspace(-7, 3, 400)])
    f = discount_factor(mu)
    assert f[0] == 1.0
    assert np.all(np.diff(f[1:]) < 0)
    assert np.all(mu * f <= 1.0)
    np.testing.assert_allclose(mu * f, -np.expm1(-mu), rtol=1e-14, atol=1e-300)


def test_discount_factor_small_mu_accuracy():
    mu = np.array([1e-10, 5e-9, 2e-8, 1e-6])
    ref = [float(sum((-m) ** k / math.factorial(k + 1) for k in range(6))) for m in mu]
    np.testing.assert_allclose(discount_factor(mu), ref, rtol=1e-15)


# -- receiver load and effective rates -------------------------------------


def test_receiver_load_examples():
    m, M = single_receiver([0.2, 0.4], np.array([1.0, 0.5]))
    assert receiver_load(M, m)[0] == pytest.approx(0.4, abs=1e-15)
    assert receiver_load(RecommendationMatrix.zeros(m), m).tolist() == [0.0]
    m1, M1 = single_receiver([0.3])
    assert receiver_load(M1, m1)[0] == pytest.approx(0.3)


def test_effective_rate_examples():
    # mu = 0: no discount
    m, _ = single_receiver([0.5])
    assert effective_rates(RecommendationMatrix.zeros(m), m)[0] == 0.5
    # mu = 1
    m, M = single_receiver([0.5, 0.5])
    assert effective_rates(M, m)[0] == pytest.approx(0.5 * (1 - math.exp(-1)), abs=1e-15)
    assert effective_rates(M, m)[0] == pytest.approx(0.3160603, abs=1e-7)
    # mu = 50 via a hundred pairs
    m, M = single_receiver([0.5] * 100)
    assert effective_rates(M, m)[0] == pytest.approx(0.01, rel=1e-12)


# -- expected metrics ---------------------------------------------------------


def test_expected_metrics_zero():
    m = random_market(np.random.default_rng(0), 4, 3)
    r = expected_metrics(RecommendationMatrix.zeros(m), m)
    assert all(v == 0.0 for v in r.as_row().values())


def test_expected_metrics_one_by_one():
    m = Market.from_dense([1.0], [1.0], [[0.5]], [[0.5]], 1)
    r = expected_metrics(RecommendationMatrix(m, [1.0]), m)
    assert r.avg_dates_proposer == pytest.approx(0.25)
    assert r.dating_prob_proposer == pytest.approx(0.25)
    assert r.dating_prob_receiver == pytest.approx(0.25)
    assert r.avg_likes_receiver == pytest.approx(0.5)


def test_expected_metrics_two_proposers_one_receiver():
    m, M = single_receiver([0.5, 0.5])
    r = expected_metrics(M, m)
    assert r.avg_dates_receiver == pytest.approx(1.0)
    assert r.receiver_load[0] == pytest.approx(1.0)
    assert r.avg_effective_dates == pytest.approx(0.5 * (1 - math.exp(-1)), abs=1e-12)
    assert r.avg_effective_dates == pytest.approx(0.31606, abs=1e-5)


def test_avg_likes_normalizations():
    m = random_market(np.random.default_rng(2), 6, 4)
    M = one_sided(m, build_rols(m, "like"))
    r = expected_metrics(M, m)
    assert r.avg_likes_receiver * 4 == pytest.approx(r.avg_likes_proposer * 6)
    assert r.avg_likes_receiver == pytest.approx(r.receiver_like_load.sum() / 4)


@given(markets(max_side=10), st.floats(0.0, 2.0))
@settings(max_examples=80)
def test_metric_invariants(m, q):
    M = greedy_ecda(m, q, exposure_weights("date", m))
    r = expected_metrics(M, m)
    I, J = m.shape
    # same double sum on both sides
    assert r.avg_dates_proposer * I == pytest.approx(r.avg_dates_receiver * J, rel=1e-12, abs=1e-15)
    assert r.avg_effective_dates <= r.avg_dates_proposer + 1e-15
    assert 0 <= r.dating_prob_proposer <= 1 and 0 <= r.dating_prob_receiver <= 1
    ds = effective_rates(M, m)
    assert np.all((ds >= 0) & (ds <= m.dating_rates) & (m.dating_rates <= 1))
    assert np.all(r.receiver_load <= np.bincount(m.receiver, weights=m.dating_rates, minlength=J) + 1e-12)


@given(markets(max_side=10), st.floats(0.0, 2.0))
@settings(max_examples=60)
def test_dating_prob_union_bound(m, q):
    M = greedy_ecda(m, q, exposure_weights("like", m))
    I = m.n_proposers
    inner = np.bincount(
        m.proposer, weights=M.values * m.receiver_login[m.receiver] * m.like * m.relike, minlength=I
    )
    bound = m.proposer_login * np.minimum(1.0, inner)
    # per-proposer probabilities recomputed from the closed form
    prod = np.ones(I)
    np.multiply.at(prod, m.proposer, 1 - M.values * m.receiver_login[m.receiver] * m.like * m.relike)
    per = m.proposer_login * (1 - prod)
    assert np.all(per <= bound + 1e-12)
    assert expected_metrics(M, m).dating_prob_proposer == pytest.approx(per.mean(), abs=1e-12)


# -- oracle -------------------------------------------------------------------


def test_oracle_examples():
    assert exact_expected_inverse([]) == 1.0
    assert exact_expected_inverse([1.0]) == 0.5
    assert exact_expected_inverse([0.5, 0.5]) == pytest.approx(0.25 + 0.25 + 0.25 / 3, abs=1e-15)


@given(st.lists(st.floats(0.0, 1.0), max_size=10))
@settings(max_examples=100)
def test_oracle_matches_enumeration(probs):
    assert exact_expected_inverse(probs) == pytest.approx(brute_expected_inverse(probs), abs=1e-12)


@given(st.lists(st.floats(0.0, 1.0), max_size=30))
def test_pmf_is_distribution(probs):
    pmf = poisson_binomial_pmf(probs)
    assert np.all(pmf >= -1e-15)
    assert pmf.sum() == pytest.approx(1.0, abs=1e-12)
    assert np.dot(pmf, np.arange(len(pmf))) == pytest.approx(sum(probs), abs=1e-9)


def test_oracle_scale_error():
    with pytest.raises(OracleScaleError):
        exact_expected_inverse(np.full(11, 0.1), max_len=10)
    m, M = single_receiver([0.1] * 12)
    with pytest.raises(OracleScaleError):
        exact_effective_rates(M, m, max_len=10)


def test_exact_effective_rate_examples():
    m, M = single_receiver([0.7])
    assert exact_effective_rates(M, m)[0] == 0.7
    m, M = single_receiver([0.5, 0.5])
    np.testing.assert_allclose(exact_effective_rates(M, m), [0.375, 0.375], atol=1e-15)


def test_exact_vs_formula_small_rates():
    m, M = single_receiver([0.005, 0.005])
    dagger = exact_effective_rates(M, m)[0] / 0.005
    assert dagger == pytest.approx(1 - 0.005 / 2, abs=1e-15)
    # with the other proposer's load only, the Poisson form is within 1e-4
    loo = discount_factor(0.005)
    assert abs(dagger - loo) <= 1e-4
    # the reported rate uses the full load mu_j = 0.01, which also counts the pair itself
    star = effective_rates(M, m)[0] / 0.005
    assert star == pytest.approx(-math.expm1(-0.01) / 0.01, abs=1e-15)
    assert abs(dagger - star) == pytest.approx(0.0025, abs=2e-5)


@pytest.mark.parametrize("seed", range(20))
def test_le_cam_constant(seed):
    eps = 0.01
    rng = np.random.default_rng(seed)
    m = random_market(rng, 30, 30, scale=eps)
    M = RecommendationMatrix(m, rng.random(m.n_pairs))
    assert np.all(m.dating_rates * M.values <= eps)
    err = np.abs(effective_rates(M, m) - exact_effective_rates(M, m))
    # K = 1 at eps = 0.01
    assert err.max() <= 1.0 * eps**2

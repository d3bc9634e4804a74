"""Policy decision rules: forced first accept, LP proportions, vetoes."""

import numpy as np
import pytest

from fluidgate import (CountState, DecisionContext, PolicyConfig,
                       PolicyEngine, build_dlp, episode_rngs, solve)
from fluidgate.errors import UsageError
from fluidgate.policies import acceptance_probabilities, decide


def _ctx(market, t, remaining, counts, j, rng=None):
    return DecisionContext(market, t, np.asarray(remaining, dtype=float),
                           CountState(np.asarray(counts), t - 1), j, rng)


def test_config_validation():
    PolicyConfig()
    with pytest.raises(UsageError):
        PolicyConfig("nope")
    with pytest.raises(UsageError):
        PolicyConfig("greedy", acceptance_mode="half")
    with pytest.raises(UsageError):
        PolicyConfig(unseen_type_rule="skip")


def test_first_period_forced_accept(nd_market):
    _, dec = episode_rngs(0)
    for kind in ("adaptive_unknown", "adaptive_known", "static_fluid"):
        ctx = _ctx(nd_market, 1, [1000.0, 1000.0], [0, 0, 0], 1, dec)
        d = decide(PolicyConfig(kind), ctx)
        assert d.accepted_arm == 0
        assert d.amount == 1.0


def test_first_period_infeasible_reject(nd_market):
    _, dec = episode_rngs(0)
    ctx = _ctx(nd_market, 1, [0.5, 0.5], [0, 0, 0], 1, dec)
    d = decide(PolicyConfig("adaptive_known"), ctx)
    assert d.accepted_arm is None
    assert not d.feasible


def test_adaptive_known_matches_dlp_proportions(nd_market):
    # at t=2 with remaining = (T-1)*b + consumed drift ~ b_t ~= b, the
    # known-distribution LP reproduces the fluid proportions
    market = nd_market.with_horizon(1000)
    sol = solve(build_dlp(market))
    engine = PolicyEngine(PolicyConfig("adaptive_known"), market)
    B = 999 * market.avg_capacity  # exactly b_t = b at t = 2
    for j in range(3):
        ctx = _ctx(market, 2, B, [1, 0, 0], j)
        probs = engine.acceptance_probabilities(ctx)
        assert probs[0] == pytest.approx(sol.primal[j], abs=1e-9)


def test_adaptive_requires_t_at_least_2(nd_market):
    engine = PolicyEngine(PolicyConfig("adaptive_known"), nd_market)
    with pytest.raises(UsageError):
        engine.acceptance_probabilities(_ctx(nd_market, 1, [1.0, 1.0],
                                             [0, 0, 0], 0))


def test_counts_must_cover_t_minus_1(nd_market):
    engine = PolicyEngine(PolicyConfig("adaptive_unknown"), nd_market)
    ctx = DecisionContext(nd_market, 3, np.array([10.0, 10.0]),
                          CountState(np.array([1, 0, 0]), 1), 0, None)
    with pytest.raises(UsageError):
        engine.acceptance_probabilities(ctx)


def test_unseen_type_dual_price_and_always_accept(nd_market):
    market = nd_market.with_horizon(1000)
    counts = [0, 5, 4]  # type 0 never seen
    B = 990 * market.avg_capacity
    probs = acceptance_probabilities(PolicyConfig("adaptive_unknown"),
                                     _ctx(market, 10, B, counts, 0))
    assert probs.shape == (1,)
    assert probs[0] in (0.0, 1.0)  # binary fallback, not an LP proportion
    probs_aa = acceptance_probabilities(
        PolicyConfig("adaptive_unknown", unseen_type_rule="always_accept"),
        _ctx(market, 10, B, counts, 0))
    assert probs_aa[0] == 1.0


def test_greedy_accepts_iff_feasible(nd_market):
    _, dec = episode_rngs(1)
    d = decide(PolicyConfig("greedy"), _ctx(nd_market, 5, [10.0, 10.0],
                                            [2, 1, 1], 1, dec))
    assert d.accepted_arm == 0 and d.amount == 1.0
    d = decide(PolicyConfig("greedy"), _ctx(nd_market, 5, [1.0, 0.5],
                                            [2, 1, 1], 1, dec))
    assert d.accepted_arm is None  # type 1 needs (2, 1)


def test_binary_decision_needs_rng(nd_market):
    engine = PolicyEngine(PolicyConfig("adaptive_known"), nd_market)
    ctx = _ctx(nd_market.with_horizon(100), 2, 99 * nd_market.avg_capacity,
               [1, 0, 0], 0, None)
    with pytest.raises(UsageError):
        engine.decide(ctx)


def test_binary_acceptance_rate_tracks_probability(nd_market):
    market = nd_market.with_horizon(1000)
    engine = PolicyEngine(PolicyConfig("adaptive_known"), market)
    _, dec = episode_rngs(2)
    B = 999 * market.avg_capacity
    accepts = 0
    trials = 2000
    for _ in range(trials):
        d = engine.decide(_ctx(market, 2, B, [1, 0, 0], 0, dec))
        accepts += d.amount
    assert accepts / trials == pytest.approx(2.0 / 3.0, abs=0.04)


def test_one_uniform_per_binary_decision(nd_market):
    # paired-seed alignment: the draw happens even for probability-0/1 slices
    market = nd_market.with_horizon(1000)
    engine = PolicyEngine(PolicyConfig("adaptive_known"), market)
    _, dec = episode_rngs(3)
    _, dec_ref = episode_rngs(3)
    B = 999 * market.avg_capacity
    engine.decide(_ctx(market, 2, B, [1, 0, 0], 2, dec))  # prob 1 arm
    dec_ref.random()
    assert dec.random() == pytest.approx(dec_ref.random())


def test_feasibility_veto(nd_market):
    market = nd_market.with_horizon(1000)
    engine = PolicyEngine(PolicyConfig("adaptive_known"), market)
    _, dec = episode_rngs(4)
    # type 1 needs (2, 1); remaining (1.5, 900) makes it infeasible while
    # the LP still assigns it positive probability
    d = engine.decide(_ctx(market, 800, np.array([1.5, 900.0]),
                           [300, 250, 249], 1, dec))
    assert d.amount == 0.0


def test_partial_mode_accepts_fraction(nd_market):
    market = nd_market.with_horizon(1000)
    cfg = PolicyConfig("adaptive_known", acceptance_mode="partial")
    engine = PolicyEngine(cfg, market)
    d = engine.decide(_ctx(market, 2, 999 * market.avg_capacity, [1, 0, 0], 0))
    assert d.amount == pytest.approx(2.0 / 3.0, abs=1e-9)
    assert d.accepted_arm == 0


def test_static_fluid_constant_probabilities(nd_market):
    market = nd_market.with_horizon(1000)
    engine = PolicyEngine(PolicyConfig("static_fluid"), market)
    sol = solve(build_dlp(market))
    for t, counts in ((2, [1, 0, 0]), (50, [20, 15, 14])):
        probs = engine.acceptance_probabilities(
            _ctx(market, t, 900 * market.avg_capacity, counts, 1))
        assert probs[0] == pytest.approx(sol.primal[1], abs=1e-12)

"""Market model, LP builders, sampling, and JSON round trips."""

import numpy as np
import pytest

from fluidgate import (CountState, Market, OrderType, build_dlp,
                       build_hindsight_collapsed, build_hindsight_lp,
                       build_sampled_lp, check_market, episode_rngs,
                       episode_seed, market_from_dict, market_to_dict,
                       sample_sequence, save_market, load_market, solve,
                       validate)
from fluidgate.errors import (DimensionError, UsageError, ValidationError)
from fluidgate.market import RealizedSequence

from conftest import random_market


def test_paper_instance_shape(nd_market):
    assert nd_market.n == 3
    assert nd_market.m == 2
    assert nd_market.k == 1
    assert nd_market.probabilities == pytest.approx([0.3, 0.3, 0.4])
    assert nd_market.total_capacity == pytest.approx([1000.0, 1000.0])


def test_validate_flags_boundedness(nd_market):
    violations = validate(nd_market)
    # consumption entries up to 2 violate normalization, nothing else
    assert violations
    assert all("boundedness" in v for v in violations)
    check_market(nd_market)  # tolerated via allow_unnormalized


def test_check_market_blocks_bad_probabilities():
    t = OrderType(np.array([0.5]), np.array([[0.5]]))
    market = Market((t, t), np.array([0.7, 0.7]), np.array([0.4]), 10)
    with pytest.raises(ValidationError) as err:
        check_market(market)
    assert any("sum" in v for v in err.value.violations)


def test_dimension_mismatch():
    t1 = OrderType(np.array([0.5]), np.array([[0.5]]))
    t2 = OrderType(np.array([0.5]), np.array([[0.5], [0.5]]))
    with pytest.raises(DimensionError):
        Market((t1, t2), np.array([0.5, 0.5]), np.array([0.4]), 10)


def test_count_state_validation():
    CountState(np.array([1, 2]), 3)
    with pytest.raises(UsageError):
        CountState(np.array([1, 1]), 3)
    with pytest.raises(UsageError):
        CountState(np.array([-1, 4]), 3)


def test_dlp_matches_paper(nd_market, dg_market):
    assert solve(build_dlp(nd_market)).objective_value == pytest.approx(0.76, abs=1e-9)
    assert solve(build_dlp(dg_market)).objective_value == pytest.approx(0.80, abs=1e-9)


def test_sampled_lp_uses_empirical_weights(nd_market):
    state = CountState(np.array([2, 1, 1]), 4)
    lp = build_sampled_lp(state, nd_market, nd_market.avg_capacity)
    expected = np.array([0.5, 0.25, 0.25]) * nd_market.rewards[:, 0]
    assert lp.objective == pytest.approx(expected)
    with pytest.raises(UsageError):
        build_sampled_lp(CountState(np.zeros(3, dtype=int), 0), nd_market,
                         nd_market.avg_capacity)


def test_hindsight_collapsed_equals_full(nd_market):
    rng = np.random.default_rng(5)
    market = nd_market.with_horizon(40)
    for _ in range(5):
        seq = sample_sequence(market, rng)
        counts = np.bincount(seq.type_indices, minlength=market.n)
        full = solve(build_hindsight_lp(seq, market)).objective_value
        collapsed = solve(build_hindsight_collapsed(counts, market)).objective_value
        assert collapsed == pytest.approx(full, abs=1e-8)


def test_hindsight_horizon_mismatch(nd_market):
    seq = RealizedSequence(np.zeros(5, dtype=int), 0)
    with pytest.raises(UsageError):
        build_hindsight_lp(seq, nd_market)


def test_episode_seed_stateless():
    a = episode_seed(0, 1000, 3)
    assert a == episode_seed(0, 1000, 3)
    assert a != episode_seed(0, 1000, 4)
    assert a != episode_seed(1, 1000, 3)
    assert a != episode_seed(0, 2000, 3)


def test_episode_rngs_independent_streams():
    arr1, dec1 = episode_rngs(42)
    arr2, dec2 = episode_rngs(42)
    assert arr1.random(5) == pytest.approx(arr2.random(5))
    assert dec1.random(5) == pytest.approx(dec2.random(5))
    arr3, _ = episode_rngs(43)
    assert not np.allclose(arr1.random(5), arr3.random(5))


def test_sample_sequence_frequencies(nd_market):
    market = nd_market.with_horizon(20000)
    arr, _ = episode_rngs(9)
    seq = sample_sequence(market, arr)
    freq = np.bincount(seq.type_indices, minlength=3) / len(seq)
    assert freq == pytest.approx(market.probabilities, abs=0.02)


def test_json_round_trip(tmp_path, nd_market):
    path = tmp_path / "m.json"
    save_market(nd_market, path)
    back = load_market(path)
    assert market_to_dict(back) == market_to_dict(nd_market)


def test_market_from_dict_missing_field():
    with pytest.raises(ValidationError):
        market_from_dict({"types": [], "p": [], "b": []})


def test_load_market_bad_json(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text("{not json")
    with pytest.raises(ValidationError):
        load_market(path)


def test_random_market_generator_valid():
    rng = np.random.default_rng(1)
    for _ in range(10):
        market = random_market(rng)
        assert validate(market) == []

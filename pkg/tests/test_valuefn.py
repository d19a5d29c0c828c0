"""
unit tests for value functions.
"""

import pytest

from src.cfr import ConfigurationError
from src.game import ParameterError, Player, Range, StructuralError
from src.valuefn import (
    LimitedValueFunction,
    NoisyValueFunction,
    OptimalValueFunction,
    limited_value,
    make_value_function,
    noisy_value,
    optimal_value,
    range_query,
)


def twist_state(tree):
    return tree.nodes[tree.infoset("D:t:T").nodes[0]].public_state


def full_ranges(tree, ps, up=1.0, down=1.0):
    return (
        {k: up for k in tree.augmented_entry_keys(ps, Player.UP)},
        {k: down for k in tree.augmented_entry_keys(ps, Player.DOWN)},
    )


@pytest.fixture
def twist_query(ce_mp):
    ps = twist_state(ce_mp)
    up, down = full_ranges(ce_mp, ps, up=1.0, down=1 / 3)
    return range_query(ce_mp, ps, up, down)


@pytest.fixture
def kuhn_query(kuhn):
    ps = kuhn.nodes[kuhn.infoset("D:J|p").nodes[0]].public_state
    up, down = full_ranges(kuhn, ps, up=0.5, down=1.0)
    return range_query(kuhn, ps, up, down)


class TestMakeValueFunction:
    """test cases for value function specs."""

    def test_optimal_defaults_to_inline(self, kuhn):
        vf = make_value_function("optimal", kuhn)
        assert isinstance(vf, OptimalValueFunction)
        assert vf.inline

    def test_explicit_optimal(self, kuhn):
        assert not make_value_function("optimal:explicit", kuhn).inline

    def test_limited(self, kuhn):
        vf = make_value_function("limited:5", kuhn)
        assert isinstance(vf, LimitedValueFunction)
        assert vf.iterations == 5

    def test_noisy(self, kuhn):
        vf = make_value_function("noisy:0.1:3", kuhn)
        assert isinstance(vf, NoisyValueFunction)
        assert (vf.eps, vf.seed) == (0.1, 3)
        assert not vf.inline

    @pytest.mark.parametrize("spec", ["magic", "optimal:fast", "limited:x", "noisy:a:1"])
    def test_malformed_specs(self, kuhn, spec):
        with pytest.raises(ConfigurationError):
            make_value_function(spec, kuhn)

    @pytest.mark.parametrize("spec", ["limited:0", "noisy:-0.5:1"])
    def test_out_of_range_parameters(self, kuhn, spec):
        with pytest.raises(ParameterError):
            make_value_function(spec, kuhn)


class TestOptimalValues:
    """test cases for equilibrium values after the depth limit."""

    def test_single_actor_subgame(self, ce_mp, twist_query):
        result = OptimalValueFunction(ce_mp, inline=False).evaluate(twist_query)
        (up_key,) = result.values_up
        (down_key,) = result.values_down
        # DOWN hands UP 1 rather than 10; values are weighted by the opponent's reach
        assert result.values_up[up_key] == pytest.approx(1 / 3)
        assert result.values_down[down_key] == pytest.approx(-1.0)
        assert result.epsilon == 0

    def test_values_are_counterfactual(self, ce_mp):
        vf = OptimalValueFunction(ce_mp, inline=False)
        ps = twist_state(ce_mp)
        up, down = full_ranges(ce_mp, ps, up=0.5, down=1 / 3)
        result = vf.evaluate(range_query(ce_mp, ps, up, down))
        assert list(result.values_up.values()) == [pytest.approx(1 / 3)]
        assert list(result.values_down.values()) == [pytest.approx(-0.5)]

    def test_zero_sum_totals(self, kuhn, kuhn_query):
        result = OptimalValueFunction(kuhn, inline=False, tolerance=1e-4).evaluate(kuhn_query)
        up_total = result.range_weighted_total(kuhn_query, Player.UP)
        down_total = result.range_weighted_total(kuhn_query, Player.DOWN)
        assert up_total == pytest.approx(-down_total, abs=1e-9)

    def test_zero_ranges(self, ce_mp):
        ps = twist_state(ce_mp)
        up, down = full_ranges(ce_mp, ps, up=0.0, down=0.0)
        result = OptimalValueFunction(ce_mp, inline=False).evaluate(range_query(ce_mp, ps, up, down))
        assert set(result.values_up.values()) == {0.0}
        assert set(result.values_down.values()) == {0.0}

    def test_cache_hits(self, ce_mp, twist_query):
        vf = OptimalValueFunction(ce_mp, inline=False)
        first = vf.evaluate(twist_query)
        second = vf.evaluate(twist_query)
        assert first is second
        assert (vf.queries, vf.hits) == (2, 1)

    def test_rejects_wrong_range_keys(self, ce_mp):
        ps = twist_state(ce_mp)
        vf = OptimalValueFunction(ce_mp, inline=False)
        query = range_query(ce_mp, ps, {}, {})
        up = Range(ps, Player.UP, {**query.range_up.reaches, "U:bogus": 1.0})
        bad = vf.query(ps, up, query.range_down)
        with pytest.raises(StructuralError, match="incorrectly"):
            vf.evaluate(bad)

    def test_rejects_unknown_public_state(self, ce_mp, twist_query):
        vf = OptimalValueFunction(ce_mp, inline=False)
        with pytest.raises(StructuralError, match="Unknown public state"):
            vf.evaluate(vf.query(len(ce_mp.public_states), twist_query.range_up, twist_query.range_down))


class TestApproximateValues:
    """test cases for limited and noisy value functions."""

    def test_limited_reports_gap(self, kuhn, kuhn_query):
        limited = LimitedValueFunction(kuhn, iterations=2).evaluate(kuhn_query)
        assert limited.epsilon >= 0
        assert set(limited.values_up) == set(kuhn_query.range_up.reaches)

    def test_noise_is_bounded(self, ce_mp, twist_query):
        exact = OptimalValueFunction(ce_mp, inline=False).evaluate(twist_query)
        noisy = make_value_function("noisy:0.05:7", ce_mp).evaluate(twist_query)
        for key, value in exact.values_up.items():
            assert abs(noisy.values_up[key] - value) <= 0.05
        assert noisy.epsilon == pytest.approx(0.05)

    def test_noise_is_seeded(self, ce_mp, twist_query):
        first = make_value_function("noisy:0.05:7", ce_mp).evaluate(twist_query)
        again = make_value_function("noisy:0.05:7", ce_mp).evaluate(twist_query)
        other = make_value_function("noisy:0.05:8", ce_mp).evaluate(twist_query)
        assert first.values_up == again.values_up
        assert first.values_up != other.values_up

    def test_rebind_keeps_kind(self, ce_mp, ce_coin):
        vf = make_value_function("noisy:0.05:7", ce_mp)
        rebound = vf.rebind(ce_coin)
        assert isinstance(rebound, NoisyValueFunction)
        assert rebound.tree is ce_coin
        assert rebound.base.tree is ce_coin


class TestOneShotValues:
    """test cases for the functional value helpers."""

    def test_optimal_value(self, ce_mp, twist_query):
        result = optimal_value(ce_mp, twist_query)
        assert list(result.values_up.values()) == [pytest.approx(1 / 3)]

    def test_limited_value(self, ce_mp, twist_query):
        result = limited_value(ce_mp, twist_query, iterations=3)
        assert set(result.values_up) == set(twist_query.range_up.reaches)

    def test_noisy_value(self, ce_mp, twist_query):
        exact = optimal_value(ce_mp, twist_query)
        noisy = noisy_value(ce_mp, twist_query, eps=0.01, seed=2)
        for key, value in exact.values_down.items():
            assert abs(noisy.values_down[key] - value) <= 0.01

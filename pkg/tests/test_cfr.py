"""
unit tests for the CFR+ solver and the trunk best-response oracle.
"""

import math

import numpy as np
import pytest

from src.cfr import (
    CfrSolver,
    ConfigurationError,
    DepthLimitedGame,
    SolveConfig,
    best_iterate_trunk_br,
    exhaustive_trunk_br,
    lemma1_bound,
    solve,
    solve_game_value,
    trunk_utility,
)
from src.game import (
    BehavioralStrategy,
    ParameterError,
    Player,
    StrategyProfile,
    best_response,
    expected_utility,
    exploitability,
    uniform_strategy,
)
from src.games import ce_coin_model, ce_gadget_model, ce_mp_model
from src.resolving import make_partitioning
from src.valuefn import OptimalValueFunction

KUHN_VALUE = -1 / 18
# trunks small enough for the exhaustive oracle; Kuhn runs without subgames
LEMMA1_TRUNKS = [
    ("kuhn", "whole_game"),
    ("ce_mp", "by_own_actions:1"),
    ("ce_coin", "by_own_actions:1"),
    ("ce_gadget", "by_own_actions:1"),
]
TRUNK_MODELS = {
    "kuhn": lambda tree: uniform_strategy(tree, Player.DOWN),
    "ce_mp": lambda tree: ce_mp_model(),
    "ce_coin": lambda tree: ce_coin_model(),
    "ce_gadget": lambda tree: ce_gadget_model(),
}


@pytest.fixture
def mp_trunk(ce_mp):
    """ce_mp cut right before DOWN's x/y choice."""
    parts = make_partitioning(ce_mp, "by_own_actions:1")
    return DepthLimitedGame(ce_mp, parts.pieces[0].states)


class TestDepthLimitedGame:
    """test cases for region construction."""

    def test_whole_tree_has_no_leaves(self, kuhn):
        game = DepthLimitedGame(kuhn)
        assert game.size == len(kuhn)
        assert game.leaf_states == ()

    def test_cut_before_twist(self, ce_mp, mp_trunk):
        twist = ce_mp.nodes[ce_mp.infoset("D:t:T").nodes[0]].public_state
        assert mp_trunk.leaf_states == (twist,)
        assert mp_trunk.region_keys(Player.DOWN) == ["D:"]

    def test_expanded_region_includes_continuation(self, ce_mp, mp_trunk):
        parts = make_partitioning(ce_mp, "by_own_actions:1")
        expanded = DepthLimitedGame(ce_mp, parts.pieces[0].states, expand=True)
        assert expanded.size > mp_trunk.size
        assert "D:t:T" in expanded.region_keys(Player.DOWN)
        assert "D:t:T" not in expanded.region_keys(Player.DOWN, continuation=False)

    def test_rebased_region_needs_reaches(self, kuhn):
        with pytest.raises(ConfigurationError):
            DepthLimitedGame(kuhn, roots=[1])


class TestCfrSolver:
    """test cases for CFR+ runs."""

    def test_kuhn_converges(self, kuhn):
        result = solve(kuhn, SolveConfig(iterations=1000))
        assert exploitability(kuhn, result.average_strategy.sigma_up, KUHN_VALUE) < 1e-2
        assert exploitability(kuhn, result.average_strategy.sigma_down, -KUHN_VALUE) < 1e-2

    def test_matching_pennies_average(self, matching_pennies):
        result = solve(matching_pennies, SolveConfig(iterations=500))
        assert np.allclose(result.average_strategy.sigma_up["U:"], [0.5, 0.5], atol=1e-2)

    def test_regret_bound_shrinks(self, kuhn):
        short = solve(kuhn, SolveConfig(iterations=10))
        long = solve(kuhn, SolveConfig(iterations=1000))
        assert long.regret_bound < short.regret_bound

    def test_frozen_strategy_is_kept(self, kuhn):
        model = uniform_strategy(kuhn, Player.DOWN)
        result = solve(kuhn, SolveConfig(iterations=1000, frozen=(model,)))
        for key in model.keys():
            assert np.allclose(result.average_strategy.sigma_down[key], [0.5, 0.5])
        _, best = best_response(kuhn, model, Player.UP)
        achieved = expected_utility(kuhn, StrategyProfile(result.average_strategy.sigma_up, model))
        assert achieved == pytest.approx(best, abs=2e-2)

    def test_frozen_owner_mismatch(self, kuhn):
        wrong = BehavioralStrategy(Player.UP, {"D:J|p": [0.5, 0.5]})
        with pytest.raises(ConfigurationError, match="does not belong"):
            CfrSolver(DepthLimitedGame(kuhn), SolveConfig(iterations=1, frozen=(wrong,)))

    def test_border_needs_value_function(self, mp_trunk):
        with pytest.raises(ConfigurationError, match="no value function"):
            CfrSolver(mp_trunk, SolveConfig(iterations=10))

    def test_zero_iterations(self, kuhn):
        with pytest.raises(ParameterError):
            CfrSolver(DepthLimitedGame(kuhn), SolveConfig(iterations=0))

    def test_iteration_log(self, kuhn, temp_dir):
        result = solve(kuhn, SolveConfig(iterations=100))
        frame = result.log_frame()
        assert list(frame.columns) == ["iter", "expl_estimate", "best_iterate_utility"]
        assert frame["iter"].tolist() == [1, 2, 4, 8, 16, 32, 64, 100]
        path = result.write_log(temp_dir / "logs" / "cfr.csv")
        assert path.exists()

    def test_game_value(self, kuhn):
        assert solve_game_value(kuhn, tolerance=1e-4) == pytest.approx(KUHN_VALUE, abs=1e-3)

    def test_tracked_roots_must_be_in_region(self, ce_mp, mp_trunk):
        outside = next(n.index for n in ce_mp.nodes if n.index not in set(mp_trunk.glob.tolist()))
        vf = OptimalValueFunction(ce_mp, inline=False)
        with pytest.raises(ConfigurationError, match="inside the region"):
            CfrSolver(mp_trunk, SolveConfig(iterations=1, value_function=vf, track_best_iterate=True,
                                            track_roots=(outside,)))

    def test_tracking_the_root_is_the_default(self, kuhn):
        model = uniform_strategy(kuhn, Player.DOWN)
        default = solve(kuhn, SolveConfig(iterations=50, frozen=(model,), track_best_iterate=True))
        rooted = solve(kuhn, SolveConfig(iterations=50, frozen=(model,), track_best_iterate=True, track_roots=(0,)))
        assert rooted.best_iterate_utility == pytest.approx(default.best_iterate_utility)


class TestTrunkBestResponse:
    """test cases for the trunk oracle on ce_mp."""

    def test_trunk_utility_uses_value_function(self, ce_mp, mp_trunk, mp_model):
        vf = OptimalValueFunction(ce_mp, inline=False)
        tails = BehavioralStrategy(Player.UP, {"U:": [0.0, 1.0]})
        # DOWN answers the twist with y, so tails earns 1 only when DOWN guesses t
        assert trunk_utility(mp_trunk, tails, mp_model, vf) == pytest.approx(1 / 3)

    def test_exhaustive_picks_heads(self, ce_mp, mp_trunk, mp_model):
        vf = OptimalValueFunction(ce_mp, inline=False)
        strategy, value = exhaustive_trunk_br(mp_trunk, mp_model, vf)
        assert list(strategy["U:"]) == [1.0, 0.0]
        assert value == pytest.approx(2 / 3)

    def test_enumeration_limit(self, ce_mp, mp_trunk, mp_model):
        vf = OptimalValueFunction(ce_mp, inline=False)
        with pytest.raises(ParameterError, match="enumeration limit"):
            exhaustive_trunk_br(mp_trunk, mp_model, vf, limit=1)

    @pytest.mark.parametrize("iterations", [100, 1000, pytest.param(10000, marks=pytest.mark.slow)])
    @pytest.mark.parametrize("name,scheme", LEMMA1_TRUNKS)
    def test_best_iterate_within_lemma1_bound(self, request, name, scheme, iterations):
        tree = request.getfixturevalue(name)
        model = TRUNK_MODELS[name](tree)
        trunk = DepthLimitedGame(tree, make_partitioning(tree, scheme).pieces[0].states)
        vf = OptimalValueFunction(tree, inline=False)
        _, exhaustive = exhaustive_trunk_br(trunk, model, vf)
        _, best = best_iterate_trunk_br(trunk, model, vf, iterations=iterations)
        infosets = [tree.infosets[int(i)] for i in trunk.infoset_ids[Player.UP]]
        actions = max((i.size for i in infosets), default=1)
        low, high = tree.utility_range()
        bound = lemma1_bound(high - low, actions, len(infosets), iterations,
                             len(trunk.leaf_states), vf.max_epsilon)
        assert -1e-9 <= exhaustive - best <= bound + 1e-9

    def test_expanded_game_rejected(self, ce_mp, mp_model):
        parts = make_partitioning(ce_mp, "by_own_actions:1")
        expanded = DepthLimitedGame(ce_mp, parts.pieces[0].states, expand=True)
        heads = BehavioralStrategy(Player.UP, {"U:": [1.0, 0.0]})
        with pytest.raises(ConfigurationError):
            trunk_utility(expanded, heads, mp_model, None)


class TestLemma1Bound:
    """test cases for the best-iterate gap bound."""

    def test_appendix_form(self):
        bound = lemma1_bound(delta=2.0, actions=4, trunk_infosets=3, iterations=100,
                             subgames=5, subgame_error=0.01)
        assert bound == pytest.approx(2.0 * math.sqrt(4 / 100) * 3 + 5 * 0.01)

    def test_main_form_scales_subgame_term(self):
        bound = lemma1_bound(2.0, 4, 3, 100, 5, 0.01, form="main")
        assert bound == pytest.approx(1.2 + 100 * 5 * 0.01)

    def test_exact_subgames_leave_regret_term(self):
        assert lemma1_bound(1.0, 2, 1, 50, 7, 0.0) == pytest.approx(math.sqrt(2 / 50))

    @pytest.mark.parametrize("kwargs", [
        {"iterations": 0},
        {"subgame_error": -1.0},
        {"form": "other"},
    ])
    def test_rejects_bad_inputs(self, kwargs):
        args = {"delta": 1.0, "actions": 2, "trunk_infosets": 1, "iterations": 10,
                "subgames": 1, "subgame_error": 0.0}
        args.update(kwargs)
        with pytest.raises(ParameterError):
            lemma1_bound(**args)

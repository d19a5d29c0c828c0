"""
unit tests for resolving gadgets and their correctness check.
"""

from fractions import Fraction

import pandas as pd
import pytest

from src.cfr import ConfigurationError
from src.exact import solve_exact
from src.game import (
    BehavioralStrategy,
    ParameterError,
    Player,
    StrategyProfile,
    StructuralError,
    pure_strategy,
    uniform_strategy,
)
from src.gadgets import (
    SWEEP_KINDS,
    build_gadget,
    definition1_check,
    deviation_value,
    gadget_action_sweep,
    gadget_values,
    make_subgame,
    resolve_with_gadget,
    resolved_actions,
    subgame_cf_values,
    trunk_kept_value,
    write_sweep,
)
from src.resolving import make_rnr

DEMO_P = ("0.499999", "0.5", "0.500001")
FINE_P = [Fraction(i, 1000) for i in range(1001)]


@pytest.fixture
def coin_subgame(ce_coin):
    """Subgame at UP's blind decision, weighted by the exact equilibrium."""
    solution = solve_exact(ce_coin)
    profile = StrategyProfile(solution.sigma_up, solution.sigma_down)
    public_state = ce_coin.nodes[ce_coin.infoset("U:?").nodes[0]].public_state
    return make_subgame(ce_coin, profile, public_state), profile


@pytest.fixture
def coin_values(ce_coin, coin_model):
    frame = gadget_values(ce_coin, coin_model, {"U:?": "P"})
    return {(row.construction, row.normalize): row for row in frame.itertuples(index=False)}


class TestSubgames:
    """test cases for subgame extraction."""

    def test_entry_weights(self, coin_subgame):
        subgame, _ = coin_subgame
        assert len(subgame.entries) == 4
        assert set(subgame.weights.values()) == {Fraction(1, 2)}
        assert subgame.forced == frozenset()
        assert len(subgame.entry_infosets()) == 4

    def test_equilibrium_cf_values(self, coin_subgame):
        subgame, profile = coin_subgame
        # UP never takes P, so DOWN earns nothing anywhere
        assert set(subgame_cf_values(subgame, profile).values()) == {0}


class TestGadgetConstruction:
    """test cases for building gadgets."""

    def test_resolving_keeps_raw_weights(self, coin_subgame):
        subgame, profile = coin_subgame
        gadget = build_gadget("resolving", subgame, subgame_cf_values(subgame, profile))
        assert sum(gadget.tree.root.chance_probs) == 2
        assert gadget.up_keys() == ["U:?"]
        assert len(gadget.free_down_keys()) == 4

    def test_normalized_weights(self, coin_subgame):
        subgame, profile = coin_subgame
        gadget = build_gadget("resolving", subgame, subgame_cf_values(subgame, profile), normalize=True)
        assert list(gadget.tree.root.chance_probs) == [Fraction(1, 4)] * 4

    def test_max_margin_has_single_chooser(self, coin_subgame):
        subgame, profile = coin_subgame
        gadget = build_gadget("max_margin", subgame, subgame_cf_values(subgame, profile))
        assert list(gadget.tree.root.actions) == ["margin"]
        chooser = gadget.tree.nodes[gadget.tree.root.children[0]]
        assert chooser.player is Player.DOWN
        assert len(chooser.actions) == 4

    def test_unknown_kind(self, coin_subgame):
        subgame, _ = coin_subgame
        with pytest.raises(ConfigurationError, match="Unknown gadget kind"):
            build_gadget("safe", subgame, {})

    def test_offsets_need_reach_gadget(self, coin_subgame):
        subgame, profile = coin_subgame
        values = subgame_cf_values(subgame, profile)
        with pytest.raises(ParameterError):
            build_gadget("max_margin", subgame, values, reach_offsets={next(iter(values)): 1})

    def test_missing_cf_values(self, coin_subgame):
        subgame, _ = coin_subgame
        with pytest.raises(StructuralError, match="No counterfactual value"):
            build_gadget("resolving", subgame, {})


class TestDeviationValues:
    """test cases for gadget values of a fixed deviation."""

    def test_resolving_gadget_lets_down_opt_out(self, ce_coin, coin_subgame):
        subgame, profile = coin_subgame
        gadget = build_gadget("resolving", subgame, subgame_cf_values(subgame, profile))
        always_p = pure_strategy(ce_coin, Player.UP, {"U:?": "P"}, exact=True)
        # DOWN follows wherever P hurts UP and terminates at G:GT
        assert deviation_value(gadget, always_p) == Fraction(-7, 2)

    def test_deviation_must_cover_gadget(self, coin_subgame):
        subgame, profile = coin_subgame
        gadget = build_gadget("resolving", subgame, subgame_cf_values(subgame, profile))
        with pytest.raises(StructuralError, match="misses"):
            deviation_value(gadget, BehavioralStrategy(Player.UP, {}))

    def test_trunk_kept_value(self, ce_coin):
        always_p = pure_strategy(ce_coin, Player.UP, {"U:?": "P"}, exact=True)
        assert trunk_kept_value(ce_coin, always_p) == Fraction(-3)

    def test_resolve_with_gadget(self, ce_coin, coin_subgame):
        subgame, profile = coin_subgame
        gadget = build_gadget("resolving", subgame, subgame_cf_values(subgame, profile))
        resolved = resolve_with_gadget(gadget, uniform_strategy(ce_coin, Player.UP), iterations=200)
        assert resolved["U:?"][1] > 0.9


class TestCorrectnessCheck:
    """test cases for construction values against the best-responding reference."""

    def test_reference_is_shared(self, coin_values):
        assert {row.reference for row in coin_values.values()} == {Fraction(-3)}

    def test_trunk_kept_is_exact(self, coin_values):
        assert coin_values[("trunk_kept", False)].error == 0

    @pytest.mark.parametrize("kind, normalize, expected", [
        ("resolving", False, Fraction(-7, 2)),
        ("resolving", True, Fraction(-7, 4)),
        ("max_margin", False, Fraction(-2)),
        ("max_margin", True, Fraction(-4)),
        ("reach_max_margin", False, Fraction(-2)),
        ("reach_max_margin", True, Fraction(-4)),
    ])
    def test_gadget_estimates(self, coin_values, kind, normalize, expected):
        assert coin_values[(kind, normalize)].estimate == expected

    def test_every_gadget_misses(self, coin_values):
        gadget_rows = [row for key, row in coin_values.items() if key[0] != "trunk_kept"]
        assert all(row.error != 0 for row in gadget_rows)

    def test_free_copy_must_be_reachable(self, ce_coin, coin_model):
        rnr = make_rnr(ce_coin, coin_model, Fraction(1))
        profile = StrategyProfile(uniform_strategy(rnr.tree, Player.UP), uniform_strategy(rnr.tree, Player.DOWN))
        with pytest.raises(ParameterError, match="never reached"):
            definition1_check(profile, rnr, "U:?")

    def test_infoset_must_belong_to_up(self, ce_coin, coin_model):
        rnr = make_rnr(ce_coin, coin_model, Fraction(0))
        profile = StrategyProfile(uniform_strategy(rnr.tree, Player.UP), uniform_strategy(rnr.tree, Player.DOWN))
        with pytest.raises(ParameterError, match="not an infoset of UP"):
            definition1_check(profile, rnr, "D:P/R")


class TestActionSweep:
    """test cases for the resolved-action sweep on ce_gadget."""

    def test_trunk_kept_flips_through_c(self, ce_gadget):
        frame = gadget_action_sweep(ce_gadget, "trunk_kept", DEMO_P)
        assert frame.columns.tolist() == ["p", "action_a", "action_b", "action_c"]
        assert resolved_actions(frame).tolist() == ["b", "c", "a"]

    @pytest.mark.parametrize("kind", [k for k in SWEEP_KINDS if k != "trunk_kept"])
    def test_gadgets_never_resolve_c(self, ce_gadget, kind):
        frame = gadget_action_sweep(ce_gadget, kind, DEMO_P)
        assert "c" not in resolved_actions(frame).tolist()

    @pytest.mark.slow
    @pytest.mark.parametrize("kind", [k for k in SWEEP_KINDS if k != "trunk_kept"])
    def test_gadgets_never_resolve_c_on_fine_grid(self, ce_gadget, kind):
        frame = gadget_action_sweep(ce_gadget, kind, FINE_P)
        assert len(frame) == 1001
        assert "c" not in set(resolved_actions(frame))

    def test_unknown_kind(self, ce_gadget):
        with pytest.raises(ConfigurationError):
            gadget_action_sweep(ce_gadget, "safe", DEMO_P)

    def test_needs_single_up_infoset(self, kuhn):
        with pytest.raises(StructuralError):
            gadget_action_sweep(kuhn, "trunk_kept", DEMO_P)

    def test_p_range(self, ce_gadget):
        with pytest.raises(ParameterError):
            gadget_action_sweep(ce_gadget, "trunk_kept", ["1.5"])

    def test_resolved_action_labels(self):
        frame = pd.DataFrame({"p": [0.1, 0.2], "action_a": [0.995, 0.5], "action_b": [0.005, 0.5]})
        assert resolved_actions(frame).tolist() == ["a", "mixed"]

    def test_write_sweep(self, temp_dir):
        frame = pd.DataFrame({"p": [0.5], "action_a": [1.0]})
        path = write_sweep(frame, temp_dir / "nested" / "sweep.csv")
        assert pd.read_csv(path).equals(frame)

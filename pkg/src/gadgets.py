"""
resolving gadgets and their correctness check under opponent models.
// what this file handles //

- subgame extraction at a public state: entry weights and the opponent's counterfactual values
- gadget construction: resolving (follow / terminate), max-margin and reach max-margin
- deviation values, the per-infoset correctness check and the resolved-action sweep
"""

from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Dict, FrozenSet, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from .cfr import ConfigurationError, SolveConfig, solve
from .exact import solve_exact
from .game import (
    BehavioralStrategy,
    GameTree,
    Node,
    Number,
    ParameterError,
    Player,
    StrategyProfile,
    StructuralError,
    TreeBuilder,
    best_response,
    best_response_core,
    node_values,
    pure_strategy,
    reach,
)
from .games import ce_gadget_model
from .logger import get_logger
from .resolving import FIXED_PREFIX, FREE_PREFIX, RnrGame, make_rnr

logger = get_logger(__name__)

GADGET_KINDS = ("resolving", "max_margin", "reach_max_margin")
SWEEP_KINDS = GADGET_KINDS + ("trunk_kept",)
PURE_THRESHOLD = 0.99


@dataclass
class Subgame:
    """
    Subgame below the entries of a public state.

    `weights` are UP-and-chance reaches of the entry nodes (times DOWN's
    reach for `forced` entries, where DOWN is frozen and cannot opt out).
    """

    tree: GameTree
    public_state: int
    weights: Dict[int, Number]
    forced: FrozenSet[int] = frozenset()

    @property
    def entries(self) -> List[int]:
        return sorted(self.weights)

    @property
    def free_entries(self) -> List[int]:
        return [e for e in self.entries if e not in self.forced]

    def down_key(self, entry: int) -> str:
        return self.tree.nodes[entry].augmented_key(Player.DOWN)

    def entry_infosets(self) -> Dict[str, List[int]]:
        """DOWN's augmented infosets over the free entries."""
        groups: Dict[str, List[int]] = {}
        for e in self.free_entries:
            groups.setdefault(self.down_key(e), []).append(e)
        return groups

    def infoset_weight(self, key: str) -> Number:
        return sum((self.weights[e] for e in self.entry_infosets()[key]), 0)


def make_subgame(
    tree: GameTree,
    profile: StrategyProfile,
    public_state: int,
    forced_prefix: Optional[str] = None,
    entries: Optional[Sequence[int]] = None,
    scale: Number = 1,
) -> Subgame:
    """
    Subgame at `public_state` with weights taken from `profile`.

    Entries whose DOWN observation starts with `forced_prefix` are forced.
    Only the path above each entry needs to be covered by `profile`.
    """
    chosen = list(tree.public_states[public_state].entries) if entries is None else list(entries)
    weights: Dict[int, Number] = {}
    forced = set()
    for e in chosen:
        up, down, chance = reach(tree, profile, e)
        is_forced = forced_prefix is not None and tree.nodes[e].observations[1].startswith(forced_prefix)
        weight = up * chance * (down if is_forced else 1)
        weights[e] = weight / scale
        if is_forced:
            forced.add(e)
    return Subgame(tree, public_state, weights, frozenset(forced))


def subgame_cf_values(subgame: Subgame, profile: StrategyProfile) -> Dict[str, Number]:
    """DOWN's counterfactual values (DOWN utility) per free entry infoset under `profile`."""
    out: Dict[str, Number] = {}
    for key, members in subgame.entry_infosets().items():
        total: Number = 0
        for e in members:
            value = node_values(subgame.tree, profile, start=e)[e]
            total = total + subgame.weights[e] * -value
        out[key] = total
    return out


@dataclass
class GadgetGame:
    kind: str
    subgame: Subgame
    tree: GameTree
    cf_values: Dict[str, Number]
    offsets: Dict[str, Number] = field(default_factory=dict)
    normalize: bool = False
    fixed: Optional[BehavioralStrategy] = None

    def up_keys(self) -> List[str]:
        return [i.key for i in self.tree.player_infosets(Player.UP)]

    def free_down_keys(self) -> List[str]:
        fixed = self.fixed.keys() if self.fixed is not None else []
        return [i.key for i in self.tree.player_infosets(Player.DOWN) if i.key not in fixed]


def _copy_subtree(builder: TreeBuilder, tree: GameTree, start: int, parent: int, action: str,
                  shift: Number) -> None:
    mapping = {tree.nodes[start].parent: parent}
    for index in tree.descendants(start):
        node = tree.nodes[index]
        mapping[index] = builder.add(
            mapping[node.parent],
            action if index == start else node.action,
            node.player,
            actions=node.actions,
            chance_probs=node.chance_probs,
            utility=node.utility + shift if node.is_terminal else 0,
            observations=node.observations,
            round=node.round,
        )


def _chance(weights: Sequence[Number], normalize: bool) -> List[Number]:
    total = sum(weights, 0)
    if not normalize:
        return list(weights)
    if total == 0:
        return [Fraction(1, len(weights))] * len(weights)
    return [w / total for w in weights]


def build_gadget(
    kind: str,
    subgame: Subgame,
    cf_values: Mapping[str, Number],
    reach_offsets: Optional[Mapping[str, Number]] = None,
    normalize: bool = False,
    fixed: Optional[BehavioralStrategy] = None,
) -> GadgetGame:
    """
    Build a gadget game replacing the trunk above `subgame`.

    Args:
        kind: `resolving`, `max_margin` or `reach_max_margin`
        subgame: entries with their weights
        cf_values: DOWN's counterfactual value per free entry infoset
        reach_offsets: per-infoset margin offsets, `reach_max_margin` only
        normalize: normalize the chance weights to a distribution
        fixed: DOWN strategy frozen inside the subgame (the model copy)

    Returns:
        GadgetGame; utilities stay exact when the inputs are Fractions.
        Without normalization the root chance carries raw reach weights.
    """
    if kind not in GADGET_KINDS:
        raise ConfigurationError(f"Unknown gadget kind {kind!r}; choose from {', '.join(GADGET_KINDS)}")
    if reach_offsets and kind != "reach_max_margin":
        raise ParameterError("Reach offsets only apply to the reach max-margin gadget")
    groups = subgame.entry_infosets()
    missing = [k for k in groups if k not in cf_values]
    if missing:
        raise StructuralError(f"No counterfactual value for {', '.join(missing)}")
    offsets = dict(reach_offsets or {})
    tree = subgame.tree

    def margin_shift(key: str) -> Number:
        weight = subgame.infoset_weight(key)
        if weight == 0:
            return 0
        return (cf_values[key] - offsets.get(key, 0)) / weight

    builder = TreeBuilder(f"{kind}_gadget({tree.name},ps={subgame.public_state})")
    forced = [e for e in subgame.entries if e in subgame.forced]
    if kind == "resolving":
        entries = subgame.entries
        probs = _chance([subgame.weights[e] for e in entries], normalize)
        root = builder.add(-1, None, Player.CHANCE, actions=[f"h{e}" for e in entries], chance_probs=probs,
                           observations=("gadget", "gadget"))
        for e in entries:
            node = tree.nodes[e]
            if e in subgame.forced:
                _copy_subtree(builder, tree, e, root, f"h{e}", 0)
                continue
            key = subgame.down_key(e)
            weight = subgame.infoset_weight(key)
            terminate = -cf_values[key] / weight if weight != 0 else 0
            gate = builder.add(root, f"h{e}", Player.DOWN, actions=("F", "T"),
                               observations=(node.observations[0], f"gadget|{node.observations[1]}"))
            _copy_subtree(builder, tree, e, gate, "F", 0)
            builder.add(gate, "T", Player.TERMINAL, utility=terminate,
                        observations=("gadget|T", f"gadget|{node.observations[1]}|T"))
    else:
        labels = [f"h{e}" for e in forced] + ["margin"]
        weights = [subgame.weights[e] for e in forced] + [1]
        root = builder.add(-1, None, Player.CHANCE, actions=labels, chance_probs=_chance(weights, normalize),
                           observations=("gadget", "gadget"))
        for e in forced:
            _copy_subtree(builder, tree, e, root, f"h{e}", 0)
        keys = list(groups)
        chooser = builder.add(root, "margin", Player.DOWN, actions=[f"J{i}" for i in range(len(keys))],
                              observations=("gadget", "gadget|margin"))
        for i, key in enumerate(keys):
            members = groups[key]
            shift = margin_shift(key)
            spread = builder.add(chooser, f"J{i}", Player.CHANCE, actions=[f"h{e}" for e in members],
                                 chance_probs=_chance([subgame.weights[e] for e in members], normalize),
                                 observations=("gadget", f"gadget|{key}"))
            for e in members:
                _copy_subtree(builder, tree, e, spread, f"h{e}", shift)

    gadget_tree = builder.build(validate=False, meta={"gadget": kind, "source": tree.name})
    logger.debug(f"Built {kind} gadget over {len(subgame.entries)} entries: {len(gadget_tree)} nodes")
    restricted = None
    if fixed is not None:
        present = {i.key for i in gadget_tree.player_infosets(Player.DOWN)}
        restricted = fixed.restricted(present)
    return GadgetGame(kind, subgame, gadget_tree, dict(cf_values), offsets, normalize, restricted)


def _gadget_policy(gadget: GadgetGame, deviation: BehavioralStrategy):
    tree = gadget.tree

    def policy(node: Node) -> Sequence[Number]:
        if node.is_chance:
            return node.chance_probs
        key = tree.infosets[node.infoset].key
        source = deviation if node.player is Player.UP else gadget.fixed
        if source is None or key not in source:
            raise StructuralError(f"No strategy for {key} in the gadget")
        return source[key]

    return policy


def deviation_value(gadget: GadgetGame, deviation: BehavioralStrategy) -> Number:
    """UP's utility in the gadget when UP plays `deviation` and DOWN best-responds."""
    missing = [k for k in gadget.up_keys() if k not in deviation]
    if missing:
        raise StructuralError(f"Deviation misses gadget infosets: {', '.join(missing)}")
    _, values, _ = best_response_core(gadget.tree, _gadget_policy(gadget, deviation), Player.DOWN, [0], [1],
                                      free=set(gadget.free_down_keys()))
    return -values[0]


def trunk_kept_value(tree: GameTree, up_strategy: BehavioralStrategy) -> Number:
    """UP's utility when DOWN best-responds over the whole game, trunk included."""
    _, value = best_response(tree, up_strategy, Player.DOWN)
    return -value


def resolve_with_gadget(gadget: GadgetGame, base: BehavioralStrategy,
                        iterations: Optional[int] = None) -> BehavioralStrategy:
    """Solve the gadget by CFR+ and graft UP's resolved subgame strategy onto `base`."""
    frozen = (gadget.fixed,) if gadget.fixed is not None else ()
    settings = SolveConfig(frozen=frozen) if iterations is None else SolveConfig(iterations=iterations,
                                                                                 frozen=frozen)
    result = solve(gadget.tree, settings)
    resolved = result.average_strategy.sigma_up.restricted(gadget.up_keys())
    logger.info(f"Resolved {len(resolved)} infosets with the {gadget.kind} gadget",
                extra={"game": gadget.subgame.tree.name})
    return base.updated(resolved)


# ─── correctness under the restricted-response game ─────────────────────


def _free_copy_entries(rnr: RnrGame, public_state: int) -> List[int]:
    return [e for e in rnr.tree.public_states[public_state].entries
            if rnr.tree.nodes[e].observations[1].startswith(FREE_PREFIX)]


def definition1_check(
    profile: StrategyProfile,
    rnr: RnrGame,
    infoset: str,
    kind: str = "trunk_kept",
    deviation: Optional[BehavioralStrategy] = None,
    normalize: bool = False,
) -> Tuple[Number, Number]:
    """
    Free-copy value of a UP infoset under a construction and its reference.

    `profile` is the trunk solution on the restricted-response tree and
    supplies the gadget's counterfactual values; UP plays `deviation`
    (default: the profile's own strategy). The reference lets DOWN
    best-respond over the whole free copy. Both values are conditional on
    the free copy being chosen. A construction is correct when they match.
    """
    if rnr.p >= 1:
        raise ParameterError("The free copy is never reached with p = 1")
    tree = rnr.tree
    target = tree.infoset(infoset)
    if target.player is not Player.UP:
        raise ParameterError(f"{infoset} is not an infoset of UP")
    up = profile.sigma_up if deviation is None else profile.sigma_up.updated(deviation)
    free_root = rnr.free_node(0)
    members = [n for n in target.nodes if n >= free_root]
    free_weight = rnr.tree.root.chance_probs[1]

    def policy(node: Node) -> Sequence[Number]:
        if node.is_chance:
            return node.chance_probs
        return up[tree.infosets[node.infoset].key]

    choices, values, opp_reach = best_response_core(tree, policy, Player.DOWN, [free_root], [1])
    reference: Number = 0
    for n in members:
        own = 1
        path = tree.path(n)
        for parent, child in zip(path, path[1:]):
            node = tree.nodes[parent]
            if node.player is Player.DOWN and parent >= free_root:
                own = own * int(node.children.index(child) == choices[tree.infosets[node.infoset].key])
        reference = reference + opp_reach[n] * own * -values[n]

    if kind == "trunk_kept":
        solution = solve_exact(tree, fixed=(up.restricted(k.key for k in tree.player_infosets(Player.UP)),
                                            rnr.model_strategy()))
        kept = StrategyProfile(up, solution.sigma_down)
        estimate: Number = 0
        for n in members:
            pi = reach(tree, kept, n)
            estimate = estimate + pi[0] * pi[1] * pi[2] * node_values(tree, kept, start=n)[n]
        estimate = estimate / free_weight
    else:
        public_state = tree.nodes[members[0]].public_state
        subgame = make_subgame(tree, profile, public_state, entries=_free_copy_entries(rnr, public_state),
                               scale=free_weight)
        gadget = build_gadget(kind, subgame, subgame_cf_values(subgame, profile), normalize=normalize)
        estimate = deviation_value(gadget, up.restricted(gadget.up_keys()))
    logger.debug(f"Correctness check at {infoset} with {kind}: estimate {estimate}, reference {reference}")
    return estimate, reference


def gadget_values(
    tree: GameTree,
    model: BehavioralStrategy,
    deviation: Mapping[str, Union[int, str]],
    p: Number = 0,
) -> pd.DataFrame:
    """
    Every construction's value for a pure UP deviation, exactly.

    The trunk solution is the exact restricted-response equilibrium at `p`
    (p = 0 is the plain game). One row per (construction, normalize) with
    the estimate, the best-responding reference and the signed error.
    """
    rnr = make_rnr(tree, model, _exact_p(p))
    solution = solve_exact(rnr.tree, fixed=(rnr.model_strategy(),))
    profile = StrategyProfile(solution.sigma_up, solution.sigma_down)
    choice = pure_strategy(rnr.tree, Player.UP, deviation, exact=True)
    infoset = next(iter(deviation))
    rows = []
    for kind in ("trunk_kept",) + GADGET_KINDS:
        for normalize in ((False,) if kind == "trunk_kept" else (False, True)):
            estimate, reference = definition1_check(profile, rnr, infoset, kind, choice, normalize)
            rows.append([kind, normalize, estimate, reference, estimate - reference])
    return pd.DataFrame(rows, columns=["construction", "normalize", "estimate", "reference", "error"])


# ─── resolved-action sweep ──────────────────────────────────────────────


def _exact_p(p: Number) -> Fraction:
    if isinstance(p, (Fraction, int)):
        return Fraction(p)
    return Fraction(str(p))


def _resolved_up(tree: GameTree, model: BehavioralStrategy, kind: str, p: Fraction) -> np.ndarray:
    rnr = make_rnr(tree, model, p)
    fixed = rnr.model_strategy()
    trunk = solve_exact(rnr.tree, fixed=(fixed,))
    if kind == "trunk_kept":
        key = tree.player_infosets(Player.UP)[0].key
        return trunk.sigma_up[key]
    profile = StrategyProfile(trunk.sigma_up, trunk.sigma_down)
    key = tree.player_infosets(Player.UP)[0].key
    public_state = rnr.tree.nodes[rnr.tree.infoset(key).nodes[0]].public_state
    subgame = make_subgame(rnr.tree, profile, public_state, forced_prefix=FIXED_PREFIX)
    gadget = build_gadget(kind, subgame, subgame_cf_values(subgame, profile), fixed=fixed)
    resolved = solve_exact(gadget.tree, fixed=(gadget.fixed,) if gadget.fixed is not None else ())
    return resolved.sigma_up[key]


def gadget_action_sweep(
    tree: GameTree,
    kind: str,
    p_grid: Sequence[Number],
    model: Optional[BehavioralStrategy] = None,
) -> pd.DataFrame:
    """
    UP's resolved action probabilities per p, solved exactly.

    `trunk_kept` keeps the whole trunk (the restricted-response equilibrium
    itself); the gadget kinds resolve UP's subgame from that equilibrium's
    counterfactual values.
    """
    if kind not in SWEEP_KINDS:
        raise ConfigurationError(f"Unknown sweep kind {kind!r}; choose from {', '.join(SWEEP_KINDS)}")
    if len(tree.player_infosets(Player.UP)) != 1:
        raise StructuralError("The action sweep needs a game where UP has a single infoset")
    model = model or ce_gadget_model()
    actions = tree.player_infosets(Player.UP)[0].actions
    rows = []
    for p in p_grid:
        exact = _exact_p(p)
        if not 0 <= exact <= 1:
            raise ParameterError(f"p must lie in [0, 1], got {p}")
        probs = _resolved_up(tree, model, kind, exact)
        rows.append([float(exact)] + [float(v) for v in probs])
    frame = pd.DataFrame(rows, columns=["p"] + [f"action_{a}" for a in actions])
    logger.info(f"Swept {len(rows)} values of p with {kind} on {tree.name}")
    return frame


def resolved_actions(frame: pd.DataFrame, threshold: float = PURE_THRESHOLD) -> pd.Series:
    """Label per row: the pure action, or `mixed` when no action reaches `threshold`."""
    columns = [c for c in frame.columns if c.startswith("action_")]
    best = frame[columns].idxmax(axis=1).str.replace("action_", "", regex=False)
    return best.where(frame[columns].max(axis=1) >= threshold, "mixed")


def write_sweep(frame: pd.DataFrame, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False)
    return path

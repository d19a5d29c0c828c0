"""
continual depth-limited resolving against an opponent model.
// what this file handles //

- subgame partitioning into a tree of pieces (trunk first, one piece per border public state)
- the restricted-response game: a root chance picks the model copy or the free copy
- cdbr: best response piece by piece against the frozen model
- cdrnr: restricted response piece by piece, keeping every earlier piece in the solved game
- the trunk-error bound evaluators and the reach-balance check for the multi-round counterexample
"""

import math
import time
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Set, Tuple, Union

import numpy as np
import pandas as pd

from .cfr import CfrSolver, ConfigurationError, DepthLimitedGame, SolveConfig, SolveResult, solve, solve_game_value
from .config import config
from .game import (
    BehavioralStrategy,
    GameTree,
    Number,
    ParameterError,
    Player,
    StrategyProfile,
    StructuralError,
    TreeBuilder,
    exploitability,
    expected_utility,
    gain,
)
from .games import ce_rounds_continue_keys
from .logger import get_logger
from .valuefn import ValueFunction

logger = get_logger(__name__)

FIXED_PREFIX = "F/"
FREE_PREFIX = "P/"


# ─── partitioning ───────────────────────────────────────────────────────


@dataclass
class Piece:
    index: int
    parent: int
    root_state: int
    states: Tuple[int, ...]
    borders: Tuple[int, ...]
    level: int


@dataclass
class SubgamePartitioning:
    """Pieces in breadth-first order; piece 0 is the trunk."""

    tree: GameTree
    scheme: str
    pieces: List[Piece]
    piece_of_state: Dict[int, int]

    def path(self, index: int) -> List[Piece]:
        """Pieces from the trunk down to `index` inclusive."""
        out = []
        while index >= 0:
            out.append(self.pieces[index])
            index = self.pieces[index].parent
        return out[::-1]

    def trunk_states(self, index: int) -> Set[int]:
        """States of every piece on the path to `index`, the piece itself included."""
        return {s for piece in self.path(index) for s in piece.states}

    def leave_states(self, index: int) -> List[int]:
        """Borders of earlier path pieces that do not lead to `index`."""
        path = self.path(index)
        on_path = {piece.root_state for piece in path}
        return sorted(b for piece in path[:-1] for b in piece.borders if b not in on_path)

    def validate(self) -> None:
        seen: Dict[int, int] = {}
        for piece in self.pieces:
            for s in piece.states:
                if s in seen:
                    raise StructuralError(f"Public state {s} belongs to pieces {seen[s]} and {piece.index}")
                seen[s] = piece.index
            if set(piece.borders) & set(piece.states):
                raise StructuralError(f"Piece {piece.index} borders overlap its states")
        if len(seen) != len(self.tree.public_states):
            raise StructuralError("Partitioning does not cover every public state")
        for index in range(len(self.pieces)):
            if set(self.pieces[index].borders) & set(self.leave_states(index)):
                raise StructuralError(f"Piece {index} has states that are both border and leave")


def _admits(tree: GameTree, scheme: str, depth_limit: int, root_round: int,
            counts: Dict[int, Tuple[int, int]], ps_id: int) -> bool:
    if scheme == "whole_game":
        return True
    ps = tree.public_states[ps_id]
    if scheme == "by_round":
        rounds = {tree.nodes[n].round for n in ps.nodes}
        if len(rounds) > 1:
            raise StructuralError(f"Public state {ps_id} spans rounds {sorted(rounds)}; cannot cut by round")
        return rounds.pop() == root_round
    return all(counts[n][tree.nodes[n].player] < depth_limit for n in ps.decision_nodes)


def _own_counts(tree: GameTree, ps_id: int, counts: Dict[int, Tuple[int, int]], piece_root: bool) -> None:
    """Prior decisions of each player on the path, counted from the piece entry."""
    for n in tree.public_states[ps_id].nodes:
        node = tree.nodes[n]
        parent = node.parent
        if parent < 0 or (piece_root and n in tree.public_states[ps_id].entries):
            counts[n] = (0, 0)
            continue
        up, down = counts[parent]
        parent_player = tree.nodes[parent].player
        if parent_player is Player.UP:
            up += 1
        elif parent_player is Player.DOWN:
            down += 1
        counts[n] = (up, down)


def make_partitioning(tree: GameTree, scheme: str) -> SubgamePartitioning:
    """
    Split the public-state tree into pieces.

    Args:
        tree: game to split
        scheme: `whole_game`, `by_round` or `by_own_actions:<k>`; with the last
            one a piece takes a public state only while every decision node in
            it has fewer than k earlier decisions of its acting player inside
            the piece

    Returns:
        validated SubgamePartitioning
    """
    name, _, argument = scheme.partition(":")
    depth_limit = 0
    if name == "by_own_actions":
        try:
            depth_limit = int(argument)
        except ValueError:
            raise ConfigurationError(f"Lookahead must be an integer in {scheme!r}") from None
        if depth_limit < 1:
            raise ParameterError(f"Lookahead must be at least 1, got {depth_limit}")
    elif name not in ("whole_game", "by_round") or argument:
        raise ConfigurationError(f"Unknown partitioning scheme {scheme!r}")

    pieces: List[Piece] = []
    piece_of_state: Dict[int, int] = {}
    root_ps = tree.nodes[0].public_state
    queue: List[Tuple[int, int, int]] = [(root_ps, -1, 0)]
    head = 0
    while head < len(queue):
        root_state, parent, level = queue[head]
        head += 1
        index = len(pieces)
        counts: Dict[int, Tuple[int, int]] = {}
        _own_counts(tree, root_state, counts, piece_root=True)
        root_round = tree.public_states[root_state].round
        states, borders, stack = [], [], [root_state]
        while stack:
            current = stack.pop()
            states.append(current)
            piece_of_state[current] = index
            for child in tree.public_states[current].children:
                _own_counts(tree, child, counts, piece_root=False)
                if _admits(tree, name, depth_limit, root_round, counts, child):
                    stack.append(child)
                else:
                    borders.append(child)
        pieces.append(Piece(index, parent, root_state, tuple(sorted(states)), tuple(sorted(borders)), level))
        queue.extend((b, index, level + 1) for b in sorted(borders))

    partitioning = SubgamePartitioning(tree, scheme, pieces, piece_of_state)
    partitioning.validate()
    logger.debug(f"Partitioned {tree.name} by {scheme} into {len(pieces)} pieces")
    return partitioning


# ─── restricted-response game ───────────────────────────────────────────


@dataclass
class RnrGame:
    """
    Base game doubled under a root chance node.

    The first copy (probability p) has DOWN frozen to the model, the second
    is free. UP cannot tell the copies apart, so UP's infosets keep their base
    keys; DOWN's observations are prefixed with `F/` or `P/`.
    """

    base: GameTree
    tree: GameTree
    p: Number
    fixed_model: BehavioralStrategy

    @property
    def fixed_offset(self) -> int:
        return 1

    @property
    def free_offset(self) -> int:
        return 1 + len(self.base)

    def fixed_node(self, base_node: int) -> int:
        return self.fixed_offset + base_node

    def free_node(self, base_node: int) -> int:
        return self.free_offset + base_node

    def base_node(self, node: int) -> Tuple[str, int]:
        """(copy, base node id) of an RNR node; the root maps to ("", -1)."""
        if node == 0:
            return "", -1
        if node < self.free_offset:
            return "F", node - self.fixed_offset
        return "P", node - self.free_offset

    def model_strategy(self) -> BehavioralStrategy:
        return BehavioralStrategy(
            Player.DOWN, {f"D:{FIXED_PREFIX}{k[2:]}": v.copy() for k, v in self.fixed_model.items()}
        )

    def free_strategy(self, base_strategy: BehavioralStrategy) -> BehavioralStrategy:
        """DOWN's base strategy moved onto the free copy."""
        return BehavioralStrategy(
            Player.DOWN, {f"D:{FREE_PREFIX}{k[2:]}": v.copy() for k, v in base_strategy.items()}
        )

    def base_strategy(self, free_strategy: BehavioralStrategy) -> BehavioralStrategy:
        prefix = f"D:{FREE_PREFIX}"
        return BehavioralStrategy(
            Player.DOWN, {"D:" + k[len(prefix):]: v.copy() for k, v in free_strategy.items() if k.startswith(prefix)}
        )

    def utility(self, sigma_up: BehavioralStrategy, sigma_down: BehavioralStrategy) -> Number:
        """UP's utility with DOWN playing `sigma_down` (base keys) in the free copy."""
        down = self.model_strategy().updated(self.free_strategy(sigma_down))
        return expected_utility(self.tree, StrategyProfile(sigma_up, down))


def make_rnr(tree: GameTree, fixed_model: BehavioralStrategy, p: Number) -> RnrGame:
    """Build the restricted-response game of `tree` against `fixed_model` with model weight `p`."""
    if not 0 <= p <= 1:
        raise ParameterError(f"Model weight p must lie in [0, 1], got {p}")
    if fixed_model.owner is not Player.DOWN:
        raise ParameterError("The opponent model must be a DOWN strategy")
    fixed_model.require_complete(tree)
    exact = isinstance(p, Fraction)
    weights = (p, 1 - p) if exact else (float(p), 1.0 - float(p))

    builder = TreeBuilder(f"rnr({tree.name},p={p})")
    builder.add(-1, None, Player.CHANCE, actions=("F", "P"), chance_probs=weights,
                observations=(tree.root.observations[0], ""), round=tree.root.round)
    for label, prefix in (("F", FIXED_PREFIX), ("P", FREE_PREFIX)):
        offset = len(builder.nodes) - 1
        for node in tree.nodes:
            parent = 0 if node.parent < 0 else node.parent + offset + 1
            builder.add(
                parent,
                label if node.parent < 0 else node.action,
                node.player,
                actions=node.actions,
                chance_probs=node.chance_probs,
                utility=node.utility,
                observations=(node.observations[0], prefix + node.observations[1]),
                round=node.round,
            )
    rnr_tree = builder.build(validate=False, meta={**tree.meta, "rnr_of": tree.name, "p": p})
    logger.debug(f"Built restricted-response game for {tree.name} with p={p}: {len(rnr_tree)} nodes")
    return RnrGame(tree, rnr_tree, p, fixed_model)


# ─── diagnostics ────────────────────────────────────────────────────────


@dataclass
class StepRecord:
    step: int
    piece: int
    level: int
    solved_nodes: int
    border_infosets: int
    leave_infosets: int
    eps_r: float
    wall_time_s: float


@dataclass
class ResolveDiagnostics:
    algorithm: str
    scheme: str
    p: Optional[float] = None
    records: List[StepRecord] = field(default_factory=list)
    eps_v: float = 0.0

    COLUMNS = ("step", "piece", "level", "solved_nodes", "border_infosets",
               "leave_infosets", "eps_r", "wall_time_s")

    @property
    def steps(self) -> int:
        return len(self.records)

    @property
    def max_eps_r(self) -> float:
        return max((r.eps_r for r in self.records), default=0.0)

    def frame(self) -> pd.DataFrame:
        return pd.DataFrame([[getattr(r, c) for c in self.COLUMNS] for r in self.records],
                            columns=list(self.COLUMNS))

    def write_csv(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        self.frame().to_csv(path, index=False)
        return path


def _entry_infosets(tree: GameTree, states: Sequence[int]) -> int:
    return sum(len(tree.augmented_entry_keys(s, p)) for s in states for p in (Player.UP, Player.DOWN))


def _path_reaches(tree: GameTree, nodes: Sequence[int], up: Dict[str, np.ndarray],
                  down: BehavioralStrategy) -> np.ndarray:
    """(pi_up, pi_down, pi_chance) of `nodes` under UP's emitted strategy and DOWN's model."""
    out = np.ones((len(nodes), 3))
    for row, n in enumerate(nodes):
        path = tree.path(n)
        for parent, child in zip(path, path[1:]):
            node = tree.nodes[parent]
            a = node.children.index(child)
            if node.is_chance:
                out[row, 2] *= float(node.chance_probs[a])
                continue
            key = tree.infosets[node.infoset].key
            source = up if node.player is Player.UP else down
            if key not in source:
                raise StructuralError(f"No strategy for {key} above node {n}")
            out[row, int(node.player)] *= float(source[key][a])
    return out


def _piece_up_keys(tree: GameTree, piece: Piece) -> List[str]:
    keys: Dict[str, None] = {}
    for s in piece.states:
        for n in tree.public_states[s].decision_nodes:
            node = tree.nodes[n]
            if node.player is Player.UP:
                keys.setdefault(tree.infosets[node.infoset].key, None)
    return list(keys)


def _inline(value_function: Optional[ValueFunction]) -> bool:
    return value_function is None or value_function.inline


# ─── drivers ────────────────────────────────────────────────────────────


def cdbr(
    tree: GameTree,
    fixed_model: BehavioralStrategy,
    partitioning: SubgamePartitioning,
    value_function: Optional[ValueFunction] = None,
    iterations: Optional[int] = None,
) -> Tuple[BehavioralStrategy, ResolveDiagnostics]:
    """
    Continual depth-limited best response of UP to `fixed_model`.

    Every piece is solved on its own, rooted at its entry nodes with the
    reaches of UP's already emitted strategy and the model. DOWN is frozen
    inside the piece; below its borders the value function (or, inline, an
    equilibrium continuation) takes over. The best CFR+ iterate is emitted.
    """
    fixed_model.require_complete(tree)
    iterations = iterations or config.solver.iterations
    inline = _inline(value_function)
    emitted: Dict[str, np.ndarray] = {}
    diagnostics = ResolveDiagnostics("cdbr", partitioning.scheme)

    for step, piece in enumerate(partitioning.pieces):
        started = time.perf_counter()
        keys = _piece_up_keys(tree, piece)
        if piece.parent < 0:
            roots, reaches = [0], np.array([[1.0, 1.0, 1.0]])
        else:
            roots = list(tree.public_states[piece.root_state].entries)
            reaches = _path_reaches(tree, roots, emitted, fixed_model)
        game = DepthLimitedGame(tree, piece.states, roots, reaches, expand=inline)
        eps_r = 0.0
        if keys:
            frozen = fixed_model.restricted(game.region_keys(Player.DOWN, continuation=False))
            settings = SolveConfig(iterations=iterations, value_function=None if inline else value_function,
                                   frozen=(frozen,), track_best_iterate=True)
            solver = CfrSolver(game, settings)
            solver.iterate(iterations)
            result = solver.result()
            strategy = result.best_iterate
            if strategy is None:
                strategy = result.average_strategy.sigma_up
            emitted.update({k: np.asarray(strategy[k], dtype=np.float64) for k in keys})
            eps_r = solver.regret_bound(Player.UP, keys)
        diagnostics.records.append(StepRecord(
            step=step, piece=piece.index, level=piece.level, solved_nodes=game.size,
            border_infosets=_entry_infosets(tree, piece.borders), leave_infosets=0,
            eps_r=eps_r, wall_time_s=time.perf_counter() - started,
        ))
        logger.info(f"cdbr step {step} on {tree.name}: piece {piece.index}, {game.size} nodes, eps_r {eps_r:.3e}",
                    extra={"step": step, "game": tree.name})
    if not inline:
        diagnostics.eps_v = value_function.max_epsilon
    return BehavioralStrategy(Player.UP, emitted), diagnostics


def cdrnr(
    tree: GameTree,
    fixed_model: BehavioralStrategy,
    p: Number,
    partitioning: SubgamePartitioning,
    value_function: Optional[ValueFunction] = None,
    iterations: Optional[int] = None,
) -> Tuple[BehavioralStrategy, ResolveDiagnostics]:
    """
    Continual depth-limited restricted response.

    Pieces of the restricted-response game are visited breadth first. Each
    step solves the current piece together with every piece on its path
    (nothing is discarded), UP frozen on what it already emitted and DOWN
    frozen to the model inside the model copy's region. Below the piece
    borders and the leave states of the path both copies continue with the
    value function (or, inline, an equilibrium continuation), as in cdbr.
    The best iterate below the piece entries is emitted.
    """
    rnr = make_rnr(tree, fixed_model, p)
    rtree = rnr.tree
    parts = make_partitioning(rtree, partitioning.scheme)
    iterations = iterations or config.solver.iterations
    inline = _inline(value_function)
    model = rnr.model_strategy()
    vf = None if inline else value_function.rebind(rtree)
    emitted: Dict[str, np.ndarray] = {}
    diagnostics = ResolveDiagnostics("cdrnr", partitioning.scheme, float(p))

    for step, piece in enumerate(parts.pieces):
        started = time.perf_counter()
        keys = _piece_up_keys(rtree, piece)
        leaves = parts.leave_states(piece.index)
        game = DepthLimitedGame(rtree, parts.trunk_states(piece.index), expand=inline)
        eps_r = 0.0
        if keys:
            entries = (0,) if piece.parent < 0 else tuple(rtree.public_states[piece.root_state].entries)
            settings = SolveConfig(
                iterations=iterations, value_function=vf,
                frozen=(BehavioralStrategy(Player.UP, emitted),
                        model.restricted(game.region_keys(Player.DOWN, continuation=False))),
                track_best_iterate=True, track_roots=entries,
            )
            solver = CfrSolver(game, settings)
            solver.iterate(iterations)
            result = solver.result()
            strategy = result.best_iterate
            if strategy is None:
                strategy = result.average_strategy.sigma_up
            emitted.update({k: np.asarray(strategy[k], dtype=np.float64) for k in keys})
            eps_r = solver.regret_bound(Player.UP, keys)
        diagnostics.records.append(StepRecord(
            step=step, piece=piece.index, level=piece.level, solved_nodes=game.size,
            border_infosets=_entry_infosets(rtree, piece.borders),
            leave_infosets=_entry_infosets(rtree, leaves),
            eps_r=eps_r, wall_time_s=time.perf_counter() - started,
        ))
        logger.info(f"cdrnr step {step} on {tree.name} (p={p}): {game.size} nodes, eps_r {eps_r:.3e}",
                    extra={"step": step, "game": tree.name})
    if vf is not None:
        diagnostics.eps_v = vf.max_epsilon
    return BehavioralStrategy(Player.UP, emitted), diagnostics


def solve_rnr(rnr: RnrGame, iterations: Optional[int] = None) -> Tuple[BehavioralStrategy, SolveResult]:
    """
    The whole restricted-response game in one CFR+ run.

    Scored and emitted exactly like the single step of a whole_game cdrnr
    run: the best iterate against a responding DOWN, the average if UP
    never had a choice.
    """
    settings = SolveConfig(iterations=iterations or config.solver.iterations,
                           frozen=(rnr.model_strategy(),), track_best_iterate=True)
    result = solve(DepthLimitedGame(rnr.tree, expand=True), settings)
    strategy = result.best_iterate if result.best_iterate is not None else result.average_strategy.sigma_up
    return strategy, result


def rnr_full(
    tree: GameTree,
    fixed_model: BehavioralStrategy,
    p: Number,
    iterations: Optional[int] = None,
    game_value: Optional[float] = None,
) -> Tuple[BehavioralStrategy, float, float]:
    """Restricted response solved without depth limit; returns (strategy, gain, exploitability)."""
    strategy, _ = solve_rnr(make_rnr(tree, fixed_model, p), iterations)
    value = solve_game_value(tree) if game_value is None else game_value
    return strategy, float(gain(tree, strategy, fixed_model, value)), float(exploitability(tree, strategy, value))


# ─── bounds ─────────────────────────────────────────────────────────────


@dataclass
class TheoremBounds:
    """Inputs of the model-gain and exploitability bounds of a continual run."""

    p: float
    eps_v: float
    eps_r: float
    steps: int
    border_infosets: Sequence[int] = ()
    leave_infosets: Sequence[int] = ()
    delta: float = 0.0
    actions: int = 0
    trunk_infosets: int = 0
    subgames: int = 0
    eps_subgame: float = 0.0

    def __post_init__(self) -> None:
        if not 0 <= self.p <= 1:
            raise ParameterError(f"p must lie in [0, 1], got {self.p}")
        values = [self.eps_v, self.eps_r, self.steps, self.delta, self.actions,
                  self.trunk_infosets, self.subgames, self.eps_subgame,
                  *self.border_infosets, *self.leave_infosets]
        if min(values) < 0:
            raise ParameterError("Bound inputs must be nonnegative")

    @classmethod
    def from_diagnostics(cls, diagnostics: ResolveDiagnostics, eps_v: Optional[float] = None,
                         p: Optional[float] = None) -> "TheoremBounds":
        """Bounds of a run; `eps_v` defaults to the largest error the value function reported."""
        if p is None:
            p = 1.0 if diagnostics.p is None else diagnostics.p
        return cls(
            p=p,
            eps_v=diagnostics.eps_v if eps_v is None else eps_v,
            eps_r=diagnostics.max_eps_r,
            steps=diagnostics.steps,
            border_infosets=[r.border_infosets for r in diagnostics.records],
            leave_infosets=[r.leave_infosets for r in diagnostics.records],
        )

    def error_terms(self, variant: str = "statement") -> float:
        """
        Accumulated value-function and regret error.

        `statement` weights leave infosets by (1 - p); `proof` does not.
        """
        if variant not in ("statement", "proof"):
            raise ParameterError(f"Unknown bound variant {variant!r}")
        leave_weight = (1 - self.p) if variant == "statement" else 1.0
        return (sum(self.leave_infosets) * leave_weight * self.eps_v
                + self.steps * self.eps_r
                + sum(self.border_infosets) * self.eps_v)


def theorem1_slack(model_utility: float, bounds: TheoremBounds, game_value: float,
                   variant: str = "statement") -> float:
    """Utility against the model plus error terms minus the game value; never negative for a valid run."""
    return model_utility + bounds.error_terms(variant) - game_value


def theorem2_bound(gain_value: float, bounds: TheoremBounds, variant: str = "statement") -> float:
    """Exploitability bound gain * p / (1 - p) + error terms; infinite for p = 1."""
    if bounds.p >= 1:
        return math.inf
    return gain_value * bounds.p / (1 - bounds.p) + bounds.error_terms(variant)


def theorem2_slack(gain_value: float, measured_exploitability: float, bounds: TheoremBounds,
                   variant: str = "statement") -> float:
    return theorem2_bound(gain_value, bounds, variant) - measured_exploitability


# ─── reach balance on the multi-round counterexample ────────────────────


def _continue_probs(tree: GameTree, strategy: BehavioralStrategy) -> List[Number]:
    return [strategy[k][1] for k in ce_rounds_continue_keys(tree)]


def reach_balance_check(rnr: RnrGame, sigma_prime: BehavioralStrategy, round_index: int) -> Tuple[Number, Number]:
    """
    Reach balance after `round_index` rounds in the half-weighted restricted game.

    Returns (prod of free-copy continue probs + prod of model continue probs,
    1 / 2**(n-1)); the stay payoffs only make UP indifferent when both match.
    """
    if not str(rnr.base.name).startswith("ce_rounds"):
        raise StructuralError(f"Reach balance is defined for ce_rounds, not {rnr.base.name}")
    if rnr.p != Fraction(1, 2):
        raise ParameterError(f"Reach balance needs p = 1/2, got {rnr.p}")
    rounds = int(rnr.base.meta["rounds"])
    if not 1 <= round_index <= rounds:
        raise ParameterError(f"Round index must lie in 1..{rounds}, got {round_index}")
    free = _continue_probs(rnr.base, sigma_prime)
    model = _continue_probs(rnr.base, rnr.fixed_model)
    lhs = math.prod(free[:round_index]) + math.prod(model[:round_index])
    exact = all(isinstance(v, Fraction) for v in free[:round_index] + model[:round_index])
    target = Fraction(1, 2 ** (round_index - 1)) if exact else 1.0 / 2 ** (round_index - 1)
    return lhs, target


def reach_balance_search(
    sigma: Sequence[Optional[Number]],
    final_round: int,
    model_continue: Number = Fraction(3, 5),
    resolution: float = 1e-4,
) -> List[Tuple[float, ...]]:
    """
    Grid search for the balance of `final_round` with at most one freed round.

    `sigma` holds the free-copy continue probability per round, None for the
    freed one. Returns every satisfying assignment on the grid (one entry if
    nothing is freed and the frozen values already balance).
    """
    if final_round < 1 or final_round > len(sigma):
        raise ParameterError(f"Final round {final_round} outside 1..{len(sigma)}")
    window = list(sigma[:final_round])
    free = [i for i, v in enumerate(window) if v is None]
    if len(free) > 1:
        raise ParameterError("At most one round can be freed")
    target = 1.0 / 2 ** (final_round - 1)
    model_term = float(model_continue) ** final_round
    if not free:
        lhs = math.prod(float(v) for v in window) + model_term
        return [tuple(float(v) for v in window)] if abs(lhs - target) <= resolution else []
    others = math.prod(float(v) for v in window if v is not None)
    grid = np.linspace(0.0, 1.0, int(round(1 / resolution)) + 1)
    hits = grid[np.abs(others * grid + model_term - target) <= resolution]
    out = []
    for x in hits:
        assignment = [float(v) if v is not None else float(x) for v in window]
        out.append(tuple(assignment))
    return out

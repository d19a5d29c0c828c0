"""
CFR+ solver for full and depth-limited games.
// what this file handles //

- DepthLimitedGame: the part of a game tree solved in one run (roots, leaf public states, continuation)
- CfrSolver: vectorized CFR+ with alternating updates, regret clipping and linear averaging
- frozen infosets, best-iterate tracking, the exhaustive trunk oracle and its bound
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import TYPE_CHECKING, Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from .config import config
from .game import (
    BehavioralStrategy,
    GameError,
    GameTree,
    Node,
    ParameterError,
    Player,
    Range,
    StrategyProfile,
    StructuralError,
    best_response,
    best_response_core,
    pure_strategy,
)
from .logger import get_logger

if TYPE_CHECKING:
    from .valuefn import ValueFunction

logger = get_logger(__name__)

EXHAUSTIVE_LIMIT = 4096


class ConfigurationError(GameError):
    """Raised for inconsistent solver setups and malformed spec strings."""


class DepthLimitedGame:
    """
    Part of a game tree solved in one CFR+ run.

    The region is a set of public states below `roots`. Entry nodes of the
    public states directly below the region are leaves valued by a value
    function. With `expand=True` their subtrees are solved together with the
    region instead, which realizes the optimal value function as an
    equilibrium continuation.

    Root reaches are (pi_up, pi_down, pi_chance) from the tree root, so that
    ranges at leaves are the same as in the full game.
    """

    def __init__(
        self,
        tree: GameTree,
        states: Optional[Iterable[int]] = None,
        roots: Optional[Sequence[int]] = None,
        root_reaches: Optional[Sequence[Sequence[float]]] = None,
        expand: bool = False,
    ):
        self.tree = tree
        n = len(tree)
        if states is None:
            states = range(len(tree.public_states))
        self.states = tuple(sorted(set(states)))
        state_mask = np.zeros(len(tree.public_states), dtype=bool)
        state_mask[list(self.states)] = True

        if roots is None:
            roots, root_reaches = [0], [(1.0, 1.0, 1.0)]
        elif root_reaches is None:
            raise ConfigurationError("Rebased regions need root reaches")
        self.roots = tuple(int(r) for r in roots)
        self.root_reaches = np.asarray(root_reaches, dtype=np.float64).reshape(len(self.roots), 3)
        self.root_weights = self.root_reaches.prod(axis=1)

        below = np.zeros(n, dtype=bool)
        for r in self.roots:
            below[r:tree.subtree_end[r]] = True
        inside = state_mask[tree.node_public_states] & below

        leaf = np.zeros(n, dtype=bool)
        leaf_states = []
        for ps in sorted({c for s in self.states for c in tree.public_states[s].children if not state_mask[c]}):
            entries = [e for e in tree.public_states[ps].entries if below[e]]
            if entries:
                leaf[entries] = True
                leaf_states.append(ps)
        self.leaf_states = tuple(leaf_states)
        self.expanded = expand

        continuation = np.zeros(n, dtype=bool)
        if expand:
            for e in np.flatnonzero(leaf):
                continuation[e:tree.subtree_end[e]] = True
            leaf[:] = False
        included = inside | leaf | continuation
        self._build_local(included, leaf, continuation)

    def _build_local(self, included: np.ndarray, leaf: np.ndarray, continuation: np.ndarray) -> None:
        tree = self.tree
        self.glob = np.flatnonzero(included)
        m = len(self.glob)
        g2l = np.full(len(tree), -1, dtype=np.int64)
        g2l[self.glob] = np.arange(m)

        parents = tree.parents[self.glob]
        safe = np.maximum(parents, 0)
        self.parent = np.where(parents >= 0, g2l[safe], -1)
        self.root_local = g2l[list(self.roots)]
        if (self.root_local < 0).any():
            raise StructuralError("Region roots are outside the region")
        self.parent[self.root_local] = -1
        orphans = self.parent < 0
        orphans[self.root_local] = False
        if orphans.any():
            raise StructuralError(f"Region is not closed under parents at node {int(self.glob[orphans][0])}")

        parent_players = np.where(self.parent >= 0, tree.players[safe], -1)
        self.parent_component = np.where(parent_players == int(Player.CHANCE), 2, parent_players)
        self.edge_slots = np.where(self.parent >= 0, tree.edge_slots[self.glob], -1)
        self.edge_probs = tree.edge_probs[self.glob]
        self.decision_edges = np.flatnonzero(self.edge_slots >= 0)
        self.is_leaf = leaf[self.glob]
        self.terminal = np.flatnonzero(tree.players[self.glob] == int(Player.TERMINAL))
        self.utilities = tree.utilities[self.glob]
        self.node_infosets = tree.node_infosets[self.glob]

        players = tree.players[self.glob]
        acting = ~self.is_leaf
        self.decisions = [np.flatnonzero((players == int(p)) & acting) for p in (Player.UP, Player.DOWN)]
        self.player_edges = [np.flatnonzero(parent_players == int(p)) for p in (Player.UP, Player.DOWN)]
        self.infoset_ids = [np.unique(self.node_infosets[d]) for d in self.decisions]
        self.continuation_infosets = set(
            int(i) for i in np.unique(tree.node_infosets[continuation & (tree.node_infosets >= 0)])
        )

        depth = np.zeros(m, dtype=np.int64)
        for i in range(m):
            if self.parent[i] >= 0:
                depth[i] = depth[self.parent[i]] + 1
        order = np.argsort(depth, kind="stable")
        bounds = np.searchsorted(depth[order], np.arange(int(depth.max()) + 2))
        self.levels = [order[bounds[d]:bounds[d + 1]] for d in range(int(depth.max()) + 1)]

        self.leaf_groups: Dict[int, np.ndarray] = {}
        self.leaf_keys: Dict[int, Tuple[List[str], List[str]]] = {}
        for ps in self.leaf_states if not self.expanded else ():
            members = np.flatnonzero(self.is_leaf & (tree.node_public_states[self.glob] == ps))
            self.leaf_groups[ps] = members
            self.leaf_keys[ps] = tuple(
                [tree.nodes[int(self.glob[l])].augmented_key(p) for l in members] for p in (Player.UP, Player.DOWN)
            )

    @property
    def size(self) -> int:
        return len(self.glob)

    def region_keys(self, player: Player, continuation: bool = True) -> List[str]:
        """Infoset keys of `player` acting in the region, optionally without the continuation."""
        ids = self.infoset_ids[player]
        return [self.tree.infosets[i].key for i in ids if continuation or int(i) not in self.continuation_infosets]

    def __repr__(self) -> str:
        return (f"DepthLimitedGame({self.tree.name!r}, nodes={self.size}, "
                f"leaf_states={len(self.leaf_states)}, expanded={self.expanded})")


@dataclass
class SolveConfig:
    """Settings of one CFR+ run; `frozen` strategies are never updated."""

    iterations: int = field(default_factory=lambda: config.solver.iterations)
    value_function: Optional["ValueFunction"] = None
    frozen: Tuple[BehavioralStrategy, ...] = ()
    track_best_iterate: bool = False
    best_iterate_every: int = field(default_factory=lambda: config.solver.best_iterate_every)
    # nodes whose subtrees score the iterates; None means the region roots
    track_roots: Optional[Tuple[int, ...]] = None


@dataclass
class IterationRecord:
    iteration: int
    expl_estimate: float
    best_iterate_utility: float


@dataclass
class SolveResult:
    average_strategy: StrategyProfile
    best_iterate: Optional[BehavioralStrategy]
    best_iterate_utility: Optional[float]
    final_exploitability_estimate: float
    regret_bound: float
    iterations: int
    iteration_log: List[IterationRecord] = field(default_factory=list)

    def log_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            [(r.iteration, r.expl_estimate, r.best_iterate_utility) for r in self.iteration_log],
            columns=["iter", "expl_estimate", "best_iterate_utility"],
        )

    def write_log(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        self.log_frame().to_csv(path, index=False)
        return path


class CfrSolver:
    """
    CFR+ over a DepthLimitedGame.

    Strategies live in flat slot vectors (one slot per infoset action) of the
    underlying tree. Each pass propagates reaches down the region level by
    level and backs values up with np.bincount.
    """

    def __init__(self, game: DepthLimitedGame, settings: SolveConfig):
        if game.leaf_states and not game.expanded and settings.value_function is None:
            raise ConfigurationError(
                f"Depth-limited game has {len(game.leaf_states)} border public states but no value function"
            )
        if settings.iterations < 1:
            raise ParameterError(f"Iterations must be positive, got {settings.iterations}")
        self.game = game
        self.settings = settings
        tree = game.tree
        slots = tree.slot_count
        self.regrets = np.zeros(slots)
        self.average = np.zeros(slots)
        self.frozen = np.zeros(slots, dtype=bool)
        self.fixed = np.zeros(slots)
        self.uniform = 1.0 / tree.infoset_sizes[tree.slot_infosets] if slots else np.zeros(0)

        region = set(int(i) for ids in game.infoset_ids for i in ids)
        for strategy in settings.frozen:
            for key, vector in strategy.items():
                index = tree.infoset_index.get(key)
                if index is None or index not in region:
                    continue
                infoset = tree.infosets[index]
                if infoset.player is not strategy.owner:
                    raise ConfigurationError(f"Frozen infoset {key} does not belong to {strategy.owner.name}")
                self.frozen[infoset.slot:infoset.slot + infoset.size] = True
                self.fixed[infoset.slot:infoset.slot + infoset.size] = [float(p) for p in vector]

        self.region_slots = [np.isin(tree.slot_infosets, ids) for ids in game.infoset_ids]
        self.free = [mask & ~self.frozen for mask in self.region_slots]
        self.iteration = 0
        self.best_utility = -math.inf
        self.best_sigma: Optional[np.ndarray] = None
        self.log: List[IterationRecord] = []
        self.tracked = game.root_local
        if settings.track_roots is not None:
            roots = np.asarray(settings.track_roots, dtype=np.int64)
            self.tracked = np.searchsorted(game.glob, roots)
            if (self.tracked >= game.size).any() or (game.glob[self.tracked] != roots).any():
                raise ConfigurationError("Tracked roots must lie inside the region")

    # ─── passes ─────────────────────────────────────────────────────────

    def current_strategy(self) -> np.ndarray:
        tree = self.game.tree
        totals = np.bincount(tree.slot_infosets, weights=self.regrets,
                             minlength=len(tree.infosets))[tree.slot_infosets]
        sigma = np.where(totals > 0, self.regrets / np.where(totals > 0, totals, 1.0), self.uniform)
        sigma[self.frozen] = self.fixed[self.frozen]
        return sigma

    def _reaches(self, sigma: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        g = self.game
        factor = g.edge_probs.copy()
        factor[g.decision_edges] = sigma[g.edge_slots[g.decision_edges]]
        reach = np.ones((3, g.size))
        reach[:, g.root_local] = g.root_reaches.T
        for level in g.levels[1:]:
            reach[:, level] = reach[:, g.parent[level]]
            reach[g.parent_component[level], level] *= factor[level]
        return reach, factor

    def _values(self, reach: np.ndarray, factor: np.ndarray, player: Player) -> np.ndarray:
        """Node values in UP's utility; leaves hold the value function's per-node share for `player`."""
        g = self.game
        values = np.zeros(g.size)
        values[g.terminal] = g.utilities[g.terminal]
        if g.leaf_groups:
            self._leaf_values(reach, player, values)
        for level in reversed(g.levels[1:]):
            values += np.bincount(g.parent[level], weights=factor[level] * values[level], minlength=g.size)
        return values

    def _leaf_values(self, reach: np.ndarray, player: Player, out: np.ndarray) -> None:
        g = self.game
        vf = self.settings.value_function
        opponent = player.opponent
        sign = 1.0 if player is Player.UP else -1.0
        for ps, members in g.leaf_groups.items():
            ranges = []
            for p in (Player.UP, Player.DOWN):
                reaches: Dict[str, float] = {}
                for key, local in zip(g.leaf_keys[ps][p], members):
                    reaches.setdefault(key, float(min(max(reach[p, local], 0.0), 1.0)))
                ranges.append(Range(ps, p, reaches))
            result = vf.evaluate(vf.query(ps, ranges[0], ranges[1]))
            cf_values = result.values(player)
            keys = g.leaf_keys[ps][player]
            weights = reach[opponent, members] * reach[2, members]
            totals: Dict[str, float] = {}
            for key, weight in zip(keys, weights):
                totals[key] = totals.get(key, 0.0) + weight
            for key, local in zip(keys, members):
                denominator = totals[key]
                out[local] = sign * cf_values.get(key, 0.0) / denominator if denominator > 0 else 0.0

    def _update(self, player: Player, sigma: np.ndarray, reach: np.ndarray, values: np.ndarray) -> None:
        g = self.game
        tree = g.tree
        sign = 1.0 if player is Player.UP else -1.0
        edges = g.player_edges[player]
        parents = g.parent[edges]
        weights = sign * reach[player.opponent, parents] * reach[2, parents] * values[edges]
        cf_values = np.bincount(g.edge_slots[edges], weights=weights, minlength=tree.slot_count)
        infoset_values = np.bincount(tree.slot_infosets, weights=sigma * cf_values, minlength=len(tree.infosets))
        free = self.free[player]
        delta = cf_values - infoset_values[tree.slot_infosets]
        self.regrets[free] = np.maximum(self.regrets[free] + delta[free], 0.0)

        own = np.zeros(len(tree.infosets))
        decisions = g.decisions[player]
        np.maximum.at(own, g.node_infosets[decisions], reach[player, decisions])
        self.average[free] += self.iteration * own[tree.slot_infosets[free]] * sigma[free]

    def node_values(self, sigma: np.ndarray) -> np.ndarray:
        """UP's expected utility below every region node (local order) under `sigma`."""
        reach, factor = self._reaches(sigma)
        return self._values(reach, factor, Player.UP)

    def evaluate(self, sigma: Optional[np.ndarray] = None) -> float:
        """Expected utility to UP of `sigma` (default: current strategy) over the region."""
        sigma = self.current_strategy() if sigma is None else sigma
        values = self.node_values(sigma)
        return float(self.game.root_weights @ values[self.game.root_local])

    def average_sigma(self) -> np.ndarray:
        """Normalized average strategy as a slot vector; frozen slots keep their fixed values."""
        tree = self.game.tree
        totals = np.bincount(tree.slot_infosets, weights=self.average,
                             minlength=len(tree.infosets))[tree.slot_infosets]
        sigma = np.where(totals > 0, self.average / np.where(totals > 0, totals, 1.0), self.uniform)
        sigma[self.frozen] = self.fixed[self.frozen]
        return sigma

    # ─── iteration ──────────────────────────────────────────────────────

    def iterate(self, iterations: int) -> None:
        for _ in range(iterations):
            self.iteration += 1
            for player in (Player.UP, Player.DOWN):
                if not self.free[player].any():
                    continue
                sigma = self.current_strategy()
                reach, factor = self._reaches(sigma)
                values = self._values(reach, factor, player)
                if player is Player.UP and self.settings.track_best_iterate:
                    self._track(sigma, reach, values)
                self._update(player, sigma, reach, values)
            if self.iteration & (self.iteration - 1) == 0:
                self._checkpoint()

    def _track(self, sigma: np.ndarray, reach: np.ndarray, values: np.ndarray) -> None:
        g = self.game
        if g.expanded:
            every = max(1, self.settings.best_iterate_every)
            if self.iteration != 1 and self.iteration % every:
                return
        weights = reach[:, self.tracked].prod(axis=0)
        if g.expanded and self.free[Player.DOWN].any():
            utility = self._utility_against_response(sigma, reach, weights)
        else:
            utility = float(weights @ values[self.tracked])
        if utility > self.best_utility:
            self.best_utility = utility
            self.best_sigma = sigma.copy()

    def _utility_against_response(self, sigma: np.ndarray, reach: np.ndarray, weights: np.ndarray) -> float:
        """UP's utility below the tracked roots when DOWN best-responds in its free infosets."""
        g = self.game
        tree = g.tree

        def policy(node: Node) -> Sequence[float]:
            if node.is_chance:
                return node.chance_probs
            infoset = tree.infosets[node.infoset]
            return sigma[infoset.slot:infoset.slot + infoset.size]

        free = {tree.infosets[int(i)].key for i in g.infoset_ids[Player.DOWN]
                if self.free[Player.DOWN][tree.infosets[int(i)].slot]}
        starts = [int(n) for n in g.glob[self.tracked]]
        start_reaches = reach[0, self.tracked] * reach[2, self.tracked]
        _, values, _ = best_response_core(tree, policy, Player.DOWN, starts, list(start_reaches), free=free)
        return float(-sum(w * values[s] for w, s in zip(weights, starts)))

    def _checkpoint(self) -> None:
        estimate = self.regret_bound(Player.UP) + self.regret_bound(Player.DOWN)
        best = self.best_utility if self.best_sigma is not None else math.nan
        self.log.append(IterationRecord(self.iteration, estimate, best))
        logger.debug(f"CFR+ iteration {self.iteration}: regret estimate {estimate:.3e}")

    # ─── outputs ────────────────────────────────────────────────────────

    def regret_bound(self, player: Player, keys: Optional[Iterable[str]] = None) -> float:
        """Sum over free infosets of the largest clipped regret, divided by the iteration count."""
        if self.iteration == 0:
            return 0.0
        tree = self.game.tree
        mask = self.free[player].copy()
        if keys is not None:
            wanted = np.zeros(len(tree.infosets), dtype=bool)
            wanted[[tree.infoset_index[k] for k in keys if k in tree.infoset_index]] = True
            mask &= wanted[tree.slot_infosets]
        largest = np.zeros(len(tree.infosets))
        np.maximum.at(largest, tree.slot_infosets[mask], self.regrets[mask])
        return float(largest.sum() / self.iteration)

    def _strategy_from(self, player: Player, vector: np.ndarray, normalize: bool) -> BehavioralStrategy:
        tree = self.game.tree
        probs = {}
        for index in self.game.infoset_ids[player]:
            infoset = tree.infosets[int(index)]
            window = slice(infoset.slot, infoset.slot + infoset.size)
            if self.frozen[infoset.slot]:
                probs[infoset.key] = self.fixed[window].copy()
                continue
            chunk = vector[window]
            total = chunk.sum() if normalize else 1.0
            probs[infoset.key] = chunk / total if total > 0 else np.full(infoset.size, 1.0 / infoset.size)
        return BehavioralStrategy(player, probs)

    def average_strategy(self, player: Player) -> BehavioralStrategy:
        return self._strategy_from(player, self.average, normalize=True)

    def result(self) -> SolveResult:
        if not self.log or self.log[-1].iteration != self.iteration:
            self._checkpoint()
        best = None
        if self.best_sigma is not None:
            best = self._strategy_from(Player.UP, self.best_sigma, normalize=True)
        return SolveResult(
            average_strategy=StrategyProfile(self.average_strategy(Player.UP), self.average_strategy(Player.DOWN)),
            best_iterate=best,
            best_iterate_utility=self.best_utility if best is not None else None,
            final_exploitability_estimate=self.log[-1].expl_estimate,
            regret_bound=self.regret_bound(Player.UP),
            iterations=self.iteration,
            iteration_log=list(self.log),
        )


def solve(game: Union[GameTree, DepthLimitedGame], settings: Optional[SolveConfig] = None) -> SolveResult:
    """Run CFR+ for `settings.iterations` iterations and collect the result."""
    if isinstance(game, GameTree):
        game = DepthLimitedGame(game)
    settings = settings or SolveConfig()
    solver = CfrSolver(game, settings)
    solver.iterate(settings.iterations)
    logger.debug(f"Solved {game!r} for {settings.iterations} iterations")
    return solver.result()


def solve_game_value(
    tree: GameTree, tolerance: Optional[float] = None, max_iterations: Optional[int] = None
) -> float:
    """
    Game value to UP, by CFR+ with exact best-response bounds at doubling checkpoints.

    Returns the midpoint of the bracket [-BR_down(avg_up), BR_up(avg_down)].
    """
    tolerance = config.solver.game_value_tolerance if tolerance is None else tolerance
    max_iterations = max_iterations or config.solver.game_value_max_iterations
    low, high = tree.utility_range()
    scale = max(high - low, 1.0)
    solver = CfrSolver(DepthLimitedGame(tree), SolveConfig(iterations=max_iterations))
    checkpoint = 64
    lower, upper = -math.inf, math.inf
    while True:
        solver.iterate(min(checkpoint, max_iterations) - solver.iteration)
        _, down_value = best_response(tree, solver.average_strategy(Player.UP), Player.DOWN)
        _, up_value = best_response(tree, solver.average_strategy(Player.DOWN), Player.UP)
        lower, upper = float(-down_value), float(up_value)
        if upper - lower <= tolerance * scale:
            break
        if solver.iteration >= max_iterations:
            logger.warning(
                f"Game value of {tree.name} not within {tolerance} after {max_iterations} iterations "
                f"(bracket width {upper - lower:.3e})"
            )
            break
        checkpoint *= 2
    value = (lower + upper) / 2
    logger.info(f"Game value of {tree.name}: {value:.9f} after {solver.iteration} iterations")
    return value


# ─── trunk best response ────────────────────────────────────────────────


def trunk_utility(
    game: DepthLimitedGame,
    up_strategy: BehavioralStrategy,
    opponent_model: BehavioralStrategy,
    value_function: Optional["ValueFunction"],
) -> float:
    """UP's utility in the depth-limited game with both players fixed in the region."""
    if game.expanded:
        raise ConfigurationError("Trunk utility needs an explicit value function, not an expanded game")
    solver = CfrSolver(game, SolveConfig(iterations=1, value_function=value_function,
                                         frozen=(up_strategy, opponent_model)))
    if solver.free[Player.UP].any() or solver.free[Player.DOWN].any():
        raise StructuralError("Trunk strategies do not cover every infoset in the region")
    return solver.evaluate()


def exhaustive_trunk_br(
    game: DepthLimitedGame,
    opponent_model: BehavioralStrategy,
    value_function: Optional["ValueFunction"],
    limit: int = EXHAUSTIVE_LIMIT,
) -> Tuple[BehavioralStrategy, float]:
    """Best pure UP trunk strategy by enumeration; ties go to the first in lexicographic order."""
    tree = game.tree
    infosets = [tree.infosets[int(i)] for i in game.infoset_ids[Player.UP]]
    count = math.prod(i.size for i in infosets)
    if count > limit:
        raise ParameterError(f"{count} pure trunk strategies exceed the enumeration limit {limit}")
    best_strategy, best_value = None, -math.inf
    for choice in itertools.product(*(range(i.size) for i in infosets)):
        strategy = pure_strategy(tree, Player.UP, {i.key: a for i, a in zip(infosets, choice)})
        value = trunk_utility(game, strategy, opponent_model, value_function)
        if value > best_value + 1e-12:
            best_strategy, best_value = strategy, value
    return best_strategy, best_value


def best_iterate_trunk_br(
    game: DepthLimitedGame,
    opponent_model: BehavioralStrategy,
    value_function: Optional["ValueFunction"],
    iterations: int,
) -> Tuple[BehavioralStrategy, float]:
    """UP's CFR+ iterate with the highest depth-limited utility against a frozen opponent."""
    settings = SolveConfig(iterations=iterations, value_function=value_function,
                           frozen=(opponent_model,), track_best_iterate=True)
    result = solve(game, settings)
    if result.best_iterate is None:
        # UP has nothing to decide in the region
        strategy = result.average_strategy.sigma_up
        return strategy, trunk_utility(game, strategy, opponent_model, value_function)
    return result.best_iterate, float(result.best_iterate_utility)


def lemma1_bound(
    delta: float,
    actions: int,
    trunk_infosets: int,
    iterations: int,
    subgames: int,
    subgame_error: float,
    form: str = "appendix",
) -> float:
    """
    Gap bound between the best CFR+ iterate and the trunk best response.

    `form="appendix"` gives delta*sqrt(A/T)*|I| + N*eps, `form="main"` multiplies
    the subgame term by T.
    """
    if iterations <= 0:
        raise ParameterError(f"Iteration count must be positive, got {iterations}")
    if min(delta, actions, trunk_infosets, subgames, subgame_error) < 0:
        raise ParameterError("Bound inputs must be nonnegative")
    regret_term = delta * math.sqrt(actions / iterations) * trunk_infosets
    if form == "appendix":
        return regret_term + subgames * subgame_error
    if form == "main":
        return regret_term + iterations * subgames * subgame_error
    raise ParameterError(f"Unknown bound form {form!r}")

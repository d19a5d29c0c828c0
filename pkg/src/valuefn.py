"""
value functions for depth-limited solving.
// what this file handles //

- ValueQuery / ValueResult: a public state with both players' ranges, per-infoset counterfactual values
- optimal values (subgame solved by CFR+ to a tolerance), limited-iteration values, seeded noise
- an exact-hit LRU cache shared by concurrent solver threads

Values are counterfactual: the value of an augmented infoset is weighted by
opponent and chance reach only, so scaling a player's own range leaves that
player's values unchanged and scales the opponent's.
"""

import math
import threading
import zlib
from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .cfr import CfrSolver, ConfigurationError, DepthLimitedGame, SolveConfig
from .config import SolverConfig, config
from .game import (
    BehavioralStrategy,
    GameTree,
    Node,
    ParameterError,
    Player,
    Range,
    StructuralError,
    best_response_core,
)
from .logger import get_logger

logger = get_logger(__name__)

RANGE_QUANTUM = 1e-12


@dataclass(frozen=True)
class ValueQuery:
    public_state: int
    range_up: Range
    range_down: Range

    def range_for(self, player: Player) -> Range:
        return self.range_up if player is Player.UP else self.range_down

    def cache_key(self) -> Tuple:
        return (
            self.public_state,
            tuple(sorted((k, round(v / RANGE_QUANTUM)) for k, v in self.range_up.reaches.items())),
            tuple(sorted((k, round(v / RANGE_QUANTUM)) for k, v in self.range_down.reaches.items())),
        )


@dataclass
class ValueResult:
    public_state: int
    values_up: Dict[str, float]
    values_down: Dict[str, float]
    epsilon: float = 0.0

    def values(self, player: Player) -> Dict[str, float]:
        return self.values_up if player is Player.UP else self.values_down

    def range_weighted_total(self, query: ValueQuery, player: Player) -> float:
        reaches = query.range_for(player).reaches
        return float(sum(reaches[k] * v for k, v in self.values(player).items()))


class ValueFunction:
    """
    Base class: validates queries and caches results.

    `fixed` holds strategies that stay frozen inside evaluated subgames (the
    model copy of a restricted-response game). Subclasses implement `_compute`.
    """

    inline = False

    def __init__(
        self,
        tree: GameTree,
        fixed: Optional[BehavioralStrategy] = None,
        settings: Optional[SolverConfig] = None,
    ):
        self.tree = tree
        self.fixed = fixed
        self.settings = settings or config.solver
        self._cache: "OrderedDict[Tuple, ValueResult]" = OrderedDict()
        self._lock = threading.Lock()
        self.queries = 0
        self.hits = 0
        self.max_epsilon = 0.0

    def query(self, public_state: int, range_up: Range, range_down: Range) -> ValueQuery:
        return ValueQuery(public_state, range_up, range_down)

    def evaluate(self, query: ValueQuery) -> ValueResult:
        self._check(query)
        key = query.cache_key()
        with self._lock:
            self.queries += 1
            cached = self._cache.get(key)
            if cached is not None:
                self.hits += 1
                self._cache.move_to_end(key)
                return cached
        result = self._compute(query)
        with self._lock:
            self.max_epsilon = max(self.max_epsilon, result.epsilon)
            self._cache[key] = result
            while len(self._cache) > self.settings.value_cache_size:
                self._cache.popitem(last=False)
        return result

    def _check(self, query: ValueQuery) -> None:
        if not 0 <= query.public_state < len(self.tree.public_states):
            raise StructuralError(f"Unknown public state {query.public_state}")
        for player in (Player.UP, Player.DOWN):
            expected = set(self.tree.augmented_entry_keys(query.public_state, player))
            given = set(query.range_for(player).reaches)
            if given != expected:
                raise StructuralError(
                    f"Range of {player.name} at public state {query.public_state} covers "
                    f"{sorted(given ^ expected)[:5]} incorrectly"
                )

    def _compute(self, query: ValueQuery) -> ValueResult:
        raise NotImplementedError

    def rebind(self, tree: GameTree, fixed: Optional[BehavioralStrategy] = None) -> "ValueFunction":
        """Same kind of value function for another tree (e.g. a restricted-response copy)."""
        raise NotImplementedError

    # ─── shared subgame machinery ───────────────────────────────────────

    def _subgame(self, query: ValueQuery) -> Tuple[DepthLimitedGame, List[int], np.ndarray]:
        tree = self.tree
        entries = list(tree.public_states[query.public_state].entries)
        reaches = np.array([
            (
                query.range_up.reaches[tree.nodes[e].augmented_key(Player.UP)],
                query.range_down.reaches[tree.nodes[e].augmented_key(Player.DOWN)],
                tree.chance_reach[e],
            )
            for e in entries
        ])
        game = DepthLimitedGame(tree, tree.descendant_states(query.public_state), entries, reaches)
        return game, entries, reaches

    def _solve(self, query: ValueQuery, iterations: Optional[int], tolerance: Optional[float]) -> ValueResult:
        """Solve the subgame below the query; stop at `iterations` or when the gap drops below `tolerance`."""
        game, entries, reaches = self._subgame(query)
        if not reaches[:, 0].any() and not reaches[:, 1].any():
            zeros = {p: {k: 0.0 for k in self.tree.augmented_entry_keys(query.public_state, p)}
                     for p in (Player.UP, Player.DOWN)}
            return ValueResult(query.public_state, zeros[Player.UP], zeros[Player.DOWN])

        frozen = (self.fixed,) if self.fixed is not None else ()
        budget = iterations or self.settings.vf_max_iterations
        solver = CfrSolver(game, SolveConfig(iterations=budget, frozen=frozen))
        actors = [p for p in (Player.UP, Player.DOWN) if solver.free[p].any()]
        if len(actors) < 2:
            # one player (or nobody) decides: a single best-response pass is exact
            sigma = solver.current_strategy()
            responses = {p: self._response(game, sigma, p, entries, reaches) for p in actors}
            if actors:
                choices, _ = responses[actors[0]]
                sigma = self._apply_choices(sigma, choices)
            return self._result(query, game, solver, sigma, entries, reaches, gap=0.0)

        low, high = self.tree.utility_range()
        scale = max(high - low, 1.0) * max(float((reaches.prod(axis=1)).sum()), 1e-300)
        checkpoint, gap = 32, math.inf
        while solver.iteration < budget:
            solver.iterate(min(checkpoint, budget) - solver.iteration)
            if iterations is None:
                gap = self._gap(game, solver.average_sigma(), entries, reaches)
                if gap <= tolerance * scale:
                    break
            checkpoint *= 2
        sigma = solver.average_sigma()
        if iterations is not None or not math.isfinite(gap):
            gap = self._gap(game, sigma, entries, reaches)
        elif gap > tolerance * scale:
            logger.warning(f"Value function at public state {query.public_state} stopped at gap {gap:.3e}")
        return self._result(query, game, solver, sigma, entries, reaches, gap)

    def _policy(self, sigma: np.ndarray):
        tree = self.tree

        def policy(node: Node) -> Sequence[float]:
            if node.is_chance:
                return node.chance_probs
            infoset = tree.infosets[node.infoset]
            return sigma[infoset.slot:infoset.slot + infoset.size]

        return policy

    def _response(self, game: DepthLimitedGame, sigma: np.ndarray, responder: Player,
                  entries: List[int], reaches: np.ndarray) -> Tuple[Dict[str, int], Dict[int, float]]:
        fixed = set(self.fixed.keys()) if self.fixed is not None else set()
        free = {k for k in game.region_keys(responder) if k not in fixed}
        weights = reaches[:, int(responder.opponent)] * reaches[:, 2]
        choices, values, _ = best_response_core(
            self.tree, self._policy(sigma), responder, entries, list(weights), free=free
        )
        return choices, values

    def _apply_choices(self, sigma: np.ndarray, choices: Dict[str, int]) -> np.ndarray:
        sigma = sigma.copy()
        for key, action in choices.items():
            infoset = self.tree.infoset(key)
            sigma[infoset.slot:infoset.slot + infoset.size] = 0.0
            sigma[infoset.slot + action] = 1.0
        return sigma

    def _gap(self, game: DepthLimitedGame, sigma: np.ndarray, entries: List[int], reaches: np.ndarray) -> float:
        """Sum of both players' best-response improvements, weighted by the joint entry reaches."""
        total = 0.0
        for responder in (Player.UP, Player.DOWN):
            _, values = self._response(game, sigma, responder, entries, reaches)
            own = reaches[:, int(responder)]
            opp = reaches[:, int(responder.opponent)] * reaches[:, 2]
            total += float(sum(o * w * values[e] for o, w, e in zip(own, opp, entries)))
        return max(total, 0.0)

    def _result(self, query: ValueQuery, game: DepthLimitedGame, solver: CfrSolver, sigma: np.ndarray,
                entries: List[int], reaches: np.ndarray, gap: float) -> ValueResult:
        tree = self.tree
        node_values = solver.node_values(sigma)
        local = game.root_local
        out = {}
        for player in (Player.UP, Player.DOWN):
            sign = 1.0 if player is Player.UP else -1.0
            opp = reaches[:, int(player.opponent)] * reaches[:, 2]
            range_ = query.range_for(player).reaches
            zero_keys = {k for k, v in range_.items() if v <= 0}
            br_values: Dict[int, float] = {}
            if zero_keys:
                _, br_values = self._response(game, sigma, player, entries, reaches)
            values: Dict[str, float] = {k: 0.0 for k in range_}
            for i, e in enumerate(entries):
                key = tree.nodes[e].augmented_key(player)
                value = br_values[e] if key in zero_keys else sign * node_values[local[i]]
                values[key] += opp[i] * value
            out[player] = values
        return ValueResult(query.public_state, out[Player.UP], out[Player.DOWN], epsilon=gap)


class OptimalValueFunction(ValueFunction):
    """
    Equilibrium values after the depth limit.

    With `inline=True` depth-limited solvers expand the continuation instead
    of querying, which gives the same values at convergence.
    """

    def __init__(self, tree: GameTree, fixed: Optional[BehavioralStrategy] = None,
                 settings: Optional[SolverConfig] = None, tolerance: Optional[float] = None,
                 inline: bool = True):
        super().__init__(tree, fixed, settings)
        self.tolerance = self.settings.vf_tolerance if tolerance is None else tolerance
        self.inline = inline

    def _compute(self, query: ValueQuery) -> ValueResult:
        return self._solve(query, iterations=None, tolerance=self.tolerance)

    def rebind(self, tree: GameTree, fixed: Optional[BehavioralStrategy] = None) -> "OptimalValueFunction":
        return OptimalValueFunction(tree, fixed, self.settings, self.tolerance, self.inline)


class LimitedValueFunction(ValueFunction):
    """Values of a CFR+ run stopped after a fixed number of iterations."""

    def __init__(self, tree: GameTree, iterations: int, fixed: Optional[BehavioralStrategy] = None,
                 settings: Optional[SolverConfig] = None):
        if iterations <= 0:
            raise ParameterError(f"Limited value function needs positive iterations, got {iterations}")
        super().__init__(tree, fixed, settings)
        self.iterations = iterations

    def _compute(self, query: ValueQuery) -> ValueResult:
        return self._solve(query, iterations=self.iterations, tolerance=None)

    def rebind(self, tree: GameTree, fixed: Optional[BehavioralStrategy] = None) -> "LimitedValueFunction":
        return LimitedValueFunction(tree, self.iterations, fixed, self.settings)


class NoisyValueFunction(ValueFunction):
    """Another value function plus seeded uniform noise in [-eps, eps] on every output."""

    def __init__(self, base: ValueFunction, eps: float, seed: int):
        if eps < 0:
            raise ParameterError(f"Noise level must be nonnegative, got {eps}")
        super().__init__(base.tree, base.fixed, base.settings)
        self.base = base
        self.eps = eps
        self.seed = seed

    def _compute(self, query: ValueQuery) -> ValueResult:
        exact = self.base.evaluate(query)
        if self.eps == 0:
            return exact
        digest = zlib.crc32(repr(query.cache_key()).encode())
        rng = np.random.default_rng(np.random.SeedSequence([self.seed, query.public_state, digest]))
        noisy = []
        for values in (exact.values_up, exact.values_down):
            keys = sorted(values)
            noise = rng.uniform(-self.eps, self.eps, size=len(keys))
            noisy.append({k: values[k] + float(n) for k, n in zip(keys, noise)})
        return ValueResult(query.public_state, noisy[0], noisy[1], epsilon=exact.epsilon + self.eps)

    def rebind(self, tree: GameTree, fixed: Optional[BehavioralStrategy] = None) -> "NoisyValueFunction":
        return NoisyValueFunction(self.base.rebind(tree, fixed), self.eps, self.seed)


def make_value_function(
    spec: str,
    tree: GameTree,
    fixed: Optional[BehavioralStrategy] = None,
    settings: Optional[SolverConfig] = None,
) -> ValueFunction:
    """
    Build a value function from a spec string.

    Args:
        spec: `optimal`, `optimal:explicit`, `limited:<iters>` or `noisy:<eps>:<seed>`
        tree: game the queries refer to
        fixed: strategies frozen inside evaluated subgames
        settings: solver settings (tolerance, iteration cap, cache size)

    Returns:
        ValueFunction instance
    """
    kind, _, rest = spec.partition(":")
    try:
        if kind == "optimal":
            if rest not in ("", "explicit"):
                raise ConfigurationError(f"Unknown optimal value function variant {rest!r}")
            return OptimalValueFunction(tree, fixed, settings, inline=rest != "explicit")
        if kind == "limited":
            return LimitedValueFunction(tree, int(rest), fixed, settings)
        if kind == "noisy":
            eps, _, seed = rest.partition(":")
            base = OptimalValueFunction(tree, fixed, settings, inline=False)
            return NoisyValueFunction(base, float(eps), int(seed or 0))
    except ValueError as e:
        if isinstance(e, ParameterError):
            raise
        raise ConfigurationError(f"Malformed value function spec {spec!r}: {e}") from None
    raise ConfigurationError(f"Unknown value function kind {kind!r} in {spec!r}")


def optimal_value(tree: GameTree, query: ValueQuery, fixed: Optional[BehavioralStrategy] = None,
                  tolerance: Optional[float] = None) -> ValueResult:
    return OptimalValueFunction(tree, fixed, tolerance=tolerance, inline=False).evaluate(query)


def limited_value(tree: GameTree, query: ValueQuery, iterations: int,
                  fixed: Optional[BehavioralStrategy] = None) -> ValueResult:
    return LimitedValueFunction(tree, iterations, fixed).evaluate(query)


def noisy_value(tree: GameTree, query: ValueQuery, eps: float, seed: int,
                fixed: Optional[BehavioralStrategy] = None) -> ValueResult:
    base = OptimalValueFunction(tree, fixed, inline=False)
    return NoisyValueFunction(base, eps, seed).evaluate(query)


def range_query(tree: GameTree, public_state: int, reaches_up: Dict[str, float],
                reaches_down: Dict[str, float]) -> ValueQuery:
    """Query from plain dicts; missing keys default to zero reach."""
    ranges = []
    for player, given in ((Player.UP, reaches_up), (Player.DOWN, reaches_down)):
        keys = tree.augmented_entry_keys(public_state, player)
        ranges.append(Range(public_state, player, {k: float(given.get(k, 0.0)) for k in keys}))
    return ValueQuery(public_state, ranges[0], ranges[1])

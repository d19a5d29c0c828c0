"""
local best response for poker games.
// what this file handles //

- beliefs over the opponent's hand from the opponent strategy (uniform off its support)
- per-decision action values: fold now, call down to showdown, or raise and hope for a fold
- the full deterministic policy, its exact value and a seeded playout cross-check
"""

from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

import numpy as np

from .game import (
    BehavioralStrategy,
    GameError,
    GameTree,
    ParameterError,
    Player,
    StrategyProfile,
    expected_utility,
    pure_strategy,
)
from .logger import get_logger

logger = get_logger(__name__)

TIE_TOLERANCE = 1e-12


class UnsupportedDomainError(GameError):
    """Raised when LBR is asked to play a game without poker betting actions."""


def _poker_actions(tree: GameTree) -> Dict[str, str]:
    actions = tree.meta.get("poker")
    if not isinstance(actions, dict):
        raise UnsupportedDomainError(f"Local best response needs a poker game, not {tree.name}")
    return actions


@dataclass
class LbrState:
    """LBR's view at one of its infosets: the betting history and a belief over the opponent's hand."""

    tree: GameTree
    infoset: str
    player: Player
    history: str
    belief: Dict[int, float]

    def hands(self) -> Dict[str, float]:
        """Belief aggregated by the opponent's private card rank."""
        opponent = self.player.opponent
        out: Dict[str, float] = {}
        for node, weight in self.belief.items():
            hand = self.tree.nodes[node].observations[opponent].split("|", 1)[0]
            out[hand] = out.get(hand, 0.0) + weight
        return out

    @classmethod
    def at(cls, tree: GameTree, infoset: str, opponent_strategy: BehavioralStrategy,
           reaches: Optional[np.ndarray] = None) -> "LbrState":
        _poker_actions(tree)
        target = tree.infoset(infoset)
        if reaches is None:
            reaches = _opponent_reaches(tree, opponent_strategy)
        weights = np.array([reaches[n] for n in target.nodes])
        if weights.sum() <= 0:
            # off the model's support: uniform over the consistent deals
            weights = tree.chance_reach[list(target.nodes)].copy()
        belief = dict(zip(target.nodes, (weights / weights.sum()).tolist()))
        history = tree.nodes[target.nodes[0]].observations[target.player].split("|", 1)[-1]
        return cls(tree, infoset, target.player, history, belief)


def _opponent_reaches(tree: GameTree, opponent_strategy: BehavioralStrategy) -> np.ndarray:
    """Opponent-and-chance reach of every node."""
    out = np.ones(len(tree))
    opponent = opponent_strategy.owner
    for node in tree.nodes[1:]:
        parent = tree.nodes[node.parent]
        factor = 1.0
        if parent.is_chance:
            factor = float(tree.edge_probs[node.index])
        elif parent.player is opponent:
            key = tree.infosets[parent.infoset].key
            factor = float(opponent_strategy[key][parent.children.index(node.index)])
        out[node.index] = out[node.parent] * factor
    return out


class _Evaluator:
    """Call-down values and fold outcomes shared by every decision of one LBR run."""

    def __init__(self, tree: GameTree, player: Player, opponent_strategy: BehavioralStrategy):
        self.tree = tree
        self.player = player
        self.sign = 1.0 if player is Player.UP else -1.0
        self.opponent_strategy = opponent_strategy
        self.labels = _poker_actions(tree)
        self._calldown: Dict[int, float] = {}

    def calldown(self, index: int) -> float:
        """LBR's value when every remaining bet is called and every round checked through."""
        cached = self._calldown.get(index)
        if cached is not None:
            return cached
        node = self.tree.nodes[index]
        if node.is_terminal:
            value = self.sign * float(node.utility)
        elif node.is_chance:
            value = sum(float(p) * self.calldown(c) for p, c in zip(node.chance_probs, node.children))
        else:
            value = self.calldown(node.child(self.labels["call"]))
        self._calldown[index] = value
        return value

    def action_value(self, index: int, action: str) -> float:
        node = self.tree.nodes[index]
        child = node.child(action)
        if action == self.labels["fold"]:
            return self.sign * float(self.tree.nodes[child].utility)
        if action == self.labels["raise"]:
            reply = self.tree.nodes[child]
            if reply.is_decision and self.labels["fold"] in reply.actions:
                key = self.tree.infosets[reply.infoset].key
                probs = self.opponent_strategy[key]
                fold = float(probs[reply.actions.index(self.labels["fold"])])
                folded = self.sign * float(self.tree.nodes[reply.child(self.labels["fold"])].utility)
                return fold * folded + (1 - fold) * self.calldown(reply.child(self.labels["call"]))
        return self.calldown(child)


def lbr_action(state: LbrState, opponent_strategy: BehavioralStrategy) -> str:
    """Best action at `state` by the local estimates; ties go to the lowest action index."""
    evaluator = _Evaluator(state.tree, state.player, opponent_strategy)
    return _choose(evaluator, state)


def _choose(evaluator: _Evaluator, state: LbrState) -> str:
    actions = state.tree.infoset(state.infoset).actions
    best, best_value = actions[0], None
    for action in actions:
        value = sum(w * evaluator.action_value(n, action) for n, w in state.belief.items())
        if best_value is None or value > best_value + TIE_TOLERANCE:
            best, best_value = action, value
    return best


def lbr_policy(tree: GameTree, opponent_strategy: BehavioralStrategy,
               player: Player = Player.UP) -> BehavioralStrategy:
    """Deterministic LBR strategy for every infoset of `player`."""
    if opponent_strategy.owner is player:
        raise ParameterError("Opponent strategy must belong to the other player")
    opponent_strategy.require_complete(tree)
    evaluator = _Evaluator(tree, player, opponent_strategy)
    reaches = _opponent_reaches(tree, opponent_strategy)
    choices = {}
    for infoset in tree.player_infosets(player):
        state = LbrState.at(tree, infoset.key, opponent_strategy, reaches)
        choices[infoset.key] = _choose(evaluator, state)
    logger.debug(f"LBR policy on {tree.name}: {len(choices)} infosets")
    return pure_strategy(tree, player, choices)


def lbr_value(tree: GameTree, opponent_strategy: BehavioralStrategy, player: Player = Player.UP) -> float:
    """Exact expected utility of the LBR policy for `player` against `opponent_strategy`."""
    policy = lbr_policy(tree, opponent_strategy, player)
    value = float(expected_utility(tree, StrategyProfile.merged(policy, opponent_strategy)))
    return value if player is Player.UP else -value


def lbr_playout_mean(
    tree: GameTree,
    policy: BehavioralStrategy,
    opponent_strategy: BehavioralStrategy,
    samples: int,
    seed: int = 0,
) -> Tuple[float, float]:
    """Monte-Carlo estimate of `policy`'s utility (mean, standard error) from seeded playouts."""
    if samples < 2:
        raise ParameterError(f"Need at least two playouts, got {samples}")
    profile = StrategyProfile.merged(policy, opponent_strategy)
    sign = 1.0 if policy.owner is Player.UP else -1.0
    rng = np.random.default_rng(seed)
    cumulative: Dict[int, np.ndarray] = {}
    payoffs: List[float] = []
    for _ in range(samples):
        index = 0
        node = tree.nodes[0]
        while not node.is_terminal:
            weights = cumulative.get(index)
            if weights is None:
                weights = np.cumsum([float(p) for p in profile.action_probs(tree, node)])
                cumulative[index] = weights
            pick = min(int(np.searchsorted(weights, rng.random() * weights[-1], side="right")),
                       len(node.children) - 1)
            index = node.children[pick]
            node = tree.nodes[index]
        payoffs.append(sign * float(node.utility))
    values = np.asarray(payoffs)
    return float(values.mean()), float(values.std(ddof=1) / np.sqrt(samples))

"""
exact rational minimax for small games.
// what this file handles //

- solve_matrix_game: tableau simplex over Fractions (Bland's rule)
- payoff matrices over enumerated pure strategies of the free infosets
- solve_exact: exact equilibrium of a small tree as behavioral strategies of Fractions

Only meant for the counterexample games, where equilibria hinge on margins
of 1e-6 that an iterative solver does not resolve.
"""

import itertools
from dataclasses import dataclass
from fractions import Fraction
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .game import BehavioralStrategy, GameTree, ParameterError, Player, StructuralError
from .logger import get_logger

logger = get_logger(__name__)

PURE_STRATEGY_LIMIT = 20000

Matrix = List[List[Fraction]]


def solve_matrix_game(matrix: Sequence[Sequence]) -> Tuple[List[Fraction], List[Fraction], Fraction]:
    """
    Exact solution of a zero-sum matrix game, rows maximize.

    Returns (row strategy, column strategy, value).
    """
    a = [[Fraction(v) for v in row] for row in matrix]
    if not a or not a[0]:
        raise ParameterError("Matrix game needs at least one row and one column")
    m, n = len(a), len(a[0])
    lowest = min(min(row) for row in a)
    shift = 1 - lowest if lowest <= 0 else Fraction(0)
    a = [[v + shift for v in row] for row in a]

    # max sum(y) s.t. A y <= 1, y >= 0
    tableau = [a[i] + [Fraction(int(i == k)) for k in range(m)] + [Fraction(1)] for i in range(m)]
    objective = [Fraction(-1)] * n + [Fraction(0)] * (m + 1)
    basis = [n + i for i in range(m)]
    while True:
        entering = next((j for j in range(n + m) if objective[j] < 0), None)
        if entering is None:
            break
        row, best = None, None
        for i in range(m):
            coefficient = tableau[i][entering]
            if coefficient > 0:
                ratio = tableau[i][-1] / coefficient
                if best is None or ratio < best or (ratio == best and basis[i] < basis[row]):
                    row, best = i, ratio
        if row is None:
            raise StructuralError("Matrix game LP is unbounded")
        pivot = tableau[row][entering]
        tableau[row] = [v / pivot for v in tableau[row]]
        for i in range(m):
            if i != row and tableau[i][entering] != 0:
                factor = tableau[i][entering]
                tableau[i] = [v - factor * w for v, w in zip(tableau[i], tableau[row])]
        factor = objective[entering]
        objective = [v - factor * w for v, w in zip(objective, tableau[row])]
        basis[row] = entering

    total = objective[-1]
    y = [Fraction(0)] * n
    for i, b in enumerate(basis):
        if b < n:
            y[b] = tableau[i][-1]
    x = [objective[n + i] for i in range(m)]
    return [v / total for v in x], [v / total for v in y], 1 / total - shift


# ─── pure strategies of a tree ──────────────────────────────────────────


def free_infosets(tree: GameTree, player: Player, fixed: Sequence[BehavioralStrategy] = ()) -> List[str]:
    taken = {k for strategy in fixed for k in strategy.keys()}
    return [i.key for i in tree.player_infosets(player) if i.key not in taken]


def pure_strategies(tree: GameTree, keys: Sequence[str], limit: int = PURE_STRATEGY_LIMIT) -> List[Dict[str, int]]:
    sizes = [tree.infoset(k).size for k in keys]
    count = int(np.prod(sizes)) if sizes else 1
    if count > limit:
        raise ParameterError(f"{count} pure strategies exceed the enumeration limit {limit}")
    return [dict(zip(keys, choice)) for choice in itertools.product(*(range(s) for s in sizes))]


@dataclass
class TerminalTable:
    """Per terminal: chance-and-fixed weight, utility, and the free choices each player must make."""

    weights: List[Fraction]
    utilities: List[Fraction]
    requirements: Tuple[List[Dict[str, int]], List[Dict[str, int]]]


def terminal_table(tree: GameTree, fixed: Sequence[BehavioralStrategy] = ()) -> TerminalTable:
    fixed_probs: Dict[str, Sequence] = {}
    for strategy in fixed:
        fixed_probs.update(dict(strategy.items()))
    weights, utilities, up_needs, down_needs = [], [], [], []
    for terminal in tree.terminals():
        weight = Fraction(1)
        needs: Tuple[Dict[str, int], Dict[str, int]] = ({}, {})
        path = tree.path(terminal.index)
        for parent, child in zip(path, path[1:]):
            node = tree.nodes[parent]
            a = node.children.index(child)
            if node.is_chance:
                weight *= Fraction(node.chance_probs[a])
                continue
            key = tree.infosets[node.infoset].key
            if key in fixed_probs:
                weight *= Fraction(fixed_probs[key][a])
            else:
                needs[node.player][key] = a
        if weight == 0:
            continue
        weights.append(weight)
        utilities.append(Fraction(terminal.utility))
        up_needs.append(needs[0])
        down_needs.append(needs[1])
    return TerminalTable(weights, utilities, (up_needs, down_needs))


def payoff_matrix(tree: GameTree, up_strategies: Sequence[Dict[str, int]],
                  down_strategies: Sequence[Dict[str, int]],
                  fixed: Sequence[BehavioralStrategy] = ()) -> Matrix:
    """UP's exact expected utility for every pair of pure strategies."""
    table = terminal_table(tree, fixed)

    def matches(strategy: Dict[str, int], needs: Dict[str, int]) -> bool:
        return all(strategy[k] == a for k, a in needs.items())

    up_hits = [[matches(s, needs) for needs in table.requirements[0]] for s in up_strategies]
    down_hits = [[matches(s, needs) for needs in table.requirements[1]] for s in down_strategies]
    payoffs = [w * u for w, u in zip(table.weights, table.utilities)]
    matrix = []
    for up in up_hits:
        row = []
        for down in down_hits:
            row.append(sum((p for p, hu, hd in zip(payoffs, up, down) if hu and hd), Fraction(0)))
        matrix.append(row)
    return matrix


def behavioral_from_mixed(tree: GameTree, player: Player, strategies: Sequence[Dict[str, int]],
                          weights: Sequence[Fraction]) -> BehavioralStrategy:
    """Behavioral equivalent of a mixture of pure strategies (uniform where unreached)."""
    keys = list(strategies[0]) if strategies else []
    probs = {}
    for key in keys:
        infoset = tree.infoset(key)
        sequence = tree.own_sequence(infoset.nodes[0], player)
        needs = [(k, tree.infoset(k).actions.index(a)) for k, a in sequence if k in strategies[0]]
        mass = [Fraction(0)] * infoset.size
        for strategy, weight in zip(strategies, weights):
            if weight and all(strategy[k] == a for k, a in needs):
                mass[strategy[key]] += weight
        total = sum(mass)
        if total > 0:
            probs[key] = np.array([v / total for v in mass], dtype=object)
        else:
            probs[key] = np.array([Fraction(1, infoset.size)] * infoset.size, dtype=object)
    return BehavioralStrategy(player, probs)


@dataclass
class ExactSolution:
    sigma_up: BehavioralStrategy
    sigma_down: BehavioralStrategy
    value: Fraction


def solve_exact(tree: GameTree, fixed: Sequence[BehavioralStrategy] = (),
                limit: int = PURE_STRATEGY_LIMIT) -> ExactSolution:
    """
    Exact equilibrium of a small game with some infosets frozen.

    Free infosets of both players are enumerated as pure strategies; fixed
    ones enter the payoff matrix as probabilities. Returned strategies cover
    the free infosets merged with the fixed ones.
    """
    up_keys = free_infosets(tree, Player.UP, fixed)
    down_keys = free_infosets(tree, Player.DOWN, fixed)
    ups = pure_strategies(tree, up_keys, limit)
    downs = pure_strategies(tree, down_keys, limit)
    matrix = payoff_matrix(tree, ups, downs, fixed)
    x, y, value = solve_matrix_game(matrix)
    logger.debug(f"Exact solve of {tree.name}: {len(ups)}x{len(downs)} matrix, value {value}")

    sigma_up = behavioral_from_mixed(tree, Player.UP, ups, x)
    sigma_down = behavioral_from_mixed(tree, Player.DOWN, downs, y)
    for strategy in fixed:
        exact = BehavioralStrategy(strategy.owner, {k: np.array([Fraction(p) for p in v], dtype=object)
                                                    for k, v in strategy.items()})
        if strategy.owner is Player.UP:
            sigma_up = sigma_up.updated(exact)
        else:
            sigma_down = sigma_down.updated(exact)
    return ExactSolution(sigma_up, sigma_down, value)


def exact_game_value(tree: GameTree, limit: int = PURE_STRATEGY_LIMIT) -> Optional[Fraction]:
    """Exact value when both players have few pure strategies, else None."""
    try:
        return solve_exact(tree, limit=limit).value
    except ParameterError:
        return None

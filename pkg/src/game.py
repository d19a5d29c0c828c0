"""
extensive-form game core.
// what this file handles //

- enumerated game trees: histories, infosets, augmented infosets, public states
- behavioral strategies, profiles, ranges and their text format
- exact primitives: reach, expected utility, best response, exploitability, gain

Utilities are stored as utility to the first player (UP) only; the second
player's utility is the negation. Node indices follow DFS preorder, so the
subtree of node n is the index range [n, subtree_end[n]).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import IntEnum
from fractions import Fraction
from typing import (
    Callable,
    Dict,
    Iterable,
    Iterator,
    List,
    Mapping,
    Optional,
    Protocol,
    Sequence,
    Set,
    Tuple,
    Union,
)

import numpy as np

from .logger import get_logger

logger = get_logger(__name__)

Number = Union[int, float, Fraction]

CHANCE_TOLERANCE = 1e-12
STRATEGY_TOLERANCE = 1e-9


class GameError(Exception):
    """Base error for game construction and evaluation."""


class StructuralError(GameError):
    """Raised for malformed trees, unknown nodes and incomplete strategies."""


class ParameterError(GameError, ValueError):
    """Raised for invalid numeric parameters."""


class Player(IntEnum):
    UP = 0
    DOWN = 1
    CHANCE = 2
    TERMINAL = 3

    @property
    def tag(self) -> str:
        return {Player.UP: "U", Player.DOWN: "D", Player.CHANCE: "C", Player.TERMINAL: "Z"}[self]

    @property
    def opponent(self) -> "Player":
        if self is Player.UP:
            return Player.DOWN
        if self is Player.DOWN:
            return Player.UP
        raise ParameterError(f"{self.name} has no opponent")

    @classmethod
    def from_tag(cls, tag: str) -> "Player":
        for player in (cls.UP, cls.DOWN):
            if player.tag == tag:
                return player
        raise ParameterError(f"Unknown player tag: {tag!r}")


DECISION_PLAYERS = (Player.UP, Player.DOWN)


class GameState(Protocol):
    """State protocol consumed by TreeBuilder.expand."""

    round: int

    def player(self) -> Player: ...

    def actions(self) -> Sequence[str]: ...

    def chance_outcomes(self) -> Sequence[Tuple[str, Number]]: ...

    def child(self, action: str) -> "GameState": ...

    def utility(self) -> Number: ...

    def observation(self, player: Player) -> str: ...


@dataclass
class Node:
    index: int
    parent: int
    player: Player
    depth: int
    action: Optional[str]
    actions: Tuple[str, ...] = ()
    chance_probs: Tuple[Number, ...] = ()
    utility: Number = 0
    observations: Tuple[str, str] = ("", "")
    round: int = 1
    children: List[int] = field(default_factory=list)
    infoset: int = -1
    public_state: int = -1

    @property
    def is_terminal(self) -> bool:
        return self.player is Player.TERMINAL

    @property
    def is_chance(self) -> bool:
        return self.player is Player.CHANCE

    @property
    def is_decision(self) -> bool:
        return self.player in DECISION_PLAYERS

    def augmented_key(self, player: Player) -> str:
        return f"{player.tag}:{self.observations[player]}"

    def child(self, action: str) -> int:
        try:
            return self.children[self.actions.index(action)]
        except ValueError:
            raise StructuralError(f"Node {self.index} has no action {action!r}") from None


@dataclass(frozen=True)
class Infoset:
    index: int
    key: str
    player: Player
    actions: Tuple[str, ...]
    nodes: Tuple[int, ...]
    slot: int
    min_depth: int

    @property
    def size(self) -> int:
        return len(self.actions)


@dataclass
class PublicState:
    index: int
    nodes: Tuple[int, ...]
    entries: Tuple[int, ...]
    decision_nodes: Tuple[int, ...]
    parent: int
    round: int
    children: Tuple[int, ...] = ()


class TreeBuilder:
    """
    Incremental construction of a GameTree.

    Children must be added in the order of their parent's action labels.
    """

    def __init__(self, name: str):
        self.name = name
        self.nodes: List[Node] = []

    def add(
        self,
        parent: int,
        action: Optional[str],
        player: Player,
        actions: Sequence[str] = (),
        chance_probs: Sequence[Number] = (),
        utility: Number = 0,
        observations: Tuple[str, str] = ("", ""),
        round: int = 1,
    ) -> int:
        index = len(self.nodes)
        depth = 0 if parent < 0 else self.nodes[parent].depth + 1
        self.nodes.append(
            Node(
                index=index,
                parent=parent,
                player=player,
                depth=depth,
                action=action,
                actions=tuple(actions),
                chance_probs=tuple(chance_probs),
                utility=utility,
                observations=(observations[0], observations[1]),
                round=round,
            )
        )
        if parent >= 0:
            self.nodes[parent].children.append(index)
        return index

    def expand(self, state: GameState, parent: int = -1, action: Optional[str] = None) -> int:
        """Add `state` and its whole subtree in DFS preorder."""
        player = state.player()
        observations = (state.observation(Player.UP), state.observation(Player.DOWN))
        if player is Player.TERMINAL:
            return self.add(parent, action, player, utility=state.utility(),
                            observations=observations, round=state.round)
        if player is Player.CHANCE:
            outcomes = list(state.chance_outcomes())
            index = self.add(parent, action, player, actions=[a for a, _ in outcomes],
                             chance_probs=[p for _, p in outcomes],
                             observations=observations, round=state.round)
            for label, _ in outcomes:
                self.expand(state.child(label), index, label)
            return index
        labels = list(state.actions())
        index = self.add(parent, action, player, actions=labels,
                         observations=observations, round=state.round)
        for label in labels:
            self.expand(state.child(label), index, label)
        return index

    def build(self, validate: bool = True, meta: Optional[Dict[str, object]] = None) -> "GameTree":
        tree = GameTree(self.name, self.nodes, meta=meta)
        if validate:
            tree.validate()
        return tree


class GameTree:
    """
    Immutable enumerated two-player zero-sum game.

    Public states are the connected components of the relation "shares an
    augmented infoset of either player", i.e. the finest partition closed
    under both players' augmented infosets.
    """

    def __init__(self, name: str, nodes: List[Node], meta: Optional[Dict[str, object]] = None):
        if not nodes:
            raise StructuralError("Game tree has no nodes")
        self.name = name
        self.nodes = nodes
        self.meta: Dict[str, object] = dict(meta or {})
        self._index_infosets()
        self._index_public_states()
        self._index_arrays()
        logger.debug(
            f"Indexed game {name}: {len(nodes)} nodes, {len(self.infosets)} infosets, "
            f"{len(self.public_states)} public states"
        )

    # ─── indexing ───────────────────────────────────────────────────────

    def _index_infosets(self) -> None:
        by_key: Dict[str, List[int]] = {}
        for node in self.nodes:
            if node.is_decision:
                by_key.setdefault(node.augmented_key(node.player), []).append(node.index)

        self.infosets: List[Infoset] = []
        self.infoset_index: Dict[str, int] = {}
        slot = 0
        for key, members in by_key.items():
            first = self.nodes[members[0]]
            infoset = Infoset(
                index=len(self.infosets),
                key=key,
                player=first.player,
                actions=first.actions,
                nodes=tuple(members),
                slot=slot,
                min_depth=min(self.nodes[n].depth for n in members),
            )
            slot += infoset.size
            self.infoset_index[key] = infoset.index
            self.infosets.append(infoset)
            for n in members:
                self.nodes[n].infoset = infoset.index
        self.slot_count = slot

        self.augmented: Tuple[Dict[str, List[int]], Dict[str, List[int]]] = ({}, {})
        for node in self.nodes:
            for player in DECISION_PLAYERS:
                self.augmented[player].setdefault(node.augmented_key(player), []).append(node.index)

    def _index_public_states(self) -> None:
        parent = list(range(len(self.nodes)))

        def find(x: int) -> int:
            while parent[x] != x:
                parent[x] = parent[parent[x]]
                x = parent[x]
            return x

        for player in DECISION_PLAYERS:
            for members in self.augmented[player].values():
                head = find(members[0])
                for n in members[1:]:
                    other = find(n)
                    if other != head:
                        parent[other] = head

        component_of: Dict[int, int] = {}
        groups: List[List[int]] = []
        for node in self.nodes:
            root = find(node.index)
            if root not in component_of:
                component_of[root] = len(groups)
                groups.append([])
            groups[component_of[root]].append(node.index)
            node.public_state = component_of[root]

        self.public_states: List[PublicState] = []
        children: List[List[int]] = [[] for _ in groups]
        parents: List[int] = []
        for ps_id, members in enumerate(groups):
            entries = [n for n in members
                       if self.nodes[n].parent < 0
                       or self.nodes[self.nodes[n].parent].public_state != ps_id]
            outer = {self.nodes[self.nodes[n].parent].public_state
                     for n in entries if self.nodes[n].parent >= 0}
            if len(outer) > 1:
                raise StructuralError(f"Public state {ps_id} is entered from several public states {sorted(outer)}")
            ps_parent = outer.pop() if outer else -1
            parents.append(ps_parent)
            if ps_parent >= 0:
                children[ps_parent].append(ps_id)
            self.public_states.append(PublicState(
                index=ps_id,
                nodes=tuple(members),
                entries=tuple(entries),
                decision_nodes=tuple(n for n in members if self.nodes[n].is_decision),
                parent=ps_parent,
                round=min(self.nodes[n].round for n in members),
            ))
        for ps_id, kids in enumerate(children):
            self.public_states[ps_id].children = tuple(kids)

    def _index_arrays(self) -> None:
        n = len(self.nodes)
        self.parents = np.array([node.parent for node in self.nodes], dtype=np.int64)
        self.depths = np.array([node.depth for node in self.nodes], dtype=np.int64)
        self.players = np.array([int(node.player) for node in self.nodes], dtype=np.int8)
        self.utilities = np.array(
            [float(node.utility) if node.is_terminal else 0.0 for node in self.nodes], dtype=np.float64
        )
        self.node_infosets = np.array([node.infoset for node in self.nodes], dtype=np.int64)
        self.node_public_states = np.array([node.public_state for node in self.nodes], dtype=np.int64)

        self.edge_probs = np.ones(n, dtype=np.float64)
        self.edge_slots = np.full(n, -1, dtype=np.int64)
        for node in self.nodes:
            if node.is_chance:
                for child, prob in zip(node.children, node.chance_probs):
                    self.edge_probs[child] = float(prob)
            elif node.is_decision:
                base = self.infosets[node.infoset].slot
                for a, child in enumerate(node.children):
                    self.edge_slots[child] = base + a

        self.slot_infosets = np.empty(self.slot_count, dtype=np.int64)
        self.slot_actions = np.empty(self.slot_count, dtype=np.int64)
        for infoset in self.infosets:
            self.slot_infosets[infoset.slot:infoset.slot + infoset.size] = infoset.index
            self.slot_actions[infoset.slot:infoset.slot + infoset.size] = np.arange(infoset.size)
        self.infoset_players = np.array([int(i.player) for i in self.infosets], dtype=np.int8)
        self.infoset_sizes = np.array([i.size for i in self.infosets], dtype=np.int64)

        self.subtree_end = np.arange(1, n + 1, dtype=np.int64)
        for node in reversed(self.nodes):
            if node.children:
                self.subtree_end[node.index] = self.subtree_end[node.children[-1]]

        self.chance_reach = np.ones(n, dtype=np.float64)
        for node in self.nodes[1:]:
            parent = self.nodes[node.parent]
            factor = self.edge_probs[node.index] if parent.is_chance else 1.0
            self.chance_reach[node.index] = self.chance_reach[node.parent] * factor

        max_depth = int(self.depths.max())
        order = np.argsort(self.depths, kind="stable")
        bounds = np.searchsorted(self.depths[order], np.arange(max_depth + 2))
        self.levels = [order[bounds[d]:bounds[d + 1]] for d in range(max_depth + 1)]

    # ─── accessors ──────────────────────────────────────────────────────

    def __len__(self) -> int:
        return len(self.nodes)

    def __repr__(self) -> str:
        return f"GameTree({self.name!r}, nodes={len(self.nodes)}, infosets={len(self.infosets)})"

    @property
    def root(self) -> Node:
        return self.nodes[0]

    def node(self, index: int) -> Node:
        if not 0 <= index < len(self.nodes):
            raise StructuralError(f"Unknown node id {index}")
        return self.nodes[index]

    def infoset(self, key: str) -> Infoset:
        try:
            return self.infosets[self.infoset_index[key]]
        except KeyError:
            raise StructuralError(f"Unknown infoset {key!r}") from None

    def player_infosets(self, player: Player) -> List[Infoset]:
        return [i for i in self.infosets if i.player is player]

    def terminals(self) -> Iterator[Node]:
        return (node for node in self.nodes if node.is_terminal)

    def path(self, index: int) -> List[int]:
        """Node ids from the root down to `index` inclusive."""
        path = []
        current = self.node(index).index
        while current >= 0:
            path.append(current)
            current = self.nodes[current].parent
        return path[::-1]

    def descendants(self, index: int) -> range:
        return range(index, int(self.subtree_end[index]))

    def utility_range(self) -> Tuple[float, float]:
        values = [float(node.utility) for node in self.terminals()]
        return min(values), max(values)

    def augmented_entry_keys(self, ps_id: int, player: Player) -> List[str]:
        """Augmented infoset keys of `player` over the entry nodes of a public state."""
        seen: Dict[str, None] = {}
        for n in self.public_states[ps_id].entries:
            seen.setdefault(self.nodes[n].augmented_key(player), None)
        return list(seen)

    def descendant_states(self, ps_id: int) -> List[int]:
        """Public state `ps_id` and every public state below it."""
        out, stack = [], [ps_id]
        while stack:
            current = stack.pop()
            out.append(current)
            stack.extend(self.public_states[current].children)
        return sorted(out)

    # ─── validation ─────────────────────────────────────────────────────

    def validate(self) -> None:
        """Check every structural invariant; raises StructuralError."""
        if self.nodes[0].parent != -1:
            raise StructuralError("Node 0 must be the root")
        for node in self.nodes:
            if node.is_terminal:
                if node.children:
                    raise StructuralError(f"Terminal node {node.index} has children")
                continue
            if not node.children:
                raise StructuralError(f"Non-terminal node {node.index} has no children")
            if len(node.children) != len(node.actions):
                raise StructuralError(f"Node {node.index} has {len(node.children)} children for "
                                      f"{len(node.actions)} actions")
            if len(set(node.actions)) != len(node.actions):
                raise StructuralError(f"Node {node.index} repeats an action label")
            if node.is_chance:
                total = sum(node.chance_probs)
                if any(p < 0 for p in node.chance_probs) or abs(total - 1) > CHANCE_TOLERANCE:
                    raise StructuralError(f"Chance node {node.index} distribution sums to {float(total)}")

        for infoset in self.infosets:
            for n in infoset.nodes:
                if self.nodes[n].actions != infoset.actions:
                    raise StructuralError(f"Infoset {infoset.key} mixes action sets")

        sequences = self._own_sequences()
        for infoset in self.infosets:
            first = sequences[infoset.nodes[0]][infoset.player]
            if any(sequences[n][infoset.player] != first for n in infoset.nodes[1:]):
                raise StructuralError(f"Infoset {infoset.key} violates perfect recall")
        for player in DECISION_PLAYERS:
            for key, members in self.augmented[player].items():
                first = sequences[members[0]][player]
                if any(sequences[n][player] != first for n in members[1:]):
                    raise StructuralError(f"Augmented infoset {key} violates perfect recall")

    def _own_sequences(self) -> List[Tuple[Tuple, Tuple]]:
        sequences: List[Tuple[Tuple, Tuple]] = [((), ())] * len(self.nodes)
        for node in self.nodes[1:]:
            parent = self.nodes[node.parent]
            up, down = sequences[parent.index]
            if parent.is_decision:
                step = ((self.infosets[parent.infoset].key, node.action),)
                if parent.player is Player.UP:
                    up = up + step
                else:
                    down = down + step
            sequences[node.index] = (up, down)
        return sequences

    def own_sequence(self, index: int, player: Player) -> Tuple[Tuple[str, str], ...]:
        """(infoset key, action) pairs of `player` on the path to `index`."""
        sequence = []
        path = self.path(index)
        for parent, child in zip(path, path[1:]):
            node = self.nodes[parent]
            if node.player is player:
                sequence.append((self.infosets[node.infoset].key, self.nodes[child].action))
        return tuple(sequence)


# ─── strategies ─────────────────────────────────────────────────────────


@dataclass
class BehavioralStrategy:
    """Per-infoset action distributions of one player, keyed by infoset key."""

    owner: Player
    probs: Dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self) -> None:
        for key, vector in list(self.probs.items()):
            vector = np.asarray(vector)
            if vector.dtype.kind not in "fO":
                vector = vector.astype(np.float64)
            if any(p < 0 for p in vector):
                raise ParameterError(f"Negative probability at {key}")
            if abs(sum(vector) - 1) > STRATEGY_TOLERANCE:
                raise ParameterError(f"Distribution at {key} sums to {float(sum(vector))}")
            self.probs[key] = vector

    def __getitem__(self, key: str) -> np.ndarray:
        return self.probs[key]

    def __contains__(self, key: str) -> bool:
        return key in self.probs

    def __len__(self) -> int:
        return len(self.probs)

    def keys(self) -> List[str]:
        return sorted(self.probs)

    def items(self) -> Iterator[Tuple[str, np.ndarray]]:
        return ((key, self.probs[key]) for key in sorted(self.probs))

    @property
    def exact(self) -> bool:
        return any(v.dtype == object for v in self.probs.values())

    def copy(self) -> "BehavioralStrategy":
        return BehavioralStrategy(self.owner, {k: v.copy() for k, v in self.probs.items()})

    def restricted(self, keys: Iterable[str]) -> "BehavioralStrategy":
        keys = set(keys)
        return BehavioralStrategy(self.owner, {k: v.copy() for k, v in self.probs.items() if k in keys})

    def updated(self, other: "BehavioralStrategy") -> "BehavioralStrategy":
        merged = {k: v.copy() for k, v in self.probs.items()}
        merged.update({k: v.copy() for k, v in other.probs.items()})
        return BehavioralStrategy(self.owner, merged)

    def missing(self, tree: GameTree) -> List[str]:
        return [i.key for i in tree.player_infosets(self.owner) if i.key not in self.probs]

    def require_complete(self, tree: GameTree) -> None:
        missing = self.missing(tree)
        if missing:
            shown = ", ".join(missing[:10])
            raise StructuralError(f"Strategy for {self.owner.name} misses {len(missing)} infosets: {shown}")

    def is_pure(self, tolerance: float = 0.0) -> bool:
        return all(max(float(p) for p in v) >= 1 - tolerance for v in self.probs.values())

    def to_text(self) -> str:
        lines = []
        for key, vector in self.items():
            lines.append(f"{key}\t" + " ".join(f"{float(p):.17g}" for p in vector))
        return "\n".join(lines) + ("\n" if lines else "")

    @classmethod
    def from_text(cls, text: str, owner: Optional[Player] = None) -> "BehavioralStrategy":
        probs: Dict[str, np.ndarray] = {}
        for number, line in enumerate(text.splitlines(), start=1):
            if not line.strip():
                continue
            try:
                key, values = line.split("\t")
                probs[key] = np.array([float(v) for v in values.split()], dtype=np.float64)
            except ValueError:
                raise StructuralError(f"Malformed strategy line {number}: {line!r}") from None
        if owner is None:
            tags = {key.split(":", 1)[0] for key in probs}
            if len(tags) != 1:
                raise StructuralError(f"Cannot infer strategy owner from tags {sorted(tags)}")
            owner = Player.from_tag(tags.pop())
        return cls(owner, probs)


def uniform_strategy(tree: GameTree, player: Player) -> BehavioralStrategy:
    return BehavioralStrategy(
        player, {i.key: np.full(i.size, 1.0 / i.size) for i in tree.player_infosets(player)}
    )


def pure_strategy(tree: GameTree, player: Player, choices: Mapping[str, Union[int, str]],
                  exact: bool = False) -> BehavioralStrategy:
    """Pure strategy from infoset key -> action index or label."""
    probs = {}
    for key, choice in choices.items():
        infoset = tree.infoset(key)
        index = infoset.actions.index(choice) if isinstance(choice, str) else int(choice)
        if exact:
            vector = np.array([Fraction(int(a == index)) for a in range(infoset.size)], dtype=object)
        else:
            vector = np.zeros(infoset.size)
            vector[index] = 1.0
        probs[key] = vector
    return BehavioralStrategy(player, probs)


@dataclass
class StrategyProfile:
    sigma_up: BehavioralStrategy
    sigma_down: BehavioralStrategy

    def __post_init__(self) -> None:
        if self.sigma_up.owner is not Player.UP or self.sigma_down.owner is not Player.DOWN:
            raise StructuralError("Profile expects (UP, DOWN) strategies")

    @classmethod
    def merged(cls, first: BehavioralStrategy, second: BehavioralStrategy) -> "StrategyProfile":
        """Profile from one strategy per player, given in either order."""
        if first.owner is second.owner:
            raise StructuralError(f"Both strategies belong to {first.owner.name}")
        return cls(first, second) if first.owner is Player.UP else cls(second, first)

    def for_player(self, player: Player) -> BehavioralStrategy:
        return self.sigma_up if player is Player.UP else self.sigma_down

    def action_probs(self, tree: GameTree, node: Node) -> Sequence[Number]:
        if node.is_chance:
            return node.chance_probs
        key = tree.infosets[node.infoset].key
        strategy = self.for_player(node.player)
        if key not in strategy:
            raise StructuralError(f"Profile has no strategy for infoset {key}")
        return strategy[key]

    def require_complete(self, tree: GameTree) -> None:
        self.sigma_up.require_complete(tree)
        self.sigma_down.require_complete(tree)


@dataclass
class Range:
    """Unnormalized own-reaches of one player over the augmented infosets entering a public state."""

    public_state: int
    player: Player
    reaches: Dict[str, float]

    def __post_init__(self) -> None:
        for key, value in self.reaches.items():
            if not -STRATEGY_TOLERANCE <= value <= 1 + STRATEGY_TOLERANCE:
                raise ParameterError(f"Reach {value} for {key} outside [0, 1]")

    @property
    def total(self) -> float:
        return float(sum(self.reaches.values()))


# ─── exact primitives ───────────────────────────────────────────────────


def reach(tree: GameTree, profile: StrategyProfile, node: int) -> Tuple[Number, Number, Number]:
    """(pi_up, pi_down, pi_chance) along the path to `node`."""
    components: List[Number] = [1, 1, 1]
    path = tree.path(node)
    for parent, child in zip(path, path[1:]):
        parent_node = tree.nodes[parent]
        a = parent_node.children.index(child)
        probs = profile.action_probs(tree, parent_node)
        slot = 2 if parent_node.is_chance else int(parent_node.player)
        components[slot] = components[slot] * probs[a]
    return components[0], components[1], components[2]


def node_values(tree: GameTree, profile: StrategyProfile, start: int = 0) -> Dict[int, Number]:
    """Expected utility to UP below every node of the subtree rooted at `start`."""
    values: Dict[int, Number] = {}
    for index in reversed(tree.descendants(start)):
        node = tree.nodes[index]
        if node.is_terminal:
            values[index] = node.utility
            continue
        probs = profile.action_probs(tree, node)
        total: Number = 0
        for prob, child in zip(probs, node.children):
            if prob:
                total = total + prob * values[child]
        values[index] = total
    return values


def expected_utility(tree: GameTree, profile: StrategyProfile) -> Number:
    """Expected utility to UP; DOWN receives the negation."""
    return node_values(tree, profile)[0]


Policy = Callable[[Node], Sequence[Number]]


def best_response_core(
    tree: GameTree,
    policy: Policy,
    responder: Player,
    starts: Sequence[int],
    start_reaches: Sequence[Number],
    free: Optional[Set[str]] = None,
) -> Tuple[Dict[str, int], Dict[int, Number], Dict[int, Number]]:
    """
    Best response of `responder` below `starts`.

    `policy` gives action probabilities at chance nodes, opponent nodes and
    responder nodes outside `free` (None means every responder infoset is
    free). `start_reaches` are the opponent-and-chance reaches of the start
    nodes. Returns (choice per free infoset key, value to responder per node,
    opponent-and-chance reach per node).
    """
    sign = 1 if responder is Player.UP else -1
    opp_reach: Dict[int, Number] = {}
    infoset_ids: Dict[int, None] = {}
    for start, weight in zip(starts, start_reaches):
        opp_reach[start] = weight
        for index in tree.descendants(start):
            node = tree.nodes[index]
            if node.is_terminal:
                continue
            if node.player is responder:
                if free is None or tree.infosets[node.infoset].key in free:
                    infoset_ids.setdefault(node.infoset, None)
                for child in node.children:
                    opp_reach[child] = opp_reach[index]
                continue
            probs = policy(node)
            for prob, child in zip(probs, node.children):
                opp_reach[child] = opp_reach[index] * prob

    choices: Dict[str, int] = {}
    values: Dict[int, Number] = {}

    def value(index: int) -> Number:
        cached = values.get(index)
        if cached is not None:
            return cached
        node = tree.nodes[index]
        if node.is_terminal:
            result: Number = sign * node.utility
        elif node.player is responder and tree.infosets[node.infoset].key in choices:
            result = value(node.children[choices[tree.infosets[node.infoset].key]])
        else:
            result = 0
            for prob, child in zip(policy(node), node.children):
                if prob:
                    result = result + prob * value(child)
        values[index] = result
        return result

    ordered = sorted(infoset_ids, key=lambda i: (-tree.infosets[i].min_depth, i))
    for infoset_id in ordered:
        infoset = tree.infosets[infoset_id]
        members = [n for n in infoset.nodes if n in opp_reach]
        best_index, best_value = 0, None
        for a in range(infoset.size):
            q: Number = 0
            for n in members:
                weight = opp_reach[n]
                if weight:
                    q = q + weight * value(tree.nodes[n].children[a])
            if best_value is None or q > best_value:
                best_index, best_value = a, q
        choices[infoset.key] = best_index

    for start in starts:
        value(start)
    return choices, values, opp_reach


def strategy_policy(tree: GameTree, strategy: BehavioralStrategy) -> Policy:
    """Policy that follows `strategy` for its owner and chance elsewhere."""

    def policy(node: Node) -> Sequence[Number]:
        if node.is_chance:
            return node.chance_probs
        key = tree.infosets[node.infoset].key
        if key not in strategy:
            raise StructuralError(f"Strategy has no entry for infoset {key}")
        return strategy[key]

    return policy


def best_response(
    tree: GameTree, opponent_strategy: BehavioralStrategy, responder: Player
) -> Tuple[BehavioralStrategy, Number]:
    """Pure best response of `responder` and its value (utility to the responder)."""
    if opponent_strategy.owner is responder:
        raise ParameterError("Opponent strategy must belong to the other player")
    opponent_strategy.require_complete(tree)
    choices, values, _ = best_response_core(
        tree, strategy_policy(tree, opponent_strategy), responder, [0], [1]
    )
    for infoset in tree.player_infosets(responder):
        choices.setdefault(infoset.key, 0)
    strategy = pure_strategy(tree, responder, choices, exact=opponent_strategy.exact)
    return strategy, values[0]


def exploitability(tree: GameTree, strategy: BehavioralStrategy, game_value: Number) -> Number:
    """
    Utility a best-responding opponent earns above its equilibrium value.

    Args:
        tree: the game
        strategy: strategy of the exploited player
        game_value: equilibrium value for the owner of `strategy`
    """
    _, br_value = best_response(tree, strategy, strategy.owner.opponent)
    return br_value + game_value


def gain(tree: GameTree, strategy: BehavioralStrategy, opponent_model: BehavioralStrategy,
         game_value: Number) -> Number:
    """Utility earned against `opponent_model` above the game value."""
    value = expected_utility(tree, StrategyProfile.merged(strategy, opponent_model))
    return (value if strategy.owner is Player.UP else -value) - game_value


def counterfactual_values(
    tree: GameTree, profile: StrategyProfile, player: Player, nodes: Iterable[int]
) -> Dict[str, Number]:
    """Counterfactual values of `player` per augmented infoset over `nodes`."""
    sign = 1 if player is Player.UP else -1
    values = node_values(tree, profile)
    out: Dict[str, Number] = {}
    for n in nodes:
        pi = reach(tree, profile, n)
        opp = pi[player.opponent] * pi[2]
        key = tree.nodes[n].augmented_key(player)
        out[key] = out.get(key, 0) + opp * sign * values[n]
    return out

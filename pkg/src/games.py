"""
benchmark and counterexample game builders.
// what this file handles //

- poker (kuhn, leduc), goofspiel with 5 cards, liar's dice with one 4-sided die
- the small counterexample games used by the gadget and lookahead checks
- the selector registry used by the CLI (`kuhn`, `ce_rounds:4`, ...)

Observation strings drive infosets and public states: a player's
observation changes only when that player sees something, so moves the
other player cannot see stay inside one public state.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .game import (
    BehavioralStrategy,
    GameTree,
    ParameterError,
    Player,
    TreeBuilder,
)
from .logger import get_logger

logger = get_logger(__name__)

POKER_ACTIONS = {"fold": "f", "call": "c", "raise": "r"}


# ─── kuhn ───────────────────────────────────────────────────────────────

KUHN_CARDS = "JQK"


@dataclass(frozen=True)
class KuhnState:
    cards: Tuple[str, ...] = ()
    history: str = ""
    round: int = 1

    def player(self) -> Player:
        if len(self.cards) < 2:
            return Player.CHANCE
        if self.history in ("pp", "pbp", "pbb", "bp", "bb"):
            return Player.TERMINAL
        return Player.UP if len(self.history) % 2 == 0 else Player.DOWN

    def actions(self) -> Sequence[str]:
        return ("p", "b")

    def chance_outcomes(self) -> Sequence[Tuple[str, float]]:
        remaining = [c for c in KUHN_CARDS if c not in self.cards]
        return [(c, 1.0 / len(remaining)) for c in remaining]

    def child(self, action: str) -> "KuhnState":
        if len(self.cards) < 2:
            return KuhnState(self.cards + (action,), self.history)
        return KuhnState(self.cards, self.history + action)

    def utility(self) -> int:
        up_wins = KUHN_CARDS.index(self.cards[0]) > KUHN_CARDS.index(self.cards[1])
        showdown = 1 if up_wins else -1
        return {"pp": showdown, "pbp": -1, "pbb": 2 * showdown, "bp": 1, "bb": 2 * showdown}[self.history]

    def observation(self, player: Player) -> str:
        card = self.cards[player] if len(self.cards) > player else ""
        return f"{card}|{self.history}"


def build_kuhn() -> GameTree:
    """Three-card Kuhn poker, ante 1, one bet of 1."""
    builder = TreeBuilder("kuhn")
    builder.expand(KuhnState())
    return builder.build(meta={"symmetric": False})


# ─── leduc ──────────────────────────────────────────────────────────────

LEDUC_DECK = ("Js", "Jh", "Qs", "Qh", "Ks", "Kh")
LEDUC_RANKS = "JQK"
LEDUC_BET_SIZES = (2, 4)
LEDUC_MAX_BETS = 2


def _round_closed(history: str) -> bool:
    return len(history) >= 2 and history[-1] == "c"


@dataclass(frozen=True)
class LeducState:
    cards: Tuple[str, ...] = ()
    board: Optional[str] = None
    rounds: Tuple[str, ...] = ("",)

    @property
    def round(self) -> int:
        if len(self.rounds) == 1 and _round_closed(self.rounds[0]):
            return 2
        return len(self.rounds)

    def player(self) -> Player:
        if len(self.cards) < 2:
            return Player.CHANCE
        current = self.rounds[-1]
        if current.endswith("f"):
            return Player.TERMINAL
        if _round_closed(current):
            return Player.CHANCE if self.board is None else Player.TERMINAL
        return Player.UP if len(current) % 2 == 0 else Player.DOWN

    def actions(self) -> Sequence[str]:
        current = self.rounds[-1]
        bets = current.count("r")
        actions = ["f", "c"] if current.endswith("r") else ["c"]
        if bets < LEDUC_MAX_BETS:
            actions.append("r")
        return actions

    def chance_outcomes(self) -> Sequence[Tuple[str, float]]:
        remaining = [c for c in LEDUC_DECK if c not in self.cards]
        return [(c, 1.0 / len(remaining)) for c in remaining]

    def child(self, action: str) -> "LeducState":
        if len(self.cards) < 2:
            return LeducState(self.cards + (action,), None, self.rounds)
        if self.player() is Player.CHANCE:
            return LeducState(self.cards, action, self.rounds + ("",))
        return LeducState(self.cards, self.board, self.rounds[:-1] + (self.rounds[-1] + action,))

    def contributions(self) -> List[int]:
        committed = [1, 1]
        for size, history in zip(LEDUC_BET_SIZES, self.rounds):
            for i, action in enumerate(history):
                actor, other = i % 2, 1 - i % 2
                if action == "c":
                    committed[actor] = committed[other]
                elif action == "r":
                    committed[actor] = committed[other] + size
        return committed

    def _strength(self, card: str) -> int:
        rank = LEDUC_RANKS.index(card[0])
        return 10 + rank if self.board is not None and card[0] == self.board[0] else rank

    def utility(self) -> int:
        committed = self.contributions()
        current = self.rounds[-1]
        if current.endswith("f"):
            folder = (len(current) - 1) % 2
            return -committed[0] if folder == 0 else committed[1]
        up, down = self._strength(self.cards[0]), self._strength(self.cards[1])
        if up == down:
            return 0
        return committed[1] if up > down else -committed[0]

    def observation(self, player: Player) -> str:
        if len(self.cards) <= player:
            return ""
        rank = self.cards[player][0]
        if self.board is None:
            return f"{rank}|{self.rounds[0]}"
        return f"{rank}|{self.rounds[0]}/{self.board[0]}:{self.rounds[1]}"


def build_leduc() -> GameTree:
    """Leduc hold'em: 6 cards, ante 1, bets 2 then 4, at most two bets per round."""
    builder = TreeBuilder("leduc")
    builder.expand(LeducState())
    return builder.build(meta={"poker": POKER_ACTIONS, "symmetric": False})


# ─── goofspiel ──────────────────────────────────────────────────────────


@dataclass(frozen=True)
class GoofspielState:
    k: int = 5
    bids_up: Tuple[int, ...] = ()
    bids_down: Tuple[int, ...] = ()
    pending: Optional[int] = None

    @property
    def round(self) -> int:
        return len(self.bids_down) + 1

    def _results(self) -> List[str]:
        return ["U" if u > d else "D" if d > u else "T" for u, d in zip(self.bids_up, self.bids_down)]

    def player(self) -> Player:
        if len(self.bids_down) >= self.k - 1:
            return Player.TERMINAL
        return Player.UP if self.pending is None else Player.DOWN

    def actions(self) -> Sequence[str]:
        used = self.bids_up if self.pending is None else self.bids_down
        return [str(card) for card in range(1, self.k + 1) if card not in used]

    def chance_outcomes(self) -> Sequence[Tuple[str, float]]:
        return ()

    def child(self, action: str) -> "GoofspielState":
        bid = int(action)
        if self.pending is None:
            return GoofspielState(self.k, self.bids_up, self.bids_down, bid)
        return GoofspielState(self.k, self.bids_up + (self.pending,), self.bids_down + (bid,), None)

    def utility(self) -> int:
        last_up = next(c for c in range(1, self.k + 1) if c not in self.bids_up)
        last_down = next(c for c in range(1, self.k + 1) if c not in self.bids_down)
        score = 0
        for point, (u, d) in enumerate(zip(self.bids_up + (last_up,), self.bids_down + (last_down,)), start=1):
            score += point if u > d else -point if d > u else 0
        return score

    def observation(self, player: Player) -> str:
        own = self.bids_up if player is Player.UP else self.bids_down
        seen = ",".join(f"{b}{r}" for b, r in zip(own, self._results()))
        if player is Player.UP and self.pending is not None:
            return f"{seen};{self.pending}"
        return seen


def build_goofspiel5() -> GameTree:
    """
    Imperfect-information goofspiel with point cards 1..5 in ascending order.

    Bids are hidden, only the winner of each point card is announced, tied
    bids discard the card, payoff is the point difference. The second bid of
    each turn is made without seeing the first.
    """
    builder = TreeBuilder("goofspiel5")
    builder.expand(GoofspielState(5))
    return builder.build(meta={"symmetric": True})


# ─── liar's dice ────────────────────────────────────────────────────────

LIARS_CALL = "liar"


@dataclass(frozen=True)
class LiarsDiceState:
    faces: int = 4
    dice: Optional[Tuple[int, int]] = None
    starter: Optional[Player] = None
    bids: Tuple[int, ...] = ()
    called: bool = False
    round: int = 1

    @property
    def bid_grammar(self) -> List[Tuple[int, int]]:
        return [(count, face) for count in (1, 2) for face in range(1, self.faces + 1)]

    def _mover(self) -> Player:
        return self.starter if len(self.bids) % 2 == 0 else self.starter.opponent

    def player(self) -> Player:
        if self.dice is None or self.starter is None:
            return Player.CHANCE
        if self.called:
            return Player.TERMINAL
        return self._mover()

    def actions(self) -> Sequence[str]:
        start = self.bids[-1] + 1 if self.bids else 0
        labels = [f"{count}x{face}" for count, face in self.bid_grammar[start:]]
        return labels + [LIARS_CALL] if self.bids else labels

    def chance_outcomes(self) -> Sequence[Tuple[str, float]]:
        if self.dice is None:
            total = self.faces * self.faces
            return [(f"{a}{b}", 1.0 / total) for a in range(1, self.faces + 1) for b in range(1, self.faces + 1)]
        return [("u", 0.5), ("d", 0.5)]

    def child(self, action: str) -> "LiarsDiceState":
        if self.dice is None:
            return LiarsDiceState(self.faces, (int(action[0]), int(action[1])))
        if self.starter is None:
            return LiarsDiceState(self.faces, self.dice, Player.UP if action == "u" else Player.DOWN)
        if action == LIARS_CALL:
            return LiarsDiceState(self.faces, self.dice, self.starter, self.bids, True)
        index = self.bid_grammar.index(tuple(int(x) for x in action.split("x")))
        return LiarsDiceState(self.faces, self.dice, self.starter, self.bids + (index,))

    def utility(self) -> int:
        count, face = self.bid_grammar[self.bids[-1]]
        caller = self._mover()
        bid_holds = sum(1 for die in self.dice if die == face) >= count
        loser = caller if bid_holds else caller.opponent
        return -1 if loser is Player.UP else 1

    def observation(self, player: Player) -> str:
        if self.dice is None:
            return ""
        die = self.dice[player]
        if self.starter is None:
            return f"{die}|"
        bids = ",".join(str(b) for b in self.bids)
        return f"{die}|{self.starter.tag}|{bids}{'!' if self.called else ''}"


def build_liars_dice() -> GameTree:
    """
    Liar's dice with one 4-sided die per player.

    Bids (count, face) increase lexicographically; calling "liar" ends the
    game. A public fair coin after the roll picks the first bidder.
    """
    builder = TreeBuilder("liars_dice")
    builder.expand(LiarsDiceState(4))
    return builder.build(meta={"symmetric": True})


# ─── counterexample games ───────────────────────────────────────────────

HALF = Fraction(1, 2)
CE_GADGET_E = Fraction("3.500001")


def build_ce_coin() -> GameTree:
    """Coin game: DOWN sees a red or green coin and picks heads or tails, UP plays P or Q blind."""
    b = TreeBuilder("ce_coin")
    root = b.add(-1, None, Player.CHANCE, actions=("R", "G"), chance_probs=(HALF, HALF))
    for color, payoffs in (("R", (-4, -1)), ("G", (-2, 10))):
        down = b.add(root, color, Player.DOWN, actions=(f"{color}H", f"{color}T"), observations=("", color))
        for side, p_value in zip((f"{color}H", f"{color}T"), payoffs):
            seen = f"{color}:{side}"
            up = b.add(down, side, Player.UP, actions=("P", "Q"), observations=("?", seen))
            b.add(up, "P", Player.TERMINAL, utility=Fraction(p_value), observations=("?P", seen + ":P"))
            b.add(up, "Q", Player.TERMINAL, utility=Fraction(0), observations=("?Q", seen + ":Q"))
    return b.build(meta={"counterexample": True})


def build_ce_gadget() -> GameTree:
    """Three-action game where both standard gadgets miss the restricted response."""
    b = TreeBuilder("ce_gadget")
    root = b.add(-1, None, Player.CHANCE, actions=("L", "R"), chance_probs=(HALF, HALF))
    # per DOWN action: payoff (or follow-up node) after UP's a, b, c
    layout = {
        "L": {"W": (("O", "P", Fraction("4.5"), Fraction(-4)), 0, ("M", "N", CE_GADGET_E, Fraction(-3))),
              "X": (Fraction(-3), 0, Fraction(-3))},
        "R": {"Y": (Fraction(-5), 0, Fraction(-4)),
              "Z": (("S", "T", Fraction("4.5"), Fraction(0)), 0, ("Q", "R", CE_GADGET_E, Fraction(0)))},
    }
    for side, moves in layout.items():
        down = b.add(root, side, Player.DOWN, actions=tuple(moves), observations=("", side))
        for move, outcomes in moves.items():
            seen = f"{side}:{move}"
            up = b.add(down, move, Player.UP, actions=("a", "b", "c"), observations=("?", seen))
            for action, outcome in zip(("a", "b", "c"), outcomes):
                if isinstance(outcome, tuple):
                    first, second, u_first, u_second = outcome
                    inner = b.add(up, action, Player.DOWN, actions=(first, second),
                                  observations=(f"?{action}", f"{seen}:{action}"))
                    for label, value in ((first, u_first), (second, u_second)):
                        b.add(inner, label, Player.TERMINAL, utility=value,
                              observations=(f"?{action}?", f"{seen}:{action}:{label}"))
                else:
                    b.add(up, action, Player.TERMINAL, utility=Fraction(outcome),
                          observations=(f"?{action}", f"{seen}:{action}"))
    return b.build(meta={"counterexample": True})


def build_ce_mp() -> GameTree:
    """Matching pennies where DOWN, after (T, t), may hand UP 10 instead of 1."""
    b = TreeBuilder("ce_mp")
    root = b.add(-1, None, Player.UP, actions=("H", "T"))
    for coin in ("H", "T"):
        down = b.add(root, coin, Player.DOWN, actions=("h", "t"), observations=(coin, ""))
        for guess in ("h", "t"):
            seen = (f"{coin}:{guess}", f"{guess}:{coin}")
            if coin == "T" and guess == "t":
                twist = b.add(down, guess, Player.DOWN, actions=("x", "y"), observations=seen)
                b.add(twist, "x", Player.TERMINAL, utility=Fraction(10),
                      observations=(seen[0] + ":?", seen[1] + ":x"))
                b.add(twist, "y", Player.TERMINAL, utility=Fraction(1),
                      observations=(seen[0] + ":?", seen[1] + ":y"))
            else:
                b.add(down, guess, Player.TERMINAL, utility=Fraction(int(coin.lower() == guess)),
                      observations=seen)
    return b.build(meta={"counterexample": True})


ROUND_NAMES = "abcdefghijklmnopqrstuvwxyz"


def build_ce_rounds(n_rounds: int = 3) -> GameTree:
    """
    Multi-round prepare/continue game.

    A root chance picks one of `n_rounds` side branches or the main line,
    each with probability 1/(n_rounds + 1). On side branch r UP stays for 2
    or leaves for 0. On the main line DOWN prepares or continues each round;
    after a continue a fair chance ends the game with payoff 1 or moves on.
    After a prepare in round r UP stays for 0 or leaves for 4**r. In the last
    round a stay hands DOWN a final choice: the branch labelled "c" pays
    4**n / 4 (16 for three rounds), "m" pays 0. UP's round-r infoset spans
    the side branch and the prepared main-line node.
    """
    if n_rounds < 3:
        raise ParameterError(f"ce_rounds needs at least three rounds, got {n_rounds}")
    if n_rounds > len(ROUND_NAMES):
        raise ParameterError(f"ce_rounds supports at most {len(ROUND_NAMES)} rounds")
    b = TreeBuilder(f"ce_rounds:{n_rounds}")
    names = ROUND_NAMES[:n_rounds]
    share = Fraction(1, n_rounds + 1)
    root = b.add(-1, None, Player.CHANCE, actions=tuple(f"x{r}" for r in names) + ("play",),
                 chance_probs=(share,) * (n_rounds + 1))
    for name in names:
        up = b.add(root, f"x{name}", Player.UP, actions=(f"s{name}", f"l{name}"),
                   observations=(f"r{name}", f"x{name}"))
        b.add(up, f"s{name}", Player.TERMINAL, utility=Fraction(2),
              observations=(f"r{name}:s", f"x{name}:s"))
        b.add(up, f"l{name}", Player.TERMINAL, utility=Fraction(0),
              observations=(f"r{name}:l", f"x{name}:l"))

    parent, label, seen = root, "play", "play"
    for r, name in enumerate(names, start=1):
        last = r == n_rounds
        down = b.add(parent, label, Player.DOWN, actions=(f"p{name}", f"c{name}"), observations=("", seen))
        prepared = f"{seen}:p{name}"
        up = b.add(down, f"p{name}", Player.UP, actions=(f"s{name}", f"l{name}"),
                   observations=(f"r{name}", prepared))
        if last:
            mistake = b.add(up, f"s{name}", Player.DOWN, actions=("c", "m"),
                            observations=(f"r{name}:s", prepared + ":s"))
            b.add(mistake, "c", Player.TERMINAL, utility=Fraction(4 ** n_rounds, 4),
                  observations=(f"r{name}:s?", prepared + ":s:c"))
            b.add(mistake, "m", Player.TERMINAL, utility=Fraction(0),
                  observations=(f"r{name}:s?", prepared + ":s:m"))
        else:
            b.add(up, f"s{name}", Player.TERMINAL, utility=Fraction(0),
                  observations=(f"r{name}:s", prepared + ":s"))
        b.add(up, f"l{name}", Player.TERMINAL, utility=Fraction(4 ** r),
              observations=(f"r{name}:l", prepared + ":l"))
        continued = f"{seen}:c{name}"
        if last:
            b.add(down, f"c{name}", Player.TERMINAL, utility=Fraction(1), observations=("", continued))
            break
        coin = b.add(down, f"c{name}", Player.CHANCE, actions=("stop", "go"), chance_probs=(HALF, HALF),
                     observations=("", continued))
        b.add(coin, "stop", Player.TERMINAL, utility=Fraction(1), observations=("", continued + ":stop"))
        parent, label, seen = coin, "go", continued + ":go"
    return b.build(meta={"counterexample": True, "rounds": n_rounds})


# ─── opponent models for the counterexamples ────────────────────────────


def _exact(values: Sequence) -> np.ndarray:
    return np.array([Fraction(v) for v in values], dtype=object)


def ce_gadget_model() -> BehavioralStrategy:
    """DOWN plays W, Z, M, O, Q, S."""
    return BehavioralStrategy(Player.DOWN, {
        "D:L": _exact([1, 0]),
        "D:R": _exact([0, 1]),
        "D:L:W:c": _exact([1, 0]),
        "D:L:W:a": _exact([1, 0]),
        "D:R:Z:c": _exact([1, 0]),
        "D:R:Z:a": _exact([1, 0]),
    })


def ce_coin_model() -> BehavioralStrategy:
    """DOWN plays (RH, GH)."""
    return BehavioralStrategy(Player.DOWN, {"D:R": _exact([1, 0]), "D:G": _exact([1, 0])})


def ce_mp_model() -> BehavioralStrategy:
    """DOWN plays h with 2/3 and always x."""
    return BehavioralStrategy(Player.DOWN, {
        "D:": _exact([Fraction(2, 3), Fraction(1, 3)]),
        "D:t:T": _exact([1, 0]),
    })


def ce_rounds_model(tree: GameTree, continue_prob: Fraction = Fraction(3, 5)) -> BehavioralStrategy:
    """DOWN continues with `continue_prob` every round and avoids the final gift."""
    probs = {}
    for infoset in tree.player_infosets(Player.DOWN):
        if infoset.actions == ("c", "m"):
            probs[infoset.key] = _exact([0, 1])
        else:
            probs[infoset.key] = _exact([1 - continue_prob, continue_prob])
    return BehavioralStrategy(Player.DOWN, probs)


def ce_rounds_continue_keys(tree: GameTree) -> List[str]:
    """DOWN's prepare/continue infoset keys ordered by round."""
    keys = [i.key for i in tree.player_infosets(Player.DOWN) if i.actions != ("c", "m")]
    return sorted(keys, key=lambda k: (k.count(":"), k))


# ─── registry ───────────────────────────────────────────────────────────


@dataclass(frozen=True)
class GameSpec:
    name: str
    builder: Callable[..., GameTree]
    parameters: Dict[str, int] = field(default_factory=dict)

    def build(self) -> GameTree:
        logger.info(f"Building game {self.selector}")
        return self.builder(**self.parameters)

    @property
    def selector(self) -> str:
        if not self.parameters:
            return self.name
        return self.name + "".join(f":{v}" for v in self.parameters.values())


GAMES: Dict[str, GameSpec] = {
    "kuhn": GameSpec("kuhn", build_kuhn),
    "leduc": GameSpec("leduc", build_leduc),
    "goofspiel5": GameSpec("goofspiel5", build_goofspiel5),
    "liars_dice": GameSpec("liars_dice", build_liars_dice),
    "ce_coin": GameSpec("ce_coin", build_ce_coin),
    "ce_gadget": GameSpec("ce_gadget", build_ce_gadget),
    "ce_mp": GameSpec("ce_mp", build_ce_mp),
    "ce_rounds": GameSpec("ce_rounds", build_ce_rounds, {"n_rounds": 3}),
}


def parse_game(selector: str) -> GameSpec:
    """Resolve a CLI game selector such as `leduc` or `ce_rounds:4`."""
    name, _, argument = selector.partition(":")
    if name not in GAMES:
        raise ParameterError(f"Unknown game {selector!r}; choose from {', '.join(sorted(GAMES))}")
    spec = GAMES[name]
    if not argument:
        return spec
    if name != "ce_rounds":
        raise ParameterError(f"Game {name} takes no parameter")
    try:
        rounds = int(argument)
    except ValueError:
        raise ParameterError(f"Round count must be an integer, got {argument!r}") from None
    return GameSpec(name, spec.builder, {"n_rounds": rounds})


@lru_cache(maxsize=16)
def build_game(selector: str) -> GameTree:
    return parse_game(selector).build()

"""No-limit hold'em hand engine: blinds, betting rounds, side pots, showdown."""

from __future__ import annotations

import enum
import json
import logging
import re
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np

from ..agents import AgentFailure, ChatMessage
from .cards import Card, HandRank, evaluate_best, shuffled_deck

log = logging.getLogger(__name__)


class Stage(str, enum.Enum):
    PREFLOP = "preflop"
    FLOP = "flop"
    TURN = "turn"
    RIVER = "river"
    SHOWDOWN = "showdown"
    DONE = "done"


HAND_SCHEMA_VERSION = "interbench.poker/1"

BETTING_STAGES = (Stage.PREFLOP, Stage.FLOP, Stage.TURN, Stage.RIVER)
BOARD_SIZE = {Stage.PREFLOP: 0, Stage.FLOP: 3, Stage.TURN: 4, Stage.RIVER: 5, Stage.SHOWDOWN: 5}


class ActionKind(str, enum.Enum):
    FOLD = "FOLD"
    CHECK = "CHECK"
    CALL = "CALL"
    RAISE = "RAISE"
    ALL_IN = "ALL_IN"


class IllegalAction(ValueError):
    """A proposed action the table rules do not allow; ``reason`` says why."""

    def __init__(self, reason: str):
        self.reason = reason
        super().__init__(reason)


@dataclass(frozen=True)
class PokerAction:
    kind: ActionKind
    amount: int = 0  # total wager for the current street

    def __post_init__(self):
        object.__setattr__(self, "kind", ActionKind(self.kind))
        if self.amount < 0:
            raise ValueError("amount must be non-negative")
        if self.kind in (ActionKind.FOLD, ActionKind.CHECK) and self.amount != 0:
            object.__setattr__(self, "amount", 0)


@dataclass(frozen=True)
class ActionRecord:
    seat: int
    stage: Stage
    kind: ActionKind
    amount: int
    auto: bool = False
    blind: bool = False
    reasoning: str = ""

    def to_dict(self) -> dict:
        d = {"seat": self.seat, "stage": self.stage.value, "action": self.kind.value, "amount": self.amount}
        if self.reasoning:
            d["reasoning"] = self.reasoning
        if self.auto:
            d["auto"] = True
        if self.blind:
            d["blind"] = True
        return d


@dataclass(frozen=True)
class Pot:
    amount: int
    eligible: frozenset[int]


@dataclass
class TableState:
    stage: Stage
    stacks: list[int]
    hole: list[list[Card]]
    button: int
    blinds: tuple[int, int]
    community: list[Card] = field(default_factory=list)
    to_act: int | None = None
    current_bet: int = 0
    history: list[ActionRecord] = field(default_factory=list)
    street_bets: list[int] = field(default_factory=list)
    committed: list[int] = field(default_factory=list)
    folded: list[bool] = field(default_factory=list)
    dealt: list[bool] = field(default_factory=list)
    min_raise: int = 0
    pending: set[int] = field(default_factory=set)
    deck: list[Card] = field(default_factory=list)
    hand_number: int = 0

    @property
    def n_seats(self) -> int:
        return len(self.stacks)

    def active(self, seat: int) -> bool:
        return self.dealt[seat] and not self.folded[seat]

    def can_act(self, seat: int) -> bool:
        return self.active(seat) and self.stacks[seat] > 0

    @property
    def active_seats(self) -> list[int]:
        return [s for s in range(self.n_seats) if self.active(s)]

    @property
    def pots(self) -> list[Pot]:
        return compute_pots(self.committed, [self.active(s) for s in range(self.n_seats)])

    @property
    def pot_total(self) -> int:
        return sum(self.committed)

    def to_call(self, seat: int) -> int:
        return max(0, self.current_bet - self.street_bets[seat])

    def chips_in_play(self) -> int:
        return sum(self.stacks) + sum(p.amount for p in self.pots)

    def seats_after(self, seat: int) -> list[int]:
        n = self.n_seats
        return [(seat + i) % n for i in range(1, n + 1)]


def compute_pots(committed: Sequence[int], live: Sequence[bool]) -> list[Pot]:
    """Split total contributions into a main pot and side pots.

    Each contribution layer goes to the pot whose eligible set is the live
    seats that covered that layer. A layer nobody live covered is merged
    into the pot below it.
    """
    levels = sorted({c for c in committed if c > 0})
    pots: list[Pot] = []
    prev = 0
    for level in levels:
        amount = sum(min(c, level) - min(c, prev) for c in committed)
        eligible = frozenset(s for s, c in enumerate(committed) if live[s] and c >= level)
        prev = level
        if amount == 0:
            continue
        if not eligible and pots:
            last = pots.pop()
            pots.append(Pot(last.amount + amount, last.eligible))
        elif pots and pots[-1].eligible == eligible:
            last = pots.pop()
            pots.append(Pot(last.amount + amount, eligible))
        else:
            pots.append(Pot(amount, eligible))
    return pots


def pot_odds(call_amount: int, pot: int) -> Fraction:
    """Share of the post-call pot the caller must put in: call / (pot + call)."""
    if call_amount < 0 or pot < 0:
        raise ValueError("amounts must be non-negative")
    if call_amount == 0 and pot == 0:
        raise ValueError("pot odds undefined for an empty pot and no call")
    return Fraction(call_amount, pot + call_amount)


# -- rules ------------------------------------------------------------------

def validate_action(state: TableState, seat: int, proposed: PokerAction) -> PokerAction:
    """Return the legal, normalized form of ``proposed`` or raise IllegalAction."""
    if seat != state.to_act:
        raise IllegalAction(f"seat {seat} is not to act (seat {state.to_act} is)")
    stack = state.stacks[seat]
    street = state.street_bets[seat]
    to_call = state.to_call(seat)
    cap = street + stack
    kind = proposed.kind
    if kind is ActionKind.FOLD:
        return PokerAction(ActionKind.FOLD)
    if kind is ActionKind.CHECK:
        if to_call > 0:
            raise IllegalAction(f"cannot check facing a bet of {state.current_bet} (to call {to_call})")
        return PokerAction(ActionKind.CHECK)
    if kind is ActionKind.CALL:
        if to_call == 0:
            return PokerAction(ActionKind.CHECK)
        if stack <= to_call:
            return PokerAction(ActionKind.ALL_IN, cap)
        return PokerAction(ActionKind.CALL, state.current_bet)
    if kind is ActionKind.ALL_IN:
        return PokerAction(ActionKind.ALL_IN, cap)
    # RAISE
    amount = proposed.amount
    if amount >= cap:
        return PokerAction(ActionKind.ALL_IN, cap)
    if amount <= state.current_bet:
        raise IllegalAction(f"raise to {amount} must exceed the current bet {state.current_bet}")
    if amount - state.current_bet < state.min_raise:
        raise IllegalAction(
            f"raise to {amount} is below the minimum raise to {state.current_bet + state.min_raise}"
        )
    return PokerAction(ActionKind.RAISE, amount)


def _put_in(state: TableState, seat: int, chips: int) -> None:
    chips = min(chips, state.stacks[seat])
    state.stacks[seat] -= chips
    state.street_bets[seat] += chips
    state.committed[seat] += chips


def apply_action(state: TableState, seat: int, action: PokerAction, *, auto: bool = False, reasoning: str = "") -> None:
    """Apply an already-validated action and move ``to_act`` along."""
    kind = action.kind
    if kind is ActionKind.FOLD:
        state.folded[seat] = True
    elif kind in (ActionKind.CALL, ActionKind.RAISE, ActionKind.ALL_IN):
        target = action.amount if kind is not ActionKind.CALL else state.current_bet
        _put_in(state, seat, target - state.street_bets[seat])
    total = state.street_bets[seat]
    state.pending.discard(seat)
    if total > state.current_bet:
        increment = total - state.current_bet
        state.current_bet = total
        if increment >= state.min_raise:
            state.min_raise = increment
            state.pending = {s for s in range(state.n_seats) if s != seat and state.can_act(s)}
        else:
            # short all-in: only seats now facing more chips must respond
            state.pending |= {
                s for s in range(state.n_seats)
                if s != seat and state.can_act(s) and state.street_bets[s] < state.current_bet
            }
    state.history.append(ActionRecord(seat, state.stage, kind, action.amount, auto=auto, reasoning=reasoning))
    state.to_act = _next_to_act(state, seat)


def _next_to_act(state: TableState, after: int) -> int | None:
    if len(state.active_seats) <= 1:
        return None
    for s in state.seats_after(after):
        if s in state.pending:
            return s
    return None


def settle_showdown(state: TableState) -> list[int]:
    """Chips each seat collects from the pots (gross, not net of contributions)."""
    payouts = [0] * state.n_seats
    live = state.active_seats
    if len(live) == 1:
        payouts[live[0]] = state.pot_total
        return payouts
    ranks: dict[int, HandRank] = {s: evaluate_best(state.hole[s] + state.community) for s in live}
    order = state.seats_after(state.button)  # odd chips go to the first winner left of the button
    for pot in state.pots:
        contenders = [s for s in pot.eligible if s in ranks]
        best = max(ranks[s] for s in contenders)
        winners = sorted((s for s in contenders if ranks[s] == best), key=order.index)
        share, odd = divmod(pot.amount, len(winners))
        for i, s in enumerate(winners):
            payouts[s] += share + (1 if i < odd else 0)
    return payouts


# -- agent interface --------------------------------------------------------

POKER_SYSTEM = (
    "You are a no-limit Texas Hold'em player trying to maximize your chip stack. "
    "Each message gives the table state as JSON. Reply with a JSON object with keys:\n"
    '- "action": one of "FOLD", "CHECK", "CALL", "RAISE", "ALL_IN"\n'
    '- "amount": your total wager for this betting round (0 for FOLD or CHECK, the '
    "current bet for CALL, more than the current bet for RAISE)\n"
    '- "reasoning": a brief justification of at most 20 words'
)

_BARE_ACTION_RE = re.compile(r"^\s*(FOLD|CHECK|CALL|RAISE|ALL[_ ]IN)\b\s*(\d+)?", re.IGNORECASE)


class ReplyParseError(ValueError):
    pass


def parse_poker_reply(text: str) -> tuple[PokerAction, str]:
    """Read a JSON action reply (or a bare ``ACTION [amount]`` line)."""
    text = text or ""
    start, end = text.find("{"), text.rfind("}")
    if start >= 0 and end > start:
        try:
            obj = json.loads(text[start : end + 1])
        except json.JSONDecodeError as exc:
            raise ReplyParseError(f"invalid JSON: {exc.msg}") from None
        if not isinstance(obj, dict) or "action" not in obj:
            raise ReplyParseError("JSON reply lacks an 'action' field")
        name = str(obj["action"]).strip().upper().replace(" ", "_")
        if name not in ActionKind.__members__:
            raise ReplyParseError(f"unknown action {obj['action']!r}")
        try:
            amount = int(obj.get("amount") or 0)
        except (TypeError, ValueError):
            raise ReplyParseError(f"amount {obj.get('amount')!r} is not an integer") from None
        if amount < 0:
            raise ReplyParseError("amount must be non-negative")
        return PokerAction(ActionKind[name], amount), str(obj.get("reasoning", ""))
    match = _BARE_ACTION_RE.match(text)
    if match:
        name = match.group(1).upper().replace(" ", "_")
        return PokerAction(ActionKind[name], int(match.group(2) or 0)), ""
    raise ReplyParseError("no recognizable action")


def observation(state: TableState, seat: int) -> dict:
    to_call = state.to_call(seat)
    pot = state.pot_total
    return {
        "hand_number": state.hand_number,
        "seat": seat,
        "stage": state.stage.value,
        "hole_cards": [str(c) for c in state.hole[seat]],
        "community": [str(c) for c in state.community],
        "pot": pot,
        "current_bet": state.current_bet,
        "to_call": to_call,
        "your_street_bet": state.street_bets[seat],
        "min_raise": state.min_raise,
        "stacks": {str(s): state.stacks[s] for s in range(state.n_seats)},
        "pot_odds": float(pot_odds(to_call, pot)) if pot + to_call > 0 else 0.0,
        "recent_actions": [a.to_dict() for a in state.history],
    }


@dataclass
class Decision:
    action: PokerAction
    auto_fold: bool
    latency_ms: int
    attempts: int
    reasoning: str = ""
    failed: bool = False  # the agent raised AgentFailure


def act_with_retry(agent, state: TableState) -> Decision:
    """Ask ``agent`` for the action of the seat to act; one retry, then fold."""
    seat = state.to_act
    messages = [
        ChatMessage("system", POKER_SYSTEM),
        ChatMessage("user", json.dumps(observation(state, seat), sort_keys=True)),
    ]
    latency = 0
    for attempt in (1, 2):
        try:
            reply = agent.reply(messages)
        except AgentFailure as exc:
            log.info("seat %d agent failure, auto-fold: %s", seat, exc)
            return Decision(PokerAction(ActionKind.FOLD), True, latency, attempt, failed=True)
        latency += reply.latency_ms
        try:
            proposed, reasoning = parse_poker_reply(reply.content)
            return Decision(validate_action(state, seat, proposed), False, latency, attempt, reasoning)
        except (ReplyParseError, IllegalAction) as exc:
            messages.append(ChatMessage("assistant", reply.content or "(empty)"))
            messages.append(
                ChatMessage("user", f"Invalid action: {exc}. Reply again with a valid JSON action.")
            )
    return Decision(PokerAction(ActionKind.FOLD), True, latency, 2)


# -- hand flow --------------------------------------------------------------

@dataclass
class HandResult:
    hand_number: int
    button: int
    blinds: tuple[int, int]
    starting_stacks: list[int]
    payouts: list[int]
    net: list[int]
    ended_stage: Stage
    community: list[Card]
    hole: list[list[Card]]
    history: list[ActionRecord]
    showdown: dict[int, HandRank]
    dealt: list[bool]
    vpip: list[bool]
    folded: list[bool]
    decisions: list[int]
    latencies: list[list[int]]
    auto_folds: list[int]
    agent_failures: list[int]

    def to_dict(self) -> dict:
        return {
            "schema_version": HAND_SCHEMA_VERSION,
            "hand_number": self.hand_number,
            "button": self.button,
            "blinds": list(self.blinds),
            "starting_stacks": self.starting_stacks,
            "hole": [[str(c) for c in h] for h in self.hole],
            "community": [str(c) for c in self.community],
            "history": [a.to_dict() for a in self.history],
            "ended_stage": self.ended_stage.value,
            "showdown": {str(s): str(r) for s, r in self.showdown.items()},
            "payouts": self.payouts,
            "net": self.net,
            "dealt": self.dealt,
            "vpip": self.vpip,
            "folded": self.folded,
            "decisions": self.decisions,
            "latencies": self.latencies,
            "auto_folds": self.auto_folds,
            "agent_failures": self.agent_failures,
        }


def _blind_seats(state: TableState) -> tuple[int, int]:
    dealt = [s for s in state.seats_after(state.button) if state.dealt[s]]
    if len(dealt) == 2:
        # heads-up: the button posts the small blind
        return state.button, next(s for s in dealt if s != state.button)
    return dealt[0], dealt[1]


def deal_order(n_seats: int, button: int, dealt: Sequence[bool]) -> list[int]:
    return [(button + i) % n_seats for i in range(1, n_seats + 1) if dealt[(button + i) % n_seats]]


def stacked_deck(
    n_seats: int,
    button: int,
    hole: dict[int, Sequence[Card]],
    community: Sequence[Card],
    dealt: Sequence[bool] | None = None,
) -> list[Card]:
    """Deck order that deals the given hole and board cards; the rest is filler."""
    from .cards import FULL_DECK

    dealt = dealt or [True] * n_seats
    used = {c for cs in hole.values() for c in cs} | set(community)
    filler = iter([c for c in FULL_DECK if c not in used])
    order = deal_order(n_seats, button, dealt)
    deck: list[Card] = [None] * (2 * len(order))  # type: ignore[list-item]
    for rnd in range(2):
        for i, s in enumerate(order):
            given = hole.get(s)
            deck[rnd * len(order) + i] = given[rnd] if given else next(filler)
    board = list(community) + [next(filler) for _ in range(5 - len(community))]
    return deck + board + list(filler)


def start_hand(
    stacks: Sequence[int],
    button: int,
    blinds: tuple[int, int],
    deck: Sequence[Card],
    hand_number: int = 0,
) -> TableState:
    n = len(stacks)
    dealt = [s > 0 for s in stacks]
    if sum(dealt) < 2:
        raise ValueError("a hand needs at least two seats with chips")
    state = TableState(
        stage=Stage.PREFLOP,
        stacks=list(stacks),
        hole=[[] for _ in range(n)],
        button=button,
        blinds=tuple(blinds),
        street_bets=[0] * n,
        committed=[0] * n,
        folded=[False] * n,
        dealt=dealt,
        min_raise=blinds[1],
        deck=list(deck),
        hand_number=hand_number,
    )
    order = deal_order(n, button, dealt)
    pos = 0
    for _ in range(2):
        for s in order:
            state.hole[s].append(state.deck[pos])
            pos += 1
    state.deck = state.deck[pos:]
    return state


def post_blinds(state: TableState) -> None:
    sb_seat, bb_seat = _blind_seats(state)
    for seat, size in ((sb_seat, state.blinds[0]), (bb_seat, state.blinds[1])):
        _put_in(state, seat, size)
        kind = ActionKind.ALL_IN if state.stacks[seat] == 0 else ActionKind.RAISE
        state.history.append(ActionRecord(seat, Stage.PREFLOP, kind, state.street_bets[seat], blind=True))
    state.current_bet = max(state.street_bets)
    state.min_raise = state.blinds[1]
    _open_street(state, first_after=bb_seat)


def _open_street(state: TableState, first_after: int) -> None:
    actors = [s for s in range(state.n_seats) if state.can_act(s)]
    if len(actors) >= 2:
        state.pending = set(actors)
    else:
        state.pending = {s for s in actors if state.street_bets[s] < state.current_bet}
    state.to_act = _next_to_act(state, first_after)


def _advance_street(state: TableState) -> None:
    nxt = BETTING_STAGES[BETTING_STAGES.index(state.stage) + 1] if state.stage is not Stage.RIVER else Stage.SHOWDOWN
    state.stage = nxt
    need = BOARD_SIZE[nxt] - len(state.community)
    state.community.extend(state.deck[:need])
    state.deck = state.deck[need:]
    state.street_bets = [0] * state.n_seats
    state.current_bet = 0
    state.min_raise = state.blinds[1]
    if nxt is not Stage.SHOWDOWN:
        _open_street(state, first_after=state.button)


def run_hand(
    state: TableState,
    agents: Sequence,
    on_step: Callable[[TableState], None] | None = None,
) -> HandResult:
    """Play a dealt hand (see :func:`start_hand`) to completion.

    ``agents[i]`` is any object with ``reply(messages) -> AgentReply``.
    ``on_step`` is called after every state change.
    """
    step = on_step or (lambda s: None)
    n = state.n_seats
    starting = [state.stacks[s] + state.committed[s] for s in range(n)]
    decisions = [0] * n
    latencies: list[list[int]] = [[] for _ in range(n)]
    auto_folds = [0] * n
    failures = [0] * n
    vpip = [False] * n
    if not state.history:
        post_blinds(state)
    step(state)
    while True:
        while state.to_act is not None:
            seat = state.to_act
            decision = act_with_retry(agents[seat], state)
            decisions[seat] += 1
            latencies[seat].append(decision.latency_ms)
            auto_folds[seat] += decision.auto_fold
            failures[seat] += decision.failed
            if state.stage is Stage.PREFLOP and decision.action.kind in (
                ActionKind.CALL, ActionKind.RAISE, ActionKind.ALL_IN
            ):
                vpip[seat] = True
            apply_action(state, seat, decision.action, auto=decision.auto_fold, reasoning=decision.reasoning)
            step(state)
        if len(state.active_seats) == 1 or state.stage is Stage.RIVER:
            break
        _advance_street(state)
        step(state)
    ended = state.stage
    if len(state.active_seats) > 1:
        while len(state.community) < 5:
            state.community.append(state.deck.pop(0))
        state.stage = Stage.SHOWDOWN
        ended = Stage.SHOWDOWN
    payouts = settle_showdown(state)
    showdown = (
        {s: evaluate_best(state.hole[s] + state.community) for s in state.active_seats}
        if len(state.active_seats) > 1
        else {}
    )
    committed = list(state.committed)
    for s in range(n):
        state.stacks[s] += payouts[s]
    state.committed = [0] * n
    state.street_bets = [0] * n
    state.stage = Stage.DONE
    state.to_act = None
    step(state)
    return HandResult(
        hand_number=state.hand_number,
        button=state.button,
        blinds=state.blinds,
        starting_stacks=starting,
        payouts=payouts,
        net=[payouts[s] - committed[s] for s in range(n)],
        ended_stage=ended,
        community=list(state.community),
        hole=[list(h) for h in state.hole],
        history=list(state.history),
        showdown=showdown,
        dealt=list(state.dealt),
        vpip=vpip,
        folded=list(state.folded),
        decisions=decisions,
        latencies=latencies,
        auto_folds=auto_folds,
        agent_failures=failures,
    )


def new_hand(
    stacks: Sequence[int],
    button: int,
    blinds: tuple[int, int],
    rng: np.random.Generator | None = None,
    deck: Sequence[Card] | None = None,
    hand_number: int = 0,
) -> TableState:
    if deck is None:
        deck = shuffled_deck(rng if rng is not None else np.random.default_rng(0))
    return start_hand(stacks, button, blinds, deck, hand_number)

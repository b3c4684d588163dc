"""Cards, decks, and seven-card hand evaluation."""

from __future__ import annotations

import enum
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

RANK_CHARS = "23456789TJQKA"
SUIT_CHARS = "SHDC"
SUIT_NAMES = {"S": "spades", "H": "hearts", "D": "diamonds", "C": "clubs"}


@dataclass(frozen=True, order=True)
class Card:
    rank: int  # 2..14, ace high
    suit: str  # one of S H D C

    def __post_init__(self):
        if not 2 <= self.rank <= 14:
            raise ValueError(f"bad rank {self.rank}")
        if self.suit not in SUIT_CHARS:
            raise ValueError(f"bad suit {self.suit!r}")

    @classmethod
    def parse(cls, text: str) -> "Card":
        text = text.strip()
        if len(text) != 2:
            raise ValueError(f"card text must be rank+suit, got {text!r}")
        r, s = text[0].upper(), text[1].upper()
        if r not in RANK_CHARS or s not in SUIT_CHARS:
            raise ValueError(f"unknown card {text!r}")
        return cls(RANK_CHARS.index(r) + 2, s)

    def __str__(self) -> str:
        return RANK_CHARS[self.rank - 2] + self.suit

    @property
    def index(self) -> int:
        return (self.rank - 2) * 4 + SUIT_CHARS.index(self.suit)


FULL_DECK: tuple[Card, ...] = tuple(Card(r, s) for r in range(2, 15) for s in SUIT_CHARS)


def cards(text: str) -> list[Card]:
    """``cards("AS KS 2h")`` -> three Cards."""
    return [Card.parse(t) for t in text.replace(",", " ").split()]


def shuffled_deck(rng: np.random.Generator) -> list[Card]:
    deck = list(FULL_DECK)
    # Fisher-Yates driven by the table stream
    for i in range(len(deck) - 1, 0, -1):
        j = int(rng.integers(0, i + 1))
        deck[i], deck[j] = deck[j], deck[i]
    return deck


class Category(enum.IntEnum):
    HIGH_CARD = 0
    ONE_PAIR = 1
    TWO_PAIR = 2
    THREE_OF_A_KIND = 3
    STRAIGHT = 4
    FLUSH = 5
    FULL_HOUSE = 6
    FOUR_OF_A_KIND = 7
    STRAIGHT_FLUSH = 8


@dataclass(frozen=True, order=True)
class HandRank:
    category: Category
    tiebreak: tuple[int, ...]

    def __str__(self) -> str:
        ranks = " ".join(RANK_CHARS[r - 2] for r in self.tiebreak)
        return f"{self.category.name.replace('_', ' ').title()} ({ranks})"


def _straight_top(distinct_desc: Sequence[int]) -> int | None:
    ranks = set(distinct_desc)
    if 14 in ranks:
        ranks.add(1)
    for top in range(14, 4, -1):
        if all(r in ranks for r in range(top - 4, top + 1)):
            return top
    return None


def evaluate_hand(seven: Iterable[Card]) -> HandRank:
    """Best five-card rank available in seven distinct cards."""
    hand = list(seven)
    if len(hand) != 7:
        raise ValueError(f"expected 7 cards, got {len(hand)}")
    if len(set(hand)) != 7:
        raise ValueError("duplicate cards")
    return _best_rank(hand)


def _best_rank(hand: Sequence[Card]) -> HandRank:
    by_suit: dict[str, list[int]] = {}
    for c in hand:
        by_suit.setdefault(c.suit, []).append(c.rank)
    flush_ranks = next((sorted(rs, reverse=True) for rs in by_suit.values() if len(rs) >= 5), None)
    if flush_ranks is not None:
        top = _straight_top(flush_ranks)
        if top is not None:
            return HandRank(Category.STRAIGHT_FLUSH, (top,))

    counts = Counter(c.rank for c in hand)
    # groups ordered by (multiplicity, rank), largest first
    groups = sorted(counts.items(), key=lambda kv: (kv[1], kv[0]), reverse=True)
    distinct = sorted(counts, reverse=True)

    def kickers(exclude: set[int], n: int) -> tuple[int, ...]:
        return tuple(r for r in distinct if r not in exclude)[:n]

    quads = [r for r, n in groups if n == 4]
    if quads:
        q = quads[0]
        return HandRank(Category.FOUR_OF_A_KIND, (q,) + kickers({q}, 1))

    trips = sorted((r for r, n in groups if n == 3), reverse=True)
    pairs = sorted((r for r, n in groups if n == 2), reverse=True)
    if trips and (len(trips) >= 2 or pairs):
        t = trips[0]
        p = max(trips[1:] + pairs)
        return HandRank(Category.FULL_HOUSE, (t, p))

    if flush_ranks is not None:
        return HandRank(Category.FLUSH, tuple(flush_ranks[:5]))

    top = _straight_top(distinct)
    if top is not None:
        return HandRank(Category.STRAIGHT, (top,))

    if trips:
        t = trips[0]
        return HandRank(Category.THREE_OF_A_KIND, (t,) + kickers({t}, 2))
    if len(pairs) >= 2:
        hi, lo = pairs[0], pairs[1]
        return HandRank(Category.TWO_PAIR, (hi, lo) + kickers({hi, lo}, 1))
    if pairs:
        p = pairs[0]
        return HandRank(Category.ONE_PAIR, (p,) + kickers({p}, 3))
    return HandRank(Category.HIGH_CARD, tuple(distinct[:5]))


def evaluate_best(cards_: Iterable[Card]) -> HandRank:
    """Like :func:`evaluate_hand` but for 5 to 7 cards (early showdowns in tests)."""
    hand = list(cards_)
    if not 5 <= len(hand) <= 7 or len(set(hand)) != len(hand):
        raise ValueError("need 5-7 distinct cards")
    return _best_rank(hand)


def compare_hands(a: HandRank, b: HandRank) -> int:
    """-1, 0 or 1 as ``a`` loses to, ties, or beats ``b``."""
    return (a > b) - (a < b)

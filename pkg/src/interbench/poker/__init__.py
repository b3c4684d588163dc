"""No-limit Texas Hold'em environment."""

from .cards import FULL_DECK, Card, Category, HandRank, cards, compare_hands, evaluate_best, evaluate_hand
from .engine import (
    ActionKind,
    ActionRecord,
    Decision,
    HandResult,
    IllegalAction,
    PokerAction,
    Pot,
    Stage,
    TableState,
    act_with_retry,
    apply_action,
    compute_pots,
    new_hand,
    observation,
    parse_poker_reply,
    post_blinds,
    pot_odds,
    run_hand,
    settle_showdown,
    stacked_deck,
    start_hand,
    validate_action,
)
from .session import SessionStats, TableConfig, run_session, run_table, write_hand_history

__all__ = [
    "cards",
    "FULL_DECK",
    "Card",
    "Category",
    "HandRank",
    "compare_hands",
    "evaluate_best",
    "evaluate_hand",
    "ActionKind",
    "ActionRecord",
    "Decision",
    "HandResult",
    "IllegalAction",
    "PokerAction",
    "Pot",
    "Stage",
    "TableState",
    "act_with_retry",
    "apply_action",
    "compute_pots",
    "new_hand",
    "observation",
    "parse_poker_reply",
    "post_blinds",
    "pot_odds",
    "run_hand",
    "settle_showdown",
    "stacked_deck",
    "start_hand",
    "validate_action",
    "SessionStats",
    "TableConfig",
    "run_session",
    "run_table",
    "write_hand_history",
]

"""Budgeted interaction episodes shared by every task.

An episode is a sequence of :class:`TurnRecord` entries accumulated in an
:class:`EpisodeState` until a correct final guess arrives or the action
budget runs out. Finalized episodes become immutable :class:`Transcript`
objects that round-trip through JSONL.
"""

from __future__ import annotations

import enum
import json
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

SCHEMA_VERSION = "interbench.transcript/1"


class EpisodeError(ValueError):
    """Raised for invalid configs or illegal turns."""


class SchemaError(ValueError):
    """Raised when a persisted file cannot be parsed against the schema."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class Verdict(str, enum.Enum):
    YES = "Yes"
    NO = "No"
    BOTH = "Both"
    IRRELEVANT = "Irrelevant"
    CORRECT = "Correct"
    INCORRECT = "Incorrect"

    @property
    def is_query_verdict(self) -> bool:
        return self in QUERY_VERDICTS


QUERY_VERDICTS = frozenset({Verdict.YES, Verdict.NO, Verdict.BOTH, Verdict.IRRELEVANT})
GUESS_VERDICTS = frozenset({Verdict.CORRECT, Verdict.INCORRECT})


class Actor(str, enum.Enum):
    PLAYER = "player"
    JUDGE = "judge"
    ENVIRONMENT = "environment"


class ActionKind(str, enum.Enum):
    QUERY = "query"
    FINAL_GUESS = "final_guess"
    GAME_ACTION = "game_action"
    OBSERVATION = "observation"


class Outcome(str, enum.Enum):
    SOLVED = "solved"
    SOLVED_AT_BUDGET = "solved_at_budget"
    EXHAUSTED = "exhausted"
    ABORTED = "aborted"

    @property
    def is_solved(self) -> bool:
        return self in (Outcome.SOLVED, Outcome.SOLVED_AT_BUDGET)


@dataclass(frozen=True)
class EpisodeConfig:
    budget_B: int
    cost_per_action: int = 1
    discount_gamma: Fraction = Fraction(1)
    seed: int = 0

    def __post_init__(self):
        problems = self.violations()
        if problems:
            raise EpisodeError("; ".join(problems))
        object.__setattr__(self, "discount_gamma", Fraction(self.discount_gamma))

    def violations(self) -> list[str]:
        out = []
        if not isinstance(self.budget_B, int) or self.budget_B < 1:
            out.append(f"budget_B must be an integer >= 1, got {self.budget_B!r}")
        if not isinstance(self.cost_per_action, int) or self.cost_per_action < 1:
            out.append(f"cost_per_action must be a positive integer, got {self.cost_per_action!r}")
        try:
            gamma = Fraction(self.discount_gamma)
        except (TypeError, ValueError):
            out.append(f"discount_gamma must be rational, got {self.discount_gamma!r}")
        else:
            if not 0 < gamma <= 1:
                out.append(f"discount_gamma must lie in (0, 1], got {gamma}")
        if not isinstance(self.seed, int) or not 0 <= self.seed < 2**64:
            out.append(f"seed must be a 64-bit unsigned integer, got {self.seed!r}")
        return out

    def to_dict(self) -> dict:
        return {
            "budget_B": self.budget_B,
            "cost_per_action": self.cost_per_action,
            "discount_gamma": str(self.discount_gamma),
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "EpisodeConfig":
        return cls(
            budget_B=data["budget_B"],
            cost_per_action=data.get("cost_per_action", 1),
            discount_gamma=Fraction(data.get("discount_gamma", "1")),
            seed=data.get("seed", 0),
        )


@dataclass(frozen=True)
class TurnRecord:
    index_t: int
    actor: Actor
    action_kind: ActionKind
    content: str
    verdict: Verdict | None = None
    cost: int = 0
    latency_ms: int = 0
    token_usage: tuple[int, int] | None = None
    forced: bool = False

    def __post_init__(self):
        object.__setattr__(self, "actor", Actor(self.actor))
        object.__setattr__(self, "action_kind", ActionKind(self.action_kind))
        if self.verdict is not None:
            object.__setattr__(self, "verdict", Verdict(self.verdict))
        if self.token_usage is not None:
            object.__setattr__(self, "token_usage", tuple(int(x) for x in self.token_usage))
        if self.index_t < 1:
            raise EpisodeError("index_t is 1-based")
        if self.cost < 0 or self.latency_ms < 0:
            raise EpisodeError("cost and latency_ms must be non-negative")
        if self.token_usage is not None and min(self.token_usage) < 0:
            raise EpisodeError("token counts must be non-negative")
        if self.action_kind is ActionKind.OBSERVATION and self.cost != 0:
            raise EpisodeError("observation turns have cost 0")
        if self.actor is Actor.PLAYER and self.cost == 0 and not self.forced:
            raise EpisodeError("player actions must carry a positive cost")
        if self.verdict is not None:
            if self.action_kind is ActionKind.QUERY and not self.verdict.is_query_verdict:
                raise EpisodeError(f"verdict {self.verdict.value} cannot answer a query")
            if self.action_kind is ActionKind.FINAL_GUESS and self.verdict.is_query_verdict:
                raise EpisodeError(f"verdict {self.verdict.value} cannot grade a final guess")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["actor"] = self.actor.value
        d["action_kind"] = self.action_kind.value
        d["verdict"] = self.verdict.value if self.verdict else None
        d["token_usage"] = list(self.token_usage) if self.token_usage else None
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "TurnRecord":
        return cls(**data)


@dataclass(frozen=True)
class Transcript:
    config: EpisodeConfig
    turns: tuple[TurnRecord, ...]
    outcome: Outcome
    final_answer: str | None = None
    meta: dict = field(default_factory=dict)

    @property
    def total_cost(self) -> int:
        return sum(t.cost for t in self.turns)

    @property
    def costed_turns(self) -> int:
        return sum(1 for t in self.turns if t.cost > 0)


class EpisodeState:
    """Mutable single-owner state of one running episode."""

    def __init__(self, config: EpisodeConfig):
        self.config = config
        self.turns: list[TurnRecord] = []
        self.remaining = config.budget_B
        self.rng = np.random.default_rng(config.seed)
        self.outcome: Outcome | None = None
        self.final_answer: str | None = None
        self._forced_used = False

    @property
    def t(self) -> int:
        """Number of costed actions taken so far."""
        return sum(1 for turn in self.turns if turn.cost > 0)

    @property
    def terminal(self) -> bool:
        return self.outcome is not None or self.remaining == 0

    @property
    def solved(self) -> bool:
        return self.outcome is not None and self.outcome.is_solved

    def apply_turn(self, turn: TurnRecord) -> "EpisodeState":
        if self.outcome is not None:
            raise EpisodeError("episode already terminated")
        if turn.action_kind is ActionKind.OBSERVATION:
            return self._observe(turn)
        if turn.forced:
            return self._apply_forced(turn)
        if self.remaining == 0:
            raise EpisodeError("budget exhausted")
        if turn.cost > self.remaining:
            raise EpisodeError(f"turn cost {turn.cost} exceeds remaining budget {self.remaining}")
        self.turns.append(turn)
        self.remaining -= turn.cost
        if turn.action_kind is ActionKind.FINAL_GUESS:
            self.final_answer = turn.content
        if turn.verdict is Verdict.CORRECT:
            self.outcome = Outcome.SOLVED
        return self

    def _apply_forced(self, turn: TurnRecord) -> "EpisodeState":
        if self.remaining != 0 or self._forced_used:
            raise EpisodeError("a forced answer is only granted once, after budget exhaustion")
        if turn.cost != 0 or turn.action_kind is not ActionKind.FINAL_GUESS:
            raise EpisodeError("the forced answer is a zero-cost final guess")
        self._forced_used = True
        self.turns.append(turn)
        self.final_answer = turn.content
        if turn.verdict is Verdict.CORRECT:
            self.outcome = Outcome.SOLVED_AT_BUDGET
        return self

    def _observe(self, turn: TurnRecord) -> "EpisodeState":
        # a verdict must match the kind of player action it answers
        if turn.verdict is not None:
            acted = [t for t in self.turns if t.actor is Actor.PLAYER]
            if not acted:
                raise EpisodeError("a verdict needs a preceding player action")
            last = acted[-1]
            if last.action_kind is ActionKind.QUERY and not turn.verdict.is_query_verdict:
                raise EpisodeError(f"verdict {turn.verdict.value} cannot answer a query")
            if last.action_kind is ActionKind.FINAL_GUESS and turn.verdict.is_query_verdict:
                raise EpisodeError(f"verdict {turn.verdict.value} cannot grade a final guess")
            if turn.verdict is Verdict.CORRECT:
                self.outcome = Outcome.SOLVED_AT_BUDGET if last.forced else Outcome.SOLVED
        self.turns.append(turn)
        return self

    def needs_forced_answer(self) -> bool:
        """True once the budget is spent on a query and no forced answer was given."""
        if self.outcome is not None or self.remaining != 0 or self._forced_used:
            return False
        costed = [t for t in self.turns if t.cost > 0]
        return bool(costed) and costed[-1].action_kind is not ActionKind.FINAL_GUESS

    def abort(self, reason: str) -> "EpisodeState":
        self.outcome = Outcome.ABORTED
        self._abort_reason = reason
        return self

    def finalize(self, **meta) -> Transcript:
        outcome = self.outcome
        if outcome is None:
            if self.remaining != 0:
                raise EpisodeError("episode still has budget and no outcome")
            outcome = Outcome.EXHAUSTED
        if getattr(self, "_abort_reason", None):
            meta.setdefault("abort_reason", self._abort_reason)
        return Transcript(
            config=self.config,
            turns=tuple(self.turns),
            outcome=outcome,
            final_answer=self.final_answer,
            meta=meta,
        )


def new_episode(config: EpisodeConfig) -> EpisodeState:
    return EpisodeState(config)


def apply_turn(state: EpisodeState, turn: TurnRecord) -> EpisodeState:
    return state.apply_turn(turn)


def discounted_return(rewards: Sequence, gamma) -> Fraction:
    """Sum of ``gamma**(t-1) * r_t`` in exact rational arithmetic."""
    gamma = Fraction(gamma)
    if not 0 < gamma <= 1:
        raise ValueError("gamma must lie in (0, 1]")
    total = Fraction(0)
    weight = Fraction(1)
    for r in rewards:
        total += weight * Fraction(r)
        weight *= gamma
    return total


# -- persistence ------------------------------------------------------------

def _dumps(obj: dict) -> str:
    return json.dumps(obj, sort_keys=True, ensure_ascii=False, separators=(",", ":"))


def transcript_lines(transcript: Transcript) -> list[str]:
    lines = [
        _dumps(
            {
                "record": "header",
                "schema_version": SCHEMA_VERSION,
                "config": transcript.config.to_dict(),
                "meta": transcript.meta,
            }
        )
    ]
    for turn in transcript.turns:
        lines.append(_dumps({"record": "turn", **turn.to_dict()}))
    lines.append(
        _dumps(
            {
                "record": "footer",
                "outcome": transcript.outcome.value,
                "final_answer": transcript.final_answer,
                "n_turns": len(transcript.turns),
            }
        )
    )
    return lines


def write_transcript(transcript: Transcript, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(transcript_lines(transcript)) + "\n", encoding="utf-8")
    return path


def parse_transcript(lines: Iterable[str]) -> Transcript:
    header = footer = None
    turns: list[TurnRecord] = []
    lineno = 0
    for lineno, raw in enumerate(lines, start=1):
        if not raw.strip():
            continue
        try:
            obj = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"invalid JSON ({exc.msg})", lineno) from None
        kind = obj.pop("record", None)
        if header is None:
            if kind != "header":
                raise SchemaError("first record must be the header", lineno)
            version = obj.get("schema_version")
            if version != SCHEMA_VERSION:
                raise SchemaError(
                    f"unsupported schema_version {version!r} (expected {SCHEMA_VERSION!r})", lineno
                )
            header = obj
        elif footer is not None:
            raise SchemaError("records after footer", lineno)
        elif kind == "turn":
            try:
                turns.append(TurnRecord.from_dict(obj))
            except (TypeError, ValueError) as exc:
                raise SchemaError(f"bad turn record: {exc}", lineno) from None
        elif kind == "footer":
            footer = obj
        else:
            raise SchemaError(f"unknown record type {kind!r}", lineno)
    if header is None:
        raise SchemaError("empty transcript", lineno or 1)
    if footer is None:
        raise SchemaError("truncated transcript: missing footer", lineno)
    if footer.get("n_turns") != len(turns):
        raise SchemaError("turn count does not match footer", lineno)
    return Transcript(
        config=EpisodeConfig.from_dict(header["config"]),
        turns=tuple(turns),
        outcome=Outcome(footer["outcome"]),
        final_answer=footer.get("final_answer"),
        meta=header.get("meta", {}),
    )


def read_transcript(path: str | Path) -> Transcript:
    with open(path, encoding="utf-8") as fh:
        return parse_transcript(fh)

"""Logic and math proof protocols: player/judge episodes, pass@k, and metrics."""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, replace
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Sequence

from .agents import AgentFailure, AgentSpec, ChatMessage, derive_seed, make_agent
from .errors import UndefinedMetric
from .episode import (
    ActionKind,
    Actor,
    EpisodeConfig,
    Outcome,
    Transcript,
    TurnRecord,
    Verdict,
    new_episode,
)

FINAL_TAG = "[FINAL]"
QUERY_TAG = "[QUERY]"


class VerdictParseError(ValueError):
    pass


class GradingError(ValueError):
    """Neither an answer key nor a grading judge is available."""


@dataclass(frozen=True)
class ProofInstance:
    id: str
    domain: str
    problem: str
    hidden_solution: str
    final_answer_key: str | None = None

    def __post_init__(self):
        if self.domain not in ("logic", "math"):
            raise ValueError(f"domain must be logic or math, got {self.domain!r}")
        if not self.problem or not self.hidden_solution:
            raise ValueError(f"instance {self.id!r}: problem and hidden_solution must be non-empty")

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "domain": self.domain,
            "problem": self.problem,
            "hidden_solution": self.hidden_solution,
            "final_answer_key": self.final_answer_key,
        }


@dataclass(frozen=True)
class ProofRunResult:
    transcript: Transcript
    solved: bool
    turns_used: int
    interactive_tokens: int | None


@dataclass(frozen=True)
class PassKResult:
    instance_id: str
    attempts: tuple[tuple[str, bool, int | None], ...]
    k: int

    @property
    def success(self) -> bool:
        return any(correct for _, correct, _ in self.attempts)


def load_instances(path: str | Path) -> list[ProofInstance]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                out.append(ProofInstance(**json.loads(line)))
            except (json.JSONDecodeError, TypeError, ValueError) as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from None
    return out


# -- parsing ----------------------------------------------------------------

_VOCAB = {v.value.lower(): v for v in Verdict}
_VERDICT_RE = re.compile(r"\b(yes|no|both|irrelevant|correct|incorrect)\b", re.IGNORECASE)


def parse_verdict(raw_judge_text: str) -> Verdict:
    """Extract the single vocabulary verdict from a judge reply.

    Repeats of the same word are fine; two different vocabulary words, or
    none, are a parse error.
    """
    found = [m.group(1).lower() for m in _VERDICT_RE.finditer(raw_judge_text or "")]
    if not found:
        raise VerdictParseError(f"no verdict in {raw_judge_text!r}")
    if len(set(found)) > 1:
        raise VerdictParseError(f"ambiguous verdict in {raw_judge_text!r}: {sorted(set(found))}")
    return _VOCAB[found[-1]]


def classify_player_turn(text: str) -> tuple[ActionKind, str]:
    """Split a player reply into (kind, body) using its leading tag line."""
    stripped = text.strip()
    head, _, rest = stripped.partition("\n")
    tag = head.strip().upper()
    if tag == FINAL_TAG:
        return ActionKind.FINAL_GUESS, rest.strip()
    if tag == QUERY_TAG:
        return ActionKind.QUERY, rest.strip()
    return ActionKind.QUERY, stripped


def canonical_answer(text: str) -> str:
    """Normalize a short final answer for exact grading."""
    if text is None:
        return ""
    lines = [ln for ln in text.strip().splitlines() if ln.strip()]
    s = lines[-1] if lines else ""
    s = s.strip().rstrip(".").strip().strip("$").strip().casefold()
    s = re.sub(r"^(final answer|answer)\s*[:=]\s*", "", s)
    numeric = s.replace(",", "").replace(" ", "")
    try:
        return str(Fraction(numeric))
    except (ValueError, ZeroDivisionError):
        return " ".join(s.split())


def grade_exact(answer: str, key: str) -> bool:
    return canonical_answer(answer) == canonical_answer(key)


# -- prompts ----------------------------------------------------------------

PLAYER_SYSTEM = (
    "You are the Player in an interactive reasoning game. A Judge knows the hidden "
    "solution. Each turn, either ask one question the Judge can answer with YES, NO, "
    "BOTH or IRRELEVANT, or submit a final answer, which is graded CORRECT or INCORRECT. "
    "Every turn, including a wrong final answer, uses one unit of budget.\n"
    f"Start a question with the line {QUERY_TAG} and a final answer with the line {FINAL_TAG}."
)

JUDGE_SYSTEM = (
    "You are the Judge in an interactive reasoning game. You know the hidden solution "
    "below. Answer each QUERY with exactly one word: YES, NO, BOTH (the question mixes "
    "true and false parts) or IRRELEVANT (it does not bear on the solution). Grade each "
    "FINAL ANSWER with exactly one word: CORRECT or INCORRECT."
)

ATTEMPT_SYSTEM = (
    "Solve the problem in a single attempt. End your reply with the line "
    f"{FINAL_TAG} followed by your final answer."
)


def _judge_system(instance: ProofInstance) -> str:
    text = f"{JUDGE_SYSTEM}\n\nPROBLEM\n{instance.problem}\n\nSOLUTION\n{instance.hidden_solution}"
    if instance.final_answer_key is not None:
        text += f"\n\nKEY: {instance.final_answer_key}"
    return text


def _player_opening(instance: ProofInstance, budget: int) -> str:
    return f"PROBLEM\n{instance.problem}\n\nYou have {budget} turns."


def _judge_request(kind: ActionKind, body: str) -> str:
    head = "FINAL ANSWER" if kind is ActionKind.FINAL_GUESS else "QUERY"
    return f"{head}\n{body}"


def _tokens(usage) -> int | None:
    return None if usage is None else int(sum(usage))


class _Judge:
    """Stateful judge conversation with one re-prompt on unparseable output."""

    def __init__(self, spec: AgentSpec | None, instance: ProofInstance):
        self.agent = make_agent(spec) if spec is not None else None
        self.instance = instance
        self.messages = [ChatMessage("system", _judge_system(instance))]

    def verdict(self, kind: ActionKind, body: str):
        """Return (verdict or None, raw text, latency_ms, grading actor)."""
        use_key = (
            kind is ActionKind.FINAL_GUESS
            and self.instance.domain == "math"
            and self.instance.final_answer_key is not None
        )
        if use_key:
            ok = grade_exact(body, self.instance.final_answer_key)
            verdict = Verdict.CORRECT if ok else Verdict.INCORRECT
            return verdict, verdict.value.upper(), 0, Actor.ENVIRONMENT
        if self.agent is None:
            raise GradingError(f"instance {self.instance.id!r} needs a judge")
        allowed = (
            {Verdict.CORRECT, Verdict.INCORRECT}
            if kind is ActionKind.FINAL_GUESS
            else {Verdict.YES, Verdict.NO, Verdict.BOTH, Verdict.IRRELEVANT}
        )
        self.messages.append(ChatMessage("user", _judge_request(kind, body)))
        latency = 0
        raw = ""
        for attempt in range(2):
            reply = self.agent.reply(self.messages)
            latency += reply.latency_ms
            raw = reply.content
            self.messages.append(ChatMessage("assistant", raw or "(empty)"))
            try:
                verdict = parse_verdict(raw)
                if verdict not in allowed:
                    raise VerdictParseError(f"{verdict.value} is not a valid reply here")
                return verdict, raw, latency, Actor.JUDGE
            except VerdictParseError as exc:
                if attempt == 0:
                    words = ", ".join(sorted(v.value.upper() for v in allowed))
                    self.messages.append(
                        ChatMessage("user", f"Invalid reply ({exc}). Answer with exactly one of: {words}.")
                    )
        return None, raw, latency, Actor.JUDGE


def run_proof_episode(
    player: AgentSpec,
    judge: AgentSpec | None,
    instance: ProofInstance,
    config: EpisodeConfig,
) -> ProofRunResult:
    """Play one budgeted player/judge episode on ``instance``."""
    state = new_episode(config)
    agent = make_agent(player)
    referee = _Judge(judge, instance)
    messages = [
        ChatMessage("system", PLAYER_SYSTEM),
        ChatMessage("user", _player_opening(instance, config.budget_B)),
    ]

    def play(turn_no: int, forced: bool) -> bool:
        reply = agent.reply(messages)
        kind, body = classify_player_turn(reply.content)
        if forced:
            kind = ActionKind.FINAL_GUESS
        messages.append(ChatMessage("assistant", reply.content or "(empty)"))
        state.apply_turn(
            TurnRecord(
                index_t=turn_no,
                actor=Actor.PLAYER,
                action_kind=kind,
                content=body,
                cost=0 if forced else config.cost_per_action,
                latency_ms=reply.latency_ms,
                token_usage=reply.token_usage,
                forced=forced,
            )
        )
        verdict, raw, latency, actor = referee.verdict(kind, body)
        if verdict is None:
            state.abort(f"judge reply {raw!r} is not a valid verdict after one re-prompt")
            return False
        state.apply_turn(
            TurnRecord(
                index_t=turn_no,
                actor=actor,
                action_kind=ActionKind.OBSERVATION,
                content=raw,
                verdict=verdict,
                latency_ms=latency,
            )
        )
        remaining = state.remaining // config.cost_per_action
        messages.append(ChatMessage("user", f"Judge: {verdict.value.upper()}\n({remaining} turns left)"))
        return True

    turn_no = 0
    try:
        while not state.terminal:
            turn_no += 1
            if not play(turn_no, forced=False):
                break
        if state.needs_forced_answer():
            messages.append(
                ChatMessage("user", f"The budget is used up. Submit your final answer now, starting with {FINAL_TAG}.")
            )
            play(turn_no + 1, forced=True)
    except AgentFailure as exc:
        state.abort(str(exc))
        transcript = state.finalize(instance_id=instance.id, infrastructure_failure=True)
        return result_from_transcript(transcript, config)

    transcript = state.finalize(instance_id=instance.id, player=player.id, judge=judge.id if judge else None)
    return result_from_transcript(transcript, config)


def result_from_transcript(transcript: Transcript, config: EpisodeConfig) -> ProofRunResult:
    solved = transcript.outcome.is_solved
    if transcript.outcome is Outcome.SOLVED_AT_BUDGET:
        turns = config.budget_B
    else:
        turns = transcript.costed_turns
    usages = [t.token_usage for t in transcript.turns if t.actor is Actor.PLAYER]
    tokens = None if any(u is None for u in usages) else sum(sum(u) for u in usages)
    return ProofRunResult(transcript=transcript, solved=solved, turns_used=turns, interactive_tokens=tokens)


# -- metrics ----------------------------------------------------------------

def accuracy(results: Sequence[ProofRunResult]) -> Fraction:
    if not results:
        raise ValueError("accuracy of an empty result list")
    return Fraction(sum(1 for r in results if r.solved), len(results))


def avg_turns(results: Sequence[ProofRunResult]) -> Fraction:
    solved = [r.turns_used for r in results if r.solved]
    if not solved:
        raise UndefinedMetric("avg_turns is undefined with zero solved episodes")
    return Fraction(sum(solved), len(solved))


def budget_matched_k(mean_pass1_tokens, mean_interactive_tokens) -> int:
    """Attempt count whose pass@1 token total is closest to the interactive total.

    Ties go to the smaller k.
    """
    p = Fraction(str(mean_pass1_tokens))
    total = Fraction(str(mean_interactive_tokens))
    if p <= 0 or total <= 0:
        raise ValueError("token means must be positive")
    lo = max(1, int(total // p))
    best = min((lo, lo + 1), key=lambda k: (abs(k * p - total), k))
    return best


def mean_interactive_tokens(results: Sequence[ProofRunResult]) -> Fraction:
    if not results:
        raise ValueError("no interactive runs")
    if any(r.interactive_tokens is None for r in results):
        raise ValueError("token usage missing from an interactive transcript")
    return Fraction(sum(r.interactive_tokens for r in results), len(results))


def mean_pass1_tokens(results: Sequence[PassKResult]) -> Fraction:
    counts = [tok for r in results for _, _, tok in r.attempts]
    if not counts:
        raise ValueError("no pass@k attempts")
    if any(tok is None for tok in counts):
        raise ValueError("token usage missing from a pass@k attempt")
    return Fraction(sum(counts), len(counts))


# -- single-shot regimes ----------------------------------------------------

def _grade(answer: str, instance: ProofInstance, judge: AgentSpec | None) -> bool:
    if instance.final_answer_key is not None:
        return grade_exact(answer, instance.final_answer_key)
    if judge is None:
        raise GradingError(f"instance {instance.id!r} has no answer key and no judge")
    verdict, _, _, _ = _Judge(judge, instance).verdict(ActionKind.FINAL_GUESS, answer)
    return verdict is Verdict.CORRECT


def single_attempt(player: AgentSpec, instance: ProofInstance, judge, salt) -> tuple[str, bool, int | None]:
    spec = replace(player, seed=derive_seed(player.seed, instance.id, salt))
    messages = [ChatMessage("system", ATTEMPT_SYSTEM), ChatMessage("user", f"PROBLEM\n{instance.problem}")]
    reply = make_agent(spec).reply(messages)
    text = reply.content
    if FINAL_TAG in text:
        text = text.split(FINAL_TAG)[-1]
    answer = text.strip()
    return answer, _grade(answer, instance, judge), _tokens(reply.token_usage)


def run_pass_at_k(
    player: AgentSpec, instance: ProofInstance, k: int, judge: AgentSpec | None = None
) -> PassKResult:
    """``k`` independent single-shot attempts; attempt ``i`` depends only on ``i``."""
    if k < 1:
        raise ValueError("k must be positive")
    if instance.final_answer_key is None and judge is None:
        raise GradingError(f"instance {instance.id!r} has no answer key and no judge")
    attempts = tuple(single_attempt(player, instance, judge, ("attempt", i)) for i in range(k))
    return PassKResult(instance_id=instance.id, attempts=attempts, k=k)


def extend_pass_at_k(
    previous: PassKResult, player: AgentSpec, instance: ProofInstance, k: int, judge: AgentSpec | None = None
) -> PassKResult:
    """Grow ``previous`` to ``k`` attempts, running only the missing ones."""
    if k < previous.k:
        raise ValueError("cannot shrink a pass@k result")
    extra = tuple(single_attempt(player, instance, judge, ("attempt", i)) for i in range(previous.k, k))
    return PassKResult(instance_id=instance.id, attempts=previous.attempts + extra, k=k)


def run_no_interaction_baseline(
    player: AgentSpec, instance: ProofInstance, judge: AgentSpec | None = None
) -> bool:
    if instance.final_answer_key is None and judge is None:
        raise GradingError(f"instance {instance.id!r} has no answer key and no judge")
    _, correct, _ = single_attempt(player, instance, judge, ("no_interaction",))
    return correct


def metrics_report(
    results: Sequence[ProofRunResult],
    budget: int,
    k_star: int | None = None,
    pass_at_k: float | None = None,
) -> dict:
    try:
        turns = float(avg_turns(results))
    except UndefinedMetric:
        turns = None
    return {
        "accuracy": float(accuracy(results)),
        "avg_turns": turns,
        "n_solved": sum(1 for r in results if r.solved),
        "n_total": len(results),
        "budget": budget,
        "k_star": k_star,
        "pass_at_k": pass_at_k,
    }


def pass_at_k_rate(results: Iterable[PassKResult]) -> Fraction:
    results = list(results)
    if not results:
        raise ValueError("no pass@k results")
    return Fraction(sum(1 for r in results if r.success), len(results))

"""Iterated trust game: payoffs, random horizons, matches, tournaments, metrics."""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, replace
from fractions import Fraction
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .agents import (
    AgentSpec,
    ChatMessage,
    TrustAction,
    derive_seed,
    format_trust_history,
    grim_trigger_action,
    make_agent,
    tit_for_tat_action,
)
from .errors import UndefinedMetric

C, D = TrustAction.C, TrustAction.D
MATCH_SCHEMA_VERSION = "interbench.trust/1"


@dataclass(frozen=True)
class PayoffMatrix:
    cc: tuple[Fraction, Fraction] = (Fraction(2), Fraction(2))
    cd: tuple[Fraction, Fraction] = (Fraction(-1), Fraction(3))
    dc: tuple[Fraction, Fraction] = (Fraction(3), Fraction(-1))
    dd: tuple[Fraction, Fraction] = (Fraction(0), Fraction(0))

    def __post_init__(self):
        for name in ("cc", "cd", "dc", "dd"):
            object.__setattr__(self, name, tuple(Fraction(x) for x in getattr(self, name)))
        if not self.dc[0] > self.cc[0] > self.dd[0] > self.cd[0]:
            raise ValueError("payoffs must follow the prisoner's dilemma ordering T > R > P > S")

    def __call__(self, a: TrustAction, b: TrustAction) -> tuple[Fraction, Fraction]:
        return {(C, C): self.cc, (C, D): self.cd, (D, C): self.dc, (D, D): self.dd}[(a, b)]

    def to_dict(self) -> dict:
        return {k: [str(x) for x in getattr(self, k)] for k in ("cc", "cd", "dc", "dd")}


DEFAULT_PAYOFFS = PayoffMatrix()


def stage_payoff(a, b, matrix: PayoffMatrix = DEFAULT_PAYOFFS) -> tuple[Fraction, Fraction]:
    return matrix(TrustAction(a), TrustAction(b))


# -- horizon ----------------------------------------------------------------

def sample_horizon(delta: float, max_rounds: int, rng: np.random.Generator) -> int:
    """Match length from continue/stop coin flips, capped at ``max_rounds``."""
    if not 0 < delta < 1:
        raise ValueError("delta must lie in (0, 1)")
    if max_rounds < 1:
        raise ValueError("max_rounds must be positive")
    t = 1
    while t < max_rounds and rng.random() < delta:
        t += 1
    return t


def horizon_pmf(delta: float, max_rounds: int) -> np.ndarray:
    """P(T = t) for t = 1..max_rounds, with the tail mass folded into the cap."""
    t = np.arange(1, max_rounds + 1)
    pmf = (1 - delta) * delta ** (t - 1)
    pmf[-1] = delta ** (max_rounds - 1)
    return pmf


def truncated_mean_horizon(delta: float, max_rounds: int) -> float:
    """E[min(T, max_rounds)] = (1 - delta**max_rounds) / (1 - delta)."""
    return (1 - delta**max_rounds) / (1 - delta)


# -- matches ----------------------------------------------------------------

@dataclass(frozen=True)
class MatchConfig:
    delta: float = 0.8
    max_rounds: int = 35
    seed: int = 0
    repeats_R: int = 1
    swap_seats: bool = True
    payoffs: PayoffMatrix = DEFAULT_PAYOFFS

    def __post_init__(self):
        if not 0 < self.delta < 1:
            raise ValueError("delta must lie in (0, 1)")
        if self.max_rounds < 1 or self.repeats_R < 1:
            raise ValueError("max_rounds and repeats_R must be positive")


@dataclass(frozen=True)
class MatchRecord:
    seat_a: str
    seat_b: str
    actions_a: str
    actions_b: str
    payoffs: tuple[tuple[Fraction, Fraction], ...]
    repeat: int = 0
    seat_order: str = "A_vs_B"
    invalid_a: tuple[int, ...] = ()
    invalid_b: tuple[int, ...] = ()

    def __post_init__(self):
        if not (len(self.actions_a) == len(self.actions_b) == len(self.payoffs)):
            raise ValueError("action strings and payoffs must have equal length")

    @property
    def realized_T(self) -> int:
        return len(self.actions_a)

    @property
    def totals(self) -> tuple[Fraction, Fraction]:
        return (sum((p[0] for p in self.payoffs), Fraction(0)), sum((p[1] for p in self.payoffs), Fraction(0)))

    def side(self, model: str) -> tuple[str, str, int] | None:
        """(own actions, opponent actions, payoff index) for ``model``, if it played."""
        if model == self.seat_a:
            return self.actions_a, self.actions_b, 0
        if model == self.seat_b:
            return self.actions_b, self.actions_a, 1
        return None

    def to_dict(self) -> dict:
        ta, tb = self.totals
        return {
            "schema_version": MATCH_SCHEMA_VERSION,
            "seat_a": self.seat_a,
            "seat_b": self.seat_b,
            "repeat": self.repeat,
            "seat_order": self.seat_order,
            "realized_T": self.realized_T,
            "actions_a": self.actions_a,
            "actions_b": self.actions_b,
            "payoffs": [[_num(x), _num(y)] for x, y in self.payoffs],
            "totals": [_num(ta), _num(tb)],
            "invalid_a": list(self.invalid_a),
            "invalid_b": list(self.invalid_b),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MatchRecord":
        if d.get("schema_version") != MATCH_SCHEMA_VERSION:
            raise ValueError(f"unsupported schema_version {d.get('schema_version')!r}")
        return cls(
            seat_a=d["seat_a"],
            seat_b=d["seat_b"],
            actions_a=d["actions_a"],
            actions_b=d["actions_b"],
            payoffs=tuple((Fraction(str(x)), Fraction(str(y))) for x, y in d["payoffs"]),
            repeat=d.get("repeat", 0),
            seat_order=d.get("seat_order", "A_vs_B"),
            invalid_a=tuple(d.get("invalid_a", ())),
            invalid_b=tuple(d.get("invalid_b", ())),
        )


def _num(x: Fraction):
    return int(x) if x.denominator == 1 else str(x)


def parse_trust_action(text: str) -> TrustAction:
    word = (text or "").strip()
    if word == "COOPERATE":
        return C
    if word == "DEFECT":
        return D
    raise ValueError(f"expected COOPERATE or DEFECT, got {text!r}")


def trust_system_prompt(delta: float) -> str:
    return (
        "You are playing a repeated trust game against another agent. Every round both "
        "players choose, at the same time, COOPERATE or DEFECT. Payoffs per round "
        "(you, opponent): both cooperate (2, 2); you cooperate and they defect (-1, 3); "
        "you defect and they cooperate (3, -1); both defect (0, 0).\n"
        f"After each round the game continues with probability delta = {delta} and ends "
        f"otherwise. Aim to maximize your expected total payoff.\n"
        "Reply with exactly one word: COOPERATE or DEFECT."
    )


def _round_prompt(t: int, own: str, opp: str) -> str:
    return f"ROUND {t}\nHISTORY\n{format_trust_history(own, opp)}\nYour action?"


class _Seat:
    def __init__(self, spec: AgentSpec, delta: float):
        self.agent = make_agent(spec)
        self.messages = [ChatMessage("system", trust_system_prompt(delta))]

    def choose(self, t: int, own: str, opp: str) -> tuple[TrustAction, bool]:
        self.messages.append(ChatMessage("user", _round_prompt(t, own, opp)))
        for attempt in range(2):
            reply = self.agent.reply(self.messages)
            self.messages.append(ChatMessage("assistant", reply.content or "(empty)"))
            try:
                return parse_trust_action(reply.content), False
            except ValueError:
                if attempt == 0:
                    self.messages.append(ChatMessage("user", "Invalid reply. Answer with exactly COOPERATE or DEFECT."))
        # unparseable twice: count it as a defection, flagged
        return D, True


def run_match(
    agent_a: AgentSpec,
    agent_b: AgentSpec,
    config: MatchConfig,
    *,
    horizon: int | None = None,
    rng: np.random.Generator | None = None,
    repeat: int = 0,
    seat_order: str = "A_vs_B",
) -> MatchRecord:
    """Play one match. Both seats see only rounds ``< t`` when choosing round ``t``."""
    if horizon is None:
        rng = rng if rng is not None else np.random.default_rng(config.seed)
        horizon = sample_horizon(config.delta, config.max_rounds, rng)
    seat_a, seat_b = _Seat(agent_a, config.delta), _Seat(agent_b, config.delta)
    acts_a, acts_b = "", ""
    bad_a, bad_b = [], []
    payoffs = []
    for t in range(1, horizon + 1):
        a, fa = seat_a.choose(t, acts_a, acts_b)
        b, fb = seat_b.choose(t, acts_b, acts_a)
        if fa:
            bad_a.append(t)
        if fb:
            bad_b.append(t)
        payoffs.append(config.payoffs(a, b))
        acts_a += a.value
        acts_b += b.value
    return MatchRecord(
        seat_a=agent_a.id,
        seat_b=agent_b.id,
        actions_a=acts_a,
        actions_b=acts_b,
        payoffs=tuple(payoffs),
        repeat=repeat,
        seat_order=seat_order,
        invalid_a=tuple(bad_a),
        invalid_b=tuple(bad_b),
    )


def replay_actions(actions_a: str, actions_b: str, matrix: PayoffMatrix = DEFAULT_PAYOFFS) -> MatchRecord:
    """Run a match between two scripted seats that play the given strings."""
    def scripted(name, acts):
        return AgentSpec(id=name, strategy="script", params={"replies": [TrustAction(x).word for x in acts]})

    return run_match(
        scripted("A", actions_a),
        scripted("B", actions_b),
        MatchConfig(payoffs=matrix),
        horizon=len(actions_a),
    )


def match_horizon_rng(seed: int, a: str, b: str, repeat: int) -> np.random.Generator:
    return np.random.default_rng(derive_seed(seed, "horizon", *sorted((a, b)), repeat))


@dataclass(frozen=True)
class MatchJob:
    """One scheduled match; ``seat_a``/``seat_b`` already carry derived seeds."""

    seat_a: AgentSpec
    seat_b: AgentSpec
    horizon: int
    repeat: int
    seat_order: str
    pair: tuple[str, str]


def plan_tournament(models: Sequence[AgentSpec], config: MatchConfig) -> list[MatchJob]:
    """Round robin over unordered pairs, ``repeats_R`` repeats each.

    With ``swap_seats`` both seat orders are played per repeat and share the
    repeat's horizon. Streams are keyed by model ids, so adding a model does
    not change existing matches.
    """
    if len(models) < 2:
        raise ValueError("a tournament needs at least two models")
    if len({m.id for m in models}) != len(models):
        raise ValueError("model ids must be unique")
    jobs = []
    for m, n in itertools.combinations(models, 2):
        for r in range(config.repeats_R):
            horizon = sample_horizon(config.delta, config.max_rounds, match_horizon_rng(config.seed, m.id, n.id, r))
            orders = [(m, n, "A_vs_B")]
            if config.swap_seats:
                orders.append((n, m, "B_vs_A"))
            for a, b, label in orders:
                key = (config.seed, m.id, n.id, r, label)
                jobs.append(
                    MatchJob(
                        seat_a=replace(a, seed=derive_seed(a.seed, *key)),
                        seat_b=replace(b, seed=derive_seed(b.seed, *key)),
                        horizon=horizon,
                        repeat=r + 1,
                        seat_order=label,
                        pair=(m.id, n.id),
                    )
                )
    return jobs


def play_job(job: MatchJob, config: MatchConfig) -> MatchRecord:
    return run_match(
        job.seat_a, job.seat_b, config, horizon=job.horizon, repeat=job.repeat, seat_order=job.seat_order
    )


def run_tournament(
    models: Sequence[AgentSpec],
    config: MatchConfig,
    on_match: Callable[[MatchRecord], None] | None = None,
) -> list[MatchRecord]:
    """Play every job of :func:`plan_tournament` in order."""
    records = []
    for job in plan_tournament(models, config):
        rec = play_job(job, config)
        records.append(rec)
        if on_match:
            on_match(rec)
    return records


# -- metrics ----------------------------------------------------------------

def _sides(model: str, records: Sequence[MatchRecord]):
    sides = []
    for rec in records:
        side = rec.side(model)
        if side is not None:
            sides.append((rec, *side))
    if not sides:
        raise UndefinedMetric(f"{model!r} played no matches")
    return sides


def score(model: str, records: Sequence[MatchRecord]) -> Fraction:
    """Average stage payoff per round over every round ``model`` played."""
    sides = _sides(model, records)
    total = sum((p[idx] for rec, _, _, idx in sides for p in rec.payoffs), Fraction(0))
    rounds = sum(rec.realized_T for rec, *_ in sides)
    return total / rounds


def coop_rate(model: str, records: Sequence[MatchRecord]) -> Fraction:
    sides = _sides(model, records)
    coop = sum(own.count("C") for _, own, _, _ in sides)
    return Fraction(coop, sum(len(own) for _, own, _, _ in sides))


def betrayal_rate(model: str, records: Sequence[MatchRecord]) -> Fraction | None:
    """P(defect at t | opponent cooperated at t-1); ``None`` when never applicable."""
    sides = _sides(model, records)
    opportunities = betrayals = 0
    for _, own, opp, _ in sides:
        for t in range(1, len(own)):
            if opp[t - 1] == "C":
                opportunities += 1
                betrayals += own[t] == "D"
    if opportunities == 0:
        return None
    return Fraction(betrayals, opportunities)


def leaderboard(records: Sequence[MatchRecord]) -> dict:
    models = sorted({r.seat_a for r in records} | {r.seat_b for r in records})
    board = {}
    for m in models:
        br = betrayal_rate(m, records)
        board[m] = {
            "score": float(score(m, records)),
            "coop_rate": float(coop_rate(m, records)),
            "betrayal_rate": None if br is None else float(br),
            "rounds": sum(r.realized_T for r in records if r.side(m)),
        }
    return board


# -- analytic checks --------------------------------------------------------

HistoryStrategy = Callable[[str, str], TrustAction]

DETERMINISTIC: dict[str, HistoryStrategy] = {
    "tit_for_tat": lambda own, opp: tit_for_tat_action(opp),
    "grim_trigger": lambda own, opp: grim_trigger_action(opp),
    "all_cooperate": lambda own, opp: C,
    "all_defect": lambda own, opp: D,
}


def deterministic_path(
    strat_a: HistoryStrategy, strat_b: HistoryStrategy, rounds: int, matrix: PayoffMatrix = DEFAULT_PAYOFFS
) -> list[tuple[Fraction, Fraction]]:
    a = b = ""
    out = []
    for _ in range(rounds):
        x, y = strat_a(a, b), strat_b(b, a)
        out.append(matrix(x, y))
        a += x.value
        b += y.value
    return out


def discounted_value(payoffs: Sequence[Fraction], delta) -> Fraction:
    from .episode import discounted_return

    return discounted_return(payoffs, Fraction(delta))


@dataclass(frozen=True)
class ObjectiveCheck:
    empirical: Fraction
    predicted: Fraction

    @property
    def gap(self) -> Fraction:
        return self.empirical - self.predicted


def discounted_objective_check(
    records: Sequence[MatchRecord],
    model: str,
    strat_model: HistoryStrategy,
    strat_opponent: HistoryStrategy,
    delta,
    max_rounds: int,
    matrix: PayoffMatrix = DEFAULT_PAYOFFS,
) -> ObjectiveCheck:
    """Empirical Score of ``model`` versus its population value.

    The population value is the horizon-weighted discounted return divided by
    the expected horizon. Without the cap this is ``(1 - delta)`` times the
    discounted objective.
    """
    delta = Fraction(delta)
    path = deterministic_path(strat_model, strat_opponent, max_rounds, matrix)
    discounted = discounted_value([p[0] for p in path], delta)
    expected_len = discounted_value([1] * max_rounds, delta)
    return ObjectiveCheck(empirical=score(model, records), predicted=discounted / expected_len)


# -- persistence ------------------------------------------------------------

def render_match(rec: MatchRecord) -> str:
    ta, tb = rec.totals
    return (
        f"Seat {rec.seat_order} (A={rec.seat_a}, B={rec.seat_b}):\n"
        f"rounds={rec.realized_T}, total_payoff(A,B)=({_num(ta)},{_num(tb)}).\n"
        f"A: {rec.actions_a}\n"
        f"B: {rec.actions_b}"
    )


def render_tournament(records: Sequence[MatchRecord], config: MatchConfig | None = None) -> str:
    lines = ["LEGEND: C=Cooperate, D=Defect."]
    if config is not None:
        lines.append(
            f"CONFIG: delta={config.delta}, max_rounds={config.max_rounds}, repeats={config.repeats_R}, "
            f"swap_seats={str(config.swap_seats).lower()}, seed={config.seed}."
        )
    last_repeat = None
    for rec in records:
        if rec.repeat != last_repeat:
            lines.append(f"\nRepeat {rec.repeat}")
            last_repeat = rec.repeat
        lines.append(render_match(rec))
    return "\n".join(lines) + "\n"


def write_records(records: Sequence[MatchRecord], path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec.to_dict(), sort_keys=True) + "\n")
    return path


def read_records(path: str | Path) -> list[MatchRecord]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                out.append(MatchRecord.from_dict(json.loads(line)))
    return out

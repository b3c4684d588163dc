"""Aggregate statistics and human-readable replays of persisted records."""

from __future__ import annotations

import csv
import io
import json
import math
import statistics
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

from .episode import SCHEMA_VERSION, ActionKind, Actor, SchemaError, parse_transcript
from .poker.engine import HAND_SCHEMA_VERSION
from .trust import MATCH_SCHEMA_VERSION, MatchRecord, render_match

REPORT_SCHEMA_VERSION = "interbench.report/1"


@dataclass(frozen=True)
class Stat:
    mean: float
    stddev: float | None  # None when n < 2
    n: int

    def to_dict(self) -> dict:
        d = {"mean": self.mean, "n": self.n}
        if self.stddev is not None:
            d["stddev"] = self.stddev
        return d


def describe(values: Sequence[float]) -> Stat:
    """Mean and sample (n - 1) standard deviation."""
    vals = [float(v) for v in values]
    if not vals:
        raise ValueError("cannot describe an empty sample")
    std = statistics.stdev(vals) if len(vals) >= 2 else None
    return Stat(statistics.fmean(vals), std, len(vals))


@dataclass
class AggregateReport:
    stats: dict[str, dict[str, Stat]]  # entity -> metric -> Stat
    group_by: str
    metadata: dict = field(default_factory=dict)
    summary: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "schema_version": REPORT_SCHEMA_VERSION,
            "metadata": self.metadata,
            "group_by": self.group_by,
            "stats": {e: {m: s.to_dict() for m, s in ms.items()} for e, ms in self.stats.items()},
            "summary": self.summary,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["entity", "metric", "mean", "stddev", "n", "config_hash"])
        h = self.metadata.get("config_hash", "")
        for entity in sorted(self.stats):
            for metric in sorted(self.stats[entity]):
                s = self.stats[entity][metric]
                w.writerow([entity, metric, repr(s.mean), "" if s.stddev is None else repr(s.stddev), s.n, h])
        return buf.getvalue()

    def write(self, directory: str | Path) -> tuple[Path, Path]:
        directory = Path(directory)
        j, c = directory / "aggregate.json", directory / "aggregate.csv"
        j.write_text(self.to_json(), encoding="utf-8")
        c.write_text(self.to_csv(), encoding="utf-8")
        return j, c


def aggregate(
    records: Sequence[Mapping],
    group_by: str = "group",
    entity: str = "agent",
    metadata: dict | None = None,
) -> AggregateReport:
    """Per entity and metric: mean and sample stddev across groups.

    Every record holds ``entity``, ``group_by`` and the same metric columns.
    Records sharing an (entity, group) pair are averaged first. ``None`` means
    the metric is undefined for that record and is left out.
    """
    if not records:
        raise ValueError("aggregate needs at least one record")
    keys = set(records[0])
    for i, rec in enumerate(records):
        if set(rec) != keys:
            raise ValueError(f"record {i} has fields {sorted(rec)}, expected {sorted(keys)}")
    if entity not in keys or group_by not in keys:
        raise ValueError(f"records need {entity!r} and {group_by!r} fields")
    metrics = sorted(keys - {entity, group_by})
    cells: dict = defaultdict(lambda: defaultdict(list))
    for rec in records:
        for m in metrics:
            v = rec[m]
            if v is None:
                continue
            if isinstance(v, bool):
                v = int(v)
            if not isinstance(v, (int, float)) or (isinstance(v, float) and math.isnan(v)):
                raise ValueError(f"metric {m!r} is not numeric: {v!r}")
            cells[(rec[entity], m)][rec[group_by]].append(float(v))
    stats: dict[str, dict[str, Stat]] = defaultdict(dict)
    for (ent, m), groups in sorted(cells.items(), key=lambda kv: (str(kv[0][0]), kv[0][1])):
        per_group = [statistics.fmean(groups[g]) for g in sorted(groups, key=str)]
        stats[str(ent)][m] = describe(per_group)
    return AggregateReport(stats=dict(stats), group_by=group_by, metadata=dict(metadata or {}))


# -- replay -----------------------------------------------------------------

def _read_lines(path: Path) -> list[str]:
    try:
        return path.read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise SchemaError(f"cannot read {path}: {exc}") from None


def _first_record(lines: list[str]) -> dict:
    for n, line in enumerate(lines, start=1):
        if line.strip():
            try:
                return json.loads(line)
            except json.JSONDecodeError as exc:
                raise SchemaError(f"invalid JSON: {exc.msg}", line=n) from None
    raise SchemaError("empty file", line=1)


def _json_lines(lines: list[str], version: str) -> list[dict]:
    out = []
    for n, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"invalid JSON: {exc.msg}", line=n) from None
        if not isinstance(rec, dict):
            raise SchemaError("expected a JSON object", line=n)
        if rec.get("schema_version") != version:
            raise SchemaError(f"unsupported schema_version {rec.get('schema_version')!r}, expected {version!r}", line=n)
        out.append(rec)
    return out


def render_transcript(lines: list[str]) -> str:
    transcript = parse_transcript(lines)
    out = []
    for turn in transcript.turns:
        if turn.actor is Actor.PLAYER:
            out.append(f"Turn {turn.index_t}" + (" (forced final answer)" if turn.forced else ""))
            tag = "Player (final answer)" if turn.action_kind is ActionKind.FINAL_GUESS else "Player"
            out.append(f"{tag}: {turn.content}")
        elif turn.action_kind is ActionKind.OBSERVATION:
            label = "Judge" if turn.actor is Actor.JUDGE else "Grader"
            verdict = turn.verdict.value.upper() if turn.verdict else turn.content
            out.append(f"{label}: {verdict}")
            out.append("")
    out.append(f"Outcome: {transcript.outcome.value}, cost {transcript.total_cost}/{transcript.config.budget_B}")
    return "\n".join(out) + "\n"


def _seat(s: int) -> str:
    return f"P{s + 1}"


def render_hand(hand: dict) -> str:
    sb, bb = hand["blinds"]
    out = [f"HAND {hand['hand_number']} (button {_seat(hand['button'])}, blinds {sb}/{bb})"]
    for s, cards_ in enumerate(hand["hole"]):
        if cards_:
            out.append(f"{_seat(s)}: {' '.join(cards_)} stack {hand['starting_stacks'][s]}")
    board = hand["community"]
    shown = {"flop": 3, "turn": 4, "river": 5}
    n = len(hand["starting_stacks"])
    committed, street = [0] * n, [0] * n
    stage = None
    for act in hand["history"]:
        if act["stage"] != stage:
            stage = act["stage"]
            street = [0] * n
            if stage == "preflop":
                out.append("PREFLOP")
            else:
                out.append(f"{stage.upper()} board: {' '.join(board[: shown[stage]])}, pot={sum(committed)}")
        seat = act["seat"]
        if act["action"] in ("CALL", "RAISE", "ALL_IN"):
            committed[seat] += act["amount"] - street[seat]
            street[seat] = act["amount"]
        if act.get("blind"):
            out.append(f"{_seat(seat)}: posts blind {act['amount']}")
            continue
        amount = f" {act['amount']}" if act["action"] in ("CALL", "RAISE", "ALL_IN") else ""
        line = f"{_seat(seat)}: {act['action']}{amount}"
        if act.get("auto"):
            line += " (auto-fold)"
        if act.get("reasoning"):
            line += f'. thinking: "{act["reasoning"]}"'
        out.append(line)
    out.append("RESULT")
    winners = [s for s, p in enumerate(hand["payouts"]) if p > 0]
    if hand["showdown"]:
        out.append(f"Showdown on {' '.join(board)}:")
        for s, rank in sorted(hand["showdown"].items(), key=lambda kv: int(kv[0])):
            out.append(f"  {_seat(int(s))}: {rank}")
    else:
        out.append("Everyone else folded.")
    for s in winners:
        out.append(f"{_seat(s)} collects {hand['payouts'][s]} (net {hand['net'][s]:+d}).")
    return "\n".join(out) + "\n"


def replay(path: str | Path) -> str:
    """Render a transcript, hand history, or match record file; never writes."""
    path = Path(path)
    lines = _read_lines(path)
    first = _first_record(lines)
    if first.get("record") == "header":
        return render_transcript(lines)
    version = first.get("schema_version")
    if version == MATCH_SCHEMA_VERSION:
        recs = [MatchRecord.from_dict(r) for r in _json_lines(lines, MATCH_SCHEMA_VERSION)]
        return "LEGEND: C=Cooperate, D=Defect.\n" + "\n\n".join(render_match(r) for r in recs) + "\n"
    if version == HAND_SCHEMA_VERSION:
        return "\n".join(render_hand(h) for h in _json_lines(lines, HAND_SCHEMA_VERSION))
    known = ", ".join((SCHEMA_VERSION, MATCH_SCHEMA_VERSION, HAND_SCHEMA_VERSION))
    raise SchemaError(f"unsupported schema_version {version!r}; known: {known}", line=1)

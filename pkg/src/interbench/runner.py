"""Execute a RunConfig: fan work out, persist records, then aggregate after a barrier."""

from __future__ import annotations

import json
import logging
import re
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from datetime import datetime, timezone
from fractions import Fraction
from pathlib import Path
from typing import Callable

import yaml

from . import proofs
from .agents import AgentFailure, AgentSpec, derive_seed
from .config import RunConfig, load_config
from .episode import SCHEMA_VERSION, EpisodeConfig, read_transcript, write_transcript
from .poker.engine import HAND_SCHEMA_VERSION
from .poker.session import SeatTally, TableConfig, run_table, write_hand_history
from .report import AggregateReport, aggregate
from .trust import (
    MATCH_SCHEMA_VERSION,
    MatchConfig,
    MatchJob,
    leaderboard,
    plan_tournament,
    play_job,
    read_records,
    render_tournament,
    write_records,
    betrayal_rate,
    coop_rate,
    score,
)

log = logging.getLogger(__name__)

MANIFEST_SCHEMA_VERSION = "interbench.manifest/1"
ATTEMPT_SCHEMA_VERSION = "interbench.attempts/1"


class RunDirectoryError(ValueError):
    pass


@dataclass
class RunResult:
    path: Path
    status: str  # "complete" or "aborted"
    failed: list[dict]
    skipped: list[str]

    @property
    def exit_code(self) -> int:
        return 0 if self.status == "complete" else 2


@dataclass(frozen=True)
class Unit:
    name: str
    fn: Callable[[], None]


def _safe(name: str) -> str:
    return re.sub(r"[^A-Za-z0-9._-]", "_", name)


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


# -- per-task file layout ---------------------------------------------------

def transcript_path(run: Path, player: str, instance: str) -> Path:
    return run / "transcripts" / _safe(player) / f"{_safe(instance)}.jsonl"


def attempts_path(run: Path, player: str, instance: str) -> Path:
    return run / "attempts" / _safe(player) / f"{_safe(instance)}.jsonl"


def hands_path(run: Path, table: int) -> Path:
    return run / "hands" / f"table_{table:02d}.jsonl"


def match_path(run: Path, job: MatchJob) -> Path:
    a, b = job.pair
    return run / "matches" / f"{_safe(a)}__vs__{_safe(b)}" / f"repeat_{job.repeat:02d}_{job.seat_order}.jsonl"


def _episode_config(config: RunConfig, player: AgentSpec, instance_id: str) -> EpisodeConfig:
    return replace(config.episode, seed=derive_seed(config.seed, "episode", player.id, instance_id))


def _episode_player(player: AgentSpec, instance_id: str) -> AgentSpec:
    return replace(player, seed=derive_seed(player.seed, "episode", instance_id))


def _write_attempts(path: Path, result: proofs.PassKResult, regime: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for i, (answer, correct, tokens) in enumerate(result.attempts):
            rec = {
                "schema_version": ATTEMPT_SCHEMA_VERSION,
                "instance_id": result.instance_id,
                "regime": regime,
                "attempt": i,
                "answer": answer,
                "correct": correct,
                "tokens": tokens,
            }
            fh.write(json.dumps(rec, sort_keys=True) + "\n")


def _read_attempts(path: Path) -> proofs.PassKResult:
    rows = [json.loads(line) for line in path.read_text(encoding="utf-8").splitlines() if line.strip()]
    for row in rows:
        if row.get("schema_version") != ATTEMPT_SCHEMA_VERSION:
            raise ValueError(f"{path}: unsupported schema_version {row.get('schema_version')!r}")
    attempts = tuple((r["answer"], r["correct"], r["tokens"]) for r in rows)
    return proofs.PassKResult(instance_id=rows[0]["instance_id"], attempts=attempts, k=len(attempts))


# -- work units -------------------------------------------------------------

class _Failures:
    def __init__(self):
        self.lock = threading.Lock()
        self.stop = threading.Event()
        self.failed: list[dict] = []

    def record(self, name: str, error: str) -> None:
        with self.lock:
            self.failed.append({"unit": name, "error": error})
        self.stop.set()


def _episode_unit(run: Path, config: RunConfig, player: AgentSpec, inst: proofs.ProofInstance) -> Unit:
    def fn():
        result = proofs.run_proof_episode(
            _episode_player(player, inst.id), config.judge, inst, _episode_config(config, player, inst.id)
        )
        write_transcript(result.transcript, transcript_path(run, player.id, inst.id))
        if result.transcript.meta.get("infrastructure_failure"):
            raise AgentFailure(player.id, 0, RuntimeError(result.transcript.meta.get("abort_reason", "aborted")))

    return Unit(f"episode:{player.id}:{inst.id}", fn)


def _attempt_unit(run: Path, config: RunConfig, player: AgentSpec, inst: proofs.ProofInstance, k: int) -> Unit:
    def fn():
        path = attempts_path(run, player.id, inst.id)
        if config.task == "no_interaction":
            answer, correct, tokens = proofs.single_attempt(player, inst, config.judge, ("no_interaction",))
            result = proofs.PassKResult(inst.id, ((answer, correct, tokens),), 1)
        elif path.exists():
            result = proofs.extend_pass_at_k(_read_attempts(path), player, inst, k, config.judge)
        else:
            result = proofs.run_pass_at_k(player, inst, k, config.judge)
        _write_attempts(path, result, config.task)

    return Unit(f"attempts:{player.id}:{inst.id}", fn)


def _table_unit(run: Path, config: RunConfig, t: int) -> Unit:
    def fn():
        p = config.poker
        seats = config.role("seat")
        table = run_table(
            p.hands, seats, p.table_seeds[t], TableConfig(p.small_blind, p.big_blind, p.starting_stack), table_index=t
        )
        write_hand_history(table.hands, hands_path(run, t))
        failures = [
            seats[s].id for h in table.hands for s, n in enumerate(h.agent_failures) if n
        ]
        if failures:
            raise AgentFailure(failures[0], 0, RuntimeError(f"{len(failures)} decision(s) auto-folded on agent failure"))

    return Unit(f"table:{t}", fn)


def _match_unit(run: Path, job: MatchJob, mc: MatchConfig) -> Unit:
    def fn():
        write_records([play_job(job, mc)], match_path(run, job))

    return Unit(f"match:{job.pair[0]}:{job.pair[1]}:r{job.repeat}:{job.seat_order}", fn)


def match_config(config: RunConfig) -> MatchConfig:
    t = config.trust
    return MatchConfig(
        delta=t.delta, max_rounds=t.max_rounds, seed=config.seed, repeats_R=t.repeats, swap_seats=t.swap_seats
    )


def _run_units(units: list[Unit], parallelism: int, failures: _Failures) -> tuple[list[str], list[str]]:
    done: list[str] = []
    skipped: list[str] = []
    lock = threading.Lock()

    def run(unit: Unit):
        if failures.stop.is_set():
            with lock:
                skipped.append(unit.name)
            return
        try:
            unit.fn()
        except AgentFailure as exc:
            log.error("unit %s failed: %s", unit.name, exc)
            failures.record(unit.name, str(exc))
            return
        with lock:
            done.append(unit.name)

    if parallelism <= 1:
        for u in units:
            run(u)
    else:
        with ThreadPoolExecutor(max_workers=parallelism) as pool:
            list(pool.map(run, units))
    return done, skipped


def _plan(run: Path, config: RunConfig, phase: int, k: int | None = None) -> list[Unit]:
    players = config.role("player")
    task = config.task
    if task in ("proofs_logic", "proofs_math"):
        return [_episode_unit(run, config, p, i) for p in players for i in config.proofs.instances]
    if task == "no_interaction":
        return [_attempt_unit(run, config, p, i, 1) for p in players for i in config.proofs.instances]
    if task == "pass_at_k":
        if config.proofs.k != "matched":
            return [_attempt_unit(run, config, p, i, config.proofs.k) for p in players for i in config.proofs.instances]
        if phase == 0:
            # interactive runs plus one attempt each, to measure both token means
            return [_episode_unit(run, config, p, i) for p in players for i in config.proofs.instances] + [
                _attempt_unit(run, config, p, i, 1) for p in players for i in config.proofs.instances
            ]
        units = []
        for p in players:
            kp = k[p.id]
            units += [_attempt_unit(run, config, p, i, kp) for i in config.proofs.instances]
        return units
    if task == "poker":
        return [_table_unit(run, config, t) for t in range(config.poker.tables)]
    if task == "trust":
        mc = match_config(config)
        return [_match_unit(run, job, mc) for job in plan_tournament(config.role("seat"), mc)]
    raise ValueError(f"unknown task {task!r}")


def matched_k(run: Path, config: RunConfig) -> dict[str, int]:
    """Budget-matched k* per player from the persisted phase-one records."""
    out = {}
    for p in config.role("player"):
        episodes = [
            proofs.result_from_transcript(t, t.config)
            for t in (read_transcript(transcript_path(run, p.id, i.id)) for i in config.proofs.instances)
        ]
        singles = [_read_attempts(attempts_path(run, p.id, i.id)) for i in config.proofs.instances]
        first = [proofs.PassKResult(r.instance_id, r.attempts[:1], 1) for r in singles]
        out[p.id] = proofs.budget_matched_k(
            proofs.mean_pass1_tokens(first), proofs.mean_interactive_tokens(episodes)
        )
    return out


# -- execute ----------------------------------------------------------------

def prepare_run_dir(config: RunConfig, out: str | Path | None) -> Path:
    run = Path(out or config.output_dir or f"runs/{config.task}-{config.config_hash()[:12]}")
    if run.exists() and any(run.iterdir()):
        raise RunDirectoryError(f"output directory {run} is not empty")
    run.mkdir(parents=True, exist_ok=True)
    return run


def write_config_copy(config: RunConfig, run: Path) -> Path:
    path = run / "config.yaml"
    path.write_text(yaml.safe_dump(config.to_dict(), sort_keys=True, allow_unicode=True), encoding="utf-8")
    return path


def execute(config: RunConfig, out: str | Path | None = None, parallelism: int | None = None) -> RunResult:
    run = prepare_run_dir(config, out)
    started = _now()
    write_config_copy(config, run)
    workers = parallelism or config.parallelism
    failures = _Failures()
    done, skipped = _run_units(_plan(run, config, 0), workers, failures)
    k_star = None
    if config.task == "pass_at_k" and config.proofs.k == "matched" and not failures.failed:
        k_star = matched_k(run, config)
        more_done, more_skipped = _run_units(_plan(run, config, 1, k_star), workers, failures)
        done += more_done
        skipped += more_skipped
    status = "aborted" if failures.failed else "complete"
    if status == "complete":
        # barrier passed: everything is on disk, so the report is built from the files
        report = build_report(run, config)
        report.write(run)
        if config.task == "trust":
            _write_trust_extras(run, config)
    manifest = {
        "schema_version": MANIFEST_SCHEMA_VERSION,
        "task": config.task,
        "config_hash": config.config_hash(),
        "seeds": config.seeds(),
        "status": status,
        "started_at": started,
        "finished_at": _now(),
        "completed_units": sorted(done),
        "failed_units": sorted(failures.failed, key=lambda f: f["unit"]),
        "incomplete_units": sorted(skipped + [f["unit"] for f in failures.failed]),
        "files": sorted(str(p.relative_to(run)) for p in run.rglob("*") if p.is_file()) + ["manifest.json"],
    }
    (run / "manifest.json").write_text(json.dumps(manifest, sort_keys=True, indent=2) + "\n", encoding="utf-8")
    return RunResult(path=run, status=status, failed=failures.failed, skipped=sorted(skipped))


def _write_trust_extras(run: Path, config: RunConfig) -> None:
    mc = match_config(config)
    records = _trust_records(run, config)
    (run / "matches.txt").write_text(render_tournament(records, mc), encoding="utf-8")
    (run / "leaderboard.json").write_text(
        json.dumps(leaderboard(records), sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )


# -- reports ----------------------------------------------------------------

def _frac(x: Fraction | None) -> float | None:
    return None if x is None else float(x)


def _trust_records(run: Path, config: RunConfig):
    mc = match_config(config)
    records = []
    for job in plan_tournament(config.role("seat"), mc):
        records.extend(read_records(match_path(run, job)))
    return records


def _trust_report(run: Path, config: RunConfig) -> tuple[list[dict], dict, str]:
    records = _trust_records(run, config)
    rows = []
    for agent in (s.id for s in config.role("seat")):
        for r in sorted({rec.repeat for rec in records}):
            subset = [rec for rec in records if rec.repeat == r]
            rows.append(
                {
                    "agent": agent,
                    "repeat": r,
                    "score": float(score(agent, subset)),
                    "coop_rate": float(coop_rate(agent, subset)),
                    "betrayal_rate": _frac(betrayal_rate(agent, subset)),
                }
            )
    summary = {"leaderboard": leaderboard(records), "n_matches": len(records)}
    return rows, summary, "repeat"


def _read_hands(path: Path) -> list[dict]:
    hands = [json.loads(line) for line in path.read_text(encoding="utf-8").splitlines() if line.strip()]
    for h in hands:
        if h.get("schema_version") != HAND_SCHEMA_VERSION:
            raise ValueError(f"{path}: unsupported schema_version {h.get('schema_version')!r}")
    return hands


def tally_hands(hands: list[dict], ids: list[str]) -> dict[str, SeatTally]:
    tallies = {i: SeatTally() for i in ids}
    for hand in hands:
        for seat, agent_id in enumerate(ids):
            if not hand["dealt"][seat]:
                continue
            t = tallies[agent_id]
            t.hands += 1
            t.net += hand["net"][seat]
            t.vpip_hands += hand["vpip"][seat]
            if hand["decisions"][seat]:
                t.hands_with_decision += 1
                t.fold_hands += hand["folded"][seat]
            t.latencies.extend(hand["latencies"][seat])
    return tallies


def _poker_report(run: Path, config: RunConfig) -> tuple[list[dict], dict, str]:
    ids = [s.id for s in config.role("seat")]
    rows = []
    auto_folds = {i: 0 for i in ids}
    for t in range(config.poker.tables):
        hands = _read_hands(hands_path(run, t))
        for hand in hands:
            for s, n in enumerate(hand["auto_folds"]):
                auto_folds[ids[s]] += n
        for agent_id, tally in tally_hands(hands, ids).items():
            rows.append(
                {
                    "agent": agent_id,
                    "table": t,
                    "avg_winnings_per_hand": tally.winnings_per_hand(),
                    "vpip": tally.vpip(),
                    "fold_rate": tally.fold_rate(),
                    "mean_latency_ms": tally.mean_latency(),
                }
            )
    summary = {
        "tables": config.poker.tables,
        "hands_per_table": config.poker.hands,
        "auto_folds": auto_folds,
    }
    return rows, summary, "table"


def _proofs_report(run: Path, config: RunConfig) -> tuple[list[dict], dict, str]:
    rows = []
    summary = {}
    task = config.task
    for p in config.role("player"):
        insts = config.proofs.instances
        if task in ("proofs_logic", "proofs_math"):
            results = [
                proofs.result_from_transcript(t, t.config)
                for t in (read_transcript(transcript_path(run, p.id, i.id)) for i in insts)
            ]
            for inst, r in zip(insts, results):
                rows.append(
                    {
                        "agent": p.id,
                        "instance": inst.id,
                        "solved": r.solved,
                        "turns_used": r.turns_used if r.solved else None,
                        "interactive_tokens": r.interactive_tokens,
                    }
                )
            summary[p.id] = proofs.metrics_report(results, config.episode.budget_B)
            continue
        attempts = [_read_attempts(attempts_path(run, p.id, i.id)) for i in insts]
        for inst, a in zip(insts, attempts):
            toks = [tok for _, _, tok in a.attempts]
            rows.append(
                {
                    "agent": p.id,
                    "instance": inst.id,
                    "success": a.success,
                    "pass1_tokens": None if None in toks else sum(toks) / len(toks),
                }
            )
        entry = {"n_total": len(insts), "k": attempts[0].k}
        if task == "no_interaction":
            entry["accuracy"] = float(proofs.pass_at_k_rate(attempts))
        else:
            entry["pass_at_k"] = float(proofs.pass_at_k_rate(attempts))
            try:
                entry["mean_pass1_tokens"] = float(proofs.mean_pass1_tokens(attempts))
            except ValueError:
                entry["mean_pass1_tokens"] = None
            if config.proofs.k == "matched":
                entry["k_star"] = matched_k(run, config)[p.id]
                episodes = [
                    proofs.result_from_transcript(t, t.config)
                    for t in (read_transcript(transcript_path(run, p.id, i.id)) for i in insts)
                ]
                entry["interactive"] = proofs.metrics_report(
                    episodes, config.episode.budget_B, k_star=entry["k_star"], pass_at_k=entry["pass_at_k"]
                )
        summary[p.id] = entry
    return rows, summary, "instance"


def build_report(run: str | Path, config: RunConfig | None = None) -> AggregateReport:
    """Recompute the aggregate report of a run directory from its persisted records."""
    run = Path(run)
    if config is None:
        config = load_run_config(run)
    if config.task == "trust":
        rows, summary, group = _trust_report(run, config)
    elif config.task == "poker":
        rows, summary, group = _poker_report(run, config)
    else:
        rows, summary, group = _proofs_report(run, config)
    versions = {
        "trust": MATCH_SCHEMA_VERSION,
        "poker": HAND_SCHEMA_VERSION,
        "pass_at_k": ATTEMPT_SCHEMA_VERSION,
        "no_interaction": ATTEMPT_SCHEMA_VERSION,
    }
    metadata = {
        "task": config.task,
        "config_hash": config.config_hash(),
        "record_schema_version": versions.get(config.task, SCHEMA_VERSION),
        "seeds": config.seeds(),
    }
    report = aggregate(rows, group_by=group, metadata=metadata)
    report.summary = summary
    return report


def load_run_config(run: str | Path) -> RunConfig:
    run = Path(run)
    path = run / "config.yaml"
    if not path.is_file():
        raise RunDirectoryError(f"{run} has no config.yaml; is it a run directory?")
    return load_config(path)


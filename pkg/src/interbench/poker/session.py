"""Multi-hand, multi-table poker sessions and per-agent behaviour statistics."""

from __future__ import annotations

import json
import logging
import statistics
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from ..agents import AgentSpec, derive_seed, make_agent
from .engine import HandResult, TableState, new_hand, run_hand

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TableConfig:
    small_blind: int = 50
    big_blind: int = 100
    starting_stack: int = 10_000

    def __post_init__(self):
        if not 0 < self.small_blind <= self.big_blind:
            raise ValueError("blinds must satisfy 0 < small <= big")
        if self.starting_stack <= 0:
            raise ValueError("starting_stack must be positive")


@dataclass
class SeatTally:
    hands: int = 0
    hands_with_decision: int = 0
    net: int = 0
    vpip_hands: int = 0
    fold_hands: int = 0
    latencies: list[int] = field(default_factory=list)

    def winnings_per_hand(self) -> float:
        return self.net / self.hands if self.hands else 0.0

    def vpip(self) -> float:
        return self.vpip_hands / self.hands if self.hands else 0.0

    def fold_rate(self) -> float | None:
        return self.fold_hands / self.hands_with_decision if self.hands_with_decision else None

    def mean_latency(self) -> float | None:
        return float(np.mean(self.latencies)) if self.latencies else None


@dataclass
class TableRun:
    table: int
    seed: int
    hands: list[HandResult]
    tallies: dict[str, SeatTally]
    resets: list[int]


@dataclass(frozen=True)
class MetricSummary:
    mean: float | None
    stddev: float | None
    n: int

    def to_dict(self) -> dict:
        return {"mean": self.mean, "stddev": self.stddev, "n": self.n}


@dataclass
class SessionStats:
    per_agent: dict[str, dict[str, MetricSummary]]
    tables: list[TableRun]

    def to_dict(self) -> dict:
        return {
            agent: {metric: s.to_dict() for metric, s in metrics.items()}
            for agent, metrics in self.per_agent.items()
        }


def summarize(values: Sequence[float | None]) -> MetricSummary:
    vals = [v for v in values if v is not None]
    if not vals:
        return MetricSummary(None, None, 0)
    mean = statistics.fmean(vals)
    std = statistics.stdev(vals) if len(vals) >= 2 else None
    return MetricSummary(mean, std, len(vals))


def _tally(hand: HandResult, ids: Sequence[str], tallies: dict[str, SeatTally]) -> None:
    for seat, agent_id in enumerate(ids):
        if not hand.dealt[seat]:
            continue
        t = tallies[agent_id]
        t.hands += 1
        t.net += hand.net[seat]
        t.vpip_hands += hand.vpip[seat]
        if hand.decisions[seat]:
            t.hands_with_decision += 1
            t.fold_hands += hand.folded[seat]
        t.latencies.extend(hand.latencies[seat])


def run_table(
    n_hands: int,
    agents: Sequence[AgentSpec],
    seed: int,
    config: TableConfig = TableConfig(),
    table_index: int = 0,
    on_step: Callable[[TableState], None] | None = None,
    on_hand: Callable[[HandResult], None] | None = None,
) -> TableRun:
    """Play ``n_hands`` at one table with fixed seating ``agents[i]`` -> seat ``i``."""
    if len(agents) < 2:
        raise ValueError("a table needs at least two agents")
    rng = np.random.default_rng(seed)
    players = [make_agent(replace(a, seed=derive_seed(a.seed, "table", seed))) for a in agents]
    ids = [a.id for a in agents]
    tallies = {i: SeatTally() for i in ids}
    stacks = [config.starting_stack] * len(agents)
    button = int(rng.integers(0, len(agents)))
    hands: list[HandResult] = []
    resets: list[int] = []
    for h in range(n_hands):
        # an eliminated seat triggers a full reset, so every seat is dealt in every hand
        if min(stacks) == 0:
            log.info("table %d: reset stacks before hand %d", table_index, h)
            resets.append(h)
            stacks = [config.starting_stack] * len(agents)
        button = _next_button(stacks, button if h else button - 1)
        state = new_hand(stacks, button, (config.small_blind, config.big_blind), rng=rng, hand_number=h)
        result = run_hand(state, players, on_step=on_step)
        stacks = list(state.stacks)
        hands.append(result)
        _tally(result, ids, tallies)
        if on_hand:
            on_hand(result)
    return TableRun(table=table_index, seed=seed, hands=hands, tallies=tallies, resets=resets)


def _next_button(stacks: Sequence[int], current: int) -> int:
    n = len(stacks)
    for i in range(1, n + 1):
        s = (current + i) % n
        if stacks[s] > 0:
            return s
    raise ValueError("no seat has chips")


def run_session(
    n_hands: int,
    n_tables: int,
    agents: Sequence[AgentSpec],
    seeds: Sequence[int],
    config: TableConfig = TableConfig(),
    on_hand: Callable[[int, HandResult], None] | None = None,
) -> SessionStats:
    if len(seeds) != n_tables:
        raise ValueError("one seed per table is required")
    if len({a.id for a in agents}) != len(agents):
        raise ValueError("agent ids must be unique")
    tables = []
    for t, seed in enumerate(seeds):
        hook = (lambda res, t=t: on_hand(t, res)) if on_hand else None
        tables.append(run_table(n_hands, agents, seed, config, table_index=t, on_hand=hook))
    return aggregate_tables(tables, [a.id for a in agents])


def aggregate_tables(tables: Sequence[TableRun], ids: Sequence[str]) -> SessionStats:
    per_agent = {}
    for agent_id in ids:
        rows = [t.tallies[agent_id] for t in tables]
        per_agent[agent_id] = {
            "avg_winnings_per_hand": summarize([r.winnings_per_hand() for r in rows]),
            "vpip": summarize([r.vpip() for r in rows]),
            "fold_rate": summarize([r.fold_rate() for r in rows]),
            "mean_latency_ms": summarize([r.mean_latency() for r in rows]),
        }
    return SessionStats(per_agent=per_agent, tables=list(tables))


def write_hand_history(hands: Sequence[HandResult], path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for hand in hands:
            fh.write(json.dumps(hand.to_dict(), sort_keys=True) + "\n")
    return path

"""Declarative run configuration (YAML) with strict validation."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, fields
from fractions import Fraction
from pathlib import Path

import yaml

from .agents import AgentSpec, derive_seed
from .episode import EpisodeConfig, EpisodeError
from .proofs import ProofInstance, load_instances

TASKS = ("proofs_logic", "proofs_math", "pass_at_k", "no_interaction", "poker", "trust")
ROLES = ("player", "judge", "seat")

# task -> role -> (min, max); max None means unbounded
ROLE_RULES: dict[str, dict[str, tuple[int, int | None]]] = {
    "proofs_logic": {"player": (1, None), "judge": (1, 1)},
    "proofs_math": {"player": (1, None), "judge": (1, 1)},
    "pass_at_k": {"player": (1, None), "judge": (0, 1)},
    "no_interaction": {"player": (1, None), "judge": (0, 1)},
    "poker": {"seat": (2, 10)},
    "trust": {"seat": (2, None)},
}

TOP_KEYS = {"task", "seed", "agents", "output_dir", "parallelism", "episode", "proofs", "poker", "trust"}
AGENT_KEYS = {f.name for f in fields(AgentSpec)} | {"role"}
EPISODE_KEYS = {"budget", "cost_per_action", "discount_gamma"}
PROOFS_KEYS = {"instances", "k"}
POKER_KEYS = {"tables", "hands", "small_blind", "big_blind", "starting_stack", "table_seeds"}
TRUST_KEYS = {"delta", "max_rounds", "repeats", "swap_seats"}
SECTION_TASKS = {
    "episode": ("proofs_logic", "proofs_math", "pass_at_k"),
    "proofs": ("proofs_logic", "proofs_math", "pass_at_k", "no_interaction"),
    "poker": ("poker",),
    "trust": ("trust",),
}


class ConfigError(ValueError):
    """Every problem found in a config, not just the first."""

    def __init__(self, violations: list[str]):
        self.violations = list(violations)
        super().__init__("invalid config:\n" + "\n".join(f"  - {v}" for v in self.violations))


@dataclass(frozen=True)
class RoleBinding:
    role: str
    agent: AgentSpec


@dataclass(frozen=True)
class ProofsSettings:
    instances: tuple[ProofInstance, ...]
    k: int | str = 1  # an int, or "matched" for the budget-matched k*
    source: str | None = None


@dataclass(frozen=True)
class PokerSettings:
    tables: int = 1
    hands: int = 10
    small_blind: int = 50
    big_blind: int = 100
    starting_stack: int = 10_000
    table_seeds: tuple[int, ...] = ()


@dataclass(frozen=True)
class TrustSettings:
    delta: float = 0.8
    max_rounds: int = 35
    repeats: int = 1
    swap_seats: bool = True


@dataclass(frozen=True)
class RunConfig:
    task: str
    seed: int
    agents: tuple[RoleBinding, ...]
    output_dir: str | None = None
    parallelism: int = 1
    episode: EpisodeConfig | None = None
    proofs: ProofsSettings | None = None
    poker: PokerSettings | None = None
    trust: TrustSettings | None = None

    def role(self, name: str) -> list[AgentSpec]:
        return [b.agent for b in self.agents if b.role == name]

    @property
    def judge(self) -> AgentSpec | None:
        judges = self.role("judge")
        return judges[0] if judges else None

    def seeds(self) -> dict:
        out = {"run": self.seed, "agents": {b.agent.id: b.agent.seed for b in self.agents}}
        if self.poker is not None:
            out["tables"] = list(self.poker.table_seeds)
        return out

    def to_dict(self) -> dict:
        """Resolved config in the input format; loading it back gives an equal RunConfig."""
        d: dict = {
            "task": self.task,
            "seed": self.seed,
            "output_dir": self.output_dir,
            "parallelism": self.parallelism,
            "agents": [{"role": b.role, **b.agent.to_dict()} for b in self.agents],
        }
        if self.episode is not None:
            d["episode"] = {
                "budget": self.episode.budget_B,
                "cost_per_action": self.episode.cost_per_action,
                "discount_gamma": str(self.episode.discount_gamma),
            }
        if self.proofs is not None:
            d["proofs"] = {"instances": [i.to_dict() for i in self.proofs.instances]}
            if self.task == "pass_at_k":
                d["proofs"]["k"] = self.proofs.k
        if self.poker is not None:
            d["poker"] = {**self.poker.__dict__, "table_seeds": list(self.poker.table_seeds)}
        if self.trust is not None:
            d["trust"] = dict(self.trust.__dict__)
        return d

    def config_hash(self) -> str:
        """sha256 of the resolved config. ``output_dir`` and ``parallelism`` do not affect results."""
        d = self.to_dict()
        d.pop("output_dir")
        d.pop("parallelism")
        return hashlib.sha256(json.dumps(d, sort_keys=True, default=str).encode()).hexdigest()


def _unknown(section: str, data: dict, allowed: set[str], out: list[str]) -> None:
    for key in sorted(set(data) - allowed):
        out.append(f"{section}: unknown field {key!r}")


def _int(section: str, key: str, value, out: list[str], minimum: int = 1) -> int | None:
    if isinstance(value, bool) or not isinstance(value, int):
        out.append(f"{section}.{key}: expected an integer, got {value!r}")
        return None
    if value < minimum:
        out.append(f"{section}.{key}: must be >= {minimum}")
        return None
    return value


def _mapping(name: str, value, out: list[str]) -> dict:
    if value is None:
        return {}
    if not isinstance(value, dict):
        out.append(f"{name}: expected a mapping")
        return {}
    return value


def _agents(raw, run_seed: int | None, out: list[str]) -> list[RoleBinding]:
    if not isinstance(raw, list) or not raw:
        out.append("agents: expected a non-empty list")
        return []
    bindings = []
    seen: set[str] = set()
    for i, entry in enumerate(raw):
        where = f"agents[{i}]"
        if not isinstance(entry, dict):
            out.append(f"{where}: expected a mapping")
            continue
        _unknown(where, entry, AGENT_KEYS, out)
        entry = {k: v for k, v in entry.items() if k in AGENT_KEYS}
        role = entry.pop("role", None)
        if role not in ROLES:
            out.append(f"{where}: role must be one of {', '.join(ROLES)}, got {role!r}")
        agent_id = entry.get("id")
        if agent_id in seen:
            out.append(f"{where}: duplicate agent id {agent_id!r}")
        seen.add(agent_id)
        if "seed" not in entry and run_seed is not None:
            entry["seed"] = derive_seed(run_seed, "agent", str(agent_id))
        if "params" in entry and not isinstance(entry["params"], dict):
            out.append(f"{where}.params: expected a mapping")
            continue
        try:
            spec = AgentSpec(**entry)
        except (TypeError, ValueError) as exc:
            out.append(f"{where}: {exc}")
            continue
        if role in ROLES:
            bindings.append(RoleBinding(role, spec))
    return bindings


def _check_roles(task: str, bindings: list[RoleBinding], out: list[str]) -> None:
    rules = ROLE_RULES[task]
    for b in bindings:
        if b.role not in rules:
            out.append(f"agents: role {b.role!r} ({b.agent.id}) is not used by task {task}")
    for role, (lo, hi) in rules.items():
        n = sum(1 for b in bindings if b.role == role)
        if n < lo:
            out.append(f"agents: task {task} requires at least {lo} agent(s) with role {role!r}, found {n}")
        if hi is not None and n > hi:
            out.append(f"agents: task {task} allows at most {hi} agent(s) with role {role!r}, found {n}")


def _episode(raw, out: list[str]) -> EpisodeConfig | None:
    data = _mapping("episode", raw, out)
    _unknown("episode", data, EPISODE_KEYS, out)
    budget = _int("episode", "budget", data.get("budget", 20), out)
    cost = _int("episode", "cost_per_action", data.get("cost_per_action", 1), out)
    try:
        gamma = Fraction(str(data.get("discount_gamma", 1)))
    except ValueError:
        out.append(f"episode.discount_gamma: not a number: {data.get('discount_gamma')!r}")
        return None
    if budget is None or cost is None:
        return None
    try:
        return EpisodeConfig(budget_B=budget, cost_per_action=cost, discount_gamma=gamma)
    except EpisodeError as exc:
        out.append(f"episode: {exc}")
        return None


def _proofs(raw, task: str, base: Path, out: list[str]) -> ProofsSettings | None:
    data = _mapping("proofs", raw, out)
    _unknown("proofs", data, PROOFS_KEYS, out)
    src = data.get("instances")
    instances: list[ProofInstance] = []
    source = None
    if src is None:
        out.append(f"proofs.instances: required for task {task}")
    elif isinstance(src, str):
        source = src
        path = (base / src) if not Path(src).is_absolute() else Path(src)
        try:
            instances = load_instances(path)
        except (OSError, ValueError) as exc:
            out.append(f"proofs.instances: {exc}")
    elif isinstance(src, list):
        for i, item in enumerate(src):
            try:
                instances.append(ProofInstance(**item))
            except (TypeError, ValueError) as exc:
                out.append(f"proofs.instances[{i}]: {exc}")
    else:
        out.append("proofs.instances: expected a file path or a list of instances")
    if src is not None and not instances and not any(v.startswith("proofs.instances") for v in out):
        out.append("proofs.instances: no instances found")
    ids = [i.id for i in instances]
    if len(set(ids)) != len(ids):
        out.append("proofs.instances: duplicate instance ids")
    domain = {"proofs_logic": "logic", "proofs_math": "math"}.get(task)
    for inst in instances:
        if domain and inst.domain != domain:
            out.append(f"proofs.instances: {inst.id!r} has domain {inst.domain!r}, task {task} needs {domain!r}")
    k = data.get("k", 1)
    if task == "pass_at_k":
        if k != "matched":
            k = _int("proofs", "k", k, out)
    elif "k" in data:
        out.append("proofs.k: only used by task pass_at_k")
    return ProofsSettings(instances=tuple(instances), k=k if k is not None else 1, source=source)


def _poker(raw, run_seed: int | None, out: list[str]) -> PokerSettings | None:
    data = _mapping("poker", raw, out)
    _unknown("poker", data, POKER_KEYS, out)
    d = PokerSettings()
    vals = {}
    for key in ("tables", "hands", "small_blind", "big_blind", "starting_stack"):
        vals[key] = _int("poker", key, data.get(key, getattr(d, key)), out)
    if any(v is None for v in vals.values()):
        return None
    if vals["small_blind"] > vals["big_blind"]:
        out.append("poker: small_blind must not exceed big_blind")
    seeds = data.get("table_seeds")
    if seeds is None:
        seeds = [derive_seed(run_seed or 0, "table", t) for t in range(vals["tables"])]
    elif not isinstance(seeds, list) or len(seeds) != vals["tables"]:
        out.append("poker.table_seeds: expected one integer per table")
        return None
    elif not all(isinstance(s, int) and not isinstance(s, bool) and s >= 0 for s in seeds):
        out.append("poker.table_seeds: seeds must be non-negative integers")
        return None
    return PokerSettings(**vals, table_seeds=tuple(seeds))


def _trust(raw, out: list[str]) -> TrustSettings | None:
    data = _mapping("trust", raw, out)
    _unknown("trust", data, TRUST_KEYS, out)
    delta = data.get("delta", 0.8)
    if isinstance(delta, bool) or not isinstance(delta, (int, float)) or not 0 < delta < 1:
        out.append(f"trust.delta: must lie in (0, 1), got {delta!r}")
        return None
    max_rounds = _int("trust", "max_rounds", data.get("max_rounds", 35), out)
    repeats = _int("trust", "repeats", data.get("repeats", 1), out)
    swap = data.get("swap_seats", True)
    if not isinstance(swap, bool):
        out.append("trust.swap_seats: expected true or false")
        return None
    if max_rounds is None or repeats is None:
        return None
    return TrustSettings(delta=float(delta), max_rounds=max_rounds, repeats=repeats, swap_seats=swap)


def parse_config(data, base_dir: str | Path = ".", seed_override: int | None = None) -> RunConfig:
    """Validate a decoded config mapping; raise ConfigError listing every violation."""
    out: list[str] = []
    if not isinstance(data, dict):
        raise ConfigError(["config: top level must be a mapping"])
    _unknown("config", data, TOP_KEYS, out)
    task = data.get("task")
    if task not in TASKS:
        out.append(f"task: must be one of {', '.join(TASKS)}, got {task!r}")
        task = None
    seed = seed_override if seed_override is not None else data.get("seed")
    if seed is None:
        out.append("seed: required (runs never draw implicit entropy)")
    elif isinstance(seed, bool) or not isinstance(seed, int) or not 0 <= seed < 2**64:
        out.append(f"seed: expected a 64-bit unsigned integer, got {seed!r}")
        seed = None
    parallelism = _int("config", "parallelism", data.get("parallelism", 1), out)
    output_dir = data.get("output_dir")
    if output_dir is not None and not isinstance(output_dir, str):
        out.append("output_dir: expected a path string")
    bindings = _agents(data.get("agents"), seed, out)
    if task:
        _check_roles(task, bindings, out)
        for section, tasks in SECTION_TASKS.items():
            if section in data and task not in tasks:
                out.append(f"{section}: section does not apply to task {task}")

    base = Path(base_dir)
    episode = proofs = poker = trust = None
    if task in SECTION_TASKS["episode"]:
        episode = _episode(data.get("episode"), out)
    if task in SECTION_TASKS["proofs"]:
        proofs = _proofs(data.get("proofs"), task, base, out)
        if proofs and task == "pass_at_k" and proofs.k == "matched" and not any(b.role == "judge" for b in bindings):
            out.append("proofs.k: 'matched' runs interactive episodes and needs an agent with role 'judge'")
        if proofs and task in ("pass_at_k", "no_interaction") and not any(b.role == "judge" for b in bindings):
            for inst in proofs.instances:
                if inst.final_answer_key is None:
                    out.append(f"agents: instance {inst.id!r} has no answer key, so role 'judge' is required")
                    break
    if task == "poker":
        poker = _poker(data.get("poker"), seed, out)
    if task == "trust":
        trust = _trust(data.get("trust"), out)

    if out:
        raise ConfigError(out)
    return RunConfig(
        task=task,
        seed=seed,
        agents=tuple(bindings),
        output_dir=output_dir,
        parallelism=parallelism,
        episode=episode,
        proofs=proofs,
        poker=poker,
        trust=trust,
    )


def load_config(path: str | Path, seed_override: int | None = None) -> RunConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError([f"{path}: no such config file"])
    try:
        data = yaml.safe_load(path.read_text(encoding="utf-8"))
    except yaml.YAMLError as exc:
        raise ConfigError([f"{path}: not valid YAML: {exc}"]) from None
    return parse_config(data, base_dir=path.parent, seed_override=seed_override)

"""Decision sources: remote chat endpoints and deterministic scripted strategies.

Every agent is driven the same way, with an ordered list of chat messages in
and an :class:`AgentReply` out. Scripted strategies read whatever they need
(opponent history, judge verdicts, poker observations) back out of the
message text, so a scripted agent and a remote model see identical prompts.
"""

from __future__ import annotations

import enum
import hashlib
import json
import logging
import os
import re
import threading
import time
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Sequence

import httpx
import numpy as np

log = logging.getLogger(__name__)

SCRIPTED_STRATEGIES = (
    "grim_trigger",
    "tit_for_tat",
    "all_cooperate",
    "all_defect",
    "random_p",
    "oracle_judge",
    "script",
    "constant",
    "bit_prober",
    "arith_solver",
    "always_fold",
    "calling_station",
    "poker_random",
    "poker_script",
)


class AgentFailure(RuntimeError):
    """Transport failure that survived every retry."""

    def __init__(self, agent_id: str, attempts: int, cause: Exception | None = None):
        self.agent_id = agent_id
        self.attempts = attempts
        self.cause = cause
        super().__init__(f"agent {agent_id!r} failed after {attempts} attempt(s): {cause}")


class TrustAction(str, enum.Enum):
    C = "C"
    D = "D"

    @property
    def word(self) -> str:
        return "COOPERATE" if self is TrustAction.C else "DEFECT"


@dataclass(frozen=True)
class ChatMessage:
    role: str
    content: str

    def __post_init__(self):
        if self.role not in ("system", "user", "assistant"):
            raise ValueError(f"unknown chat role {self.role!r}")
        if self.role != "system" and not self.content:
            raise ValueError(f"{self.role} messages need content")

    def to_dict(self) -> dict:
        return {"role": self.role, "content": self.content}


@dataclass(frozen=True)
class AgentReply:
    content: str
    latency_ms: int = 0
    token_usage: tuple[int, int] | None = None

    def __post_init__(self):
        if self.latency_ms < 0:
            raise ValueError("latency_ms must be non-negative")


@dataclass(frozen=True)
class AgentSpec:
    """Declarative description of one decision source.

    ``params`` carries strategy parameters (``p`` for ``random_p``, the reply
    list for ``script``...). ``api_key_env`` names the environment variable
    holding the endpoint credential; the credential itself is never stored.
    """

    id: str
    kind: str = "scripted"
    strategy: str | None = None
    temperature: float = 0.0
    timeout_ms: int = 30_000
    max_retries: int = 1
    endpoint: str | None = None
    model: str | None = None
    seed: int = 0
    params: dict = field(default_factory=dict, hash=False, compare=True)
    api_key_env: str | None = None
    rate_limit_rpm: float | None = None

    def __post_init__(self):
        problems = self.violations()
        if problems:
            raise ValueError(f"agent {self.id!r}: " + "; ".join(problems))

    def violations(self) -> list[str]:
        out = []
        if not self.id:
            out.append("id must be non-empty")
        if self.kind not in ("remote", "scripted"):
            out.append(f"kind must be 'remote' or 'scripted', got {self.kind!r}")
        if self.kind == "remote" and not (self.endpoint and self.model):
            out.append("remote agents need endpoint and model")
        if self.kind == "scripted":
            if not self.strategy:
                out.append("scripted agents need a strategy")
            elif self.strategy not in SCRIPTED_STRATEGIES:
                out.append(f"unknown strategy {self.strategy!r}")
        if self.temperature < 0:
            out.append("temperature must be >= 0")
        if self.timeout_ms <= 0:
            out.append("timeout_ms must be positive")
        if self.max_retries < 0:
            out.append("max_retries must be >= 0")
        if not 0 <= self.seed < 2**64:
            out.append("seed must be a 64-bit unsigned integer")
        return out

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "kind": self.kind,
            "strategy": self.strategy,
            "temperature": self.temperature,
            "timeout_ms": self.timeout_ms,
            "max_retries": self.max_retries,
            "endpoint": self.endpoint,
            "model": self.model,
            "seed": self.seed,
            "params": self.params,
            "api_key_env": self.api_key_env,
            "rate_limit_rpm": self.rate_limit_rpm,
        }


# -- baseline trust strategies ----------------------------------------------

def grim_trigger_action(opponent_history: Sequence) -> TrustAction:
    """Cooperate until the opponent defects once, then defect for good."""
    if any(TrustAction(a) is TrustAction.D for a in opponent_history):
        return TrustAction.D
    return TrustAction.C


def tit_for_tat_action(opponent_history: Sequence) -> TrustAction:
    if not opponent_history:
        return TrustAction.C
    return TrustAction(opponent_history[-1])


# -- message-protocol helpers -----------------------------------------------

_YOU_RE = re.compile(r"^YOU:\s*([CD]*)\s*$", re.MULTILINE)
_OPP_RE = re.compile(r"^OPPONENT:\s*([CD]*)\s*$", re.MULTILINE)


def format_trust_history(own: str, opponent: str) -> str:
    return f"YOU: {own}\nOPPONENT: {opponent}"


def parse_trust_history(text: str) -> tuple[str, str]:
    """Recover (own, opponent) action strings from a trust-game prompt."""
    own = _YOU_RE.findall(text)
    opp = _OPP_RE.findall(text)
    if not own or not opp:
        return "", ""
    return own[-1], opp[-1]


def _last(messages: Sequence[ChatMessage], role: str) -> str:
    for m in reversed(messages):
        if m.role == role:
            return m.content
    return ""


def _n_replies(messages: Sequence[ChatMessage]) -> int:
    return sum(1 for m in messages if m.role == "assistant")


def derive_seed(seed: int, *salt) -> int:
    """Stable 64-bit child seed; independent of Python's hash randomization."""
    digest = hashlib.sha256(repr((seed,) + salt).encode()).digest()
    return int.from_bytes(digest[:8], "little")


def _rng(seed: int, *salt) -> np.random.Generator:
    return np.random.default_rng(derive_seed(seed, *salt))


def _message_digest(messages: Sequence[ChatMessage]) -> str:
    payload = json.dumps([m.to_dict() for m in messages], sort_keys=True)
    return hashlib.sha256(payload.encode()).hexdigest()


def _observation(messages: Sequence[ChatMessage]) -> dict:
    text = _last(messages, "user")
    start = text.find("{")
    if start < 0:
        return {}
    try:
        return json.loads(text[start:])
    except json.JSONDecodeError:
        return {}


# -- scripted strategies ----------------------------------------------------
# each takes (params, seed, messages) and returns reply text

def _trust_reply(choose: Callable[[str], TrustAction]):
    def strategy(params, seed, messages):
        _, opponent = parse_trust_history(_last(messages, "user"))
        return choose(opponent).word

    return strategy


def _random_p(params, seed, messages):
    own, _ = parse_trust_history(_last(messages, "user"))
    p = float(Fraction(str(params.get("p", "0.5"))))
    # own stream indexed by round, never by opponent behaviour
    draw = _rng(seed, "random_p", len(own)).random()
    return TrustAction.C.word if draw < p else TrustAction.D.word


def _script(params, seed, messages):
    replies = params.get("replies") or [""]
    idx = _n_replies(messages)
    return replies[min(idx, len(replies) - 1)]


def _constant(params, seed, messages):
    return params.get("text", "")


_BIT_QUERY_RE = re.compile(r"is bit (\d+) set\??", re.IGNORECASE)
_BIT_KEY_RE = re.compile(r"^KEY:\s*([01]+)\s*$", re.MULTILINE)
_BIT_LEN_RE = re.compile(r"(\d+)-bit", re.IGNORECASE)


def _oracle_judge(params, seed, messages):
    system = _last(messages, "system")
    match = _BIT_KEY_RE.search(system)
    if not match:
        return "IRRELEVANT"
    key = match.group(1)
    request = _last(messages, "user")
    head, _, body = request.partition("\n")
    body = body.strip()
    if head.strip().upper().startswith("FINAL"):
        guess = body.splitlines()[-1].strip() if body else ""
        return "CORRECT" if guess == key else "INCORRECT"
    q = _BIT_QUERY_RE.search(body)
    if not q:
        return "IRRELEVANT"
    i = int(q.group(1))
    if not 1 <= i <= len(key):
        return "IRRELEVANT"
    return "YES" if key[i - 1] == "1" else "NO"


def _bit_prober(params, seed, messages):
    # ask bits 1..n in order, then submit what the verdicts imply
    first = next((m.content for m in messages if m.role == "user"), "")
    match = _BIT_LEN_RE.search(first)
    n = int(params.get("n_bits", match.group(1) if match else 0))
    bits = []
    for m in messages:
        if m.role == "user" and m.content.startswith("Judge:"):
            verdict = m.content.split(":", 1)[1].split()[0].upper()
            bits.append("1" if verdict == "YES" else "0")
    asked = _n_replies(messages)
    if asked < n:
        return f"[QUERY]\nIs bit {asked + 1} set?"
    return "[FINAL]\n" + "".join(bits[:n])


_SUM_RE = re.compile(r"(-?\d+)\s*\+\s*(-?\d+)")


def _arith_solver(params, seed, messages):
    """Solve 'a + b' problems, right with probability p per attempt."""
    problem = next((m.content for m in messages if m.role == "user"), "")
    match = _SUM_RE.search(problem)
    if not match:
        return "[FINAL]\nunknown"
    answer = int(match.group(1)) + int(match.group(2))
    p = float(Fraction(str(params.get("p", "1"))))
    if _rng(seed, "arith", _message_digest(messages)).random() >= p:
        answer += 1
    return f"[FINAL]\n{answer}"


def _poker_reply(action: str, amount: int = 0, reasoning: str = "") -> str:
    return json.dumps({"action": action, "amount": amount, "reasoning": reasoning})


def _always_fold(params, seed, messages):
    return _poker_reply("FOLD", 0, "always fold")


def _calling_station(params, seed, messages):
    obs = _observation(messages)
    if obs.get("to_call", 0) > 0:
        return _poker_reply("CALL", obs.get("current_bet", 0), "call")
    return _poker_reply("CHECK", 0, "check")


def _poker_random(params, seed, messages):
    obs = _observation(messages)
    rng = _rng(seed, "poker", _message_digest(messages))
    garbage = float(params.get("garbage_rate", 0.05))
    if rng.random() < garbage:
        return "I am not sure what to do here."
    to_call = obs.get("to_call", 0)
    bet = obs.get("current_bet", 0)
    stack = obs.get("stacks", {}).get(str(obs.get("seat")), 0)
    street = obs.get("your_street_bet", 0)
    weights = np.array(params.get("weights", [0.15, 0.3, 0.3, 0.2, 0.05]), dtype=float)
    choice = rng.choice(["FOLD", "CHECK", "CALL", "RAISE", "ALL_IN"], p=weights / weights.sum())
    if choice == "CHECK" and to_call > 0:
        choice = "CALL"
    if choice == "CALL" and to_call == 0:
        choice = "CHECK"
    if choice == "RAISE":
        floor = bet + max(obs.get("min_raise", 1), 1)
        cap = street + stack
        if floor >= cap:
            return _poker_reply("ALL_IN", cap)
        return _poker_reply("RAISE", int(rng.integers(floor, cap + 1)))
    if choice == "CALL":
        return _poker_reply("CALL", bet)
    return _poker_reply(choice, 0)


def _poker_script(params, seed, messages):
    obs = _observation(messages)
    seat = obs.get("seat")
    hand = obs.get("hand_number", 0)
    plans = params.get("hands")
    replies = plans[hand % len(plans)] if plans else params.get("replies", ["FOLD"])
    mine = sum(
        1 for a in obs.get("recent_actions", []) if a.get("seat") == seat and not a.get("blind")
    )
    return replies[min(mine, len(replies) - 1)]


STRATEGIES: dict[str, Callable] = {
    "grim_trigger": _trust_reply(grim_trigger_action),
    "tit_for_tat": _trust_reply(tit_for_tat_action),
    "all_cooperate": lambda params, seed, messages: TrustAction.C.word,
    "all_defect": lambda params, seed, messages: TrustAction.D.word,
    "random_p": _random_p,
    "oracle_judge": _oracle_judge,
    "script": _script,
    "constant": _constant,
    "bit_prober": _bit_prober,
    "arith_solver": _arith_solver,
    "always_fold": _always_fold,
    "calling_station": _calling_station,
    "poker_random": _poker_random,
    "poker_script": _poker_script,
}


def word_count_usage(messages: Sequence[ChatMessage], content: str) -> tuple[int, int]:
    """Whitespace token counts reported by scripted agents."""
    prompt = sum(len(m.content.split()) for m in messages)
    return prompt, len(content.split())


# -- agents -----------------------------------------------------------------

class ScriptedAgent:
    def __init__(self, spec: AgentSpec):
        self.spec = spec
        self._fn = STRATEGIES[spec.strategy]

    def reply(self, messages: Sequence[ChatMessage]) -> AgentReply:
        if not messages:
            raise ValueError("messages must be non-empty")
        content = self._fn(self.spec.params, self.spec.seed, list(messages))
        # latency is defined as 0 for in-process strategies
        return AgentReply(content=content, latency_ms=0, token_usage=word_count_usage(messages, content))


class _Pacer:
    """Client-side pacing to a requests-per-minute ceiling."""

    _registry: dict[tuple, "_Pacer"] = {}
    _lock = threading.Lock()

    def __init__(self, rpm: float):
        self.interval = 60.0 / rpm
        self.next_at = 0.0
        self.lock = threading.Lock()

    @classmethod
    def get(cls, key: tuple, rpm: float | None) -> "_Pacer | None":
        if not rpm:
            return None
        with cls._lock:
            if key not in cls._registry:
                cls._registry[key] = cls(rpm)
            return cls._registry[key]

    def wait(self):
        with self.lock:
            now = time.monotonic()
            delay = self.next_at - now
            self.next_at = max(now, self.next_at) + self.interval
        if delay > 0:
            time.sleep(delay)


class RemoteAgent:
    """Chat-completion client: POST {model, messages, temperature}, read choices[0]."""

    def __init__(self, spec: AgentSpec, transport: httpx.BaseTransport | None = None):
        self.spec = spec
        self.transport = transport
        self.pacer = _Pacer.get((spec.endpoint, spec.model), spec.rate_limit_rpm)

    def _headers(self) -> dict:
        headers = {"Content-Type": "application/json"}
        if self.spec.api_key_env:
            key = os.environ.get(self.spec.api_key_env)
            if key:
                headers["Authorization"] = f"Bearer {key}"
        return headers

    def reply(self, messages: Sequence[ChatMessage]) -> AgentReply:
        if not messages:
            raise ValueError("messages must be non-empty")
        body = {
            "model": self.spec.model,
            "messages": [m.to_dict() for m in messages],
            "temperature": self.spec.temperature,
        }
        timeout = self.spec.timeout_ms / 1000
        attempts = 0
        last_error: Exception | None = None
        with httpx.Client(timeout=timeout, transport=self.transport) as client:
            while attempts < 1 + self.spec.max_retries:
                attempts += 1
                if self.pacer:
                    self.pacer.wait()
                start = time.monotonic()
                try:
                    resp = client.post(self.spec.endpoint, json=body, headers=self._headers())
                    resp.raise_for_status()
                    data = resp.json()
                    content = data["choices"][0]["message"]["content"]
                except (httpx.HTTPError, ValueError, KeyError, IndexError, TypeError) as exc:
                    last_error = exc
                    log.warning("agent %s attempt %d failed: %s", self.spec.id, attempts, exc)
                    continue
                latency = int(round((time.monotonic() - start) * 1000))
                return AgentReply(content=content or "", latency_ms=latency, token_usage=_usage(data))
        raise AgentFailure(self.spec.id, attempts, last_error)


def _usage(data: dict) -> tuple[int, int] | None:
    usage = data.get("usage") or {}
    try:
        return int(usage["prompt_tokens"]), int(usage["completion_tokens"])
    except (KeyError, TypeError, ValueError):
        return None


def make_agent(spec: AgentSpec, transport: httpx.BaseTransport | None = None):
    if spec.kind == "scripted":
        return ScriptedAgent(spec)
    return RemoteAgent(spec, transport=transport)


def next_reply(spec: AgentSpec, messages: Sequence[ChatMessage]) -> AgentReply:
    return make_agent(spec).reply(messages)


def oracle_judge_reply(hidden_truth: str, query: str, final: bool = False):
    """Verdict of the bitstring oracle for one query or final guess.

    ``hidden_truth`` must contain a ``KEY: <bits>`` line.
    """
    from .proofs import parse_verdict

    kind = "FINAL ANSWER" if final else "QUERY"
    messages = [ChatMessage("system", hidden_truth), ChatMessage("user", f"{kind}\n{query}")]
    return parse_verdict(_oracle_judge({}, 0, messages))

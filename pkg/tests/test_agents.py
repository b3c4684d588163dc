import json
import socket
import threading
from http.server import BaseHTTPRequestHandler, HTTPServer

import httpx
import pytest

from interbench.agents import (
    AgentFailure,
    AgentSpec,
    ChatMessage,
    TrustAction,
    derive_seed,
    format_trust_history,
    grim_trigger_action,
    make_agent,
    next_reply,
    oracle_judge_reply,
    parse_trust_history,
    tit_for_tat_action,
)
from interbench.episode import Verdict


def trust_msgs(own, opp):
    return [ChatMessage("system", "game"), ChatMessage("user", f"ROUND 1\n{format_trust_history(own, opp)}")]


def test_spec_validation_collects_problems():
    with pytest.raises(ValueError, match="strategy"):
        AgentSpec(id="x", strategy="nope")
    with pytest.raises(ValueError, match="endpoint"):
        AgentSpec(id="x", kind="remote")
    spec = AgentSpec(id="x", strategy="tit_for_tat")
    assert spec.violations() == []


def test_baseline_strategies():
    assert tit_for_tat_action("") is TrustAction.C
    assert tit_for_tat_action("CCD") is TrustAction.D
    assert tit_for_tat_action("DDC") is TrustAction.C
    assert grim_trigger_action("CCC") is TrustAction.C
    assert grim_trigger_action("CDC") is TrustAction.D


def test_history_format_roundtrip():
    text = format_trust_history("CCD", "DCC")
    assert parse_trust_history(text) == ("CCD", "DCC")


@pytest.mark.parametrize(
    "strategy, opp, expected",
    [("tit_for_tat", "CD", "DEFECT"), ("grim_trigger", "DC", "DEFECT"), ("all_cooperate", "DD", "COOPERATE")],
)
def test_scripted_trust_replies(strategy, opp, expected):
    reply = next_reply(AgentSpec(id="a", strategy=strategy), trust_msgs("CC", opp))
    assert reply.content == expected
    assert reply.latency_ms == 0


def test_scripted_agents_are_pure():
    spec = AgentSpec(id="r", strategy="random_p", seed=42, params={"p": 0.5})
    msgs = trust_msgs("CDC", "CCC")
    assert len({next_reply(spec, msgs).content for _ in range(5)}) == 1


def test_random_p_extremes():
    always = AgentSpec(id="r", strategy="random_p", params={"p": 1})
    never = AgentSpec(id="r", strategy="random_p", params={"p": 0})
    for n in range(10):
        assert next_reply(always, trust_msgs("C" * n, "D" * n)).content == "COOPERATE"
        assert next_reply(never, trust_msgs("D" * n, "C" * n)).content == "DEFECT"


def test_script_clamps_to_last_reply():
    spec = AgentSpec(id="s", strategy="script", params={"replies": ["a", "b"]})
    msgs = [ChatMessage("user", "go")]
    assert next_reply(spec, msgs).content == "a"
    msgs += [ChatMessage("assistant", "a"), ChatMessage("user", "go"), ChatMessage("assistant", "b")]
    assert next_reply(spec, msgs + [ChatMessage("user", "go")]).content == "b"


def test_oracle_judge():
    truth = "KEY: 1010"
    assert oracle_judge_reply(truth, "Is bit 1 set?") is Verdict.YES
    assert oracle_judge_reply(truth, "Is bit 2 set?") is Verdict.NO
    assert oracle_judge_reply(truth, "Is it raining?") is Verdict.IRRELEVANT
    assert oracle_judge_reply(truth, "1010", final=True) is Verdict.CORRECT
    assert oracle_judge_reply(truth, "1011", final=True) is Verdict.INCORRECT


def test_derive_seed_stable():
    assert derive_seed(1, "a", 2) == derive_seed(1, "a", 2)
    assert derive_seed(1, "a", 2) != derive_seed(1, "a", 3)
    assert 0 <= derive_seed(5) < 2**64


def test_word_count_usage():
    reply = next_reply(AgentSpec(id="c", strategy="constant", params={"text": "one two"}), [ChatMessage("user", "a b c")])
    assert reply.token_usage == (3, 2)


# -- remote client ------------------------------------------------------------

class _Flaky(BaseHTTPRequestHandler):
    calls = 0
    bodies: list = []

    def do_POST(self):
        type(self).calls += 1
        body = json.loads(self.rfile.read(int(self.headers["Content-Length"])))
        type(self).bodies.append((body, self.headers.get("Authorization")))
        if type(self).calls == 1:
            self.send_response(503)
            self.end_headers()
            return
        payload = {
            "choices": [{"message": {"role": "assistant", "content": "COOPERATE"}}],
            "usage": {"prompt_tokens": 11, "completion_tokens": 1},
        }
        data = json.dumps(payload).encode()
        self.send_response(200)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    def log_message(self, *args):
        pass


@pytest.fixture
def flaky_server():
    _Flaky.calls = 0
    _Flaky.bodies = []
    server = HTTPServer(("127.0.0.1", 0), _Flaky)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    yield f"http://127.0.0.1:{server.server_port}/v1/chat/completions"
    server.shutdown()


def test_remote_retries_then_reports_usage(flaky_server, monkeypatch):
    monkeypatch.setenv("TEST_KEY", "sekrit")
    spec = AgentSpec(
        id="m", kind="remote", endpoint=flaky_server, model="m-1", max_retries=1, api_key_env="TEST_KEY"
    )
    reply = make_agent(spec).reply([ChatMessage("user", "hi")])
    assert reply.content == "COOPERATE"
    assert reply.token_usage == (11, 1)
    assert _Flaky.calls == 2
    body, auth = _Flaky.bodies[-1]
    assert body["model"] == "m-1" and body["temperature"] == 0
    assert auth == "Bearer sekrit"


def test_remote_no_retry_fails(flaky_server):
    spec = AgentSpec(id="m", kind="remote", endpoint=flaky_server, model="m-1", max_retries=0)
    with pytest.raises(AgentFailure) as err:
        make_agent(spec).reply([ChatMessage("user", "hi")])
    assert err.value.attempts == 1


def _closed_port() -> int:
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        return s.getsockname()[1]


def test_unreachable_endpoint_two_attempts():
    spec = AgentSpec(
        id="gone", kind="remote", endpoint=f"http://127.0.0.1:{_closed_port()}/v1", model="m", max_retries=1,
        timeout_ms=500,
    )
    with pytest.raises(AgentFailure) as err:
        make_agent(spec).reply([ChatMessage("user", "hi")])
    assert err.value.attempts == 2


def test_missing_usage_is_none():
    def handler(request):
        return httpx.Response(200, json={"choices": [{"message": {"content": "x"}}]})

    spec = AgentSpec(id="m", kind="remote", endpoint="http://test/v1", model="m")
    reply = make_agent(spec, transport=httpx.MockTransport(handler)).reply([ChatMessage("user", "hi")])
    assert reply.content == "x" and reply.token_usage is None

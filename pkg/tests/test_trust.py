from fractions import Fraction

import numpy as np
import pytest

from _fixtures import load
from interbench.agents import AgentSpec
from interbench.errors import UndefinedMetric
from interbench.trust import (
    DETERMINISTIC,
    MATCH_SCHEMA_VERSION,
    MatchConfig,
    MatchRecord,
    PayoffMatrix,
    betrayal_rate,
    coop_rate,
    deterministic_path,
    discounted_objective_check,
    horizon_pmf,
    leaderboard,
    parse_trust_action,
    plan_tournament,
    read_records,
    render_match,
    replay_actions,
    run_match,
    run_tournament,
    sample_horizon,
    score,
    stage_payoff,
    truncated_mean_horizon,
    write_records,
)


def test_stage_payoffs():
    assert stage_payoff("C", "C") == (2, 2)
    assert stage_payoff("C", "D") == (-1, 3)
    assert stage_payoff("D", "C") == (3, -1)
    assert stage_payoff("D", "D") == (0, 0)


def test_payoff_ordering_enforced():
    with pytest.raises(ValueError):
        PayoffMatrix(cc=(0, 0), dd=(2, 2))


@pytest.mark.parametrize("match", load("trust_trace.json")["matches"], ids=lambda m: f"r{m['repeat']}-{m['seat_order']}")
def test_trace_replays(match):
    rec = replay_actions(match["a"], match["b"])
    assert rec.actions_a == match["a"] and rec.actions_b == match["b"]
    assert [int(x) for x in rec.totals] == match["totals"]


def test_parse_action():
    assert parse_trust_action(" COOPERATE\n").value == "C"
    assert parse_trust_action("DEFECT").value == "D"
    for bad in ("maybe", "cooperate.", "I DEFECT"):
        with pytest.raises(ValueError):
            parse_trust_action(bad)


def test_invalid_twice_counts_as_defect():
    junk = AgentSpec(id="junk", strategy="constant", params={"text": "hmm"})
    tft = AgentSpec(id="tft", strategy="tit_for_tat")
    rec = run_match(junk, tft, MatchConfig(), horizon=3)
    assert rec.actions_a == "DDD" and rec.invalid_a == (1, 2, 3)
    assert rec.actions_b == "CDD" and rec.invalid_b == ()


def _pair(x, y, rounds=10):
    a = AgentSpec(id="a", strategy=x)
    b = AgentSpec(id="b", strategy=y)
    return [run_match(a, b, MatchConfig(), horizon=rounds)]


def test_baseline_metrics():
    recs = _pair("tit_for_tat", "tit_for_tat")
    assert score("a", recs) == 2 and betrayal_rate("a", recs) == 0 and coop_rate("a", recs) == 1
    recs = _pair("grim_trigger", "all_defect", rounds=1)
    assert score("a", recs) == -1 and score("b", recs) == 3
    recs = _pair("grim_trigger", "all_defect", rounds=8)
    assert score("a", recs) == Fraction(-1, 8)
    assert betrayal_rate("b", recs) == 1
    assert betrayal_rate("a", recs) is None  # opponent never cooperated
    with pytest.raises(UndefinedMetric):
        score("nobody", recs)


def test_leaderboard_rounds():
    board = leaderboard(_pair("all_cooperate", "all_defect", rounds=4))
    assert board["a"]["score"] == -1.0 and board["b"]["score"] == 3.0
    assert board["a"]["rounds"] == 4


def test_horizon_pmf_and_mean():
    pmf = horizon_pmf(0.8, 35)
    assert pmf.sum() == pytest.approx(1.0)
    t = np.arange(1, 36)
    assert (pmf * t).sum() == pytest.approx(truncated_mean_horizon(0.8, 35))
    assert truncated_mean_horizon(0.8, 35) == pytest.approx((1 - 0.8**35) / 0.2)


def test_sample_horizon_bounds():
    rng = np.random.default_rng(0)
    draws = [sample_horizon(0.99, 5, rng) for _ in range(200)]
    assert max(draws) == 5 and min(draws) >= 1
    with pytest.raises(ValueError):
        sample_horizon(1.0, 5, rng)


def _models():
    return [AgentSpec(id=i, strategy=s) for i, s in (("tft", "tit_for_tat"), ("grim", "grim_trigger"), ("rnd", "random_p"))]


def test_plan_shares_horizon_per_repeat():
    jobs = plan_tournament(_models(), MatchConfig(seed=7, repeats_R=3))
    assert len(jobs) == 3 * 3 * 2
    by_key = {}
    for job in jobs:
        by_key.setdefault((job.pair, job.repeat), set()).add(job.horizon)
    assert all(len(h) == 1 for h in by_key.values())


def test_plan_is_stable_under_added_models():
    cfg = MatchConfig(seed=7, repeats_R=2)
    small = plan_tournament(_models()[:2], cfg)
    large = plan_tournament(_models(), cfg)
    keep = [j for j in large if j.pair == ("tft", "grim")]
    assert keep == small


def test_tournament_is_deterministic():
    cfg = MatchConfig(seed=3, repeats_R=2)
    assert run_tournament(_models(), cfg) == run_tournament(_models(), cfg)


def test_discounted_objective_tft_pair():
    recs = _pair("tit_for_tat", "tit_for_tat", rounds=12)
    check = discounted_objective_check(
        recs, "a", DETERMINISTIC["tit_for_tat"], DETERMINISTIC["tit_for_tat"], 0.8, 35
    )
    assert check.predicted == 2 and check.gap == 0


def test_deterministic_path_grim_vs_all_defect():
    path = deterministic_path(DETERMINISTIC["grim_trigger"], DETERMINISTIC["all_defect"], 3)
    assert path == [(-1, 3), (0, 0), (0, 0)]


def test_render_match():
    rec = replay_actions("CDDDDD", "DCDDDD")
    text = render_match(rec)
    assert text.endswith("A: CDDDDD\nB: DCDDDD")
    assert "total_payoff(A,B)=(2,2)" in text


def test_records_roundtrip(tmp_path):
    recs = run_tournament(_models()[:2], MatchConfig(seed=1, repeats_R=2))
    path = write_records(recs, tmp_path / "m.jsonl")
    assert read_records(path) == recs
    assert recs[0].to_dict()["schema_version"] == MATCH_SCHEMA_VERSION


def test_from_dict_rejects_other_schema():
    d = replay_actions("C", "D").to_dict()
    d["schema_version"] = "interbench.trust/99"
    with pytest.raises(ValueError):
        MatchRecord.from_dict(d)

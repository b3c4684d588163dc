"""Acceptance criteria, one test each.

Every test prints a ``PASS``/``FAIL`` line with the measured value, even under
pytest's output capture. Run ``python tests/test_acceptance.py`` for the bare
list without pytest.
"""

import sys
import time
from fractions import Fraction
from itertools import combinations
from pathlib import Path

import numpy as np
import pytest
from scipy import stats

sys.path.insert(0, str(Path(__file__).parent))

from _fixtures import load, logic_trace_run  # noqa: E402
from _oracle import best_of_seven, encode  # noqa: E402
from interbench.agents import AgentSpec  # noqa: E402
from interbench.config import parse_config  # noqa: E402
from interbench.episode import ActionKind, Actor, EpisodeConfig, Outcome, Verdict  # noqa: E402
from interbench.poker import ActionKind as PokerKind, FULL_DECK, TableConfig, evaluate_hand, run_table  # noqa: E402
from interbench.proofs import (  # noqa: E402
    ProofInstance,
    accuracy,
    avg_turns,
    budget_matched_k,
    pass_at_k_rate,
    run_pass_at_k,
    run_proof_episode,
)
from interbench.runner import execute  # noqa: E402
from interbench.trust import (  # noqa: E402
    DETERMINISTIC,
    MatchConfig,
    betrayal_rate,
    discounted_objective_check,
    horizon_pmf,
    replay_actions,
    run_match,
    run_tournament,
    sample_horizon,
    score,
    truncated_mean_horizon,
)

_capture = None


@pytest.fixture(autouse=True)
def _uncaptured(capsys):
    global _capture
    _capture = capsys
    yield
    _capture = None


def verdict(number: int, name: str, ok: bool, detail: str) -> None:
    line = f"{'PASS' if ok else 'FAIL'} [{number:02d}] {name}: {detail}"
    if _capture is not None:
        with _capture.disabled():
            print("\n" + line)
    else:
        print(line)
    assert ok, line


# 1 ---------------------------------------------------------------------------

def test_01_budget_matched_k():
    rows = load("matched_k_tokens.json")["pairs"]
    got = [budget_matched_k(r["pass1"], r["interactive"]) for r in rows]
    want = [r["k"] for r in rows]
    verdict(1, "budget-matched k*", got == want, f"k*={got} expected {want}")


# 2 ---------------------------------------------------------------------------

def test_02_trust_trace_replay():
    matches = load("trust_trace.json")["matches"]
    bad = []
    for m in matches:
        rec = replay_actions(m["a"], m["b"])
        if (rec.actions_a, rec.actions_b) != (m["a"], m["b"]) or [int(x) for x in rec.totals] != m["totals"]:
            bad.append((m["repeat"], m["seat_order"]))
    verdict(2, "trust sub-match replay", len(matches) == 10 and not bad,
            f"{len(matches) - len(bad)}/{len(matches)} sub-matches reproduce actions and totals")


# 3 ---------------------------------------------------------------------------

def _compare_with_oracle(hands: list[tuple]) -> int:
    idx = {c: i for i, c in enumerate(FULL_DECK)}
    arr = np.array([[idx[c] for c in h] for h in hands])
    expected = best_of_seven(arr // 4 + 2, arr % 4)
    got = np.fromiter((encode(evaluate_hand(list(h))) for h in hands), dtype=np.int64, count=len(hands))
    return int((got != expected).sum())


def test_03_evaluator_oracle():
    start = time.perf_counter()
    short = [c for c in FULL_DECK if c.rank >= 9]
    reduced = list(combinations(short, 7))
    mismatches = _compare_with_oracle(reduced)
    rng = np.random.default_rng(20260101)
    draws = np.argsort(rng.random((100_000, 52)), axis=1)[:, :7]
    mismatches += _compare_with_oracle([tuple(FULL_DECK[i] for i in row) for row in draws])
    elapsed = time.perf_counter() - start
    verdict(3, "hand evaluator vs brute-force oracle", len(reduced) == 346_104 and mismatches == 0 and elapsed < 60,
            f"{len(reduced)} exhaustive + 100000 random hands, {mismatches} mismatches, {elapsed:.1f}s")


# 4 ---------------------------------------------------------------------------

def test_04_chip_conservation():
    cfg = TableConfig()
    seats = [AgentSpec(id=f"r{i}", strategy="poker_random", seed=i) for i in range(4)]
    bank = len(seats) * cfg.starting_stack
    drift = []
    nets = []
    all_ins = []

    def on_step(state):
        if state.chips_in_play() != bank:
            drift.append(state.chips_in_play())

    def record(hand):
        nets.append(sum(hand.net))
        all_ins.append(any(a.kind is PokerKind.ALL_IN for a in hand.history))

    table = run_table(10_000, seats, seed=77, config=cfg, on_step=on_step, on_hand=record)
    ok = len(nets) == 10_000 and sum(all_ins) > 0 and not drift and not any(nets) and sum(t.net for t in table.tallies.values()) == 0
    verdict(4, "chip conservation", ok,
            f"{len(nets)} hands ({sum(all_ins)} with an all-in), {len(drift)} off-balance steps, {sum(1 for n in nets if n)} hands with nonzero net sum")


# 5 ---------------------------------------------------------------------------

def test_05_horizon_distribution():
    delta, cap, n = 0.8, 35, 100_000
    rng = np.random.default_rng(4242)
    draws = np.array([sample_horizon(delta, cap, rng) for _ in range(n)])
    target = (1 - delta**cap) / (1 - delta)
    rel = abs(draws.mean() - target) / target
    observed = np.bincount(draws, minlength=cap + 1)[1:].astype(float)
    expected = horizon_pmf(delta, cap) * n
    # merge tail bins until each expected count is at least 5
    while expected[-1] < 5:
        expected[-2] += expected[-1]
        observed[-2] += observed[-1]
        expected, observed = expected[:-1], observed[:-1]
    p = stats.chisquare(observed, expected).pvalue
    ok = rel < 0.02 and p > 0.01 and abs(truncated_mean_horizon(delta, cap) - target) < 1e-12
    verdict(5, "horizon sampling", ok, f"mean={draws.mean():.3f} target={target:.3f} rel_err={rel:.4f} chi2 p={p:.3f}")


# 6 ---------------------------------------------------------------------------

def _play(x, y, rounds):
    return [run_match(AgentSpec(id="x", strategy=x), AgentSpec(id="y", strategy=y), MatchConfig(), horizon=rounds)]


def test_06_baseline_analytics():
    # TFT mirror over several seeded tournaments, so every horizon comes from a different seed
    tft = []
    for seed in range(5):
        pair = [AgentSpec(id="x", strategy="tit_for_tat"), AgentSpec(id="y", strategy="tit_for_tat")]
        tft += run_tournament(pair, MatchConfig(seed=seed, repeats_R=4))
    grim_totals = {_play("grim_trigger", "all_defect", t)[0].totals[0] for t in range(1, 36)}
    check = discounted_objective_check(tft, "x", DETERMINISTIC["tit_for_tat"], DETERMINISTIC["tit_for_tat"], 0.8, 35)
    values = (score("x", tft), betrayal_rate("x", tft), grim_totals, check.gap)
    ok = values == (2, 0, {-1}, 0)
    verdict(6, "baseline analytics", ok,
            f"TFT/TFT score={values[0]} betrayal={values[1]} over {len(tft)} matches; "
            f"Grim/AllD match totals for T=1..35: {[str(x) for x in sorted(grim_totals)]}")


# 7 ---------------------------------------------------------------------------

def test_07_logic_trace():
    result, trace = logic_trace_run()
    t = result.transcript
    players = {x.index_t: x for x in t.turns if x.actor is Actor.PLAYER}
    judges = {x.index_t: x for x in t.turns if x.actor is Actor.JUDGE}
    early = players[17].action_kind is ActionKind.FINAL_GUESS and judges[17].verdict is Verdict.INCORRECT
    ok = (
        t.outcome is Outcome.SOLVED
        and result.turns_used == 20
        and t.total_cost == 20
        and early
        and max(players) == 20
    )
    verdict(7, "logic trace", ok,
            f"outcome={t.outcome.value} turns={result.turns_used} cost={t.total_cost} "
            f"turn17={judges[17].verdict.value} continued={max(players) > 17}")


# 8 ---------------------------------------------------------------------------

def test_08_accuracy_and_turns():
    budget = EpisodeConfig(budget_B=20)
    results = []
    solved_turns = []
    for i in range(46):
        key = str(100 + i)
        inst = ProofInstance(id=f"m{i}", domain="math", problem=f"Compute 100 + {i}.", hidden_solution=key,
                             final_answer_key=key)
        if i < 14:
            turns = 1 + i % 7
            solved_turns.append(turns)
            replies = ["[FINAL]\n0"] * (turns - 1) + [f"[FINAL]\n{key}"]
        else:
            replies = ["[FINAL]\n0"]
        player = AgentSpec(id="p", strategy="script", params={"replies": replies})
        results.append(run_proof_episode(player, None, inst, budget))
    acc = accuracy(results)
    turns = avg_turns(results)
    ok = acc == Fraction(14, 46) and abs(float(acc) - 0.3043) <= 1e-4 and turns == Fraction(sum(solved_turns), 14)
    verdict(8, "accuracy and average turns", ok,
            f"accuracy={float(acc):.4f} avg_turns={float(turns):.3f} over {len(solved_turns)} solved")


# 9 ---------------------------------------------------------------------------

CONFIGS = {
    "trust": {
        "task": "trust", "seed": 1234, "trust": {"repeats": 3},
        "agents": [{"id": "tft", "role": "seat", "strategy": "tit_for_tat"},
                   {"id": "rnd", "role": "seat", "strategy": "random_p"}],
    },
    "poker": {
        "task": "poker", "seed": 8, "poker": {"tables": 3, "hands": 20},
        "agents": [{"id": f"r{i}", "role": "seat", "strategy": "poker_random"} for i in range(3)],
    },
    "proofs_logic": {
        "task": "proofs_logic", "seed": 5, "episode": {"budget": 4}, "proofs": {"instances": [
            {"id": f"k{i}", "domain": "logic", "problem": "Find the 3-bit key.", "hidden_solution": f"KEY: {i:03b}",
             "final_answer_key": f"{i:03b}"} for i in range(8)]},
        "agents": [{"id": "prober", "role": "player", "strategy": "bit_prober"},
                   {"id": "judge", "role": "judge", "strategy": "oracle_judge"}],
    },
    "pass_at_k": {
        "task": "pass_at_k", "seed": 3, "proofs": {"k": 3, "instances": [
            {"id": f"m{i}", "domain": "math", "problem": f"Compute {i} + 4.", "hidden_solution": str(i + 4),
             "final_answer_key": str(i + 4)} for i in range(8)]},
        "agents": [{"id": "s", "role": "player", "strategy": "arith_solver", "params": {"p": 0.5}}],
    },
}


def _files(root: Path) -> dict:
    return {str(p.relative_to(root)): p.read_bytes() for p in root.rglob("*") if p.is_file() and p.name != "manifest.json"}


def test_09_determinism(tmp_path):
    same = []
    for name, data in CONFIGS.items():
        cfg = parse_config(data)
        a = execute(cfg, out=tmp_path / f"{name}-1").path
        b = execute(cfg, out=tmp_path / f"{name}-2", parallelism=4).path
        same.append(_files(a) == _files(b) and len(_files(a)) > 3)
    verdict(9, "deterministic reruns", all(same),
            ", ".join(f"{n}={'identical' if s else 'differs'}" for n, s in zip(CONFIGS, same)))


# 10 --------------------------------------------------------------------------

def test_10_pass_at_2():
    player = AgentSpec(id="p", strategy="arith_solver", params={"p": 0.5}, seed=2026)
    results = [
        run_pass_at_k(player, ProofInstance(id=f"q{i}", domain="math", problem=f"Compute {i} + {i}.",
                                            hidden_solution=str(2 * i), final_answer_key=str(2 * i)), 2)
        for i in range(10_000)
    ]
    rate = float(pass_at_k_rate(results))
    verdict(10, "pass@2 with p=0.5", abs(rate - 0.75) <= 0.02, f"pass@2={rate:.4f} (expected 0.75 +/- 0.02)")


if __name__ == "__main__":
    import tempfile

    failed = 0
    for name, fn in sorted((k, v) for k, v in globals().items() if k.startswith("test_")):
        try:
            if "tmp_path" in fn.__code__.co_varnames[: fn.__code__.co_argcount]:
                with tempfile.TemporaryDirectory() as d:
                    fn(Path(d))
            else:
                fn()
        except AssertionError:
            failed += 1
    sys.exit(1 if failed else 0)

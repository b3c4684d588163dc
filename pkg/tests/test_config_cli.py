import json
import math
from pathlib import Path

import pytest
import yaml

from interbench.cli import main
from interbench.config import ConfigError, load_config, parse_config
from interbench.episode import SchemaError
from interbench.report import aggregate, describe, replay
from interbench.runner import RunDirectoryError, build_report, execute, load_run_config

TRUST = {
    "task": "trust",
    "seed": 1234,
    "agents": [
        {"id": "tft", "role": "seat", "strategy": "tit_for_tat"},
        {"id": "grim", "role": "seat", "strategy": "grim_trigger"},
    ],
    "trust": {"repeats": 5},
}

POKER = {
    "task": "poker",
    "seed": 9,
    "agents": [
        {"id": "rnd", "role": "seat", "strategy": "poker_random"},
        {"id": "call", "role": "seat", "strategy": "calling_station"},
        {"id": "fold", "role": "seat", "strategy": "always_fold"},
    ],
    "poker": {"tables": 2, "hands": 3},
}

LOGIC = {
    "task": "proofs_logic",
    "seed": 5,
    "agents": [
        {"id": "prober", "role": "player", "strategy": "bit_prober"},
        {"id": "judge", "role": "judge", "strategy": "oracle_judge"},
    ],
    "episode": {"budget": 6},
    "proofs": {
        "instances": [
            {"id": "b1", "domain": "logic", "problem": "Find the 3-bit key.", "hidden_solution": "KEY: 101",
             "final_answer_key": "101"},
        ]
    },
}


def write_yaml(path: Path, data: dict) -> Path:
    path.write_text(yaml.safe_dump(data), encoding="utf-8")
    return path


def violations(data: dict) -> list[str]:
    with pytest.raises(ConfigError) as err:
        parse_config(data)
    return err.value.violations


# -- config ------------------------------------------------------------------

def test_minimal_trust_config_gets_defaults():
    cfg = parse_config(TRUST)
    assert cfg.trust.delta == 0.8 and cfg.trust.max_rounds == 35 and cfg.trust.swap_seats
    assert cfg.parallelism == 1
    assert all(b.agent.seed is not None for b in cfg.agents)


def test_missing_judge_names_the_role():
    data = {**LOGIC, "agents": LOGIC["agents"][:1]}
    assert any("'judge'" in v for v in violations(data))


def test_all_violations_are_collected():
    data = {
        **TRUST,
        "colour": "blue",
        "agents": TRUST["agents"] + [{"id": "tft", "role": "seat", "strategy": "tit_for_tat"}],
        "trust": {"delta": 2, "repeats": 5},
        "poker": {},
    }
    found = violations(data)
    assert any("colour" in v for v in found)
    assert any("duplicate agent id" in v for v in found)
    assert any("trust.delta" in v for v in found)
    assert any("poker: section does not apply" in v for v in found)


def test_unknown_agent_field_and_missing_seed():
    data = {k: v for k, v in TRUST.items() if k != "seed"}
    data["agents"] = [dict(TRUST["agents"][0], temprature=0), TRUST["agents"][1]]
    found = violations(data)
    assert any("temprature" in v for v in found)
    assert any(v.startswith("seed") for v in found)


def test_seed_override_and_hash():
    a = parse_config(TRUST)
    b = parse_config(TRUST, seed_override=99)
    assert b.seed == 99 and a.config_hash() != b.config_hash()
    assert parse_config({**TRUST, "parallelism": 4}).config_hash() == a.config_hash()


def test_resolved_config_roundtrip(tmp_path):
    for data in (TRUST, POKER, LOGIC):
        cfg = parse_config(data)
        again = load_config(write_yaml(tmp_path / f"{cfg.task}.yaml", cfg.to_dict()))
        assert again == cfg


def test_instances_from_relative_file(tmp_path):
    inst = LOGIC["proofs"]["instances"][0]
    (tmp_path / "inst.jsonl").write_text(json.dumps(inst) + "\n", encoding="utf-8")
    path = write_yaml(tmp_path / "c.yaml", {**LOGIC, "proofs": {"instances": "inst.jsonl"}})
    assert load_config(path).proofs.instances[0].id == "b1"


# -- aggregate ---------------------------------------------------------------

def test_describe():
    assert describe([1, 1, 1]).stddev == 0
    assert describe([0, 2]).stddev == pytest.approx(math.sqrt(2))
    single = describe([3])
    assert single.stddev is None and "stddev" not in single.to_dict()
    with pytest.raises(ValueError):
        describe([])


def test_aggregate_groups_then_spreads():
    rows = [
        {"agent": "a", "group": 1, "x": 1.0},
        {"agent": "a", "group": 1, "x": 3.0},
        {"agent": "a", "group": 2, "x": 4.0},
        {"agent": "b", "group": 1, "x": None},
        {"agent": "b", "group": 2, "x": 5.0},
    ]
    report = aggregate(rows)
    assert report.stats["a"]["x"].mean == 3.0 and report.stats["a"]["x"].stddev == pytest.approx(math.sqrt(2))
    assert report.stats["b"]["x"].n == 1
    assert report.to_csv().splitlines()[0] == "entity,metric,mean,stddev,n,config_hash"
    with pytest.raises(ValueError):
        aggregate([])
    with pytest.raises(ValueError):
        aggregate([{"agent": "a", "group": 1, "x": 1}, {"agent": "a", "group": 1, "y": 1}])


# -- execute -----------------------------------------------------------------

def test_trust_run_layout(tmp_path):
    result = execute(parse_config(TRUST), out=tmp_path / "run")
    assert result.exit_code == 0
    matches = sorted((result.path / "matches").rglob("*.jsonl"))
    assert len(matches) == 10
    for name in ("config.yaml", "aggregate.json", "aggregate.csv", "manifest.json", "matches.txt", "leaderboard.json"):
        assert (result.path / name).is_file()
    report = json.loads((result.path / "aggregate.json").read_text())
    assert report["stats"]["tft"]["score"]["n"] == 5


def test_poker_run_writes_one_line_per_hand(tmp_path):
    result = execute(parse_config(POKER), out=tmp_path / "run", parallelism=2)
    files = sorted((result.path / "hands").glob("*.jsonl"))
    assert len(files) == 2
    assert sum(len(f.read_text().splitlines()) for f in files) == 6


def _tree(root: Path) -> dict:
    return {str(p.relative_to(root)): p.read_bytes() for p in root.rglob("*") if p.is_file() and p.name != "manifest.json"}


@pytest.mark.parametrize("data", [TRUST, POKER, LOGIC], ids=["trust", "poker", "logic"])
def test_reruns_are_byte_identical(tmp_path, data):
    cfg = parse_config(data)
    a = execute(cfg, out=tmp_path / "a").path
    b = execute(cfg, out=tmp_path / "b", parallelism=4).path
    assert _tree(a) == _tree(b)


def test_report_rebuilds_from_files(tmp_path):
    run = execute(parse_config(POKER), out=tmp_path / "run").path
    assert build_report(run).to_json() == (run / "aggregate.json").read_text()
    assert load_run_config(run) == parse_config(POKER)


def test_nonempty_output_dir_refused(tmp_path):
    (tmp_path / "x").write_text("keep")
    with pytest.raises(RunDirectoryError):
        execute(parse_config(TRUST), out=tmp_path)
    assert (tmp_path / "x").read_text() == "keep"


# -- replay ------------------------------------------------------------------

def test_replay_all_record_kinds(tmp_path):
    logic = execute(parse_config(LOGIC), out=tmp_path / "logic").path
    text = replay(next((logic / "transcripts").rglob("*.jsonl")))
    assert "Turn 1" in text and "Outcome" in text
    trust = execute(parse_config(TRUST), out=tmp_path / "trust").path
    assert "A: " in replay(next((trust / "matches").rglob("*.jsonl")))
    poker = execute(parse_config(POKER), out=tmp_path / "poker").path
    hand_text = replay(poker / "hands" / "table_00.jsonl")
    assert "HAND" in hand_text and "PREFLOP" in hand_text


def test_replay_truncated_file_reports_line(tmp_path):
    run = execute(parse_config(POKER), out=tmp_path / "poker").path
    lines = (run / "hands" / "table_00.jsonl").read_text().splitlines()
    bad = tmp_path / "bad.jsonl"
    bad.write_text(lines[0] + "\n" + lines[1][: len(lines[1]) // 2] + "\n")
    with pytest.raises(SchemaError) as err:
        replay(bad)
    assert err.value.line == 2


def test_replay_unknown_version(tmp_path):
    path = tmp_path / "v.jsonl"
    path.write_text(json.dumps({"schema_version": "interbench.poker/9"}) + "\n")
    with pytest.raises(SchemaError, match="schema_version"):
        replay(path)


# -- cli ---------------------------------------------------------------------

def test_cli_validate_and_run(tmp_path, capsys):
    cfg = write_yaml(tmp_path / "t.yaml", TRUST)
    assert main(["validate", "--config", str(cfg)]) == 0
    assert capsys.readouterr().out.startswith("ok: task=trust")
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "run")]) == 0
    assert main(["report", str(tmp_path / "run")]) == 0
    assert json.loads(capsys.readouterr().out.split("\n", 1)[1])["group_by"] == "repeat"
    match = next((tmp_path / "run" / "matches").rglob("*.jsonl"))
    assert main(["replay", str(match)]) == 0


def test_cli_config_errors_exit_1(tmp_path, capsys):
    cfg = write_yaml(tmp_path / "bad.yaml", {**TRUST, "task": "chess", "colour": 1})
    assert main(["validate", "--config", str(cfg)]) == 1
    err = capsys.readouterr().err
    assert "task" in err and "colour" in err
    assert main(["run", "--config", str(tmp_path / "missing.yaml")]) == 1
    (tmp_path / "full").mkdir()
    (tmp_path / "full" / "f").write_text("x")
    good = write_yaml(tmp_path / "t.yaml", TRUST)
    assert main(["run", "--config", str(good), "--out", str(tmp_path / "full")]) == 1


def test_cli_unreachable_agent_exit_2(tmp_path):
    data = {
        **TRUST,
        "agents": [
            TRUST["agents"][0],
            {"id": "gone", "role": "seat", "kind": "remote", "endpoint": "http://127.0.0.1:9/v1", "model": "m",
             "max_retries": 0, "timeout_ms": 300},
        ],
    }
    cfg = write_yaml(tmp_path / "r.yaml", data)
    out = tmp_path / "run"
    assert main(["run", "--config", str(cfg), "--out", str(out)]) == 2
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["status"] == "aborted"
    assert manifest["failed_units"] and manifest["incomplete_units"]
    assert not (out / "aggregate.json").exists()

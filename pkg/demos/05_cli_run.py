"""
Running configs end to end
==========================

A YAML config names the task, the seed and the agents. ``interbench run``
writes a run directory; ``report`` and ``replay`` read it back. This script
drives the same entry point in-process.
"""

import json
import tempfile
from pathlib import Path

from interbench.cli import main

here = Path(__file__).parent / "configs"
out = Path(tempfile.mkdtemp()) / "trust-run"

assert main(["validate", "--config", str(here / "trust.yaml")]) == 0
assert main(["run", "--config", str(here / "trust.yaml"), "--out", str(out)]) == 0

print(sorted(p.name for p in out.iterdir()))
report = json.loads((out / "aggregate.json").read_text())
for agent, metrics in report["stats"].items():
    print(agent, {m: round(s["mean"], 3) for m, s in metrics.items()})

# replay the first sub-match
first = sorted((out / "matches").rglob("*.jsonl"))[0]
main(["replay", str(first)])

# a config mistake lists every problem and exits 1
bad = out.parent / "bad.yaml"
bad.write_text("task: trust\nseed: -1\nagents: []\n")
print("exit code:", main(["validate", "--config", str(bad)]))

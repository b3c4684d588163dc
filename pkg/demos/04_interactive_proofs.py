"""
Interactive episodes under a query budget
=========================================

A player asks yes/no questions of a judge who knows a hidden key, then
commits to an answer. Each turn costs one unit of budget. Single-shot attempts
give the pass@k comparison, with k matched to the interactive token spend.
"""

from interbench.agents import AgentSpec
from interbench.episode import EpisodeConfig
from interbench.proofs import (
    ProofInstance,
    budget_matched_k,
    metrics_report,
    pass_at_k_rate,
    run_pass_at_k,
    run_proof_episode,
)

player = AgentSpec(id="prober", strategy="bit_prober")
judge = AgentSpec(id="judge", strategy="oracle_judge")
puzzles = [
    ProofInstance(id=f"k{i}", domain="logic", problem="Find the 4-bit key.", hidden_solution=f"KEY: {i:04b}",
                  final_answer_key=f"{i:04b}")
    for i in range(6)
]

# enough budget to probe every bit, then a tighter one
for budget in (8, 3):
    results = [run_proof_episode(player, judge, p, EpisodeConfig(budget_B=budget)) for p in puzzles]
    print(f"budget {budget}:", metrics_report(results, budget=budget))

print(results[0].transcript.outcome.value, [t.action_kind.value for t in results[0].transcript.turns][:6])

# single-shot attempts on arithmetic, solved with probability 0.5 each
solver = AgentSpec(id="solver", strategy="arith_solver", params={"p": 0.5}, seed=7)
sums = [
    ProofInstance(id=f"s{i}", domain="math", problem=f"Compute {i} + 3.", hidden_solution=str(i + 3),
                  final_answer_key=str(i + 3))
    for i in range(2000)
]
for k in (1, 2, 3):
    print(f"pass@{k}", float(pass_at_k_rate(run_pass_at_k(solver, s, k) for s in sums)))

# k* spends about as many tokens on attempts as the interactive runs did
print("k* =", budget_matched_k(244.37, 479.10))

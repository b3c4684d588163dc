"""
An iterated trust game tournament
=================================

Classic strategies meet in a round robin. Each pair plays several repeats with
a random horizon, and both seat orders share the repeat's horizon.
"""

from interbench.agents import AgentSpec
from interbench.trust import (
    DETERMINISTIC,
    MatchConfig,
    discounted_objective_check,
    horizon_pmf,
    leaderboard,
    render_match,
    run_tournament,
    truncated_mean_horizon,
)

config = MatchConfig(delta=0.8, max_rounds=35, seed=1234, repeats_R=5)

# the horizon is geometric, capped at max_rounds
pmf = horizon_pmf(config.delta, config.max_rounds)
print("P(T=1..5):", pmf[:5].round(3), "mean:", round(truncated_mean_horizon(config.delta, config.max_rounds), 3))

models = [
    AgentSpec(id="tft", strategy="tit_for_tat"),
    AgentSpec(id="grim", strategy="grim_trigger"),
    AgentSpec(id="coin", strategy="random_p", params={"p": 0.5}),
]
records = run_tournament(models, config)
print(render_match(records[0]))

for name, row in leaderboard(records).items():
    print(name, row)

# against itself, TFT earns its discounted value exactly
tft_pair = run_tournament([AgentSpec(id="tft", strategy="tit_for_tat"), AgentSpec(id="tft2", strategy="tit_for_tat")], config)
check = discounted_objective_check(
    tft_pair, "tft", DETERMINISTIC["tit_for_tat"], DETERMINISTIC["tit_for_tat"], config.delta, config.max_rounds
)
print("empirical", check.empirical, "predicted", check.predicted)

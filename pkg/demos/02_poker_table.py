"""
A scripted poker table
======================

Three baseline agents play a short session. Blinds rotate, stacks carry over
between hands, and chips are conserved after every action.
"""

from interbench.agents import AgentSpec
from interbench.poker import TableConfig, run_table

seats = [
    AgentSpec(id="random", strategy="poker_random", seed=1),
    AgentSpec(id="station", strategy="calling_station"),
    AgentSpec(id="folder", strategy="always_fold"),
]
config = TableConfig(small_blind=50, big_blind=100, starting_stack=10_000)
bank = len(seats) * config.starting_stack


def check_chips(state):
    assert state.chips_in_play() == bank


table = run_table(500, seats, seed=42, config=config, on_step=check_chips)

for name, tally in table.tallies.items():
    print(f"{name:8s} won/hand={tally.winnings_per_hand():8.2f} vpip={tally.vpip():.2f} fold={tally.fold_rate()}")

# the last hand, as recorded
last = table.hands[-1]
print(last.to_dict()["net"])

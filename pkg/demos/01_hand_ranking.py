"""
Ranking seven-card poker hands
==============================

The evaluator picks the best five of seven cards and returns a comparable
rank. Here we rank a few hands and check the category frequencies of random
deals against their exact counts.
"""

from collections import Counter
from math import comb

import numpy as np

from interbench.poker import FULL_DECK, Category, cards, compare_hands, evaluate_hand

# a wheel straight: the ace plays low
wheel = evaluate_hand(cards("AS 2D 3C 4H 5S 9D KC"))
print(wheel.category.name, wheel.tiebreak)

# kickers decide between equal pairs
a = evaluate_hand(cards("AS AD KC 7H 5S 3D 2C"))
b = evaluate_hand(cards("AH AC QC 7D 5C 3H 2D"))
print("first hand wins" if compare_hands(a, b) > 0 else "second hand wins")

# category frequencies over random deals
rng = np.random.default_rng(0)
n = 20_000
counts = Counter(
    evaluate_hand([FULL_DECK[i] for i in rng.choice(52, 7, replace=False)]).category for _ in range(n)
)

# exact number of 7-card hands per category
exact = {
    Category.HIGH_CARD: 23_294_460,
    Category.ONE_PAIR: 58_627_800,
    Category.TWO_PAIR: 31_433_400,
    Category.THREE_OF_A_KIND: 6_461_620,
    Category.STRAIGHT: 6_180_020,
    Category.FLUSH: 4_047_644,
    Category.FULL_HOUSE: 3_473_184,
    Category.FOUR_OF_A_KIND: 224_848,
    Category.STRAIGHT_FLUSH: 41_584,
}
total = comb(52, 7)
for cat in Category:
    print(f"{cat.name:16s} sampled {counts[cat] / n:.4f}  exact {exact[cat] / total:.4f}")

"""
Checking the likelihood decomposition exactly
=============================================

On a tiny Markov chain every (thoughts, record) pair can be enumerated, so
the joint probability can be compared with the product of its parts.
"""

import numpy as np

from hot.backends.markov import MarkovModel, enumerate_sequences
from hot.likelihood import check_factorization, check_marginal, joint_table

model = MarkovModel(("x", "y"), np.array([[0.7, 0.3], [0.4, 0.6]]), np.array([0.5, 0.5]))

# P(D | C) for every length-2 D
for seq, p in enumerate_sequences(model, ["x"], 2).items():
    print(seq, round(p, 4))

# drawing D and F separately from C: the joint is an outer product
table = joint_table(model, ["x"], 2, 2)
print(table.shape, table.sum())
print(check_factorization(model, ["x"], 2, 2))

# drawing F after D breaks it, which shows the check can fail
print(check_factorization(model, ["x"], 2, 2, sampler="chained").residual)

# summing the answer likelihood over every D and F recovers P(A | C)
check = check_marginal(model, ["x"], 2, 2, 2)
print(check.max_abs_error)
for a in list(check.by_enumeration)[:2]:
    print(a, check.by_enumeration[a], check.by_forward[a])

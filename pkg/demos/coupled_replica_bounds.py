"""
Excluding overlap values with coupled-replica bounds
====================================================

A pair of constrained replicas whose bound falls below the sum of the
individual free energies cannot realise the prescribed overlap matrix.
"""

import numpy as np

from glasskit.bounds import (
    bound_theorem1,
    chaos_u0,
    lemma4_value,
    pspin_overlap_support,
    ultrametricity_verdict,
)
from glasskit.core import ModelSpec

###############################################################################
# Two replicas at beta = 2: overlaps with |u| > 1/2 are excluded.

for u in (0.0, 0.3, 0.49, 0.51, 0.8):
    v = bound_theorem1(np.array([[1.0, u], [u, 1.0]]), [2.0, 2.0])
    print(f"u={u:+.2f}  excluded={v.excluded}  min eigenvalue={v.min_eigenvalue:+.3e}")

###############################################################################
# Three replicas with a non-ultrametric overlap matrix.

for beta in (1.1, 1.5, 1.9):
    print(f"beta={beta:.1f}  non-ultrametric triple excluded={ultrametricity_verdict(beta).excluded}")

###############################################################################
# Temperature chaos with a field: the overlap of two systems concentrates at u0.

m1, m2 = ModelSpec(2, 2.0, 0.5), ModelSpec(2, 1.5, 0.3)
print(f"u0={chaos_u0(m1, m2):.6f}")

###############################################################################
# The p = 4 overlap support between two temperatures.

lo, hi = pspin_overlap_support(ModelSpec(4, 3.0), ModelSpec(4, 4.0))
print(f"p=4 beta=3 vs 4: excluded overlaps in ({lo:.4f}, {hi:.4f})")

###############################################################################
# The Gaussian variational problem reaches its infimum at A = beta I.

beta = 2.0
Q = np.array([[1.0, 0.4], [0.4, 1.0]])
D0 = beta ** 2 * (Q - np.eye(2) / beta)
value, A = lemma4_value(Q, D0)
print(f"infimum={value:.12f}  A=\n{A}")

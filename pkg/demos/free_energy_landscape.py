"""
Free energy of the spherical pure p-spin model
==============================================

Minimise the variational functional for p = 2 and compare with the closed
form, then locate the one-step critical point for p = 4 and p = 6.
"""

import numpy as np

from glasskit.core import ModelSpec
from glasskit.parisi import (
    TrivialPhase,
    free_energy_2spin_closed,
    minimize_parisi,
    pspin_critical,
    pspin_free_energy,
    solve_q_2spin,
    solve_x,
)

###############################################################################
# p = 2 without field: the minimiser reproduces the closed form.

for beta in (1.5, 2.0, 3.0):
    scheme, value = minimize_parisi(ModelSpec(2, beta), k=1)
    print(f"beta={beta:.1f}  P={value:.12f}  closed={free_energy_2spin_closed(beta):.12f}")

###############################################################################
# p = 2 with a field: the self-overlap solves a scalar equation.

for h in (0.0, 0.3, 0.6):
    print(f"beta=2.0 h={h:.1f}  q={solve_q_2spin(ModelSpec(2, 2.0, h)):.10f}")

###############################################################################
# p >= 3: the critical point (q, m) follows from the constant x_p.

print(f"x_4={solve_x(4):.16f}  x_6={solve_x(6):.16f}")
for p, beta in ((4, 3.0), (4, 4.0), (6, 5.0)):
    model = ModelSpec(p, beta)
    crit = pspin_critical(model)
    print(f"p={p} beta={beta:.1f}  q={crit.q:.6f}  m={crit.m:.6f}  P={pspin_free_energy(model, crit):.10f}")

###############################################################################
# Scan in beta: the p = 4 model stays replica-symmetric until the critical
# point appears.

for beta in np.linspace(1.5, 4.0, 6):
    try:
        crit = pspin_critical(ModelSpec(4, float(beta)))
    except TrivialPhase:
        print(f"p=4 beta={beta:.2f}  trivial phase")
        continue
    print(f"p=4 beta={beta:.2f}  q={crit.q:.4f}  m={crit.m:.4f}")

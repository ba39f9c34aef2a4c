"""
How good is the Lamb-Dicke expansion?
=====================================

The trap-bath coupling <n|exp(-i k x)|n'> is expanded to second order in
eta.  The neglected terms should scale as eta^3, and the expanded master
equation should sit close to the one built from the exact couplings.
"""

import math

import numpy as np

from bosecool.bath_rates import BathSpec, compute_rates, gamma_exact, gamma_ld_sum, ld_error_slope
from bosecool.fock_basis import build_basis
from bosecool.liouville import Generator, thermal_state
from bosecool.vacua import VacuumStructure

slope, errs = ld_error_slope((0.05, 0.1, 0.2))
print("max error per eta:", errs, " slope:", slope)

for n, m in [(0, 1), (1, 1), (2, 4)]:
    print(n, m, gamma_exact(n, m, 0.1), gamma_ld_sum(n, m, 0.1))

# %%
S = VacuumStructure(build_basis(2, 6))
for eta in (0.02, 0.05, 0.1):
    spec = BathSpec(2, eta, math.log(2)).with_gamma_down(1.0)
    rates = compute_rates(spec)
    rho = thermal_state(S.basis, 0.5)
    ld = Generator(S.ops, rates, ["L0", "L11", "L12"])(rho)
    ex = Generator(S.ops, rates, ["exact"], spec=spec)(rho)
    g = S.basis.guard_mask(2)
    print(f"eta={eta}: relative generator difference on the guard band "
          f"{np.abs((ex - ld)[np.ix_(g, g)]).max() / np.abs(ld).max():.2e}")

"""
Effective temperatures of the trapped gas
=========================================

Inside a ladder, detailed balance of single-quantum exchanges sets the
geometric ratio exp(-beta_e) with beta_e = beta - beta*mu.  Between ladders,
two-quantum exchanges set exp(-2 beta'_e) with beta'_e = beta - beta*mu/2.
Each family of ladders connected by B keeps its own total population.
"""

import math

import numpy as np

from bosecool.bath_rates import BathSpec, compute_rates
from bosecool.coarse_dynamics import (CoarseModel, CoarseState, evolve_coarse, stationary_populations)
from bosecool.experiments import RunConfig, run_sweep
from bosecool.fock_basis import build_basis
from bosecool.vacua import VacuumLabel, VacuumStructure

# Ladder ratio from the steady state of the single-quantum term, for a few
# chemical potentials.
cfg = RunConfig(N=2, L_max=6, max_leak=None, grid={"beta_mu": [0.0, -0.5, -1.0]})
for row in run_sweep(cfg):
    print(f"beta_mu={row['beta_mu']:+.1f}  beta_e={row['beta_e']:.3f}  "
          f"p1/p0={row['ladder_ratio']:.6f}  exp(-beta_e)={row['ladder_ratio_expected']:.6f}")

# %%
# Rate equations for N=3: two families start equally populated.
S = VacuumStructure(build_basis(3, 8))
rates = compute_rates(BathSpec(3, 0.1, math.log(2), -0.5).with_gamma_down(1.0))
model = CoarseModel.from_structure(S, rates)
cs0 = CoarseState({VacuumLabel(4, 2, 1): 0.5, VacuumLabel(5, 1, 1): 0.5})
traj = evolve_coarse(model, cs0, 10 / model.slow_rate(), n_samples=3)
stat = stationary_populations(model, cs0)
print("family masses at start :", cs0.family_masses())
print("family masses at end   :", traj.state(2).family_masses())
for w in model.labels:
    print(f"{str(w):7s} n(t_end)={traj.population(w)[-1]:.6f}  stationary={stat.n(w):.6f}")
print("n(2.1.1)/n(0.0.1) =", stat.n((2, 1, 1)) / stat.n((0, 0, 1)),
      " z exp(-2 beta) =", math.exp(-0.5 - 2 * math.log(2)))

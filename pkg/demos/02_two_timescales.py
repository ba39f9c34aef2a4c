"""
Fast ladder cooling, slow transfer between ladders
==================================================

Start two atoms in an excited vacuum and let the full master equation run.
Single-quantum exchanges thermalize every ladder at rate ~ Gamma; the
populations of the ladders only move through two-quantum exchanges, which
are slower by ~ eta^2.  The rate equations for those populations should
track the full dynamics.
"""

import numpy as np

from bosecool.experiments import RunConfig, run_compare

cfg = RunConfig(N=2, L_max=8, eta=0.1, beta_hw=np.log(2), initial_state={"vacuum": "2.1.1"},
                max_leak=None)
res = run_compare(cfg)
s = res["summary"]

print("Gamma_down, Gamma_up     :", s["rates"]["gamma_down"], s["rates"]["gamma_up"])
print("Gamma1_down, Gamma1_up   :", s["rates"]["gamma1_down"], s["rates"]["gamma1_up"])
print("fast rate  fit / predicted:", s["fast_rate_fit"], s["fast_rate_predicted"])
print("slow rate  fit / predicted:", s["slow_rate_fit"], s["slow_rate_predicted"])
print("time ratio fit / predicted:", s["time_ratio_fit"], s["time_ratio_predicted"])
print("max |n_full - n_coarse|   :", s["max_deviation"])

# %%
# Populations along the run, full master equation against the rate equations.
labels = res["setup"].model.labels
full, coarse = res["full_n"], res["coarse"].n
times = res["trajectory"].times
print("t".rjust(10), *(f"{str(w):>18s}" for w in labels))
for i in np.linspace(0, len(times) - 1, 12).astype(int):
    cells = [f"{full[i, j]:.4f}/{coarse[i, j]:.4f}" for j in range(len(labels))]
    print(f"{times[i]:10.2f}", *(c.rjust(18) for c in cells))

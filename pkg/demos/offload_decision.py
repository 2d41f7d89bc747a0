"""Where should each wearable task run?

Five calibrated tasks (200 KB to 1 MB) are placed either on the phone or on
an edge server. The swarm solver is compared with exhaustive search.
"""
# %%
from __future__ import annotations

import numpy as np

from medshare import CostWeights, PsoConfig, brute_force_solve, check_constraints, local_time, offload_time, solve_pso
from medshare.calibration import calibrated_profile
from medshare.costs import ConstraintBounds
from medshare.instances import random_instance

sizes = [200.0, 400.0, 600.0, 800.0, 1000.0]
tasks = [calibrated_profile(s, "edge", task_id=f"{s:g}kb") for s in sizes]
for p in tasks:
    print(f"{p.task_id:>7}  local {local_time(p):5.2f}s   offloaded {offload_time(p):5.2f}s")

# %% equal weights on time, energy and memory
bounds = ConstraintBounds(tau=60.0, zeta=500.0)
pso = solve_pso(tasks, CostWeights(), bounds, PsoConfig(rng_seed=0))
exact = brute_force_solve(tasks, CostWeights(), bounds)
print("swarm :", pso.x, round(pso.objective, 4))
print("exact :", exact.x, round(exact.objective, 4))
for name, c in check_constraints(tasks, pso.x, bounds).as_dict().items():
    print(f"  {name}: lhs {c['lhs']:.3f}  rhs {c['rhs']:.3f}  {'ok' if c['passed'] else 'violated'}")

# %% a lone task can never be offloaded: C1 compares against the time kept local, which is zero
lone = brute_force_solve(tasks[:1], bounds=bounds)
print("single task:", lone.x, "feasible:", lone.feasible)

# %% how close does the swarm get on random instances?
rng = np.random.default_rng(3)
gaps = []
for k in range(30):
    inst, b = random_instance(rng, int(rng.integers(4, 13)))
    ref = brute_force_solve(inst, bounds=b)
    got = solve_pso(inst, bounds=b, cfg=PsoConfig(rng_seed=k))
    if ref.feasible and got.feasible:
        gaps.append(got.objective / ref.objective - 1.0)
print(f"{len(gaps)} feasible instances, worst gap {max(gaps):.2%}, median {np.median(gaps):.2%}")

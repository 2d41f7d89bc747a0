"""Seeded random offloading instances for solver benchmarking."""

from __future__ import annotations

import dataclasses

import numpy as np

from medshare.calibration import Anchors, HardwareSettings, calibrated_profile, load_fig4_anchors
from medshare.costs import ConstraintBounds, TaskProfile, local_time

_JITTERED = ("cpu_per_bit_local", "cpu_per_bit_edge", "energy_local", "mem_local", "power_trans", "mem_offload")


def random_instance(
    rng: np.random.Generator,
    n_tasks: int,
    anchors: Anchors | None = None,
    hw: HardwareSettings | None = None,
    jitter: float = 0.35,
) -> tuple[list[TaskProfile], ConstraintBounds]:
    """Calibrated edge profiles at random sizes with lognormal coefficient noise.

    The bounds sit between 80% and 120% of the all-local totals, so C3/C4
    bind on some instances and a few are infeasible outright.
    """
    anchors = anchors or load_fig4_anchors()
    hw = hw or HardwareSettings()
    tasks = []
    for i in range(n_tasks):
        size_kb = float(rng.uniform(150.0, 1200.0))
        base = calibrated_profile(size_kb, "edge", anchors, hw, task_id=f"t{i}")
        noise = rng.lognormal(0.0, jitter, size=len(_JITTERED))
        tasks.append(dataclasses.replace(base, **{f: getattr(base, f) * k for f, k in zip(_JITTERED, noise)}))
    tau = float(rng.uniform(0.8, 1.2)) * sum(local_time(p) for p in tasks)
    zeta = float(rng.uniform(0.8, 1.2)) * sum(p.mem_local for p in tasks)
    return tasks, ConstraintBounds(tau=tau, zeta=zeta)

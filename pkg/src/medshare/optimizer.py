"""Offloading decision solvers: binary PSO and an exhaustive oracle."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from medshare.costs import (
    ConstraintBounds,
    ConstraintReport,
    CostWeights,
    TaskProfile,
    check_constraints,
    cost_breakdown,
    local_costs,
    offload_costs,
)

MAX_BRUTE_FORCE_TASKS = 20


class InstanceTooLarge(ValueError):
    pass


@dataclass(frozen=True)
class PsoConfig:
    swarm_size: int = 30
    max_iterations: int = 200
    inertia: float = 0.7
    c1: float = 1.5
    c2: float = 1.5
    v_max: float = 4.0
    penalty: float = 1e3
    rng_seed: int = 0

    def __post_init__(self) -> None:
        if self.swarm_size < 2:
            raise ValueError("swarm_size must be >= 2")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if self.v_max <= 0:
            raise ValueError("v_max must be > 0")
        if self.penalty <= 0:
            raise ValueError("penalty must be > 0")


@dataclass(frozen=True)
class OffloadDecision:
    x: tuple[int, ...]
    objective: float
    feasible: bool
    constraint_report: ConstraintReport
    evaluations: int = field(default=0, compare=False)

    @property
    def n_offloaded(self) -> int:
        return sum(self.x)


def _decision(tasks, x, weights, bounds, evaluations=0) -> OffloadDecision:
    x = tuple(int(v) for v in x)
    report = check_constraints(tasks, x, bounds)
    return OffloadDecision(
        x=x,
        objective=cost_breakdown(tasks, x, weights).objective,
        feasible=report.feasible,
        constraint_report=report,
        evaluations=evaluations,
    )


class _Instance:
    """Per-task cost columns laid out for evaluating many decision vectors at once."""

    def __init__(self, tasks: Sequence[TaskProfile], weights: CostWeights, bounds: ConstraintBounds):
        loc = np.array([local_costs(p) for p in tasks], dtype=float)
        off = np.array([offload_costs(p) for p in tasks], dtype=float)
        w = np.array([weights.alpha_t, weights.alpha_e, weights.alpha_m])
        self.loc, self.off = loc, off
        self.obj_loc = loc @ w
        self.obj_off = off @ w
        self.tau, self.zeta = bounds.tau, bounds.zeta

    def evaluate(self, X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Objective and summed constraint violation for each row of ``X``."""
        Xf = X.astype(float)
        keep = 1.0 - Xf
        obj = Xf @ self.obj_off + keep @ self.obj_loc
        off_t, off_e = Xf @ self.off[:, 0], Xf @ self.off[:, 1]
        loc_t, loc_e = keep @ self.loc[:, 0], keep @ self.loc[:, 1]
        mem = Xf @ self.off[:, 2] + keep @ self.loc[:, 2]
        violation = (
            np.maximum(0.0, off_t - loc_t)
            + np.maximum(0.0, off_e - loc_e)
            + np.maximum(0.0, off_t + loc_t - self.tau)
            + np.maximum(0.0, mem - self.zeta)
        )
        return obj, violation


def _better(feas_a, val_a, feas_b, val_b):
    """Elementwise: does (feas_a, val_a) rank strictly above (feas_b, val_b)?"""
    return (feas_a & ~feas_b) | ((feas_a == feas_b) & (val_a < val_b))


def solve_pso(
    tasks: Sequence[TaskProfile],
    weights: CostWeights | None = None,
    bounds: ConstraintBounds | None = None,
    cfg: PsoConfig | None = None,
) -> OffloadDecision:
    """Binary PSO with sigmoid position sampling and a static violation penalty.

    Feasible particles always rank above infeasible ones; among infeasible
    particles the penalised objective decides. One particle starts at the
    all-local decision, which always satisfies C1 and C2.
    """
    if not tasks:
        raise ValueError("need at least one task")
    weights = weights or CostWeights()
    bounds = bounds or ConstraintBounds(tau=float("inf"), zeta=float("inf"))
    cfg = cfg or PsoConfig()
    inst = _Instance(tasks, weights, bounds)
    rng = np.random.default_rng(cfg.rng_seed)
    n, s = len(tasks), cfg.swarm_size

    X = rng.integers(0, 2, size=(s, n), dtype=np.int8)
    X[0] = 0
    V = rng.uniform(-cfg.v_max, cfg.v_max, size=(s, n))

    def score(X):
        obj, viol = inst.evaluate(X)
        feas = viol <= 0.0
        return feas, np.where(feas, obj, obj + cfg.penalty * viol)

    feas, val = score(X)
    P, p_feas, p_val = X.copy(), feas.copy(), val.copy()
    g = 0
    for i in range(1, s):
        if _better(p_feas[i], p_val[i], p_feas[g], p_val[g]):
            g = i
    G, g_feas, g_val = P[g].copy(), bool(p_feas[g]), float(p_val[g])
    evaluations = s

    for _ in range(cfg.max_iterations):
        r1 = rng.random((s, n))
        r2 = rng.random((s, n))
        V = cfg.inertia * V + cfg.c1 * r1 * (P - X) + cfg.c2 * r2 * (G - X)
        np.clip(V, -cfg.v_max, cfg.v_max, out=V)
        X = (rng.random((s, n)) < 1.0 / (1.0 + np.exp(-V))).astype(np.int8)
        feas, val = score(X)
        evaluations += s

        improved = _better(feas, val, p_feas, p_val)
        P[improved] = X[improved]
        p_feas[improved] = feas[improved]
        p_val[improved] = val[improved]

        # first index wins among equals so the run stays reproducible
        for i in np.flatnonzero(improved):
            if _better(p_feas[i], p_val[i], g_feas, g_val):
                G, g_feas, g_val = P[i].copy(), bool(p_feas[i]), float(p_val[i])

    return _decision(tasks, G, weights, bounds, evaluations)


def brute_force_solve(
    tasks: Sequence[TaskProfile],
    weights: CostWeights | None = None,
    bounds: ConstraintBounds | None = None,
) -> OffloadDecision:
    """Exact optimum by enumerating every decision vector.

    Ties resolve to the lexicographically smallest ``x``. When nothing is
    feasible the all-local decision is returned with ``feasible=False``.
    """
    n = len(tasks)
    if n < 1:
        raise ValueError("need at least one task")
    if n > MAX_BRUTE_FORCE_TASKS:
        raise InstanceTooLarge(f"brute force limited to {MAX_BRUTE_FORCE_TASKS} tasks, got {n}")
    weights = weights or CostWeights()
    bounds = bounds or ConstraintBounds(tau=float("inf"), zeta=float("inf"))
    inst = _Instance(tasks, weights, bounds)

    # row k holds the bits of k with task 0 as the most significant bit,
    # so row order is lexicographic order
    codes = np.arange(2**n, dtype=np.int64)
    shifts = np.arange(n - 1, -1, -1, dtype=np.int64)
    X = ((codes[:, None] >> shifts[None, :]) & 1).astype(np.int8)
    obj, viol = inst.evaluate(X)

    # confirm candidates in objective order against the exact constraint check
    candidates = np.flatnonzero(viol <= 1e-9 * (1.0 + np.abs(obj)))
    order = candidates[np.lexsort((candidates, obj[candidates]))]
    for k in order:
        decision = _decision(tasks, X[k], weights, bounds, len(codes))
        if decision.feasible:
            return decision
    return _decision(tasks, np.zeros(n, dtype=np.int8), weights, bounds, len(codes))

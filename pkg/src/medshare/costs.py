"""Per-task cost model for local versus offloaded execution.

A task is either run on the mobile device (decision 0) or encrypted,
uploaded and run on the edge server (decision 1). Each choice has a
time / energy / memory triple; the decision vector blends them and the
weighted sum of all triples is the quantity the offloading solvers minimise,
subject to four constraints:

* C1  offloaded time must not exceed the time of the tasks kept local,
* C2  the same for energy,
* C3  total execution time must stay under ``tau``,
* C4  total memory must stay under ``zeta``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

DEFAULT_LINK_CAP_BPS = 11e6


class DimensionError(ValueError):
    """Decision vector and task list lengths differ."""


@dataclass(frozen=True)
class TaskProfile:
    """Measurements and device/edge coefficients for one task.

    ``size_bits`` is the task size in bits. CPU terms are cycles per bit,
    frequencies are cycles per second. ``power_enc`` and ``power_trans`` are
    battery drain rates in mAh per second of encryption / transmission.
    """

    task_id: str
    size_bits: float
    cpu_per_bit_local: float
    cpu_per_bit_enc: float
    cpu_per_bit_edge: float
    freq_local: float
    freq_edge: float
    rate_bits_per_sec: float
    energy_local: float
    mem_local: float
    power_enc: float
    power_trans: float
    mem_offload: float
    link_cap_bps: float = field(default=DEFAULT_LINK_CAP_BPS, compare=False, repr=False)

    _NUMERIC = (
        "size_bits",
        "cpu_per_bit_local",
        "cpu_per_bit_enc",
        "cpu_per_bit_edge",
        "freq_local",
        "freq_edge",
        "rate_bits_per_sec",
        "energy_local",
        "mem_local",
        "power_enc",
        "power_trans",
        "mem_offload",
    )

    def __post_init__(self) -> None:
        for name in self._NUMERIC:
            value = getattr(self, name)
            if not (isinstance(value, (int, float)) and math.isfinite(value) and value > 0):
                raise ValueError(f"{self.task_id}: {name} must be a positive finite number, got {value!r}")
        if self.rate_bits_per_sec > self.link_cap_bps:
            raise ValueError(
                f"{self.task_id}: rate {self.rate_bits_per_sec} bit/s exceeds link cap {self.link_cap_bps} bit/s"
            )


@dataclass(frozen=True)
class CostWeights:
    alpha_t: float = 1 / 3
    alpha_e: float = 1 / 3
    alpha_m: float = 1 / 3

    def __post_init__(self) -> None:
        for name in ("alpha_t", "alpha_e", "alpha_m"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {value}")


@dataclass(frozen=True)
class ConstraintBounds:
    tau: float
    zeta: float

    def __post_init__(self) -> None:
        if not (self.tau > 0 and self.zeta > 0):
            raise ValueError("tau and zeta must be strictly positive")


class OffloadTimeTerms(NamedTuple):
    encryption: float
    edge: float
    transmission: float

    @property
    def total(self) -> float:
        return self.encryption + self.edge + self.transmission


class OffloadEnergyTerms(NamedTuple):
    encryption: float
    transmission: float

    @property
    def total(self) -> float:
        return self.encryption + self.transmission


class CostTriple(NamedTuple):
    time: float
    energy: float
    memory: float


def local_time(p: TaskProfile) -> float:
    return p.size_bits * p.cpu_per_bit_local / p.freq_local


def encryption_time(p: TaskProfile) -> float:
    """Device time spent encrypting the task before upload."""
    return p.size_bits * p.cpu_per_bit_enc / p.freq_local


def transmission_time(p: TaskProfile) -> float:
    return p.size_bits / p.rate_bits_per_sec


def offload_time_terms(p: TaskProfile) -> OffloadTimeTerms:
    return OffloadTimeTerms(
        encryption=encryption_time(p),
        edge=p.size_bits * p.cpu_per_bit_edge / p.freq_edge,
        transmission=transmission_time(p),
    )


def offload_time(p: TaskProfile) -> float:
    return offload_time_terms(p).total


def offload_energy_terms(p: TaskProfile) -> OffloadEnergyTerms:
    return OffloadEnergyTerms(
        encryption=p.power_enc * encryption_time(p),
        transmission=p.power_trans * transmission_time(p),
    )


def offload_energy(p: TaskProfile) -> float:
    return offload_energy_terms(p).total


def local_costs(p: TaskProfile) -> CostTriple:
    return CostTriple(local_time(p), p.energy_local, p.mem_local)


def offload_costs(p: TaskProfile) -> CostTriple:
    return CostTriple(offload_time(p), offload_energy(p), p.mem_offload)


def blended_costs(p: TaskProfile, x_n: int) -> CostTriple:
    """Cost triple of a task under decision ``x_n`` (0 local, 1 offload)."""
    if x_n not in (0, 1):
        raise ValueError(f"decision must be 0 or 1, got {x_n!r}")
    return offload_costs(p) if x_n else local_costs(p)


@dataclass(frozen=True)
class CostBreakdown:
    per_task: tuple[CostTriple, ...]
    total_time: float
    total_energy: float
    total_memory: float
    objective: float


def _check_lengths(tasks: Sequence[TaskProfile], x: Sequence[int]) -> None:
    if len(tasks) != len(x):
        raise DimensionError(f"{len(x)} decisions for {len(tasks)} tasks")


def cost_breakdown(tasks: Sequence[TaskProfile], x: Sequence[int], w: CostWeights | None = None) -> CostBreakdown:
    _check_lengths(tasks, x)
    w = w or CostWeights()
    per_task = tuple(blended_costs(p, int(x_n)) for p, x_n in zip(tasks, x))
    total_time = total_energy = total_memory = 0.0
    obj = 0.0
    for t, e, m in per_task:
        total_time += t
        total_energy += e
        total_memory += m
        obj += w.alpha_t * t + w.alpha_e * e + w.alpha_m * m
    return CostBreakdown(per_task, total_time, total_energy, total_memory, obj)


def objective(tasks: Sequence[TaskProfile], x: Sequence[int], w: CostWeights | None = None) -> float:
    return cost_breakdown(tasks, x, w).objective


@dataclass(frozen=True)
class ConstraintCheck:
    name: str
    lhs: float
    rhs: float

    @property
    def slack(self) -> float:
        return self.rhs - self.lhs

    @property
    def passed(self) -> bool:
        # boundary ties count as feasible
        return self.lhs <= self.rhs

    @property
    def violation(self) -> float:
        return max(0.0, self.lhs - self.rhs)


@dataclass(frozen=True)
class ConstraintReport:
    checks: tuple[ConstraintCheck, ...]

    @property
    def feasible(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def total_violation(self) -> float:
        return sum(c.violation for c in self.checks)

    def __getitem__(self, name: str) -> ConstraintCheck:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def as_dict(self) -> dict[str, dict[str, float | bool]]:
        return {c.name: {"lhs": c.lhs, "rhs": c.rhs, "slack": c.slack, "passed": c.passed} for c in self.checks}


def check_constraints(tasks: Sequence[TaskProfile], x: Sequence[int], bounds: ConstraintBounds) -> ConstraintReport:
    _check_lengths(tasks, x)
    off_time = local_time_kept = 0.0
    off_energy = local_energy_kept = 0.0
    total_memory = 0.0
    for p, x_n in zip(tasks, x):
        if int(x_n):
            off_time += offload_time(p)
            off_energy += offload_energy(p)
            total_memory += p.mem_offload
        else:
            local_time_kept += local_time(p)
            local_energy_kept += p.energy_local
            total_memory += p.mem_local
    return ConstraintReport(
        (
            ConstraintCheck("C1", off_time, local_time_kept),
            ConstraintCheck("C2", off_energy, local_energy_kept),
            ConstraintCheck("C3", off_time + local_time_kept, bounds.tau),
            ConstraintCheck("C4", total_memory, bounds.zeta),
        )
    )

"""Stage budgets and keyed randomness for staged Monte Carlo runs.

A staged run consumes a total budget of ``N`` random draws split into
consecutive blocks, one block per iteration stage.  This module provides
the block-size schedules (uniform, closed-form cascade, budget-consistent
search) and a counter-keyed random stream whose output depends only on
the seed and a lane address, never on scheduling or worker count.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidSpecError

__all__ = [
    "ROLE_XI",
    "ROLE_ETA",
    "ROLE_GAUSS",
    "ROLE_PROBE",
    "RandomStream",
    "PartitionSchedule",
    "PartitionReport",
    "AsymptoticPartition",
    "uniform_partition",
    "asymptotic_partition",
    "budget_consistent_partition",
    "allocation_objective",
    "brute_force_allocation",
    "validate_partition",
]

# Lane roles.  Spatial draws, time-fraction draws, Gaussian simulation for
# band quantiles, and Lipschitz probing never share a generator.
ROLE_XI = 0
ROLE_ETA = 1
ROLE_GAUSS = 2
ROLE_PROBE = 3

# Closed-form stage sizes are differences of fractional powers of N.  A
# value that lands a hair below an integer (cancellation in N**a - C*N**b)
# is snapped up before truncation so the integer part is stable.
_ENT_SNAP = 1e-3


def _ent(value: float) -> int:
    return int(math.floor(value + _ENT_SNAP))


@dataclass(frozen=True)
class RandomStream:
    """Counter-keyed source of reproducible generators.

    Every generator is addressed by a lane ``(role, replication, stage)``.
    The same seed and lane always reproduce the same draws, and distinct
    lanes are statistically independent, so results do not depend on the
    order in which work is executed or on how it is split across workers.
    """

    seed: int

    def __post_init__(self) -> None:
        if not isinstance(self.seed, int) or self.seed < 0:
            raise InvalidSpecError("seed must be a non-negative integer")

    def generator(
        self, role: int = 0, replication: int = 0, stage: int = 0
    ) -> np.random.Generator:
        if min(role, replication, stage) < 0:
            raise InvalidSpecError("lane coordinates must be non-negative")
        key = np.random.SeedSequence(self.seed, spawn_key=(role, replication, stage))
        return np.random.Generator(np.random.Philox(key))


@dataclass(frozen=True)
class PartitionSchedule:
    """Block sizes ``q(1..m)`` drawn against a total budget.

    ``sizes[k - 1]`` is the number of fresh draws consumed by stage ``k``.
    Construction does not validate; use :func:`validate_partition` for a
    violation report.  The factory functions in this module only return
    schedules that pass it.
    """

    sizes: tuple[int, ...]
    budget: int

    @classmethod
    def from_sizes(
        cls, sizes: "list[int] | tuple[int, ...]", budget: "int | None" = None
    ) -> "PartitionSchedule":
        t = tuple(int(q) for q in sizes)
        if budget is None:
            budget = sum(t)
        return cls(t, int(budget))

    @property
    def stages(self) -> int:
        return len(self.sizes)

    @property
    def boundaries(self) -> tuple[int, ...]:
        """Cumulative draw counts after each stage."""
        out: list[int] = []
        acc = 0
        for q in self.sizes:
            acc += q
            out.append(acc)
        return tuple(out)

    @property
    def gamma(self) -> np.ndarray:
        """Stage shares of the budget."""
        if self.budget <= 0:
            raise InvalidSpecError("gamma is undefined for a non-positive budget")
        return np.asarray(self.sizes, dtype=float) / float(self.budget)


@dataclass(frozen=True)
class PartitionReport:
    """Outcome of checking a schedule against the partition contract."""

    violations: tuple[str, ...]
    total: int
    budget: int

    @property
    def ok(self) -> bool:
        return not self.violations


def validate_partition(schedule: PartitionSchedule) -> PartitionReport:
    """Check stage sizes, the budget identity, and the share normalisation."""
    violations: list[str] = []
    sizes = schedule.sizes
    total = sum(int(q) for q in sizes)
    if len(sizes) < 1:
        violations.append("schedule has no stages")
    for k, q in enumerate(sizes, start=1):
        if int(q) != q:
            violations.append(f"stage {k}: size {q!r} is not an integer")
        elif q < 1:
            violations.append(f"stage {k}: size {q} is below 1")
    if total != schedule.budget:
        violations.append(
            f"stage sizes sum to {total}, budget is {schedule.budget}"
        )
    elif schedule.budget > 0:
        drift = abs(float(np.sum(schedule.gamma)) - 1.0)
        if drift > 1e-12:
            violations.append(f"stage shares sum to 1 with drift {drift:.3e}")
    return PartitionReport(tuple(violations), total, schedule.budget)


def uniform_partition(budget: int, stages: int) -> PartitionSchedule:
    """Equal blocks, remainder folded into the final stage."""
    _check_budget_stages(budget, stages)
    if budget < stages:
        raise InvalidSpecError(
            f"budget {budget} cannot cover {stages} stages with one draw each"
        )
    base = budget // stages
    sizes = [base] * stages
    sizes[-1] += budget - base * stages
    return PartitionSchedule.from_sizes(sizes, budget)


@dataclass(frozen=True)
class AsymptoticPartition:
    """Closed-form cascade sizes, which need not exhaust the budget."""

    sizes: tuple[int, ...]
    total: int
    budget: int

    @property
    def matches_budget(self) -> bool:
        return self.total == self.budget


def asymptotic_partition(
    budget: int, stages: int, constants: "list[float] | None" = None
) -> AsymptoticPartition:
    """Closed-form cascade ``q(k)`` driven by fractional powers of the budget.

    The final stage takes roughly ``sqrt(N)`` draws and each earlier stage
    the square root of its successor, with per-stage constants defaulting
    to one.  The sizes come from truncating real-valued expressions, so
    their sum usually falls short of the budget; callers that need an
    exact split should rescale or use :func:`budget_consistent_partition`.
    """
    _check_budget_stages(budget, stages)
    if constants is None:
        constants = [1.0] * stages
    if len(constants) != stages:
        raise InvalidSpecError(
            f"expected {stages} constants, got {len(constants)}"
        )
    if any(not math.isfinite(c) or c < 0 for c in constants):
        raise InvalidSpecError("cascade constants must be finite and non-negative")
    n = float(budget)
    m = stages
    sizes = [0] * m
    if m == 1:
        sizes[0] = _ent(n**0.5 - constants[0] * n**0.25)
    else:
        sizes[m - 1] = _ent(n**0.5 - constants[m - 1] * n**0.25)
        for k in range(1, m - 1):
            s = m - 1 - k
            sizes[s] = _ent(
                n ** (2.0 ** (-k - 1)) - constants[s] * n ** (2.0 ** (-k - 2))
            )
        sizes[0] = _ent(constants[0] * n ** (2.0 ** (-m)))
    bad = [k + 1 for k, q in enumerate(sizes) if q < 1]
    if bad:
        raise InvalidSpecError(
            f"cascade gives stage sizes below 1 at stages {bad} "
            f"(budget {budget} is too small for {stages} stages)"
        )
    return AsymptoticPartition(tuple(sizes), sum(sizes), budget)


def allocation_objective(sizes: "list[int] | tuple[int, ...]") -> float:
    """Variance-proxy cost of a schedule.

    Sum over stages of the reciprocal product of the trailing block sizes:
    ``1/q(m) + 1/(q(m)q(m-1)) + ... + 1/(q(m)...q(1))``.  Smaller is better
    for a fixed budget.
    """
    t = [int(q) for q in sizes]
    if not t:
        raise InvalidSpecError("schedule has no stages")
    if any(q < 1 for q in t):
        raise InvalidSpecError("all stage sizes must be at least 1")
    rev = np.asarray(t[::-1], dtype=float)
    return float(np.sum(1.0 / np.cumprod(rev)))


def budget_consistent_partition(budget: int, stages: int) -> PartitionSchedule:
    """Exact split of the budget shaped like the closed-form cascade.

    Starts from rounded cascade sizes with the remainder in the final
    stage, then walks single draws between stages while the allocation
    objective strictly improves.  Deterministic for fixed arguments.
    """
    _check_budget_stages(budget, stages)
    if budget < 2**stages:
        raise InvalidSpecError(
            f"budget {budget} is below 2**{stages}; stage sizes would collapse"
        )
    if stages == 1:
        return PartitionSchedule.from_sizes([budget], budget)
    sizes = [0] * stages
    for s in range(stages - 1):
        sizes[s] = max(1, round(float(budget) ** (2.0 ** (-(stages - 1 - s)))))
    rest = budget - sum(sizes[:-1])
    while rest < 1:
        donor = max(range(stages - 1), key=lambda i: sizes[i])
        if sizes[donor] <= 1:
            raise InvalidSpecError("budget too small for the requested stage count")
        sizes[donor] -= 1
        rest += 1
    sizes[-1] = rest
    sizes = _descend(sizes)
    return PartitionSchedule.from_sizes(sizes, budget)


def _descend(sizes: "list[int]") -> "list[int]":
    # Greedy transfer of draws between stages.  Steps down through move
    # sizes so shallow local minima of the single-unit walk are escaped;
    # the scan order is fixed, keeping the result deterministic.
    best = allocation_objective(sizes)
    for _ in range(200):
        improved = False
        for move in (32, 8, 4, 2, 1):
            for i in range(len(sizes)):
                for j in range(len(sizes)):
                    if i == j or sizes[i] - move < 1:
                        continue
                    trial = list(sizes)
                    trial[i] -= move
                    trial[j] += move
                    z = allocation_objective(trial)
                    if z < best:
                        sizes, best, improved = trial, z, True
        if not improved:
            break
    return sizes


def brute_force_allocation(budget: int, stages: int) -> PartitionSchedule:
    """Exhaustive minimiser of the allocation objective.

    Only supports small instances (budget up to 500, at most 3 stages);
    ties resolve to the lexicographically smallest schedule.
    """
    _check_budget_stages(budget, stages)
    if budget > 500:
        raise InvalidSpecError("brute force is limited to budgets of at most 500")
    if stages > 3:
        raise InvalidSpecError("brute force is limited to at most 3 stages")
    if budget < stages:
        raise InvalidSpecError(
            f"budget {budget} cannot cover {stages} stages with one draw each"
        )
    if stages == 1:
        return PartitionSchedule.from_sizes([budget], budget)
    if stages == 2:
        q1 = np.arange(1, budget, dtype=float)
        q2 = budget - q1
        z = 1.0 / q2 + 1.0 / (q1 * q2)
        i = int(np.argmin(z))
        return PartitionSchedule.from_sizes([int(q1[i]), int(q2[i])], budget)
    best: "tuple[int, int, int] | None" = None
    best_z = math.inf
    for a in range(1, budget - 1):
        q2 = np.arange(1, budget - a, dtype=float)
        q3 = budget - a - q2
        z = 1.0 / q3 + 1.0 / (q2 * q3) + 1.0 / (a * q2 * q3)
        i = int(np.argmin(z))
        if z[i] < best_z:
            best_z = float(z[i])
            best = (a, int(q2[i]), int(q3[i]))
    assert best is not None
    return PartitionSchedule.from_sizes(list(best), budget)


def _check_budget_stages(budget: int, stages: int) -> None:
    if not isinstance(stages, int) or stages < 1:
        raise InvalidSpecError("stage count must be a positive integer")
    if not isinstance(budget, int) or budget < 1:
        raise InvalidSpecError("budget must be a positive integer")

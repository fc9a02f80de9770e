"""Staged Monte Carlo iteration for Fredholm problems.

Each stage spends a disjoint block of draws from the partition schedule.
Stage k evaluates the previous stage's iterate only at that stage's own
draws, so the whole run costs sum(q(k) * q(k+1)) kernel calls plus a
final pass over the evaluation grid, instead of the N**2 cost of naive
resampling.  All reductions run in a fixed order; a run is a pure
function of (problem, schedule, seed, replication).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .deterministic import FunctionOnGrid, _pair
from .errors import InvalidSpecError, NonFiniteKernelError
from .problems import FredholmProblem, MeasureSpec, MetricSpaceGrid, _as_full, sample_measure
from .sampling import ROLE_XI, PartitionSchedule, RandomStream, validate_partition

__all__ = [
    "StageIterate",
    "mc_solve_fredholm",
    "depending_trials_integral",
    "collect_samples",
]

# Kernel matrices are evaluated in row blocks of at most this many entries.
_CHUNK_ENTRIES = 4_000_000


def _mean_rows(problem, targets: np.ndarray, samples: np.ndarray, z: np.ndarray) -> np.ndarray:
    """f(targets) + mean over i of K(targets, samples[i], z[i]), chunked."""
    t = np.asarray(targets, dtype=float)
    n_t = t.shape[0]
    n_s = samples.shape[0]
    out = np.empty(n_t)
    step = max(1, _CHUNK_ENTRIES // max(n_s, 1))
    z_row = z[None, :]
    for i0 in range(0, n_t, step):
        tt = t[i0 : i0 + step]
        a, b = _pair(tt, samples)
        kmat = _as_full(problem.kernel(a, b, z_row), (tt.shape[0], n_s))
        out[i0 : i0 + step] = np.mean(kmat, axis=1)
    if not np.all(np.isfinite(out)):
        raise NonFiniteKernelError("kernel produced non-finite values on a stage")
    return np.asarray(problem.f(t), dtype=float) + out


@dataclass(frozen=True)
class StageIterate:
    """State of the Monte Carlo iterate after one stage.

    ``samples`` is stage k's draw block, ``input_values`` the previous
    iterate at those draws (what the stage consumed), ``sample_values``
    this iterate at the next stage's draws (what it hands on; absent for
    the final stage) and ``grid_values`` this iterate on the evaluation
    grid (only tabulated where requested).
    """

    stage: int
    samples: np.ndarray
    input_values: np.ndarray
    sample_values: "np.ndarray | None"
    grid_values: "np.ndarray | None"

    def evaluate(self, problem: FredholmProblem, points: np.ndarray) -> np.ndarray:
        """This stage's iterate at arbitrary points, no fresh randomness."""
        return _mean_rows(problem, points, self.samples, self.input_values)

    def on_grid(self, problem: FredholmProblem) -> FunctionOnGrid:
        vals = self.grid_values
        if vals is None:
            vals = self.evaluate(problem, problem.grid.points)
        return FunctionOnGrid(problem.grid, vals)


def mc_solve_fredholm(
    problem: FredholmProblem,
    schedule: PartitionSchedule,
    stream: RandomStream,
    replication: int = 0,
) -> "list[StageIterate]":
    """Run the staged iteration; returns one record per stage.

    The final stage's record carries ``grid_values``.  Randomness comes
    only from the stream's spatial lanes ``(ROLE_XI, replication, k)``,
    so any two runs with equal arguments agree bit for bit.
    """
    if not isinstance(replication, int) or replication < 0:
        raise InvalidSpecError("replication index must be a non-negative integer")
    report = validate_partition(schedule)
    if not report.ok:
        raise InvalidSpecError("; ".join(report.violations))
    m = schedule.stages
    draws = [
        sample_measure(problem.measure, q, stream.generator(ROLE_XI, replication, k))
        for k, q in enumerate(schedule.sizes, start=1)
    ]
    z = np.asarray(problem.f(draws[0]), dtype=float)
    if z.shape != (schedule.sizes[0],):
        z = np.broadcast_to(z, (schedule.sizes[0],)).copy()
    iterates: "list[StageIterate]" = []
    for k in range(1, m + 1):
        xi = draws[k - 1]
        sample_values = None
        grid_values = None
        if k < m:
            sample_values = _mean_rows(problem, draws[k], xi, z)
        else:
            grid_values = _mean_rows(problem, problem.grid.points, xi, z)
        iterates.append(StageIterate(k, xi, z, sample_values, grid_values))
        if k < m:
            z = sample_values
    return iterates


def collect_samples(iterates: "list[StageIterate]") -> np.ndarray:
    """All draws of a run concatenated in stage order."""
    if not iterates:
        raise InvalidSpecError("no stages to collect")
    return np.concatenate([it.samples for it in iterates], axis=0)


def depending_trials_integral(
    g,
    grid: MetricSpaceGrid,
    measure: MeasureSpec,
    count: int,
    rng: "np.random.Generator | RandomStream",
) -> FunctionOnGrid:
    """Plain Monte Carlo integral t -> mean over i of g(t, xi_i) on the grid.

    The same draws serve every t, which is what makes the stage recursion
    well defined; for integrands that do not depend on the sample the
    result reproduces g itself up to roundoff of the fixed-order mean.
    """
    draws = sample_measure(measure, count, rng)
    t = grid.points
    a, b = _pair(t, draws)
    vals = np.empty(grid.size)
    step = max(1, _CHUNK_ENTRIES // max(count, 1))
    for i0 in range(0, grid.size, step):
        aa = a[i0 : i0 + step]
        gm = _as_full(g(aa, b), (aa.shape[0], count))
        vals[i0 : i0 + step] = np.mean(gm, axis=1)
    if not np.all(np.isfinite(vals)):
        raise NonFiniteKernelError("integrand produced non-finite values")
    return FunctionOnGrid(grid, vals)

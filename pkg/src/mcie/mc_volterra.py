"""Staged Monte Carlo iteration for the time-dependent (Volterra) equation.

The inner integral over [0, tau] is rescaled to the unit interval, so a
stage draws a time fraction eta uniformly besides the spatial point xi
and evaluates tau * K(tau, y, tau * eta, xi, X(tau * eta, xi)).  The
previous iterate is tabulated on the check-time axis at each stage's own
spatial draws and interpolated in tau with a sliding degree-5 stencil.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .deterministic import TauProductFunction, interp_per_column
from .errors import InvalidSpecError, NonFiniteKernelError
from .problems import VolterraProblem, _as_full, sample_measure
from .sampling import (
    ROLE_ETA,
    ROLE_XI,
    PartitionSchedule,
    RandomStream,
    validate_partition,
)

__all__ = [
    "VolterraStageIterate",
    "mc_solve_volterra",
    "evaluate_volterra_stage",
    "collect_volterra_samples",
    "volterra_cauchy_demo",
    "CauchyDemoResult",
]

_CHUNK_ENTRIES = 4_000_000


@dataclass(frozen=True)
class VolterraStageIterate:
    """State of the Monte Carlo iterate after one stage.

    ``eta`` and ``xi`` are stage k's time-fraction and spatial draws.
    ``table`` holds this iterate on the check times at the next stage's
    spatial draws (absent for the final stage); ``grid_table`` holds it
    on the check times at the grid points (final stage only).
    """

    stage: int
    eta: np.ndarray
    xi: np.ndarray
    table: "np.ndarray | None"
    grid_table: "np.ndarray | None"


def _stage_table(
    problem: VolterraProblem,
    eta: np.ndarray,
    xi: np.ndarray,
    prev_cols: "np.ndarray | None",
    targets: np.ndarray,
) -> np.ndarray:
    """Tabulate the stage's iterate on tau_grid x targets.

    ``prev_cols`` is the previous iterate tabulated at this stage's own
    draws (None means the zeroth iterate, the forcing term, which is
    evaluated directly so no interpolation error enters at stage one).
    """
    tau = problem.tau_grid
    n_q = xi.shape[0]
    t = np.asarray(targets, dtype=float)
    n_t = t.shape[0]
    out = np.empty((tau.shape[0], n_t))
    y_col = t[:, None] if t.ndim == 1 else t[:, None, :]
    xi_row = xi[None, :] if xi.ndim == 1 else xi[None, :, :]
    step = max(1, _CHUNK_ENTRIES // max(n_q, 1))
    for a, tau_a in enumerate(tau):
        u = tau_a * eta
        if prev_cols is None:
            z = _as_full(problem.f(u, xi), (n_q,))
        else:
            z = interp_per_column(tau, prev_cols, u)
        z_row = z[None, :]
        u_row = u[None, :]
        row = np.empty(n_t)
        for i0 in range(0, n_t, step):
            yy = y_col[i0 : i0 + step]
            kmat = _as_full(
                problem.kernel(tau_a, yy, u_row, xi_row, z_row),
                (yy.shape[0], n_q),
            )
            row[i0 : i0 + step] = np.mean(kmat, axis=1)
        if not np.all(np.isfinite(row)):
            raise NonFiniteKernelError("kernel produced non-finite values on a stage")
        out[a] = _as_full(problem.f(tau_a, t), (n_t,)) + tau_a * row
    return out


def mc_solve_volterra(
    problem: VolterraProblem,
    schedule: PartitionSchedule,
    stream: RandomStream,
    replication: int = 0,
) -> "list[VolterraStageIterate]":
    """Run the staged iteration; returns one record per stage.

    Time fractions come from lanes ``(ROLE_ETA, replication, k)`` and
    spatial draws from ``(ROLE_XI, replication, k)``, so runs with equal
    arguments agree bit for bit regardless of scheduling.
    """
    if not isinstance(replication, int) or replication < 0:
        raise InvalidSpecError("replication index must be a non-negative integer")
    report = validate_partition(schedule)
    if not report.ok:
        raise InvalidSpecError("; ".join(report.violations))
    m = schedule.stages
    etas = [
        stream.generator(ROLE_ETA, replication, k).random(q)
        for k, q in enumerate(schedule.sizes, start=1)
    ]
    xis = [
        sample_measure(problem.measure, q, stream.generator(ROLE_XI, replication, k))
        for k, q in enumerate(schedule.sizes, start=1)
    ]
    iterates: "list[VolterraStageIterate]" = []
    prev_cols: "np.ndarray | None" = None
    for k in range(1, m + 1):
        eta, xi = etas[k - 1], xis[k - 1]
        table = None
        grid_table = None
        if k < m:
            table = _stage_table(problem, eta, xi, prev_cols, xis[k])
        else:
            grid_table = _stage_table(problem, eta, xi, prev_cols, problem.grid.points)
        iterates.append(VolterraStageIterate(k, eta, xi, table, grid_table))
        prev_cols = table
    return iterates


def evaluate_volterra_stage(
    problem: VolterraProblem,
    iterates: "list[VolterraStageIterate]",
    stage: int,
    targets: np.ndarray,
) -> np.ndarray:
    """Re-tabulate the iterate of a given stage at new spatial targets.

    Uses the stored draws, so the result is the same function the run
    produced, just evaluated elsewhere.
    """
    if not 1 <= stage <= len(iterates):
        raise InvalidSpecError(f"stage {stage} outside the run's range")
    rec = iterates[stage - 1]
    prev_cols = iterates[stage - 2].table if stage >= 2 else None
    if stage >= 2 and prev_cols is None:
        raise InvalidSpecError("previous stage carries no table")
    return _stage_table(problem, rec.eta, rec.xi, prev_cols, targets)


def collect_volterra_samples(iterates: "list[VolterraStageIterate]"):
    """All (eta, xi) draws of a run concatenated in stage order."""
    if not iterates:
        raise InvalidSpecError("no stages to collect")
    eta = np.concatenate([it.eta for it in iterates], axis=0)
    xi = np.concatenate([it.xi for it in iterates], axis=0)
    return eta, xi


@dataclass(frozen=True)
class CauchyDemoResult:
    """Replicated estimates of the exponential case at tau = 1."""

    estimate: float
    stderr: float
    target: float
    values: tuple
    stages: int
    budget: int

    @property
    def deviation_sigmas(self) -> float:
        if self.stderr == 0.0:
            return 0.0 if self.estimate == self.target else float("inf")
        return abs(self.estimate - self.target) / self.stderr


def volterra_cauchy_demo(
    m: int,
    budget: int,
    stream: RandomStream,
    tau_points: int = 17,
    replications: int = 16,
    schedule: "PartitionSchedule | None" = None,
) -> CauchyDemoResult:
    """Solve the K = z, f = 1 case and compare X_m^m(1) to the Taylor sum.

    The deterministic iterate m is exactly the degree-m Taylor partial
    sum of exp at 1, so the replicated Monte Carlo mean should sit within
    a few standard errors of it.  The default schedule front-loads a few
    thousand draws on the early stages and spends the rest on the last.
    """
    from .problems import manufactured_case

    if not isinstance(m, int) or m < 1:
        raise InvalidSpecError("stage count m must be a positive integer")
    if not isinstance(replications, int) or replications < 2:
        raise InvalidSpecError("need at least 2 replications for a standard error")
    if schedule is None:
        sizes = [max(1, round(budget / 50 * 4.0 ** (1 - k))) for k in range(1, m)]
        rest = budget - sum(sizes)
        if rest < 1:
            raise InvalidSpecError(f"budget {budget} too small for {m} stages")
        sizes.append(rest)
        schedule = PartitionSchedule.from_sizes(sizes, budget)
    case = manufactured_case("volt-exp", tau_n=tau_points)
    target = float(sum(1.0 / math.factorial(k) for k in range(m + 1)))
    values = []
    for rep in range(replications):
        run = mc_solve_volterra(case.problem, schedule, stream, replication=rep)
        values.append(float(run[-1].grid_table[-1, 0]))
    arr = np.asarray(values)
    est = float(np.mean(arr))
    stderr = float(np.std(arr, ddof=1) / np.sqrt(replications))
    return CauchyDemoResult(est, stderr, target, tuple(values), m, budget)

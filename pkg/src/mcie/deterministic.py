"""Deterministic successive approximation and the matching error bounds.

These solvers integrate with the grid's quadrature weights instead of
random draws.  They provide reference iterates for the Monte Carlo
solvers and the a priori bounds used to widen confidence bands when the
target is the true fixed point rather than the m-th iterate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidSpecError, NonFiniteKernelError
from .problems import FredholmProblem, MetricSpaceGrid, VolterraProblem, _as_full

__all__ = [
    "FunctionOnGrid",
    "TauProductFunction",
    "picard_step",
    "picard_solve",
    "apriori_error_bound",
    "volterra_step",
    "volterra_solve",
    "volterra_tail_bound",
    "interp_at",
    "interp_per_column",
]


@dataclass(frozen=True)
class FunctionOnGrid:
    """Values of a function at the grid points."""

    grid: MetricSpaceGrid
    values: np.ndarray

    def __post_init__(self) -> None:
        v = np.asarray(self.values, dtype=float)
        if v.shape != (self.grid.size,):
            raise InvalidSpecError(
                f"values have shape {v.shape}, grid has {self.grid.size} points"
            )
        object.__setattr__(self, "values", v)

    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.values)))

    def sup_distance(self, other: "FunctionOnGrid") -> float:
        return float(np.max(np.abs(self.values - other.values)))


@dataclass(frozen=True)
class TauProductFunction:
    """Values of a function on the product of check times and grid points."""

    tau: np.ndarray
    grid: MetricSpaceGrid
    values: np.ndarray

    def __post_init__(self) -> None:
        t = np.asarray(self.tau, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if v.shape != (t.shape[0], self.grid.size):
            raise InvalidSpecError(
                f"values have shape {v.shape}, expected {(t.shape[0], self.grid.size)}"
            )
        object.__setattr__(self, "tau", t)
        object.__setattr__(self, "values", v)

    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.values)))

    def sup_distance(self, other: "TauProductFunction") -> float:
        return float(np.max(np.abs(self.values - other.values)))


def _pair(points_a: np.ndarray, points_b: np.ndarray):
    """Column/row views of two point sets for broadcast kernel calls."""
    a = np.asarray(points_a)
    b = np.asarray(points_b)
    if a.ndim <= 1 and b.ndim <= 1:
        return a[:, None], b[None, :]
    a2 = a if a.ndim == 2 else a[:, None]
    b2 = b if b.ndim == 2 else b[:, None]
    return a2[:, None, :], b2[None, :, :]


def picard_step(
    problem: FredholmProblem, x: "FunctionOnGrid | None" = None
) -> FunctionOnGrid:
    """One successive-approximation step with quadrature integration.

    ``x=None`` returns the zeroth iterate, the forcing term itself.
    """
    pts = problem.grid.points
    if x is None:
        return FunctionOnGrid(problem.grid, np.asarray(problem.f(pts), dtype=float))
    if x.grid is not problem.grid and x.grid.size != problem.grid.size:
        raise InvalidSpecError("iterate lives on a different grid")
    t, s = _pair(pts, pts)
    kmat = _as_full(
        problem.kernel(t, s, x.values[None, :]), (problem.grid.size, problem.grid.size)
    )
    if not np.all(np.isfinite(kmat)):
        raise NonFiniteKernelError("kernel returned non-finite values")
    vals = np.asarray(problem.f(pts), dtype=float) + kmat @ problem.grid.weights
    return FunctionOnGrid(problem.grid, vals)


def picard_solve(problem: FredholmProblem, m: int) -> "list[FunctionOnGrid]":
    """Iterates x_0 .. x_m of successive approximation."""
    if not isinstance(m, int) or m < 0:
        raise InvalidSpecError("iteration count must be a non-negative integer")
    out = [picard_step(problem)]
    for _ in range(m):
        out.append(picard_step(problem, out[-1]))
    return out


def apriori_error_bound(rho: float, delta0: float, m: int) -> float:
    """Sup-norm gap between iterate m and the fixed point.

    ``delta0`` is the sup distance between the first two iterates; the
    contraction argument gives ``delta0 * rho**m / (1 - rho)``.
    """
    if not (0.0 < rho < 1.0):
        raise InvalidSpecError("rho must lie strictly between 0 and 1")
    if not (delta0 >= 0.0) or not math.isfinite(delta0):
        raise InvalidSpecError("delta0 must be a finite non-negative number")
    if not isinstance(m, int) or m < 0:
        raise InvalidSpecError("iteration count must be a non-negative integer")
    return float(delta0 * rho**m / (1.0 - rho))


def volterra_tail_bound(lip: float, delta0: float, m: int) -> float:
    """Sup-norm gap between Volterra iterate m and the fixed point.

    Equals ``delta0`` times the tail sum over n >= m of ``lip**n / n!``,
    accumulated term by term from the smallest index so no cancellation
    of almost-equal exponential partial sums occurs.
    """
    if not (lip >= 0.0) or not math.isfinite(lip):
        raise InvalidSpecError("lip must be a finite non-negative number")
    if not (delta0 >= 0.0) or not math.isfinite(delta0):
        raise InvalidSpecError("delta0 must be a finite non-negative number")
    if not isinstance(m, int) or m < 0:
        raise InvalidSpecError("iteration count must be a non-negative integer")
    term = lip**m / math.factorial(m)
    total = 0.0
    n = m
    while term > 1e-18 * (1.0 + total) and n < m + 500:
        total += term
        n += 1
        term *= lip / n
    return float(delta0 * total)


def _interp_windows(nodes: np.ndarray, queries: np.ndarray, order: int):
    """Sliding-window Lagrange weights: returns (indices, weights).

    Each query gets a window of ``order`` consecutive nodes around it and
    the classic Lagrange weights on that window; queries that hit a node
    exactly get a one-hot row.  Exact for polynomials of degree below
    ``order``.
    """
    nodes = np.asarray(nodes, dtype=float)
    q = np.asarray(queries, dtype=float)
    order = min(int(order), nodes.shape[0])
    if order < 1:
        raise InvalidSpecError("interpolation needs at least one node")
    if np.any(q < nodes[0] - 1e-12) or np.any(q > nodes[-1] + 1e-12):
        raise InvalidSpecError("interpolation abscissa outside the tabulated range")
    pos = np.searchsorted(nodes, q)
    start = np.clip(pos - order // 2, 0, nodes.shape[0] - order)
    idx = start[:, None] + np.arange(order)[None, :]
    s = nodes[idx]
    d = q[:, None] - s
    diff = s[:, :, None] - s[:, None, :]
    np.einsum("qii->qi", diff)[...] = 1.0
    denom = diff.prod(axis=2)
    prod_all = d.prod(axis=1)
    near = np.abs(d) < 1e-14
    with np.errstate(divide="ignore", invalid="ignore"):
        w = prod_all[:, None] / (d * denom)
    hit = near.any(axis=1)
    if np.any(hit):
        w[hit] = 0.0
        w[near] = 1.0
    return idx, w


def interp_at(
    nodes: np.ndarray, table: np.ndarray, queries: np.ndarray, order: int = 6
) -> np.ndarray:
    """Interpolate every column of ``table`` at the same abscissae.

    ``table`` has nodes along axis 0; the result has shape
    ``(len(queries), table.shape[1])``.
    """
    idx, w = _interp_windows(nodes, queries, order)
    return np.einsum("qo,qoc->qc", w, np.asarray(table, dtype=float)[idx])


def interp_per_column(
    nodes: np.ndarray, table: np.ndarray, queries: np.ndarray, order: int = 6
) -> np.ndarray:
    """Interpolate column j of ``table`` at its own abscissa ``queries[j]``."""
    table = np.asarray(table, dtype=float)
    if table.shape[1] != np.shape(queries)[0]:
        raise InvalidSpecError("need exactly one abscissa per column")
    idx, w = _interp_windows(nodes, queries, order)
    cols = np.arange(table.shape[1])
    vals = table[idx, cols[:, None]]
    return np.sum(w * vals, axis=1)


def volterra_step(
    problem: VolterraProblem,
    x: "TauProductFunction | None" = None,
    nu_nodes: int = 32,
) -> TauProductFunction:
    """One successive-approximation step for the time-dependent equation.

    The inner time integral over [0, tau] is rescaled to the unit
    interval and evaluated with Gauss-Legendre nodes; the iterate is
    interpolated in tau with a sliding degree-5 stencil.  ``x=None``
    returns the zeroth iterate, the forcing term.
    """
    tau = problem.tau_grid
    pts = problem.grid.points
    if x is None:
        return TauProductFunction(tau, problem.grid, problem._f_product(tau, pts))
    if not isinstance(nu_nodes, int) or nu_nodes < 2:
        raise InvalidSpecError("nu_nodes must be an integer of at least 2")
    gl_nodes, gl_w = np.polynomial.legendre.leggauss(nu_nodes)
    nu01 = 0.5 * (gl_nodes + 1.0)
    wnu = 0.5 * gl_w
    n = problem.grid.size
    out = np.empty((tau.shape[0], n))
    fvals = problem._f_product(tau, pts)
    y_col = pts[:, None, None] if pts.ndim == 1 else pts[:, None, None, :]
    v_row = pts[None, None, :] if pts.ndim == 1 else pts[None, None, :, :]
    for a, tau_a in enumerate(tau):
        u = tau_a * nu01
        z = interp_at(tau, x.values, u)
        kmat = _as_full(
            problem.kernel(tau_a, y_col, u[None, :, None], v_row, z[None, :, :]),
            (n, nu_nodes, n),
        )
        if not np.all(np.isfinite(kmat)):
            raise NonFiniteKernelError("kernel returned non-finite values")
        out[a] = fvals[a] + tau_a * np.einsum("g,jgl,l->j", wnu, kmat, problem.grid.weights)
    return TauProductFunction(tau, problem.grid, out)


def volterra_solve(
    problem: VolterraProblem, m: int, nu_nodes: int = 32
) -> "list[TauProductFunction]":
    """Iterates X_0 .. X_m of successive approximation."""
    if not isinstance(m, int) or m < 0:
        raise InvalidSpecError("iteration count must be a non-negative integer")
    out = [volterra_step(problem)]
    for _ in range(m):
        out.append(volterra_step(problem, out[-1], nu_nodes=nu_nodes))
    return out

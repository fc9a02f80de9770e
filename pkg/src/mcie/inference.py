"""Uniform-norm confidence bands and supporting diagnostics.

The last stage of a staged run averages q(m) conditionally independent
kernel evaluations, so the normalised deviation of the final iterate
converges to a centred Gaussian field over the grid.  This module
estimates that field's covariance (either empirically from the run's own
draws or from the limiting quadrature form), simulates its sup-norm
quantile, and assembles bands, coverage studies, and convergence-rate
studies on top.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .deterministic import (
    FunctionOnGrid,
    TauProductFunction,
    apriori_error_bound,
    interp_per_column,
    picard_solve,
    volterra_solve,
    volterra_tail_bound,
)
from .errors import InvalidSpecError
from .mc_fredholm import StageIterate, collect_samples, mc_solve_fredholm
from .mc_volterra import (
    VolterraStageIterate,
    collect_volterra_samples,
    evaluate_volterra_stage,
    mc_solve_volterra,
)
from .problems import FredholmProblem, VolterraProblem, _as_full
from .sampling import (
    ROLE_GAUSS,
    PartitionSchedule,
    RandomStream,
    budget_consistent_partition,
    uniform_partition,
)

__all__ = [
    "CovarianceEstimate",
    "estimate_covariance",
    "estimate_covariance_volterra",
    "limit_covariance",
    "gaussian_sup_quantile",
    "ConfidenceBand",
    "confidence_band",
    "tail_log_asymptote",
    "EntropyDiagnostic",
    "entropy_diagnostic",
    "RateStudyResult",
    "rate_study",
    "CoverageStudyResult",
    "coverage_study",
]

_CHUNK_ENTRIES = 4_000_000


@dataclass(frozen=True)
class CovarianceEstimate:
    """A symmetrised, positive-semidefinite covariance over grid points.

    ``asymmetry`` is the largest absolute entry of the skew part removed
    by symmetrisation and ``min_eigenvalue`` the lowest eigenvalue before
    clipping; both should be tiny relative to ``scale`` (the trace).  A
    large clip signals a genuinely indefinite input rather than roundoff.
    """

    matrix: np.ndarray
    source: str
    n_samples: int
    asymmetry: float
    min_eigenvalue: float

    @property
    def scale(self) -> float:
        return float(np.trace(self.matrix))

    @property
    def heavy_clip(self) -> bool:
        return self.min_eigenvalue < -1e-10 * max(self.scale, 1e-300)


def _psd_repair(raw: np.ndarray, source: str, n_samples: int) -> CovarianceEstimate:
    raw = np.asarray(raw, dtype=float)
    if raw.ndim != 2 or raw.shape[0] != raw.shape[1]:
        raise InvalidSpecError("covariance must be a square matrix")
    if not np.all(np.isfinite(raw)):
        raise InvalidSpecError("covariance has non-finite entries")
    sym = 0.5 * (raw + raw.T)
    asym = float(np.max(np.abs(raw - raw.T))) if raw.size else 0.0
    vals, vecs = np.linalg.eigh(sym)
    min_eig = float(vals[0])
    clipped = np.clip(vals, 0.0, None)
    mat = (vecs * clipped) @ vecs.T
    mat = 0.5 * (mat + mat.T)
    return CovarianceEstimate(mat, source, n_samples, asym, min_eig)


def estimate_covariance(
    problem: FredholmProblem,
    iterates: "list[StageIterate]",
    samples: "np.ndarray | None" = None,
) -> CovarianceEstimate:
    """Empirical covariance of the final stage's kernel evaluations.

    Evaluates s -> K(t, s, x_(m-1)(s)) at every draw the run made (all
    stages pooled; pass ``samples`` to override) with the run's own
    previous iterate, and forms the plain moment estimator without a
    small-sample correction.  For a run with a single stage the previous
    iterate is the forcing term.
    """
    if not iterates:
        raise InvalidSpecError("run has no stages")
    if samples is None:
        samples = collect_samples(iterates)
    n = samples.shape[0]
    if n < 2:
        raise InvalidSpecError("need at least 2 draws to estimate a covariance")
    prev = iterates[-2] if len(iterates) >= 2 else None
    if prev is None:
        z = np.asarray(problem.f(samples), dtype=float)
        z = np.broadcast_to(z, (n,)).astype(float, copy=False)
    else:
        z = prev.evaluate(problem, samples)
    t = problem.grid.points
    g = _kernel_block(problem, t, samples, z)
    mean = np.mean(g, axis=1)
    raw = (g @ g.T) / n - np.outer(mean, mean)
    return _psd_repair(raw, "estimated", n)


def _kernel_block(problem, targets, samples, z) -> np.ndarray:
    """K(t_j, s_i, z_i) as a dense (targets, samples) matrix, chunked."""
    from .deterministic import _pair

    t = np.asarray(targets, dtype=float)
    n_t, n_s = t.shape[0], samples.shape[0]
    out = np.empty((n_t, n_s))
    step = max(1, _CHUNK_ENTRIES // max(n_s, 1))
    z_row = z[None, :]
    for i0 in range(0, n_t, step):
        tt = t[i0 : i0 + step]
        a, b = _pair(tt, samples)
        out[i0 : i0 + step] = _as_full(problem.kernel(a, b, z_row), (tt.shape[0], n_s))
    if not np.all(np.isfinite(out)):
        raise InvalidSpecError("kernel produced non-finite values for the covariance")
    return out


def estimate_covariance_volterra(
    problem: VolterraProblem,
    iterates: "list[VolterraStageIterate]",
    draws: "tuple[np.ndarray, np.ndarray] | None" = None,
) -> CovarianceEstimate:
    """Empirical covariance over the product of check times and grid points.

    The evaluation map sends a draw (eta, xi) to
    tau * K(tau, y, tau * eta, xi, X_(m-1)(tau * eta, xi)) for every
    product point (tau, y); rows follow tau-major order, matching
    :func:`product_points`.
    """
    if not iterates:
        raise InvalidSpecError("run has no stages")
    if draws is None:
        draws = collect_volterra_samples(iterates)
    eta, xi = draws
    n = xi.shape[0]
    if n < 2 or eta.shape[0] != n:
        raise InvalidSpecError("need matched eta/xi draws, at least 2 of them")
    tau = problem.tau_grid
    pts = problem.grid.points
    m = len(iterates)
    if m >= 2:
        prev_cols = evaluate_volterra_stage(problem, iterates, m - 1, xi)
    else:
        prev_cols = None
    n_pts = pts.shape[0]
    g = np.empty((tau.shape[0] * n_pts, n))
    y_col = pts[:, None] if pts.ndim == 1 else pts[:, None, :]
    xi_row = xi[None, :] if xi.ndim == 1 else xi[None, :, :]
    for a, tau_a in enumerate(tau):
        u = tau_a * eta
        if prev_cols is None:
            z = _as_full(problem.f(u, xi), (n,))
        else:
            z = interp_per_column(tau, prev_cols, u)
        kmat = _as_full(
            problem.kernel(tau_a, y_col, u[None, :], xi_row, z[None, :]), (n_pts, n)
        )
        g[a * n_pts : (a + 1) * n_pts] = tau_a * kmat
    if not np.all(np.isfinite(g)):
        raise InvalidSpecError("kernel produced non-finite values for the covariance")
    mean = np.mean(g, axis=1)
    raw = (g @ g.T) / n - np.outer(mean, mean)
    return _psd_repair(raw, "estimated", n)


def limit_covariance(
    problem: "FredholmProblem | VolterraProblem",
    x_prev: "FunctionOnGrid | TauProductFunction",
    nu_nodes: int = 32,
) -> CovarianceEstimate:
    """Limiting covariance of the final stage, by quadrature.

    ``x_prev`` is the deterministic iterate the last stage consumes
    (iterate m - 1).  For the time-dependent equation the integrand is
    averaged over the rescaled time fraction with Gauss-Legendre nodes
    and the rows run over product points in tau-major order.
    """
    if isinstance(problem, FredholmProblem):
        pts, w = problem.grid.points, problem.grid.weights
        t, s = (pts[:, None], pts[None, :]) if pts.ndim == 1 else (
            pts[:, None, :],
            pts[None, :, :],
        )
        amat = _as_full(
            problem.kernel(t, s, x_prev.values[None, :]), (pts.shape[0], pts.shape[0])
        )
        mean = amat @ w
        raw = (amat * w[None, :]) @ amat.T - np.outer(mean, mean)
        return _psd_repair(raw, "limit", 0)
    tau = problem.tau_grid
    pts, w = problem.grid.points, problem.grid.weights
    gl_nodes, gl_w = np.polynomial.legendre.leggauss(nu_nodes)
    nu01 = 0.5 * (gl_nodes + 1.0)
    wnu = 0.5 * gl_w
    n_pts = pts.shape[0]
    n_rows = tau.shape[0] * n_pts
    n_cols = nu_nodes * n_pts
    g = np.empty((n_rows, n_cols))
    y_col = pts[:, None, None] if pts.ndim == 1 else pts[:, None, None, :]
    v_row = pts[None, None, :] if pts.ndim == 1 else pts[None, None, :, :]
    from .deterministic import interp_at

    for a, tau_a in enumerate(tau):
        u = tau_a * nu01
        z = interp_at(tau, x_prev.values, u)
        kmat = _as_full(
            problem.kernel(tau_a, y_col, u[None, :, None], v_row, z[None, :, :]),
            (n_pts, nu_nodes, n_pts),
        )
        g[a * n_pts : (a + 1) * n_pts] = tau_a * kmat.reshape(n_pts, n_cols)
    wcol = (wnu[:, None] * w[None, :]).reshape(n_cols)
    mean = g @ wcol
    raw = (g * wcol[None, :]) @ g.T - np.outer(mean, mean)
    return _psd_repair(raw, "limit", 0)


def product_points(problem: VolterraProblem) -> np.ndarray:
    """Product of check times and grid coordinates, tau-major, shape (n, 1 + dim)."""
    tau = problem.tau_grid
    coords = problem.grid.coords
    t = np.repeat(tau, coords.shape[0])[:, None]
    y = np.tile(coords, (tau.shape[0], 1))
    return np.concatenate([t, y], axis=1)


def gaussian_sup_quantile(
    cov: "CovarianceEstimate | np.ndarray",
    level: float,
    rng: "np.random.Generator | RandomStream",
    n_sim: int = 10000,
) -> float:
    """Quantile of sup |G| for a centred Gaussian with the given covariance.

    Simulates ``n_sim`` draws through the symmetric eigenvalue square
    root and returns the empirical quantile with linear interpolation.
    """
    if not (0.0 < level < 1.0):
        raise InvalidSpecError("level must lie strictly between 0 and 1")
    if not isinstance(n_sim, int) or n_sim < 100:
        raise InvalidSpecError("n_sim must be an integer of at least 100")
    if isinstance(rng, RandomStream):
        rng = rng.generator(ROLE_GAUSS, 0, 0)
    mat = cov.matrix if isinstance(cov, CovarianceEstimate) else np.asarray(cov, float)
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        raise InvalidSpecError("covariance must be a square matrix")
    vals, vecs = np.linalg.eigh(0.5 * (mat + mat.T))
    root = vecs * np.sqrt(np.clip(vals, 0.0, None))
    draws = rng.standard_normal((n_sim, mat.shape[0]))
    sups = np.max(np.abs(draws @ root.T), axis=1)
    return float(np.quantile(sups, level))


def _cover_slack(target: np.ndarray) -> float:
    # Quadrature and sampling agree only to roundoff, so a degenerate
    # (zero-variance) band needs an epsilon-scale allowance or coverage
    # checks fail on the last bit.  Negligible against any real halfwidth.
    scale = max(1.0, float(np.max(np.abs(target))))
    return 32.0 * np.finfo(float).eps * scale


@dataclass(frozen=True)
class ConfidenceBand:
    """Uniform band: center +- halfwidth simultaneously over all points.

    ``halfwidth`` is the sup quantile divided by the square root of the
    final stage's block size.  ``covers`` optionally widens the band by a
    deterministic bound when the target is the fixed point rather than
    the iterate the run approximates.
    """

    center: np.ndarray
    halfwidth: float
    level: float
    quantile: float
    q_last: int

    def covers(self, values: np.ndarray, widen: float = 0.0) -> bool:
        v = np.broadcast_to(np.asarray(values, dtype=float), self.center.shape)
        gap = float(np.max(np.abs(self.center - v)))
        return bool(gap <= self.halfwidth + widen + _cover_slack(v))


def confidence_band(
    center: np.ndarray,
    cov: "CovarianceEstimate | np.ndarray",
    q_last: int,
    level: float,
    rng: "np.random.Generator | RandomStream",
    n_sim: int = 10000,
) -> ConfidenceBand:
    """Band around the final iterate from a covariance and the last block size."""
    if not isinstance(q_last, int) or q_last < 1:
        raise InvalidSpecError("q_last must be a positive integer")
    center = np.asarray(center, dtype=float).ravel()
    u = gaussian_sup_quantile(cov, level, rng, n_sim=n_sim)
    return ConfidenceBand(center, u / math.sqrt(q_last), level, u, q_last)


def tail_log_asymptote(u: float, cov: "CovarianceEstimate | np.ndarray") -> float:
    """Leading log-probability that the Gaussian sup exceeds ``u``.

    Equals -u**2 / (2 * max variance); the max is over the diagonal.
    Raises if the field is degenerate (zero maximal variance).
    """
    if not (u > 0.0) or not math.isfinite(u):
        raise InvalidSpecError("threshold must be a positive finite number")
    mat = cov.matrix if isinstance(cov, CovarianceEstimate) else np.asarray(cov, float)
    peak = float(np.max(np.diag(mat)))
    if peak <= 0.0:
        raise InvalidSpecError("tail asymptote undefined for a degenerate field")
    return -(u * u) / (2.0 * peak)


@dataclass(frozen=True)
class EntropyDiagnostic:
    """Covering-number summary of the kernel's semimetric on the grid.

    ``distances`` holds the pairwise semimetric values, ``counts[i]`` a
    greedy cover size at radius ``radii[i]`` (radii decreasing).
    ``integral`` estimates the entropy integral with the plateau value 1
    above the diameter.  Grid-based covering numbers are lower bounds on
    the continuum ones, so the integral is a lower bound too;
    ``resolution_limited`` flags that the smallest radius already needs
    every grid point, where the bound is surely not tight.
    """

    p: float
    distances: np.ndarray
    radii: np.ndarray
    counts: np.ndarray
    integral: float
    resolution_limited: bool
    diameter: float


def entropy_diagnostic(
    problem: FredholmProblem,
    x_prev: FunctionOnGrid,
    p: float = 2.0,
    n_radii: int = 25,
) -> EntropyDiagnostic:
    """Covering numbers of the grid under the kernel-slice semimetric.

    The semimetric compares kernel slices through the current iterate,
    d(t1, t2) = (integral of |K(t1, s, x(s)) - K(t2, s, x(s))|**p)**(1/p),
    by grid quadrature.  Covers come from a greedy first-uncovered sweep,
    which is within a constant factor of the optimum; counts are forced
    monotone in the radius before integrating counts**(1/p) over [0, 1].
    A finite, slowly growing integral supports the Gaussian limit behind
    the bands; this is a diagnostic, not a proof.
    """
    if not (p >= 2.0) or not math.isfinite(p):
        raise InvalidSpecError("p must be a finite number of at least 2")
    if not isinstance(n_radii, int) or n_radii < 2:
        raise InvalidSpecError("need at least 2 radii")
    if not isinstance(problem, FredholmProblem):
        raise InvalidSpecError("the entropy diagnostic expects a Fredholm problem")
    rows = _kernel_block(problem, problem.grid.points, problem.grid.points, x_prev.values)
    w = problem.grid.weights
    n = rows.shape[0]
    d = np.empty((n, n))
    step = max(1, _CHUNK_ENTRIES // max(n * n, 1))
    for i0 in range(0, n, step):
        gaps = np.abs(rows[i0 : i0 + step, None, :] - rows[None, :, :])
        d[i0 : i0 + step] = (gaps**p @ w) ** (1.0 / p)
    d = 0.5 * (d + d.T)
    np.fill_diagonal(d, 0.0)
    diameter = float(np.max(d))
    if diameter <= 0.0:
        radii = np.zeros(n_radii)
        counts = np.ones(n_radii, dtype=int)
        return EntropyDiagnostic(p, d, radii, counts, 1.0, False, 0.0)
    radii = np.geomspace(diameter, diameter * 1e-3, n_radii)
    counts = np.empty(n_radii, dtype=int)
    for i, eps in enumerate(radii):
        covered = np.zeros(n, dtype=bool)
        c = 0
        while not covered.all():
            j = int(np.argmin(covered))
            covered |= d[j] <= eps
            c += 1
        counts[i] = c
    counts = np.maximum.accumulate(counts)
    resolution_limited = bool(counts[-1] >= n)
    # counts**(1/p) integrated over the radius: plateau value 1 between
    # the diameter and 1, and the smallest observed count extended down
    # to radius 0.
    asc_r = radii[::-1]
    asc_c = counts[::-1].astype(float)
    integral = float(asc_c[0] ** (1.0 / p) * asc_r[0])
    widths = np.diff(asc_r)
    integral += float(np.sum(asc_c[1:] ** (1.0 / p) * widths))
    if diameter < 1.0:
        integral += 1.0 - diameter
    return EntropyDiagnostic(p, d, radii, counts, integral, resolution_limited, diameter)


def _make_schedule(kind: str, budget: int, stages: int) -> PartitionSchedule:
    if kind == "uniform":
        return uniform_partition(budget, stages)
    if kind == "budget-consistent":
        return budget_consistent_partition(budget, stages)
    raise InvalidSpecError(
        f"unknown schedule kind {kind!r}; use 'uniform' or 'budget-consistent'"
    )


def _run_sup_error(problem, schedule, stream, rep, target) -> float:
    if isinstance(problem, FredholmProblem):
        run = mc_solve_fredholm(problem, schedule, stream, replication=rep)
        return float(np.max(np.abs(run[-1].grid_values - target)))
    run = mc_solve_volterra(problem, schedule, stream, replication=rep)
    return float(np.max(np.abs(run[-1].grid_table - target)))


@dataclass(frozen=True)
class RateStudyResult:
    """Observed error decay of the final iterate against the budget."""

    budgets: tuple
    median_errors: tuple
    slope: "float | None"
    undefined_reason: "str | None"
    replications: int
    stages: int


def rate_study(
    problem: "FredholmProblem | VolterraProblem",
    stages: int,
    budgets: "list[int]",
    stream: RandomStream,
    replications: int = 30,
    schedule_kind: str = "budget-consistent",
    workers: int = 1,
) -> RateStudyResult:
    """Median sup error against budget, with a log-log slope.

    The target is the deterministic iterate of the same stage count, so
    the study isolates the stochastic error.  The slope is left undefined
    when the errors sit at roundoff (a zero-variance problem), since a
    fit would be fit to noise.  Replications split across ``workers``
    threads write into preallocated slots; the result does not depend on
    the worker count.
    """
    if len(budgets) < 2:
        raise InvalidSpecError("need at least 2 budgets for a rate")
    if sorted(set(budgets)) != list(budgets):
        raise InvalidSpecError("budgets must be strictly increasing")
    if not isinstance(replications, int) or replications < 1:
        raise InvalidSpecError("replications must be a positive integer")
    if isinstance(problem, FredholmProblem):
        target = picard_solve(problem, stages)[-1].values
    else:
        target = volterra_solve(problem, stages)[-1].values
    errors = np.empty((len(budgets), replications))
    jobs = [
        (bi, rep, _make_schedule(schedule_kind, budget, stages))
        for bi, budget in enumerate(budgets)
        for rep in range(replications)
    ]

    def run(job) -> None:
        bi, rep, schedule = job
        errors[bi, rep] = _run_sup_error(problem, schedule, stream, rep, target)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(run, jobs))
    else:
        for job in jobs:
            run(job)
    medians = np.median(errors, axis=1)
    if np.any(medians < 1e-13):
        return RateStudyResult(
            tuple(budgets),
            tuple(float(e) for e in medians),
            None,
            "median errors at roundoff; the problem has no stochastic error",
            replications,
            stages,
        )
    slope = float(np.polyfit(np.log(np.asarray(budgets, float)), np.log(medians), 1)[0])
    return RateStudyResult(
        tuple(budgets), tuple(float(e) for e in medians), slope, None, replications, stages
    )


@dataclass(frozen=True)
class CoverageStudyResult:
    """Replicated band coverage of the deterministic iterate and fixed point."""

    coverage: float
    coverage_reference: "float | None"
    level: float
    halfwidth: float
    quantile: float
    widen: "float | None"
    replications: int
    q_last: int


def coverage_study(
    problem: "FredholmProblem | VolterraProblem",
    stages: int,
    budget: int,
    level: float,
    stream: RandomStream,
    replications: int = 500,
    schedule_kind: str = "budget-consistent",
    workers: int = 1,
    n_sim: int = 10000,
    reference: "np.ndarray | None" = None,
) -> CoverageStudyResult:
    """Fraction of replicated runs whose band covers the target.

    The band halfwidth comes from the limiting covariance at the
    deterministic previous iterate (one quantile simulation serves every
    replication).  Coverage against the iterate of the same stage count
    should approach the level; when ``reference`` values for the fixed
    point are supplied a second coverage is reported with the band
    widened by the a priori iteration bound.
    """
    if not isinstance(replications, int) or replications < 1:
        raise InvalidSpecError("replications must be a positive integer")
    schedule = _make_schedule(schedule_kind, budget, stages)
    q_last = schedule.sizes[-1]
    if isinstance(problem, FredholmProblem):
        det = picard_solve(problem, stages)
        target = det[-1].values
        cov = limit_covariance(problem, det[-2] if stages >= 1 else det[0])
        delta0 = det[1].sup_distance(det[0]) if stages >= 1 else 0.0
        widen = apriori_error_bound(problem.rho, delta0, stages)
    else:
        det = volterra_solve(problem, stages)
        target = det[-1].values
        cov = limit_covariance(problem, det[-2] if stages >= 1 else det[0])
        delta0 = det[1].sup_distance(det[0]) if stages >= 1 else 0.0
        widen = volterra_tail_bound(problem.lip, delta0, stages)
    u = gaussian_sup_quantile(cov, level, stream, n_sim=n_sim)
    halfwidth = u / math.sqrt(q_last)
    flat_target = target.ravel()
    ref = None if reference is None else np.asarray(reference, dtype=float).ravel()
    slack = _cover_slack(flat_target)
    hits = np.zeros(replications, dtype=bool)
    ref_hits = np.zeros(replications, dtype=bool)

    def run(rep: int) -> None:
        if isinstance(problem, FredholmProblem):
            est = mc_solve_fredholm(problem, schedule, stream, replication=rep)[-1].grid_values
        else:
            est = mc_solve_volterra(problem, schedule, stream, replication=rep)[-1].grid_table
        gap = np.max(np.abs(est.ravel() - flat_target))
        hits[rep] = gap <= halfwidth + slack
        if ref is not None:
            ref_hits[rep] = np.max(np.abs(est.ravel() - ref)) <= halfwidth + widen + slack

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(run, range(replications)))
    else:
        for rep in range(replications):
            run(rep)
    coverage = float(np.mean(hits))
    coverage_reference = float(np.mean(ref_hits)) if ref is not None else None
    return CoverageStudyResult(
        coverage,
        coverage_reference,
        level,
        halfwidth,
        u,
        widen if ref is not None else None,
        replications,
        q_last,
    )

"""Problem domains: grids, measures, probing, and registered benchmark cases.

Kernels and forcing terms are plain callables over numpy arrays.  They
must accept broadcastable argument arrays and may return a result of the
broadcast shape or anything that broadcasts to it (a kernel that ignores
an argument can simply drop it); solvers normalise the shape.  Every
registered case follows that contract.
"""

from __future__ import annotations

import math
from dataclasses import InitVar, dataclass, field
from typing import Callable

import numpy as np

from .errors import InvalidSpecError, NonFiniteKernelError, UnknownCaseError
from .sampling import ROLE_PROBE, ROLE_XI, RandomStream

__all__ = [
    "MetricSpaceGrid",
    "euclidean_distance",
    "build_grid",
    "gauss_legendre_grid",
    "MeasureSpec",
    "sample_measure",
    "FredholmProblem",
    "VolterraProblem",
    "probe_lipschitz",
    "ManufacturedCase",
    "manufactured_case",
    "list_cases",
]

_TRIANGLE_TOL = 1e-9
_WEIGHT_TOL = 1e-12


def euclidean_distance(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Euclidean distance between coordinate arrays of shape (..., dim)."""
    diff = np.asarray(a, dtype=float) - np.asarray(b, dtype=float)
    return np.sqrt(np.sum(diff * diff, axis=-1))


@dataclass(frozen=True)
class MetricSpaceGrid:
    """Finite discretisation of the domain with quadrature weights.

    ``points`` has shape ``(n,)`` for a one-dimensional domain and
    ``(n, dim)`` otherwise.  ``weights`` are non-negative and sum to one;
    they double as the quadrature rule for integrals over the domain.
    The distance function is checked for the metric axioms (symmetry,
    zero diagonal, triangle inequality) on construction.
    """

    points: np.ndarray
    weights: np.ndarray
    distance: Callable[[np.ndarray, np.ndarray], np.ndarray] = euclidean_distance
    _pairwise: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        pts = np.asarray(self.points, dtype=float)
        w = np.asarray(self.weights, dtype=float)
        if pts.ndim not in (1, 2):
            raise InvalidSpecError("points must be a 1-d or 2-d array")
        if pts.shape[0] < 2:
            raise InvalidSpecError("a grid needs at least two points")
        if w.shape != (pts.shape[0],):
            raise InvalidSpecError("weights must be one value per point")
        if not np.all(np.isfinite(pts)) or not np.all(np.isfinite(w)):
            raise InvalidSpecError("grid points and weights must be finite")
        if np.any(w < 0):
            raise InvalidSpecError(
                f"negative weight at index {int(np.argmin(w))}"
            )
        total = float(np.sum(w))
        if abs(total - 1.0) > _WEIGHT_TOL:
            raise InvalidSpecError(
                f"weights sum to {total!r}, expected 1 within {_WEIGHT_TOL}"
            )
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "_pairwise", self._check_metric(pts))

    def _check_metric(self, pts: np.ndarray) -> np.ndarray:
        coords = pts if pts.ndim == 2 else pts[:, None]
        d = np.asarray(
            self.distance(coords[:, None, :], coords[None, :, :]), dtype=float
        )
        n = coords.shape[0]
        if d.shape != (n, n) or not np.all(np.isfinite(d)):
            raise InvalidSpecError("distance must return a finite (n, n) matrix")
        if np.any(d < 0):
            raise InvalidSpecError("distance produced negative values")
        if np.max(np.abs(d - d.T)) > _TRIANGLE_TOL:
            raise InvalidSpecError("distance is not symmetric")
        if np.max(np.abs(np.diag(d))) > _TRIANGLE_TOL:
            raise InvalidSpecError("distance has a non-zero diagonal")
        # Triangle inequality, checked in row blocks to bound memory.
        step = max(1, int(4e6) // max(n * n, 1))
        for i0 in range(0, n, step):
            block = d[i0 : i0 + step]
            best = np.min(block[:, :, None] + d[None, :, :], axis=1)
            if np.any(best < block - _TRIANGLE_TOL):
                raise InvalidSpecError("distance violates the triangle inequality")
        return d

    @property
    def size(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return 1 if self.points.ndim == 1 else self.points.shape[1]

    @property
    def coords(self) -> np.ndarray:
        """Points as a 2-d array of shape (n, dim)."""
        return self.points[:, None] if self.points.ndim == 1 else self.points

    @property
    def pairwise_distances(self) -> np.ndarray:
        return self._pairwise


def build_grid(resolution: int, dim: int = 1) -> MetricSpaceGrid:
    """Equispaced tensor grid on the unit cube with equal weights.

    Endpoints are included, so each axis carries ``resolution`` points and
    every point gets weight ``resolution**-dim``.
    """
    if not isinstance(resolution, int) or resolution < 2:
        raise InvalidSpecError("resolution must be an integer of at least 2")
    if not isinstance(dim, int) or dim < 1:
        raise InvalidSpecError("dim must be a positive integer")
    axis = np.linspace(0.0, 1.0, resolution)
    if dim == 1:
        pts = axis
    else:
        mesh = np.meshgrid(*([axis] * dim), indexing="ij")
        pts = np.stack([m.ravel() for m in mesh], axis=-1)
    n = pts.shape[0]
    return MetricSpaceGrid(pts, np.full(n, 1.0 / n))


def gauss_legendre_grid(n: int) -> MetricSpaceGrid:
    """Gauss-Legendre nodes and weights mapped to [0, 1].

    The weights integrate polynomials of degree up to ``2n - 1`` exactly,
    which the smooth benchmark cases rely on for their reference residual.
    """
    if not isinstance(n, int) or n < 2:
        raise InvalidSpecError("a Gauss-Legendre grid needs at least 2 nodes")
    nodes, weights = np.polynomial.legendre.leggauss(n)
    return MetricSpaceGrid(0.5 * (nodes + 1.0), 0.5 * weights)


@dataclass(frozen=True)
class MeasureSpec:
    """Sampling description for the integration measure.

    Three kinds are supported: ``uniform-cube`` (Lebesgue on [0, 1]**dim),
    ``discrete`` (weighted atoms), and ``inverse-cdf`` (one-dimensional,
    via a user-supplied quantile function).
    """

    kind: str
    dim: int = 1
    points: "np.ndarray | None" = None
    weights: "np.ndarray | None" = None
    inverse_cdf: "Callable[[np.ndarray], np.ndarray] | None" = None

    def __post_init__(self) -> None:
        if self.kind == "uniform-cube":
            if not isinstance(self.dim, int) or self.dim < 1:
                raise InvalidSpecError("uniform-cube needs a positive dim")
        elif self.kind == "discrete":
            pts = np.asarray(self.points, dtype=float)
            w = np.asarray(self.weights, dtype=float)
            if pts.shape[0] != w.shape[0] or pts.shape[0] < 1:
                raise InvalidSpecError("discrete measure needs matching atoms and weights")
            if np.any(w < 0) or abs(float(np.sum(w)) - 1.0) > _WEIGHT_TOL:
                raise InvalidSpecError("atom weights must be non-negative and sum to 1")
            object.__setattr__(self, "points", pts)
            object.__setattr__(self, "weights", w)
            object.__setattr__(self, "dim", 1 if pts.ndim == 1 else pts.shape[1])
        elif self.kind == "inverse-cdf":
            if self.inverse_cdf is None:
                raise InvalidSpecError("inverse-cdf measure needs a quantile function")
            u = np.linspace(0.0, 1.0, 101)
            v = np.asarray(self.inverse_cdf(u), dtype=float)
            if v.shape != u.shape or not np.all(np.isfinite(v)):
                raise InvalidSpecError("quantile function must map [0, 1] to finite values")
            if np.any(np.diff(v) < -1e-12):
                raise InvalidSpecError("quantile function must be non-decreasing")
        else:
            raise InvalidSpecError(f"unknown measure kind {self.kind!r}")

    @classmethod
    def uniform_cube(cls, dim: int = 1) -> "MeasureSpec":
        return cls("uniform-cube", dim=dim)

    @classmethod
    def discrete(cls, points, weights) -> "MeasureSpec":
        return cls("discrete", points=points, weights=weights)

    @classmethod
    def from_inverse_cdf(cls, fn: Callable[[np.ndarray], np.ndarray]) -> "MeasureSpec":
        return cls("inverse-cdf", inverse_cdf=fn)


def sample_measure(
    measure: MeasureSpec, count: int, rng: "np.random.Generator | RandomStream"
) -> np.ndarray:
    """Draw ``count`` independent points from the measure.

    Returns shape ``(count,)`` in one dimension and ``(count, dim)``
    otherwise.  Identical generator state gives identical draws.
    """
    if not isinstance(count, int) or count < 1:
        raise InvalidSpecError("draw count must be a positive integer")
    if isinstance(rng, RandomStream):
        rng = rng.generator(ROLE_XI, 0, 0)
    if measure.kind == "uniform-cube":
        u = rng.random((count, measure.dim))
        return u[:, 0] if measure.dim == 1 else u
    if measure.kind == "discrete":
        idx = rng.choice(measure.points.shape[0], size=count, p=measure.weights)
        return measure.points[idx]
    out = np.asarray(measure.inverse_cdf(rng.random(count)), dtype=float)
    if not np.all(np.isfinite(out)):
        raise NonFiniteKernelError("quantile function produced non-finite samples")
    return out


def _as_full(values, shape) -> np.ndarray:
    """Coerce a callable's return value to the expected broadcast shape."""
    arr = np.asarray(values, dtype=float)
    try:
        return np.broadcast_to(arr, shape)
    except ValueError as exc:
        raise InvalidSpecError(
            f"callable returned shape {arr.shape}, not broadcastable to {shape}"
        ) from exc


@dataclass(frozen=True)
class FredholmProblem:
    """Second-kind equation x(t) = f(t) + integral of K(t, s, x(s)) d mu(s).

    ``kernel`` must contract in its third argument with modulus ``rho``
    strictly below one.  Construction probes that numerically over the
    grid and a z-range wide enough to hold every iterate; pass
    ``validate=False`` to skip the probe (the range check on ``rho``
    always runs).
    """

    f: Callable
    kernel: Callable
    rho: float
    measure: MeasureSpec
    grid: MetricSpaceGrid
    name: str = ""
    z_probe_scale: "float | None" = None
    validate: InitVar[bool] = True

    def __post_init__(self, validate: bool) -> None:
        if not (0.0 < self.rho < 1.0) or not math.isfinite(self.rho):
            raise InvalidSpecError("rho must lie strictly between 0 and 1")
        fv = np.asarray(self.f(self.grid.points), dtype=float)
        if not np.all(np.isfinite(fv)):
            raise NonFiniteKernelError("forcing term is non-finite on the grid")
        if validate:
            est = probe_lipschitz(self, n_probes=512)
            if est > self.rho + 1e-6:
                raise InvalidSpecError(
                    f"probed contraction estimate {est:.6g} exceeds rho={self.rho:g}"
                )

    def solution_bound(self) -> float:
        """A priori sup bound on the fixed point and all iterates."""
        sup_f = float(np.max(np.abs(np.asarray(self.f(self.grid.points), float))))
        return sup_f / (1.0 - self.rho)


@dataclass(frozen=True)
class VolterraProblem:
    """Time-dependent second-kind equation on [0, 1] x domain.

    X(tau, y) = f(tau, y) + integral over nu in [0, tau] and v in the
    domain of K(tau, y, nu, v, X(nu, v)).  ``lip`` bounds the kernel's
    Lipschitz modulus in its last argument (no smallness required).
    ``tau_grid`` lists the check times, sorted, starting at 0 and ending
    at 1.
    """

    f: Callable
    kernel: Callable
    lip: float
    measure: MeasureSpec
    grid: MetricSpaceGrid
    tau_grid: np.ndarray
    name: str = ""
    z_probe_scale: "float | None" = None
    validate: InitVar[bool] = True

    def __post_init__(self, validate: bool) -> None:
        if not (self.lip > 0.0) or not math.isfinite(self.lip):
            raise InvalidSpecError("lip must be a positive finite number")
        tau = np.asarray(self.tau_grid, dtype=float)
        if tau.ndim != 1 or tau.shape[0] < 2:
            raise InvalidSpecError("tau_grid needs at least the two endpoints")
        if tau[0] != 0.0 or tau[-1] != 1.0:
            raise InvalidSpecError("tau_grid must start at 0 and end at 1")
        if np.any(np.diff(tau) <= 0):
            raise InvalidSpecError("tau_grid must be strictly increasing")
        object.__setattr__(self, "tau_grid", tau)
        fv = self._f_product(tau, self.grid.points)
        if not np.all(np.isfinite(fv)):
            raise NonFiniteKernelError("forcing term is non-finite on the grid")
        if validate:
            est = probe_lipschitz(self, n_probes=512)
            if est > self.lip + 1e-6:
                raise InvalidSpecError(
                    f"probed Lipschitz estimate {est:.6g} exceeds lip={self.lip:g}"
                )

    def _f_product(self, tau: np.ndarray, points: np.ndarray) -> np.ndarray:
        """Forcing term tabulated on tau x points, shape (n_tau, n)."""
        t = np.asarray(tau, dtype=float)[:, None]
        y = points[None, :] if points.ndim == 1 else points[None, :, :]
        return _as_full(self.f(t, y), (t.shape[0], points.shape[0]))

    def solution_bound(self) -> float:
        """A priori sup bound on the fixed point and all iterates."""
        sup_f = float(np.max(np.abs(self._f_product(self.tau_grid, self.grid.points))))
        return sup_f * math.exp(self.lip)


def probe_lipschitz(
    problem: "FredholmProblem | VolterraProblem",
    n_probes: int = 2000,
    z_range: "tuple[float, float] | None" = None,
    rng: "np.random.Generator | None" = None,
) -> float:
    """Monte Carlo estimate of the kernel's Lipschitz modulus in z.

    Draws random argument tuples and difference quotients over ``z_range``
    (default: symmetric around zero at the problem's solution bound).
    Half the z-pairs are independent, half are close pairs, so both
    secant and near-tangent slopes are probed.  The estimate is a lower
    bound on the true modulus over the probed range; values above the
    declared modulus demonstrate a violation, for instance a kernel that
    is quadratic in z over a wide range.
    """
    if not isinstance(n_probes, int) or n_probes < 100:
        raise InvalidSpecError("need at least 100 probes for a usable estimate")
    if rng is None:
        rng = RandomStream(0x50524F42).generator(ROLE_PROBE, 0, 0)
    if z_range is None:
        scale = problem.z_probe_scale
        if scale is None:
            scale = problem.solution_bound()
        if scale <= 0:
            scale = 1.0
        z_range = (-scale, scale)
    lo, hi = float(z_range[0]), float(z_range[1])
    if not (hi > lo) or not (math.isfinite(lo) and math.isfinite(hi)):
        raise InvalidSpecError("z_range must be a finite increasing pair")
    pts = problem.grid.points
    n = pts.shape[0]
    t_idx = rng.integers(0, n, size=n_probes)
    s_idx = rng.integers(0, n, size=n_probes)
    z1 = rng.uniform(lo, hi, size=n_probes)
    z2 = np.empty(n_probes)
    half = n_probes // 2
    z2[:half] = rng.uniform(lo, hi, size=half)
    z2[half:] = z1[half:] + (hi - lo) * 1e-4 * (rng.random(n_probes - half) - 0.5)
    np.clip(z2, lo, hi, out=z2)
    dz = z1 - z2
    keep = np.abs(dz) > 1e-12 * (hi - lo)
    if not np.any(keep):
        raise InvalidSpecError("all probe pairs collapsed; widen z_range")
    if isinstance(problem, FredholmProblem):
        t, s = pts[t_idx], pts[s_idx]
        k1 = _as_full(problem.kernel(t, s, z1), (n_probes,))
        k2 = _as_full(problem.kernel(t, s, z2), (n_probes,))
    else:
        tau = rng.random(n_probes)
        nu = tau * rng.random(n_probes)
        y, v = pts[t_idx], pts[s_idx]
        k1 = _as_full(problem.kernel(tau, y, nu, v, z1), (n_probes,))
        k2 = _as_full(problem.kernel(tau, y, nu, v, z2), (n_probes,))
    if not (np.all(np.isfinite(k1)) and np.all(np.isfinite(k2))):
        raise NonFiniteKernelError("kernel returned a non-finite value while probing")
    ratios = np.abs(k1[keep] - k2[keep]) / np.abs(dz[keep])
    return float(np.max(ratios))


@dataclass(frozen=True)
class ManufacturedCase:
    """A registered problem with a known reference solution.

    The reference is exact by construction (the forcing term is chosen to
    make a closed-form function solve the equation), so it serves as an
    oracle for solver error.  ``reference_residual`` re-checks that claim
    numerically with refined quadrature.
    """

    case_id: str
    kind: str
    problem: "FredholmProblem | VolterraProblem"
    reference: Callable
    description: str
    grid_n: int
    tau_n: "int | None" = None

    def reference_residual(self, refine: int = 4) -> float:
        """Sup defect of the reference in the equation, refined quadrature."""
        if self.kind == "fredholm":
            return _fredholm_residual(self, refine)
        return _volterra_residual(self, refine)


def _fredholm_residual(case: ManufacturedCase, refine: int) -> float:
    prob = case.problem
    fine = manufactured_case(case.case_id, grid_n=refine * case.grid_n).problem.grid
    t = prob.grid.points
    s, w = fine.points, fine.weights
    z = np.asarray(case.reference(s), dtype=float)
    kmat = _as_full(prob.kernel(t[:, None], s[None, :], z[None, :]), (t.shape[0], s.shape[0]))
    lhs = np.asarray(case.reference(t), dtype=float)
    rhs = np.asarray(prob.f(t), dtype=float) + kmat @ w
    return float(np.max(np.abs(lhs - rhs)))


def _volterra_residual(case: ManufacturedCase, refine: int) -> float:
    prob = case.problem
    nodes, wts = np.polynomial.legendre.leggauss(32 * refine)
    nu01 = 0.5 * (nodes + 1.0)
    wnu = 0.5 * wts
    v, wv = prob.grid.points, prob.grid.weights
    worst = 0.0
    for tau in prob.tau_grid:
        u = tau * nu01
        zz = np.asarray(case.reference(u[:, None], v[None, :]), dtype=float)
        kmat = _as_full(
            prob.kernel(tau, prob.grid.points[:, None, None], u[None, :, None],
                        v[None, None, :], zz[None, :, :]),
            (prob.grid.size, u.shape[0], v.shape[0]),
        )
        integral = np.einsum("g,jgl,l->j", wnu, kmat, wv)
        lhs = np.asarray(case.reference(tau, prob.grid.points), dtype=float)
        rhs = np.asarray(prob.f(tau, prob.grid.points), dtype=float) + tau * integral
        worst = max(worst, float(np.max(np.abs(lhs - rhs))))
    return worst


def _build_fred_lin_const(grid_n: int, tau_n: "int | None") -> ManufacturedCase:
    grid = build_grid(grid_n)

    def f(t):
        return np.ones(np.shape(t))

    def kernel(t, s, z):
        return 0.5 * np.asarray(z, dtype=float)

    def reference(t):
        return np.full(np.shape(t), 2.0)

    prob = FredholmProblem(
        f, kernel, 0.5, MeasureSpec.uniform_cube(1), grid, name="fred-lin-const"
    )
    return ManufacturedCase(
        "fred-lin-const",
        "fredholm",
        prob,
        reference,
        "linear kernel K = z/2 with constant forcing; solution is the constant 2",
        grid_n,
    )


def _build_fred_smooth(grid_n: int, tau_n: "int | None") -> ManufacturedCase:
    grid = gauss_legendre_grid(grid_n)

    def f(t):
        t = np.asarray(t, dtype=float)
        return 0.5 * np.pi - 0.4 * np.sinc(t / np.pi)

    def kernel(t, s, z):
        return 0.4 * np.cos(np.asarray(t) * np.asarray(s)) * np.sin(z)

    def reference(t):
        return np.full(np.shape(t), 0.5 * np.pi)

    prob = FredholmProblem(
        f, kernel, 0.4, MeasureSpec.uniform_cube(1), grid, name="fred-smooth"
    )
    return ManufacturedCase(
        "fred-smooth",
        "fredholm",
        prob,
        reference,
        "smooth kernel 0.4 cos(ts) sin(z); forcing chosen so the solution is pi/2",
        grid_n,
    )


def _build_volt_exp(grid_n: int, tau_n: "int | None") -> ManufacturedCase:
    tau_n = 65 if tau_n is None else tau_n
    pts = np.array([0.0, 1.0])
    wts = np.array([0.5, 0.5])
    grid = MetricSpaceGrid(pts, wts)

    def f(tau, y):
        return np.ones(np.broadcast_shapes(np.shape(tau), np.shape(y)))

    def kernel(tau, y, nu, v, z):
        return np.asarray(z, dtype=float)

    def reference(tau, y):
        tau, y = np.broadcast_arrays(np.asarray(tau, float), np.asarray(y, float))
        return np.exp(tau)

    prob = VolterraProblem(
        f,
        kernel,
        1.0,
        MeasureSpec.discrete(pts, wts),
        grid,
        np.linspace(0.0, 1.0, tau_n),
        name="volt-exp",
    )
    return ManufacturedCase(
        "volt-exp",
        "volterra",
        prob,
        reference,
        "K = z with unit forcing; the solution is exp(tau), its iterates are "
        "Taylor partial sums",
        grid_n,
        tau_n,
    )


_C1_VOLT = 0.5 + math.sin(2.0) / 4.0
_C2_VOLT = math.sin(1.0) ** 2 / 2.0


def _build_volt_smooth(grid_n: int, tau_n: "int | None") -> ManufacturedCase:
    tau_n = 65 if tau_n is None else tau_n
    grid = gauss_legendre_grid(grid_n)

    def f(tau, y):
        tau = np.asarray(tau, dtype=float)
        shift = 0.4 * (
            _C1_VOLT * 0.5 * np.sin(tau) ** 2
            + _C2_VOLT * (0.5 * tau + 0.25 * np.sin(2.0 * tau))
        )
        return tau + np.asarray(y, dtype=float) - shift

    def kernel(tau, y, nu, v, z):
        return 0.4 * np.cos(np.asarray(nu, float)) * np.cos(np.asarray(v, float)) * np.sin(z)

    def reference(tau, y):
        return np.asarray(tau, dtype=float) + np.asarray(y, dtype=float)

    prob = VolterraProblem(
        f,
        kernel,
        0.4,
        MeasureSpec.uniform_cube(1),
        grid,
        np.linspace(0.0, 1.0, tau_n),
        name="volt-smooth",
    )
    return ManufacturedCase(
        "volt-smooth",
        "volterra",
        prob,
        reference,
        "smooth kernel 0.4 cos(nu) cos(v) sin(z); forcing chosen so the "
        "solution is tau + y",
        grid_n,
        tau_n,
    )


_REGISTRY: "dict[str, tuple[str, int, Callable]]" = {
    "fred-lin-const": ("fredholm", 65, _build_fred_lin_const),
    "fred-smooth": ("fredholm", 65, _build_fred_smooth),
    "volt-exp": ("volterra", 2, _build_volt_exp),
    "volt-smooth": ("volterra", 33, _build_volt_smooth),
}


def manufactured_case(
    case_id: str, grid_n: "int | None" = None, tau_n: "int | None" = None
) -> ManufacturedCase:
    """Build a registered benchmark case, optionally at other resolutions."""
    try:
        kind, default_n, builder = _REGISTRY[case_id]
    except KeyError:
        known = ", ".join(sorted(_REGISTRY))
        raise UnknownCaseError(f"unknown case {case_id!r}; known cases: {known}") from None
    if tau_n is not None and kind != "volterra":
        raise InvalidSpecError(f"case {case_id!r} has no tau axis")
    return builder(default_n if grid_n is None else grid_n, tau_n)


def list_cases() -> "tuple[tuple[str, str, str], ...]":
    """Registered case ids with kind and description."""
    out = []
    for case_id in sorted(_REGISTRY):
        case = manufactured_case(case_id)
        out.append((case_id, case.kind, case.description))
    return tuple(out)

"""Grids, measures, problem validation, and the manufactured case registry."""

import numpy as np
import pytest

from mcie import (
    FredholmProblem,
    InvalidSpecError,
    MeasureSpec,
    MetricSpaceGrid,
    RandomStream,
    UnknownCaseError,
    build_grid,
    gauss_legendre_grid,
    list_cases,
    manufactured_case,
    probe_lipschitz,
    sample_measure,
)


def _ones(t):
    return np.ones(np.shape(t))


def test_build_grid_three_points():
    grid = build_grid(3)
    assert np.allclose(grid.points, [0.0, 0.5, 1.0])
    assert np.allclose(grid.weights, 1.0 / 3.0)


def test_build_grid_two_by_two():
    grid = build_grid(2, dim=2)
    assert grid.size == 4
    assert grid.points.shape == (4, 2)
    assert np.allclose(grid.weights, 0.25)


def test_build_grid_rejects_degenerate():
    with pytest.raises(InvalidSpecError):
        build_grid(1)
    with pytest.raises(InvalidSpecError):
        build_grid(3, dim=0)


def test_gauss_legendre_grid_quadrature_exactness():
    grid = gauss_legendre_grid(5)
    assert grid.weights.sum() == pytest.approx(1.0, abs=1e-14)
    # 5 nodes integrate polynomials up to degree 9 exactly on [0, 1]
    for k in range(10):
        exact = 1.0 / (k + 1)
        assert np.dot(grid.weights, grid.points**k) == pytest.approx(exact, abs=1e-13)


def test_metric_grid_validates_weights():
    pts = np.array([0.0, 1.0])
    with pytest.raises(InvalidSpecError):
        MetricSpaceGrid(pts, np.array([0.7, 0.7]))
    with pytest.raises(InvalidSpecError):
        MetricSpaceGrid(pts, np.array([-0.5, 1.5]))


def test_metric_grid_rejects_non_metric_distance():
    pts = np.array([0.0, 0.5, 1.0])
    w = np.full(3, 1.0 / 3.0)
    with pytest.raises(InvalidSpecError):
        MetricSpaceGrid(pts, w, distance=lambda a, b: np.sum(a - b, axis=-1))


def test_sample_measure_point_mass():
    meas = MeasureSpec.discrete(np.array([0.7]), np.array([1.0]))
    draws = sample_measure(meas, 5, RandomStream(0).generator())
    assert np.all(draws == 0.7)


def test_sample_measure_uniform_mean():
    n = 10**5
    draws = sample_measure(MeasureSpec.uniform_cube(1), n, RandomStream(1).generator())
    assert abs(draws.mean() - 0.5) <= 3.0 * (1.0 / np.sqrt(12.0)) / np.sqrt(n)


def test_sample_measure_inverse_cdf_mean():
    n = 10**5
    meas = MeasureSpec.from_inverse_cdf(lambda u: u**2)
    draws = sample_measure(meas, n, RandomStream(2).generator())
    # E[U^2] = 1/3 for uniform U
    assert abs(draws.mean() - 1.0 / 3.0) <= 3.0 * draws.std() / np.sqrt(n)


def test_sample_measure_bit_identical_across_calls():
    meas = MeasureSpec.uniform_cube(2)
    a = sample_measure(meas, 100, RandomStream(7).generator(0, 4, 2))
    b = sample_measure(meas, 100, RandomStream(7).generator(0, 4, 2))
    assert np.array_equal(a, b)


def test_measure_spec_rejects_bad_inputs():
    with pytest.raises(InvalidSpecError):
        MeasureSpec.discrete(np.array([0.0, 1.0]), np.array([0.4, 0.4]))
    with pytest.raises(InvalidSpecError):
        MeasureSpec.from_inverse_cdf(lambda u: -u)  # decreasing probe


def test_probe_lipschitz_linear_kernel_exact():
    grid = gauss_legendre_grid(9)
    prob = FredholmProblem(
        _ones, lambda t, s, z: 0.5 * np.asarray(z, dtype=float),
        0.5, MeasureSpec.uniform_cube(1), grid,
    )
    assert abs(probe_lipschitz(prob) - 0.5) <= 1e-12


def test_probe_lipschitz_sine_kernel():
    grid = gauss_legendre_grid(9)
    prob = FredholmProblem(
        _ones, lambda t, s, z: 0.3 * np.sin(z),
        0.3, MeasureSpec.uniform_cube(1), grid,
    )
    est = probe_lipschitz(prob)
    assert 0.29 <= est <= 0.3 + 1e-6


def test_probe_lipschitz_flags_noncontraction():
    grid = gauss_legendre_grid(9)
    prob = FredholmProblem(
        _ones, lambda t, s, z: np.asarray(z, dtype=float) ** 2,
        0.5, MeasureSpec.uniform_cube(1), grid, validate=False,
    )
    assert probe_lipschitz(prob, z_range=(-10.0, 10.0)) > 1.0


def test_probe_lipschitz_needs_enough_probes():
    case = manufactured_case("fred-lin-const")
    with pytest.raises(InvalidSpecError):
        probe_lipschitz(case.problem, n_probes=50)


def test_fredholm_problem_rejects_bad_rho():
    grid = build_grid(9)
    meas = MeasureSpec.uniform_cube(1)
    for rho in (0.0, 1.0, -0.2, 1.5):
        with pytest.raises(InvalidSpecError):
            FredholmProblem(_ones, lambda t, s, z: 0.5 * z, rho, meas, grid)


def test_fredholm_problem_catches_contraction_lie():
    grid = build_grid(9)
    with pytest.raises(InvalidSpecError):
        FredholmProblem(
            _ones, lambda t, s, z: np.asarray(z, dtype=float) ** 2,
            0.5, MeasureSpec.uniform_cube(1), grid,
        )


def test_registry_contains_the_four_cases():
    ids = [row[0] for row in list_cases()]
    assert set(ids) == {"fred-lin-const", "fred-smooth", "volt-exp", "volt-smooth"}


def test_fred_lin_const_reference_is_two():
    case = manufactured_case("fred-lin-const")
    assert np.allclose(case.reference(case.problem.grid.points), 2.0, atol=1e-15)


def test_volt_exp_reference_is_exponential():
    case = manufactured_case("volt-exp")
    tau = case.problem.tau_grid
    y0 = case.problem.grid.points[0]
    ref = np.asarray(case.reference(tau, y0), dtype=float)
    assert np.max(np.abs(ref - np.exp(tau))) <= 1e-12
    at_one = float(np.asarray(case.reference(1.0, y0)))
    assert at_one == pytest.approx(2.718281828, abs=1e-8)


def test_unknown_case_raises():
    with pytest.raises(UnknownCaseError):
        manufactured_case("no-such-case")


@pytest.mark.parametrize("case_id", ["fred-lin-const", "fred-smooth", "volt-exp", "volt-smooth"])
def test_reference_residual_small(case_id):
    case = manufactured_case(case_id)
    assert case.reference_residual() < 1e-8


@pytest.mark.parametrize("case_id", ["fred-lin-const", "fred-smooth", "volt-exp", "volt-smooth"])
def test_probe_never_exceeds_declared_constant(case_id):
    case = manufactured_case(case_id)
    prob = case.problem
    declared = prob.rho if hasattr(prob, "rho") else prob.lip
    assert probe_lipschitz(prob) <= declared + 1e-6


def test_solution_bound_fred_lin_const():
    case = manufactured_case("fred-lin-const")
    # sup|f|/(1 - rho) = 1/0.5
    assert case.problem.solution_bound() == pytest.approx(2.0, abs=1e-12)

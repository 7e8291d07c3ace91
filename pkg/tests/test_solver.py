"""Monotone iteration, Newton oracle and the estimate / uniqueness checks"""
import numpy as np
import pytest

from SublinearDirichlet.domain import build_domain, shape_from_name
from SublinearDirichlet.green import BoundaryData, GridFunction, build_green
from SublinearDirichlet.measure import GridMeasure, measure_from_density, zero_measure
from SublinearDirichlet.solver import (
    DegenerateDataError,
    Direction,
    NonConvergenceError,
    SolverConfig,
    apply_T,
    check_class_invariance,
    check_operator_continuity,
    first_iterate,
    lgamma_solution_check,
    newton_oracle,
    picard_solve,
    solution_fields,
    solution_fields_to_csv,
    uniqueness_experiment,
    verify_estimates,
)

from conftest import random_data, random_measure

DISK8 = build_domain(shape_from_name("disk"), 1 / 8)
GREEN_DISK8 = build_green(DISK8)


def _random_instance(domain, seed):
    rng = np.random.default_rng(seed)
    return (random_measure(domain, rng, scale=5.0), random_measure(domain, rng),
            random_data(domain, rng))


def test_constant_boundary_data_only(green8, square8):
    zero = zero_measure(square8)
    report = picard_solve(green8, zero, zero, BoundaryData.constant(square8, 1.0),
                          SolverConfig(q=0.5))
    np.testing.assert_allclose(report.u.interior, 1.0, rtol=1e-14)
    assert report.converged
    assert report.residual <= 1e-14
    assert report.iterations <= 2
    assert report.monotonicity_violations == 0


def test_degenerate_data_is_refused(green8, square8):
    zero = zero_measure(square8)
    with pytest.raises(DegenerateDataError):
        picard_solve(green8, zero, zero, BoundaryData.constant(square8, 0.0), SolverConfig())


@pytest.mark.parametrize("which", ["mu", "nu", "f"])
def test_any_positive_datum_gives_a_positive_solution(green8, square8, which):
    zero = zero_measure(square8)
    lebesgue = measure_from_density(square8, 1.0)
    mu = lebesgue if which == "mu" else zero
    nu = lebesgue if which == "nu" else zero
    data = BoundaryData.constant(square8, 1.0 if which == "f" else 0.0)
    report = picard_solve(green8, mu, nu, data, SolverConfig(q=0.5))
    assert np.all(report.u.interior > 0)


def test_poisson_solution_on_disk():
    zero = zero_measure(DISK8)
    lebesgue = GridMeasure(DISK8, np.full(DISK8.n_interior, DISK8.cell_volume))
    report = picard_solve(GREEN_DISK8, zero, lebesgue, BoundaryData.constant(DISK8, 0.0),
                          SolverConfig(q=0.5))
    exact = (1.0 - np.sum(DISK8.interior ** 2, axis=1)) / 4.0
    np.testing.assert_allclose(report.u.interior, exact, atol=1e-10)


def test_manufactured_solution_on_disk():
    mu = measure_from_density(DISK8, 0.5)
    exact = 1.0 + (1.0 - np.sum(DISK8.interior ** 2, axis=1)) / 4.0
    nu = measure_from_density(DISK8, 1.0 - 0.5 * np.sqrt(exact))
    data = BoundaryData.constant(DISK8, 1.0)
    for direction in Direction:
        report = picard_solve(GREEN_DISK8, mu, nu, data,
                              SolverConfig(q=0.5, tol=1e-12, direction=direction))
        np.testing.assert_allclose(report.u.interior, exact, atol=1e-9)


@pytest.mark.parametrize("seed", range(20))
def test_picard_matches_newton(green8, square8, seed):
    mu, nu, data = _random_instance(square8, seed)
    oracle = newton_oracle(green8, mu, nu, data, 0.5, first_iterate(green8, mu, nu, data, 0.5))
    for direction in Direction:
        report = picard_solve(green8, mu, nu, data, SolverConfig(q=0.5, direction=direction))
        assert report.monotonicity_violations == 0
        assert report.bound_violations == 0
        np.testing.assert_allclose(report.u.interior, oracle.interior, atol=1e-8)


def test_oracle_toggle_reports_the_gap(green8, square8):
    mu, nu, data = _random_instance(square8, 11)
    report = picard_solve(green8, mu, nu, data, SolverConfig(q=0.3, oracle=True))
    assert report.oracle_gap is not None
    assert report.oracle_gap <= 1e-8


ESTIMATE_GREENS = {name: build_green(build_domain(shape_from_name(name), 1 / 8)) for name in ("square", "disk")}


@pytest.mark.parametrize("seed", range(20))
def test_estimates_hold(seed):
    green = ESTIMATE_GREENS[("square", "disk")[seed % 2]]
    q = (0.3, 0.5, 0.8)[seed % 3]
    mu, nu, data = _random_instance(green.domain, seed)
    report = picard_solve(green, mu, nu, data, SolverConfig(q=q))
    margins = verify_estimates(report, green, mu, nu, data, q)
    assert set(margins) == {'lower', 'upper', 'uniform'}
    assert all(m.passed for m in margins.values()), margins
    assert set(report.margins) == {'lower', 'upper', 'uniform'}


def test_iteration_from_below_increases(green8, square8):
    mu, nu, data = _random_instance(square8, 3)
    report = picard_solve(green8, mu, nu, data, SolverConfig(q=0.5))
    norms = [entry.sup_norm for entry in report.trace]
    assert np.all(np.diff(norms) >= -1e-12 * norms[-1])
    assert report.trace[-1].increment <= 1e-10 * max(1.0, norms[-1])


def test_uniqueness_surrogate(green8, square8):
    mu, nu, data = _random_instance(square8, 5)
    result = uniqueness_experiment(green8, mu, nu, data, 0.5, gamma=1.5)
    assert result.passed
    assert result.minimality_margin >= -1e-10 * result.below.u.sup_norm()
    assert set(result.norms) == {'L^0.5', 'L^1.5'}
    assert 'surrogate' in result.to_dict()['note']


def test_uniqueness_with_zero_boundary_data(green8, square8):
    mu = measure_from_density(square8, 2.0)
    data = BoundaryData.constant(square8, 0.0)
    result = uniqueness_experiment(green8, mu, zero_measure(square8), data, 0.5)
    assert 'L^1.5' in result.norms
    assert result.gap <= 1e-6 * result.above.u.sup_norm()


def test_non_convergence(green8, square8):
    mu, nu, data = _random_instance(square8, 2)
    with pytest.raises(NonConvergenceError) as info:
        picard_solve(green8, mu, nu, data, SolverConfig(q=0.5, max_iterations=1))
    assert info.value.iterations == 1
    assert info.value.residual > 0


def test_operator_is_monotone(green8, square8):
    mu, nu, data = _random_instance(square8, 8)
    rng = np.random.default_rng(8)
    for _ in range(20):
        low = rng.random(square8.n_interior) * 3.0
        high = low + rng.random(square8.n_interior)
        t_low = apply_T(green8, mu, nu, data, GridFunction(square8, low), 0.5)
        t_high = apply_T(green8, mu, nu, data, GridFunction(square8, high), 0.5)
        assert np.all(t_high.interior - t_low.interior >= -1e-13 * np.max(t_high.interior))
        np.testing.assert_array_equal(t_low.boundary, data.values)
    with pytest.raises(ValueError):
        apply_T(green8, mu, nu, data, GridFunction(square8, -np.ones(square8.n_interior)), 0.5)


def test_class_invariance_and_continuity(green8, square8):
    mu, nu, data = _random_instance(square8, 9)
    assert check_class_invariance(green8, mu, nu, data, 0.5, seed=4).passed
    rng = np.random.default_rng(9)
    first = GridFunction(square8, rng.random(square8.n_interior))
    second = GridFunction(square8, rng.random(square8.n_interior) * 2.0)
    assert check_operator_continuity(green8, mu, first, second, 0.5).passed


def test_integrability_report(green8, square8):
    mu, nu, data = _random_instance(square8, 4)
    report = picard_solve(green8, mu, nu, data, SolverConfig(q=0.5))
    out = lgamma_solution_check(green8, mu, nu, data, 0.5, 1.5, report.u)
    assert set(out) == {'gamma', 'g_mu_norm', 'linear_part_norm', 'u_norm'}
    assert all(np.isfinite(v) for v in out.values())
    assert out['u_norm'] >= out['linear_part_norm']


def test_solution_fields(tmp_path, green8, square8):
    mu, nu, data = _random_instance(square8, 6)
    report = picard_solve(green8, mu, nu, data, SolverConfig(q=0.5))
    fields = solution_fields(report, green8, mu, nu, data)
    assert list(fields.columns) == ['node', 'class', 'x', 'y', 'u', 'G_mu', 'G_nu', 'H_f']
    assert len(fields) == square8.n_interior + square8.n_boundary
    np.testing.assert_array_equal(fields['u'].to_numpy()[square8.n_interior:], data.values)
    solution_fields_to_csv(report, green8, mu, nu, data, tmp_path / "fields.csv")
    assert (tmp_path / "fields.csv").exists()


def test_report_serializes(green8, square8):
    mu, nu, data = _random_instance(square8, 7)
    report = picard_solve(green8, mu, nu, data, SolverConfig(q=0.5, direction=Direction.ABOVE))
    content = report.to_dict()
    assert content['direction'] == 'above'
    assert content['c1'] == 0.25
    assert content['c2'] >= 1.0
    assert len(content['trace']) == report.iterations

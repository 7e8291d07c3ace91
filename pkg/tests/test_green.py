"""Discrete Green operator, harmonic extension and the analytic oracles"""
import numpy as np
import pandas as pd
import pytest

from SublinearDirichlet.domain import build_domain, nearest_interior_node, shape_from_name
from SublinearDirichlet.green import (
    BoundaryData,
    GridFunction,
    NodeCapExceededError,
    analytic_disk_kernel,
    analytic_disk_kernel_matrix,
    assemble_laplacian,
    build_green,
    check_green_properties,
    fit_green_beta,
    green_matrix,
    green_potential,
    green_rows,
    green_rows_to_csv,
    harmonic_extension,
    kernel_oracle_error,
)
from SublinearDirichlet.measure import GridMeasure, measure_from_density, zero_measure


def _lebesgue(domain):
    return GridMeasure(domain, np.full(domain.n_interior, domain.cell_volume))


def test_five_point_stencil_on_square():
    domain = build_domain(shape_from_name("square"), 0.25)
    laplacian, coupling = assemble_laplacian(domain)
    dense = laplacian.toarray()
    np.testing.assert_allclose(np.diag(dense), 4 / 0.25 ** 2)
    np.testing.assert_allclose(dense, dense.T)
    # constants are discrete harmonic: A 1 = B 1
    np.testing.assert_allclose(dense @ np.ones(9), coupling @ np.ones(16), atol=1e-12)
    assert coupling.min() >= 0


def test_cut_cell_rows_reproduce_constants(disk16):
    laplacian, coupling = assemble_laplacian(disk16)
    np.testing.assert_allclose(laplacian @ np.ones(disk16.n_interior),
                               coupling @ np.ones(disk16.n_boundary),
                               rtol=1e-10, atol=1e-6)


@pytest.mark.parametrize("name, h", [("square", 1 / 8), ("lshape", 1 / 8), ("disk", 1 / 8)])
def test_green_properties_hold(name, h):
    green = build_green(build_domain(shape_from_name(name), h))
    reports = check_green_properties(green)
    names = {r.name for r in reports}
    assert {'positivity', 'harmonicity'} <= names
    assert ('symmetry' in names) == (name != "disk")
    assert all(r.passed for r in reports), reports


def test_broken_symmetry_is_detected(green8):
    matrix = np.array(green8.dense)
    matrix[0, 1] *= 1.5
    reports = {r.name: r for r in check_green_properties(green8.with_dense(matrix))}
    assert not reports['symmetry'].passed
    assert reports['symmetry'].margin < 0
    # the original operator is untouched
    assert all(r.passed for r in check_green_properties(green8))


def test_potential_is_one_solve(green8, square8):
    rng = np.random.default_rng(1)
    measure = GridMeasure(square8, rng.random(square8.n_interior))
    by_solve = green_potential(green8, measure).interior
    np.testing.assert_allclose(by_solve, green8.dense @ measure.masses, rtol=1e-12)
    assert green_potential(green8, zero_measure(square8)).sup_norm() == 0.0


def test_disk_center_value():
    for h in (1 / 16, 1 / 32):
        domain = build_domain(shape_from_name("disk"), h)
        green = build_green(domain)
        centre = nearest_interior_node(domain, [0.0, 0.0])
        value = green_potential(green, _lebesgue(domain)).interior[centre]
        # Shortley-Weller reproduces the quadratic (1 - |x|^2)/4 exactly
        assert value == pytest.approx(0.25, abs=1e-10)


def test_ball_center_value():
    domain = build_domain(shape_from_name("ball"), 1 / 8)
    green = build_green(domain)
    centre = nearest_interior_node(domain, [0.0, 0.0, 0.0])
    value = green_potential(green, _lebesgue(domain)).interior[centre]
    assert value == pytest.approx(1 / 6, abs=1e-10)


def test_disk_potential_of_lebesgue_is_quadratic(green_disk16, disk16):
    values = green_potential(green_disk16, _lebesgue(disk16)).interior
    exact = (1.0 - np.sum(disk16.interior ** 2, axis=1)) / 4.0
    np.testing.assert_allclose(values, exact, atol=1e-10)


def test_harmonic_extension_of_harmonic_quadratic(green8, square8):
    data = BoundaryData.from_expression(square8, "1 + x^2 - y^2")
    extension = harmonic_extension(green8, data)
    exact = 1.0 + square8.interior[:, 0] ** 2 - square8.interior[:, 1] ** 2
    np.testing.assert_allclose(extension.interior, exact, atol=1e-12)
    np.testing.assert_array_equal(extension.boundary, data.values)


def test_harmonic_extension_of_constant(green_disk16, disk16):
    extension = harmonic_extension(green_disk16, BoundaryData.constant(disk16, 2.0))
    np.testing.assert_allclose(extension.interior, 2.0, rtol=1e-12)
    zero = harmonic_extension(green_disk16, BoundaryData.constant(disk16, 0.0))
    assert zero.sup_norm() == 0.0


def test_boundary_data_validation(square8, tmp_path):
    with pytest.raises(ValueError):
        BoundaryData.constant(square8, -1.0)
    fname = tmp_path / "f.csv"
    fname.write_text("node,value\n0,1.5\n3,2.0\n", encoding="utf8")
    data = BoundaryData.from_csv(square8, fname)
    assert data.values[0] == 1.5 and data.values[3] == 2.0
    assert data.sup_norm() == 2.0
    assert not data.is_zero


def test_boundary_data_csv_is_exact(square8, tmp_path):
    values = np.random.default_rng(3).random(square8.n_boundary) / 7.0
    fname = tmp_path / "f.csv"
    pd.DataFrame({'node': np.arange(square8.n_boundary), 'value': values}).to_csv(fname, index=False)
    np.testing.assert_array_equal(BoundaryData.from_csv(square8, fname).values, values)


def test_grid_function_arithmetic(square8):
    one = GridFunction(square8, np.ones(square8.n_interior), np.ones(square8.n_boundary))
    two = one + one
    assert two.sup_norm() == 2.0
    assert (two - one).sup_norm() == 1.0
    assert one.scaled(-3.0).sup_norm() == 3.0
    with pytest.raises(ValueError):
        GridFunction(square8, np.ones(3))


def test_dense_cap(square8, green8):
    capped = build_green(square8, dense_cap=10)
    assert not capped.has_dense
    with pytest.raises(NodeCapExceededError):
        _ = capped.dense
    with pytest.raises(NodeCapExceededError):
        green_matrix(capped)
    nodes = np.array([0, 7, 24])
    np.testing.assert_allclose(green_rows(capped, nodes), green8.dense[nodes], rtol=1e-12)


def test_potential_vanishes_on_the_boundary(green_disk16):
    potential = green_potential(green_disk16, _lebesgue(green_disk16.domain))
    assert potential.boundary.shape == (green_disk16.domain.n_boundary,)
    assert np.all(potential.boundary == 0.0)
    assert np.all(potential.interior > 0.0)


def test_green_rows_csv(tmp_path, green8):
    fname = tmp_path / "rows.csv"
    green_rows_to_csv(green8, [0, 1], fname)
    lines = fname.read_text(encoding="utf8").splitlines()
    assert lines[0] == "row,col,g"
    assert len(lines) == 1 + 2 * 49


def test_analytic_kernel():
    x, y = np.array([0.1, 0.2]), np.array([-0.3, 0.4])
    value = analytic_disk_kernel(x, y)
    assert value > 0
    assert value == pytest.approx(analytic_disk_kernel(y, x), rel=1e-14)
    # vanishes as one point approaches the circle
    assert analytic_disk_kernel(x, np.array([0.0, 0.999999])) < 1e-6
    matrix = analytic_disk_kernel_matrix(np.vstack([x, y]), np.vstack([x, y]))
    assert np.isinf(matrix[0, 0])
    assert matrix[0, 1] == pytest.approx(value, rel=1e-12)
    ball = analytic_disk_kernel(np.array([0.1, 0.0, 0.0]), np.array([0.0, 0.3, 0.1]),
                                dimension=3)
    assert ball > 0
    with pytest.raises(ValueError):
        analytic_disk_kernel(x, x)
    with pytest.raises(ValueError):
        analytic_disk_kernel(x, np.array([1.0, 0.0]))


def test_kernel_oracle_improves_under_refinement():
    errors = []
    for h in (1 / 16, 1 / 32):
        domain = build_domain(shape_from_name("disk"), h)
        green = build_green(domain)
        nodes = np.nonzero((domain.delta >= 0.25) & np.all(
            np.isclose(np.mod(domain.interior, 1 / 8), 0.0, atol=1e-12) |
            np.isclose(np.mod(domain.interior, 1 / 8), 1 / 8, atol=1e-12), axis=1))[0]
        errors.append(kernel_oracle_error(green, nodes=nodes))
    assert errors[0] < 0.1
    assert errors[1] < errors[0]


def test_kernel_oracle_needs_a_disk(green8):
    with pytest.raises(ValueError):
        kernel_oracle_error(green8)


def test_boundary_exponent_of_disk(green_disk16):
    fit = fit_green_beta(green_disk16)
    assert fit.n_pairs > 0
    assert 0.5 < fit.beta < 1.5


def test_domination_of_unit_density(green8, square8):
    potential = green_potential(green8, measure_from_density(square8, 1.0))
    assert np.all(potential.interior > 0)
    # maximum at the centre of the square
    assert np.argmax(potential.interior) == nearest_interior_node(square8, [0.5, 0.5])

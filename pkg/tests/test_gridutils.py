"""LaTeX expressions, lattice helpers and margin reports"""
import numpy as np
import pytest

from SublinearDirichlet.gridutils import (
    _lattice_range,
    lambdify_expression,
    margin_report,
)


def test_expression_of_coordinates():
    points = np.array([[0.5, 0.25], [1.0, 2.0]])
    values = lambdify_expression(r"\frac{x^2 - y^2}{2}")(points)
    np.testing.assert_allclose(values, (points[:, 0] ** 2 - points[:, 1] ** 2) / 2)


def test_constant_expression_is_broadcast():
    values = lambdify_expression(r"\frac{1}{2}")(np.zeros((4, 2)))
    np.testing.assert_array_equal(values, np.full(4, 0.5))


def test_known_constants():
    value = lambdify_expression(r"\pi + e")(np.zeros((1, 3)))
    assert value[0] == pytest.approx(np.pi + np.e)


def test_missing_coordinate_reads_as_zero():
    values = lambdify_expression("1 + z")(np.ones((2, 2)))
    np.testing.assert_array_equal(values, [1.0, 1.0])


def test_unknown_symbol():
    with pytest.raises(ValueError):
        lambdify_expression("x + t")


def test_lattice_range_keeps_end_points():
    np.testing.assert_array_equal(_lattice_range(0.0, 1.0, 0.1), np.arange(11))
    np.testing.assert_array_equal(_lattice_range(-1.0, 1.0, 0.5), np.arange(-2, 3))


def test_margin_report():
    assert margin_report('x', -1e-13, 1e-12).passed
    failed = margin_report('x', -1e-3, 1e-12, "detail")
    assert not failed.passed
    assert failed.to_dict()['detail'] == "detail"

"""Sparse LU wrapper"""
import numpy as np
import pytest
from scipy.sparse import csr_matrix, diags

from SublinearDirichlet.linear_solver import SingularSystemError, SparseLUSolver


def _tridiagonal(n):
    return diags([-np.ones(n - 1), 2.0 * np.ones(n), -0.5 * np.ones(n - 1)], [-1, 0, 1])


def test_solves_and_transposed_solves():
    matrix = _tridiagonal(6)
    solver = SparseLUSolver(matrix)
    rhs = np.arange(6, dtype=float)
    assert solver.size == 6
    np.testing.assert_allclose(matrix @ solver.solve(rhs), rhs, atol=1e-12)
    np.testing.assert_allclose(matrix.T @ solver.solve_transposed(rhs), rhs, atol=1e-12)
    block = np.eye(6)[:, :2]
    np.testing.assert_allclose(matrix @ solver.solve(block), block, atol=1e-12)


def test_singular_matrix():
    with pytest.raises(SingularSystemError):
        SparseLUSolver(csr_matrix((3, 3)))


def test_square_matrix_required():
    with pytest.raises(ValueError):
        SparseLUSolver(csr_matrix(np.ones((2, 3))))

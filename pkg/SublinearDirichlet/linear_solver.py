"""Linear solver interface for the discrete Dirichlet Laplacian"""

import abc
import logging

import numpy as np
from scipy.sparse import csc_matrix, spmatrix
from scipy.sparse.linalg import splu


_logger = logging.getLogger('linear_solver')


class SingularSystemError(RuntimeError):
    """The system matrix could not be factorized."""


class ILinearSolver(abc.ABC):
    """A factorized square system A x = b, reusable for many right hand sides"""

    @property
    @abc.abstractmethod
    def size(self) -> int:
        """The number of unknowns"""

    @abc.abstractmethod
    def solve(self, rhs: np.ndarray) -> np.ndarray:
        """Solves A x = rhs. rhs may be (n,) or (n, k)"""

    @abc.abstractmethod
    def solve_transposed(self, rhs: np.ndarray) -> np.ndarray:
        """Solves A^T x = rhs. rhs may be (n,) or (n, k)"""


class SparseLUSolver(ILinearSolver):
    """Sparse LU factorization (SuperLU) of a CSC matrix.

    The factorization is read-only after construction so solves against it
    can be issued from several threads.
    """

    def __init__(self, matrix: spmatrix):
        if matrix.shape[0] != matrix.shape[1]:
            raise ValueError(f"Square matrix expected, got {matrix.shape}")
        self._size = matrix.shape[0]
        try:
            self._lu = splu(csc_matrix(matrix))
        except RuntimeError as exc:
            raise SingularSystemError(
                "Factorization of the discrete Laplacian failed: " + str(exc)) from exc
        diag_u = np.abs(self._lu.U.diagonal())
        if diag_u.size == 0 or not np.all(np.isfinite(diag_u)) or np.min(diag_u) == 0.0:
            raise SingularSystemError("The discrete Laplacian is singular")
        _logger.debug("factorized %s unknowns, nnz(L+U)=%s",
                      self._size, self._lu.L.nnz + self._lu.U.nnz)

    @property
    def size(self) -> int:
        return self._size

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        return self._lu.solve(np.asarray(rhs, dtype=np.float64))

    def solve_transposed(self, rhs: np.ndarray) -> np.ndarray:
        return self._lu.solve(np.asarray(rhs, dtype=np.float64), trans='T')

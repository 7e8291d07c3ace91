# coding: utf-8
"""
The discrete Green operator of -Laplace with zero Dirichlet data, harmonic
extension of boundary data and the analytic disk/ball kernels used as oracles
"""
# general packages
import logging
import math
import os
from pathlib import Path
from typing import Callable, NamedTuple, Optional, Union

import numpy as np
import pandas as pd
from scipy.sparse import coo_matrix, csr_matrix
from scipy.spatial.distance import cdist

# package imports
from .domain import GridDomain
from .gridutils import MarginReport, margin_report, lambdify_expression
from .linear_solver import ILinearSolver, SparseLUSolver
from .measure import GridMeasure, check_same_domain
from .scaling import segment_fit_error


_logger = logging.getLogger('green')

GREEN_DENSE_CAP = int(os.getenv("GREEN_DENSE_CAP", "4096"))


class NodeCapExceededError(RuntimeError):
    """A dense Green matrix was requested for too many interior nodes."""


class GridFunction:
    """Real values on the interior and boundary nodes of a domain"""

    def __init__(self, domain: GridDomain, interior: np.ndarray,
                 boundary: Optional[np.ndarray] = None):
        interior = np.array(interior, dtype=float)
        boundary = np.zeros(domain.n_boundary) if boundary is None \
            else np.array(boundary, dtype=float)
        if interior.shape != (domain.n_interior,) or boundary.shape != (domain.n_boundary,):
            raise ValueError("GridFunction values do not match the domain node counts")
        if not (np.all(np.isfinite(interior)) and np.all(np.isfinite(boundary))):
            raise ValueError("GridFunction values must be finite")
        self.domain = domain
        self.interior = interior
        self.boundary = boundary
        self.interior.setflags(write=False)
        self.boundary.setflags(write=False)

    @property
    def values(self) -> np.ndarray:
        """Interior values followed by boundary values"""
        return np.concatenate([self.interior, self.boundary])

    def sup_norm(self) -> float:
        """max |value| over the closure"""
        return float(np.max(np.abs(self.values))) if self.values.size else 0.0

    def __add__(self, other: "GridFunction") -> "GridFunction":
        check_same_domain(self.domain, other.domain, "grid functions")
        return GridFunction(self.domain, self.interior + other.interior,
                            self.boundary + other.boundary)

    def __sub__(self, other: "GridFunction") -> "GridFunction":
        check_same_domain(self.domain, other.domain, "grid functions")
        return GridFunction(self.domain, self.interior - other.interior,
                            self.boundary - other.boundary)

    def scaled(self, factor: float) -> "GridFunction":
        """factor * self"""
        return GridFunction(self.domain, self.interior * factor, self.boundary * factor)

    def __repr__(self):
        return f"{type(self).__name__}(n={self.domain.n_interior}, sup={self.sup_norm()})"


class BoundaryData:
    """Nonnegative continuous boundary data, sampled on the boundary nodes"""

    def __init__(self, domain: GridDomain, values: np.ndarray):
        values = np.array(np.broadcast_to(np.asarray(values, dtype=float),
                                          (domain.n_boundary,)), dtype=float)
        if not np.all(np.isfinite(values)):
            raise ValueError("Boundary data must be finite")
        if np.any(values < 0):
            raise ValueError(f"Boundary data must be nonnegative, minimum is {values.min()}")
        self.domain = domain
        self.values = values
        self.values.setflags(write=False)

    @classmethod
    def constant(cls, domain: GridDomain, value: float) -> "BoundaryData":
        """f = value on every boundary node"""
        return cls(domain, np.full(domain.n_boundary, float(value)))

    @classmethod
    def from_function(cls, domain: GridDomain,
                      func: Callable[[np.ndarray], np.ndarray]) -> "BoundaryData":
        """Samples a callable on the (N, d) boundary coordinates"""
        return cls(domain, np.asarray(func(domain.boundary), dtype=float))

    @classmethod
    def from_expression(cls, domain: GridDomain, latex: str) -> "BoundaryData":
        """Samples a LaTeX expression in x, y (and z)"""
        return cls.from_function(domain, lambdify_expression(latex))

    @classmethod
    def from_csv(cls, domain: GridDomain, fname: Union[str, Path]) -> "BoundaryData":
        """Reads a CSV with 'node' (boundary index) and 'value' columns"""
        df = pd.read_csv(fname, float_precision='round_trip')
        if 'node' not in df.columns or 'value' not in df.columns:
            raise ValueError(f"{fname}: CSV needs 'node' and 'value' columns")
        values = np.zeros(domain.n_boundary)
        nodes = df['node'].to_numpy(dtype=np.int64)
        if np.any(nodes < 0) or np.any(nodes >= domain.n_boundary):
            raise ValueError(f"{fname}: boundary node index out of range")
        values[nodes] = df['value'].to_numpy(dtype=float)
        return cls(domain, values)

    def sup_norm(self) -> float:
        """max f"""
        return float(np.max(self.values)) if self.values.size else 0.0

    @property
    def is_zero(self) -> bool:
        """True for f = 0"""
        return not np.any(self.values > 0)


def assemble_laplacian(domain: GridDomain) -> tuple[csr_matrix, csr_matrix]:
    """
    The Shortley-Weller discretization of -Laplace on the interior nodes.
    Returns (A, B): A acts on interior values, B >= 0 couples the boundary
    values into the right hand side, so that the discrete Dirichlet problem
    -Laplace_h u = F, u = f on the boundary reads A u = F + B f.

    With arm lengths a+ and a- along an axis the stencil is
        2/(a+ a-) u_i - 2/(a+ (a+ + a-)) u_+ - 2/(a- (a+ + a-)) u_-
    which is the five (seven) point stencil when both arms equal h.
    """
    n = domain.n_interior
    rows_a, cols_a, vals_a = [np.arange(n)], [np.arange(n)], []
    rows_b, cols_b, vals_b = [], [], []
    diag = np.zeros(n)
    for axis in range(domain.dimension):
        arm_p = domain.stencil_arm[:, 2 * axis]
        arm_m = domain.stencil_arm[:, 2 * axis + 1]
        diag += 2.0 / (arm_p * arm_m)
        for col, coef in ((2 * axis, -2.0 / (arm_p * (arm_p + arm_m))),
                          (2 * axis + 1, -2.0 / (arm_m * (arm_p + arm_m)))):
            link = domain.stencil_index[:, col]
            inner = link >= 0
            rows_a.append(np.nonzero(inner)[0])
            cols_a.append(link[inner])
            vals_a.append(coef[inner])
            rows_b.append(np.nonzero(~inner)[0])
            cols_b.append(-1 - link[~inner])
            vals_b.append(-coef[~inner])
    vals_a.insert(0, diag)
    laplacian = coo_matrix((np.concatenate(vals_a),
                            (np.concatenate(rows_a), np.concatenate(cols_a))),
                           shape=(n, n)).tocsr()
    coupling = coo_matrix((np.concatenate(vals_b),
                           (np.concatenate(rows_b), np.concatenate(cols_b))),
                          shape=(n, domain.n_boundary)).tocsr()
    return laplacian, coupling


class GreenOperator:
    """
    The discrete Green operator of a domain. g(i, j) solves
    -Laplace_h g(., j) = e_j / h^d with zero boundary values, i.e.
    g = A^-1 / h^d. The factorization is reused for every solve; the dense
    matrix is only materialized (on first use) below the node cap.
    """

    def __init__(self, domain: GridDomain,
                 solver: Optional[ILinearSolver] = None,
                 dense_cap: Optional[int] = None):
        self.domain = domain
        self.laplacian, self.coupling = assemble_laplacian(domain)
        self.solver = solver if solver is not None else SparseLUSolver(self.laplacian)
        self.dense_cap = GREEN_DENSE_CAP if dense_cap is None else dense_cap
        self._dense: Optional[np.ndarray] = None

    @property
    def has_dense(self) -> bool:
        """Whether the dense Green matrix is available (node cap)"""
        return self._dense is not None or self.domain.n_interior <= self.dense_cap

    @property
    def dense(self) -> np.ndarray:
        """The dense matrix g(i, j); NodeCapExceededError above the cap"""
        if self._dense is None:
            if self.domain.n_interior > self.dense_cap:
                raise NodeCapExceededError(
                    f"Dense Green matrix needs {self.domain.n_interior} nodes, " +
                    f"the cap is {self.dense_cap}")
            dense = self.solver.solve(np.eye(self.domain.n_interior)) / self.domain.cell_volume
            dense.setflags(write=False)
            self._dense = dense
            _logger.debug("materialized dense Green matrix of size %s", dense.shape[0])
        return self._dense

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        """A^-1 rhs"""
        return self.solver.solve(rhs)

    def with_dense(self, matrix: np.ndarray) -> "GreenOperator":
        """A copy sharing the factorization whose dense matrix is replaced
        (fault injection for the verification suite)."""
        other = GreenOperator.__new__(GreenOperator)
        other.domain = self.domain
        other.laplacian = self.laplacian
        other.coupling = self.coupling
        other.solver = self.solver
        other.dense_cap = self.dense_cap
        matrix = np.array(matrix, dtype=float)
        matrix.setflags(write=False)
        other._dense = matrix  # pylint: disable=protected-access
        return other

    def __repr__(self):
        return f"{type(self).__name__}({self.domain!r})"


def build_green(domain: GridDomain, dense_cap: Optional[int] = None) -> GreenOperator:
    """Factorizes the discrete Laplacian of the domain."""
    green = GreenOperator(domain, dense_cap=dense_cap)
    _logger.debug("built %s", green)
    return green


def green_potential(green: GreenOperator, measure: GridMeasure) -> GridFunction:
    """G[w](x) = sum_j g(x, j) m_j, as one solve with right hand side m / h^d.
    Zero on the boundary nodes."""
    check_same_domain(green.domain, measure.domain, "Green operator and measure")
    if measure.is_zero:
        return GridFunction(green.domain, np.zeros(green.domain.n_interior))
    values = green.solve(measure.masses / green.domain.cell_volume)
    return GridFunction(green.domain, values)


def green_potential_of_masses(green: GreenOperator, masses: np.ndarray) -> np.ndarray:
    """Interior values of the potential of raw node masses (hot loops of the solver)."""
    return green.solve(np.asarray(masses, dtype=float) / green.domain.cell_volume)


def harmonic_extension(green: GreenOperator, data: BoundaryData) -> GridFunction:
    """The discrete harmonic function with boundary values f."""
    check_same_domain(green.domain, data.domain, "Green operator and boundary data")
    if data.is_zero:
        return GridFunction(green.domain, np.zeros(green.domain.n_interior),
                            np.zeros(green.domain.n_boundary))
    values = green.solve(green.coupling @ data.values)
    return GridFunction(green.domain, values, data.values)


def analytic_disk_kernel(x, y, radius: float = 1.0, dimension: int = 2) -> float:
    """
    The Green function of -Laplace on the disk (d=2) or ball (d=3) of the given
    radius centred at the origin, via the image point.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    dist2 = float(np.sum((x - y) ** 2))
    if dist2 == 0.0:
        raise ValueError("The Green kernel is singular at coincident points")
    nx2 = float(x @ x)
    ny2 = float(y @ y)
    r2 = radius * radius
    if nx2 >= r2 or ny2 >= r2:
        raise ValueError("Both points must lie strictly inside the disk/ball")
    if dimension == 2:
        return math.log1p((r2 - nx2) * (r2 - ny2) / (r2 * dist2)) / (4.0 * math.pi)
    if dimension == 3:
        image = math.sqrt(nx2 * ny2 - 2.0 * r2 * float(x @ y) + r2 * r2)
        return (1.0 / math.sqrt(dist2) - radius / image) / (4.0 * math.pi)
    raise ValueError(f"Only dimensions 2 and 3 are supported, got {dimension}")


def analytic_disk_kernel_matrix(xs: np.ndarray, ys: np.ndarray,
                                radius: float = 1.0, dimension: int = 2) -> np.ndarray:
    """analytic_disk_kernel for all pairs of two point sets, shape (len(xs), len(ys)).
    Coincident pairs give inf."""
    r2 = radius * radius
    nx2 = np.sum(xs * xs, axis=1)[:, None]
    ny2 = np.sum(ys * ys, axis=1)[None, :]
    dist2 = cdist(xs, ys, "sqeuclidean")
    with np.errstate(divide='ignore'):
        if dimension == 2:
            return np.log1p((r2 - nx2) * (r2 - ny2) / (r2 * dist2)) / (4.0 * np.pi)
        image = np.sqrt(nx2 * ny2 - 2.0 * r2 * (xs @ ys.T) + r2 * r2)
        return (1.0 / np.sqrt(dist2) - radius / image) / (4.0 * np.pi)


def kernel_oracle_error(green: GreenOperator, min_separation: float = 0.25,
                        nodes: Optional[np.ndarray] = None,
                        max_nodes: int = 400) -> float:
    """
    Max relative error of the discrete kernel against the analytic disk/ball
    kernel over node pairs at least min_separation apart. Without explicit
    interior node indices a strided subset of at most max_nodes nodes is used.
    """
    domain = green.domain
    if not domain.is_curved:
        raise ValueError("The analytic kernel oracle exists only for the disk/ball")
    if nodes is None:
        nodes = np.arange(0, domain.n_interior, max(1, domain.n_interior // max_nodes))
    nodes = np.asarray(nodes, dtype=np.int64)
    pts = domain.interior[nodes]
    discrete = green_rows(green, nodes)[:, nodes]
    exact = analytic_disk_kernel_matrix(pts, pts, domain.shape.radius, domain.dimension)
    far = cdist(pts, pts) >= min_separation
    if not np.any(far):
        return np.nan
    return float(np.max(np.abs(discrete[far] - exact[far]) / exact[far]))


def green_rows(green: GreenOperator, nodes) -> np.ndarray:
    """The rows g(x, .) for the given interior node indices, shape (k, n).
    Below the cap these come from the dense matrix, above it from transposed
    solves against the factorization."""
    nodes = np.asarray(nodes, dtype=np.int64)
    if green.has_dense:
        return np.array(green.dense[nodes])
    unit = np.zeros((green.domain.n_interior, nodes.shape[0]))
    unit[nodes, np.arange(nodes.shape[0])] = 1.0
    return green.solver.solve_transposed(unit).T / green.domain.cell_volume


def green_matrix(green: GreenOperator) -> np.ndarray:
    """The dense Green matrix (node cap enforced)"""
    return green.dense


def green_rows_to_csv(green: GreenOperator, nodes, fname: Union[str, Path]):
    """Writes the rows g(x, .) in long format: row node, column node, value"""
    nodes = np.asarray(nodes, dtype=np.int64)
    if green.domain.n_interior > green.dense_cap:
        raise NodeCapExceededError(
            f"Green row export is limited to {green.dense_cap} interior nodes")
    rows = green_rows(green, nodes)
    n = green.domain.n_interior
    pd.DataFrame({
        'row': np.repeat(nodes, n),
        'col': np.tile(np.arange(n), nodes.shape[0]),
        'g': rows.ravel()
    }).to_csv(fname, index=False, float_format="%.17g")


class BetaFit(NamedTuple):
    """Fitted boundary exponent of the Green kernel estimate"""
    beta: float
    n_pairs: int
    n_bins: int


def fit_green_beta(green: GreenOperator, min_separation: Optional[float] = None,
                   n_bins: int = 12) -> BetaFit:
    """
    Empirical exponent beta of the estimate
        g(x,y) <= C (delta(x) delta(y) / |x-y|^2)^beta |x-y|^(2-d)
    Pairs with |x-y| >= min_separation (default 4h) and
    t = delta(x) delta(y) / |x-y|^2 <= 1 are binned in log t; beta is the slope
    of the upper envelope of log(g |x-y|^(d-2)) against log t.
    """
    domain = green.domain
    g = green_matrix(green)
    sep = 4.0 * domain.h if min_separation is None else min_separation
    pts = domain.interior
    dist2 = cdist(pts, pts, "sqeuclidean")
    upper = np.triu(np.ones(dist2.shape, dtype=bool), k=1)
    t = np.outer(domain.delta, domain.delta)
    with np.errstate(divide='ignore'):
        t = np.where(dist2 > 0, t / np.where(dist2 > 0, dist2, 1.0), np.inf)
    mask = upper & (dist2 >= sep * sep) & (t <= 1.0) & (g > 0)
    if not np.any(mask):
        return BetaFit(np.nan, 0, 0)
    log_t = np.log(t[mask])
    log_w = np.log(g[mask] * dist2[mask] ** ((domain.dimension - 2) / 2.0))
    edges = np.linspace(log_t.min(), log_t.max(), n_bins + 1)
    which = np.clip(np.digitize(log_t, edges) - 1, 0, n_bins - 1)
    env_t, env_w = [], []
    for b in range(n_bins):
        sel = which == b
        if np.any(sel):
            best = np.argmax(log_w[sel])
            env_t.append(log_t[sel][best])
            env_w.append(log_w[sel][best])
    if len(env_t) < 2:
        return BetaFit(np.nan, int(np.count_nonzero(mask)), len(env_t))
    beta, _, _ = segment_fit_error(np.array(env_t), np.array(env_w))
    return BetaFit(float(beta), int(np.count_nonzero(mask)), len(env_t))


def check_green_properties(green: GreenOperator) -> list[MarginReport]:
    """Symmetry (stencils without cut cells), positivity and discrete
    harmonicity off the diagonal of the dense Green matrix. Potentials are zero
    on the boundary nodes by construction."""
    domain = green.domain
    g = green_matrix(green)
    scale = float(np.max(np.abs(g)))
    reports = []
    if not domain.is_curved:
        asym = float(np.max(np.abs(g - g.T)))
        reports.append(margin_report('symmetry', -asym, 1e-12 * scale,
                                     "max |g(i,j) - g(j,i)|"))
    min_g = float(np.min(g))
    reports.append(MarginReport('positivity', min_g, 0.0, min_g > 0, "min g(i,j)"))
    residual = green.laplacian @ g * domain.cell_volume - np.eye(domain.n_interior)
    lap_scale = float(np.max(np.abs(green.laplacian.diagonal()))) * scale * domain.cell_volume
    reports.append(margin_report('harmonicity', -float(np.max(np.abs(residual))),
                                 1e-10 * max(lap_scale, 1.0),
                                 "max |(-Laplace_h g)(i,j) - delta_ij / h^d|"))
    for report in reports:
        _logger.debug("green property %s", report)
    return reports

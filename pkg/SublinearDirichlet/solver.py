# coding: utf-8
"""
Monotone iteration for the discrete integral equation
    u = G[u^q dmu] + G[nu] + H_f
from below and from above, a Newton oracle and the checks of the
existence, estimate and uniqueness statements
"""
# general packages
from enum import Enum
import logging
from pathlib import Path
from typing import NamedTuple, Optional, Union

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field

# package imports
from .green import (
    BoundaryData,
    GreenOperator,
    GridFunction,
    green_matrix,
    green_potential,
    green_potential_of_masses,
    harmonic_extension,
)
from .gridutils import MarginReport, margin_report
from .measure import GridMeasure, check_same_domain
from .potential import lgamma_norm, lower_bound_constant


_logger = logging.getLogger('solver')

# relative slack of the monotonicity checks
MONOTONE_SLACK = 1e-12
# increments shrinking slower than this trigger a warning
SLOW_RATE = 0.999


class DegenerateDataError(ValueError):
    """||f|| + ||G[mu]|| + ||G[nu]|| = 0: the only fixed point is u = 0."""


class NonConvergenceError(RuntimeError):
    """The iteration reached its limit without meeting the stopping rule."""

    def __init__(self, message: str, iterations: int, residual: float):
        super().__init__(message)
        self.iterations = iterations
        self.residual = residual


class NewtonFailureError(RuntimeError):
    """Singular Jacobian or failed line search in the Newton oracle."""


class Direction(Enum):
    """Where the monotone iteration starts"""
    BELOW = "below"
    ABOVE = "above"


class SolverConfig(BaseModel):
    """Settings of the monotone iteration"""
    model_config = ConfigDict(extra="forbid")

    q: float = Field(0.5, gt=0.0, lt=1.0)
    tol: float = Field(1e-10, gt=0.0)
    max_iterations: int = Field(10000, gt=0)
    direction: Direction = Direction.BELOW
    oracle: bool = False


class TraceEntry(NamedTuple):
    """One step of the iteration"""
    iteration: int
    increment: float
    residual: float
    sup_norm: float


class SolveReport:  # pylint: disable=too-many-instance-attributes
    """Result of picard_solve"""

    def __init__(self, u: GridFunction, direction: Direction, q: float):
        self.u = u
        self.direction = direction
        self.q = q
        self.iterations = 0
        self.residual = np.inf
        self.monotonicity_violations = 0
        self.bound_violations = 0
        self.c1 = lower_bound_constant(q)
        self.c2 = 1.0
        self.data_size = 0.0
        self.converged = False
        self.degenerate = False
        self.trace: list[TraceEntry] = []
        self.margins: dict[str, MarginReport] = {}
        self.oracle_gap: Optional[float] = None

    def to_dict(self):
        """Converts this object to a JSON serializable dictionary"""
        return {
            'direction': self.direction.value,
            'q': self.q,
            'iterations': self.iterations,
            'residual': float(self.residual),
            'converged': self.converged,
            'degenerate': self.degenerate,
            'monotonicity_violations': self.monotonicity_violations,
            'bound_violations': self.bound_violations,
            'c1': self.c1,
            'c2': self.c2,
            'data_size': self.data_size,
            'sup_norm': self.u.sup_norm(),
            'margins': {name: m.to_dict() for name, m in sorted(self.margins.items())},
            'oracle_gap': self.oracle_gap,
            'trace': [e._asdict() for e in self.trace],
        }


class _Problem:
    """The precomputed linear parts of one instance"""

    def __init__(self, green: GreenOperator, mu: GridMeasure, nu: GridMeasure,
                 data: BoundaryData, q: float):
        for other, what in ((mu.domain, "mu"), (nu.domain, "nu"), (data.domain, "f")):
            check_same_domain(green.domain, other, "Green operator and " + what)
        self.green = green
        self.q = q
        self.mu_masses = mu.masses
        self.data = data
        self.g_mu = green_potential(green, mu)
        self.g_nu = green_potential(green, nu)
        self.h_f = harmonic_extension(green, data)
        self.base = self.g_nu.interior + self.h_f.interior
        self.data_size = self.g_mu.sup_norm() + self.g_nu.sup_norm() + data.sup_norm()
        self.c2 = max(1.0, self.data_size ** (1.0 / (1.0 - q))) if self.data_size > 0 else 1.0

    def pulled_masses(self, values: np.ndarray) -> np.ndarray:
        """u^q m_mu, evaluated only where mu carries mass"""
        positive = self.mu_masses > 0
        out = np.zeros_like(self.mu_masses)
        out[positive] = np.maximum(values[positive], 0.0) ** self.q * self.mu_masses[positive]
        return out

    def apply(self, values: np.ndarray) -> np.ndarray:
        """Interior values of T[u]"""
        if not np.any(self.mu_masses > 0):
            return self.base.copy()
        return green_potential_of_masses(self.green, self.pulled_masses(values)) + self.base

    def as_function(self, values: np.ndarray) -> GridFunction:
        """Wraps interior values with the boundary data"""
        return GridFunction(self.green.domain, values, self.data.values)


def apply_T(green: GreenOperator, mu: GridMeasure, nu: GridMeasure,  # pylint: disable=invalid-name,disable=too-many-arguments,disable=too-many-positional-arguments
            data: BoundaryData, u: GridFunction, q: float) -> GridFunction:
    """T[u] = G[u^q dmu] + G[nu] + H_f, with boundary values f"""
    if np.any(u.interior < 0):
        raise ValueError("T is only defined for nonnegative u")
    problem = _Problem(green, mu, nu, data, q)
    return problem.as_function(problem.apply(u.interior))


def _start_values(problem: _Problem, direction: Direction) -> np.ndarray:
    if direction == Direction.BELOW:
        return lower_bound_constant(problem.q) * problem.g_mu.interior ** (1.0 / (1.0 - problem.q))
    # T[c2] <= c2^q ||G[mu]|| + ||G[nu]|| + ||f|| <= c2^q max(1, data)
    # and c2^(1-q) >= data, so the constant c2 is a supersolution
    return np.full(problem.green.domain.n_interior, problem.c2)


def first_iterate(green: GreenOperator, mu: GridMeasure, nu: GridMeasure,  # pylint: disable=too-many-arguments,disable=too-many-positional-arguments
                  data: BoundaryData, q: float,
                  direction: Direction = Direction.BELOW) -> GridFunction:
    """u1 = T[u0], a positive start for the Newton oracle"""
    problem = _Problem(green, mu, nu, data, q)
    return problem.as_function(problem.apply(_start_values(problem, direction)))


def _iterate(problem: _Problem, cfg: SolverConfig) -> SolveReport:  # pylint: disable=too-many-locals
    u = _start_values(problem, cfg.direction)
    report = SolveReport(problem.as_function(u), cfg.direction, problem.q)
    report.c2 = problem.c2
    report.data_size = problem.data_size
    bound_cap = problem.data_size ** (1.0 / (1.0 - problem.q))
    tu = problem.apply(u)
    previous_increment = None
    slow_steps = 0
    for iteration in range(1, cfg.max_iterations + 1):
        new = tu
        t_new = problem.apply(new)
        scale = max(1.0, float(np.max(np.abs(new))))
        increment = float(np.max(np.abs(new - u))) if new.size else 0.0
        residual = float(np.max(np.abs(new - t_new))) if new.size else 0.0
        step = new - u
        if cfg.direction == Direction.BELOW:
            if np.min(step) < -MONOTONE_SLACK * scale:
                report.monotonicity_violations += 1
            if float(np.max(new)) >= 1.0 and float(np.max(new)) > bound_cap * (1 + MONOTONE_SLACK):
                report.bound_violations += 1
        else:
            if np.max(step) > MONOTONE_SLACK * scale:
                report.monotonicity_violations += 1
            if float(np.max(new)) > problem.c2 * (1 + MONOTONE_SLACK):
                report.bound_violations += 1
        report.trace.append(TraceEntry(iteration, increment, residual, scale))
        _logger.debug("iteration %s: increment %s residual %s", iteration, increment, residual)
        if previous_increment is not None and previous_increment > 0 and \
                increment > SLOW_RATE * previous_increment:
            slow_steps += 1
            if slow_steps == 100:
                _logger.warning("slow convergence: increment ratio %s after %s iterations",
                                increment / previous_increment, iteration)
        previous_increment = increment
        u, tu = new, t_new
        if increment <= cfg.tol * scale and residual <= 2.0 * cfg.tol * scale:
            report.u = problem.as_function(u)
            report.iterations = iteration
            report.residual = residual
            report.converged = True
            return report
    raise NonConvergenceError(
        f"Picard iteration ({cfg.direction.value}) did not converge in " +
        f"{cfg.max_iterations} iterations, last residual {residual}",
        cfg.max_iterations, residual)


def picard_solve(green: GreenOperator, mu: GridMeasure, nu: GridMeasure,  # pylint: disable=too-many-arguments,disable=too-many-positional-arguments
                 data: BoundaryData, cfg: SolverConfig) -> SolveReport:
    """
    Monotone iteration u_{j+1} = T[u_j]. From below it starts at
    c1 G[mu]^(1/(1-q)) and increases to the minimal solution, from above it
    starts at the constant c2 and decreases.

    Raises DegenerateDataError when f, G[mu] and G[nu] all vanish and
    NonConvergenceError when the stopping rule is not met in time.
    """
    problem = _Problem(green, mu, nu, data, cfg.q)
    if problem.data_size == 0:
        raise DegenerateDataError(
            "||f|| + ||G[mu]|| + ||G[nu]|| = 0, the only solution is u = 0")
    report = _iterate(problem, cfg)
    if cfg.oracle:
        start = problem.as_function(problem.apply(_start_values(problem, cfg.direction)))
        oracle = newton_oracle(green, mu, nu, data, cfg.q, start)
        report.oracle_gap = float(np.max(np.abs(oracle.interior - report.u.interior)))
    _logger.info("picard %s: %s iterations, residual %s, sup %s", cfg.direction.value,
                 report.iterations, report.residual, report.u.sup_norm())
    return report


def newton_oracle(green: GreenOperator, mu: GridMeasure, nu: GridMeasure,  # pylint: disable=too-many-arguments,disable=too-many-positional-arguments,disable=too-many-locals
                  data: BoundaryData, q: float, u_init: GridFunction,
                  max_iterations: int = 100) -> GridFunction:
    """
    Damped Newton for F(u) = u - G[u^q dmu] - G[nu] - H_f = 0 on the dense
    Green matrix, keeping u > 0 where mu has mass. Stops at
    ||F(u)|| <= 1e-12 max(1, ||u||).
    """
    problem = _Problem(green, mu, nu, data, q)
    g = green_matrix(green)
    masses = problem.mu_masses
    active = masses > 0
    u = np.array(u_init.interior, dtype=float)
    if np.any(u[active] <= 0):
        raise ValueError("The Newton oracle needs u_init > 0 where mu has mass")

    def residual(values):
        return values - g @ problem.pulled_masses(values) - problem.base

    f_u = residual(u)
    for iteration in range(max_iterations):
        norm = float(np.max(np.abs(f_u))) if f_u.size else 0.0
        if norm <= 1e-12 * max(1.0, float(np.max(np.abs(u)))):
            _logger.debug("newton converged after %s steps", iteration)
            return problem.as_function(u)
        derivative = np.zeros_like(u)
        derivative[active] = q * u[active] ** (q - 1.0) * masses[active]
        jacobian = np.eye(u.shape[0]) - g * derivative[None, :]
        try:
            step = np.linalg.solve(jacobian, -f_u)
        except np.linalg.LinAlgError as exc:
            raise NewtonFailureError("Singular Newton Jacobian: " + str(exc)) from exc
        t = 1.0
        while True:
            trial = u + t * step
            if np.all(trial[active] > 0):
                f_trial = residual(trial)
                if float(np.max(np.abs(f_trial))) <= (1.0 - 1e-4 * t) * norm:
                    break
            t *= 0.5
            if t < 1e-12:
                raise NewtonFailureError(
                    f"Newton line search failed at step {iteration}, residual {norm}")
        u, f_u = trial, f_trial
    raise NewtonFailureError(f"Newton did not converge in {max_iterations} steps")


def verify_estimates(report: SolveReport, green: GreenOperator, mu: GridMeasure,  # pylint: disable=too-many-arguments,disable=too-many-positional-arguments
                     nu: GridMeasure, data: BoundaryData, q: float,
                     rel_tol: float = 1e-10) -> dict[str, MarginReport]:
    """
    Margins of the two-sided estimates for a converged solution:
      lower:   u - [c1 G[mu]^(1/(1-q)) + G[nu] + H_f]
      upper:   [c2^q G[mu] + G[nu] + H_f] - u
      uniform: c2 - ||u||
    all passing at >= -rel_tol ||u||. The margins are also stored on the report.
    """
    problem = _Problem(green, mu, nu, data, q)
    u = report.u.interior
    tol = rel_tol * max(report.u.sup_norm(), 1e-300)
    c1 = lower_bound_constant(q)
    lower = c1 * problem.g_mu.interior ** (1.0 / (1.0 - q)) + problem.base
    upper = problem.c2 ** q * problem.g_mu.interior + problem.base
    margins = {
        'lower': margin_report('lower', float(np.min(u - lower)) if u.size else 0.0, tol,
                               f"c1={c1}"),
        'upper': margin_report('upper', float(np.min(upper - u)) if u.size else 0.0, tol,
                               f"c2={problem.c2}"),
        'uniform': margin_report('uniform', problem.c2 - report.u.sup_norm(), tol,
                                 f"c2={problem.c2}"),
    }
    report.margins.update(margins)
    return margins


class UniquenessReport(NamedTuple):
    """Comparison of the limits from below and from above"""
    gap: float
    minimality_margin: float
    passed: bool
    norms: dict
    below: SolveReport
    above: SolveReport
    note: str

    def to_dict(self):
        """Converts this object to a JSON serializable dictionary"""
        return {
            'gap': self.gap,
            'minimality_margin': self.minimality_margin,
            'passed': self.passed,
            'norms': self.norms,
            'note': self.note,
        }


def uniqueness_experiment(green: GreenOperator, mu: GridMeasure, nu: GridMeasure,  # pylint: disable=too-many-arguments,disable=too-many-positional-arguments
                          data: BoundaryData, q: float, gamma: Optional[float] = None,
                          cfg: Optional[SolverConfig] = None) -> UniquenessReport:
    """
    Runs both directions and reports the sup-norm gap of the limits (passing at
    <= 1e-6 ||u||), the minimality margin below <= above and the L^q(dmu)
    (and for f = 0 the L^(q+1)(dmu)) norms of both limits.
    """
    base_cfg = cfg if cfg is not None else SolverConfig(q=q)
    below = picard_solve(green, mu, nu, data,
                         base_cfg.model_copy(update={'q': q, 'direction': Direction.BELOW}))
    above = picard_solve(green, mu, nu, data,
                         base_cfg.model_copy(update={'q': q, 'direction': Direction.ABOVE}))
    diff = above.u.interior - below.u.interior
    gap = float(np.max(np.abs(diff))) if diff.size else 0.0
    scale = max(below.u.sup_norm(), above.u.sup_norm())
    minimality = float(np.min(diff)) if diff.size else 0.0
    norms = {}
    exponents = [q] + ([q + 1.0] if data.is_zero else [])
    if gamma is not None and gamma not in exponents:
        exponents.append(gamma)
    for exponent in exponents:
        norms[f'L^{exponent:g}'] = {'below': lgamma_norm(below.u, mu, exponent),
                                    'above': lgamma_norm(above.u, mu, exponent)}
    passed = gap <= 1e-6 * scale and minimality >= -1e-10 * scale
    note = "the gap of the two discrete limits is a surrogate for uniqueness; " + \
           "a gap above tolerance does not contradict uniqueness of exact solutions"
    _logger.info("uniqueness: gap %s, minimality margin %s", gap, minimality)
    return UniquenessReport(gap, minimality, passed, norms, below, above, note)


def check_class_invariance(green: GreenOperator, mu: GridMeasure, nu: GridMeasure,  # pylint: disable=too-many-arguments,disable=too-many-positional-arguments,disable=too-many-locals
                           data: BoundaryData, q: float, samples: int = 8,
                           seed: int = 0) -> MarginReport:
    """T maps {w : w0 <= w <= c2} into itself, with w0 = c1 G[mu]^(1/(1-q));
    checked on both extreme members and on random members."""
    problem = _Problem(green, mu, nu, data, q)
    lower = lower_bound_constant(q) * problem.g_mu.interior ** (1.0 / (1.0 - q))
    upper = np.full_like(lower, problem.c2)
    rng = np.random.default_rng(seed)
    members = [lower, upper] + [lower + rng.random(lower.shape) * (upper - lower)
                                for _ in range(samples)]
    margin = np.inf
    for member in members:
        image = problem.apply(member)
        margin = min(margin, float(np.min(image - lower)), float(np.min(upper - image)))
    if not np.isfinite(margin):
        margin = 0.0
    return margin_report('class_invariance', margin, 1e-12 * problem.c2,
                         f"members={len(members)}")


def check_operator_continuity(green: GreenOperator, mu: GridMeasure,
                              first: GridFunction, second: GridFunction,
                              q: float) -> MarginReport:
    """||T[w1] - T[w2]|| <= ||G[mu]|| ||w1 - w2||^q (the linear parts cancel)"""
    domain = green.domain
    zero = GridMeasure(domain, np.zeros(domain.n_interior))
    problem = _Problem(green, mu, zero, BoundaryData.constant(domain, 0.0), q)
    lhs = float(np.max(np.abs(problem.apply(first.interior) - problem.apply(second.interior))))
    rhs = problem.g_mu.sup_norm() * float(np.max(np.abs(first.interior - second.interior))) ** q
    return margin_report('operator_continuity', rhs - lhs, 1e-12 * max(rhs, lhs, 1e-300))


def lgamma_solution_check(green: GreenOperator, mu: GridMeasure, nu: GridMeasure,  # pylint: disable=too-many-arguments,disable=too-many-positional-arguments
                          data: BoundaryData, q: float, gamma: float,
                          u: Optional[GridFunction] = None) -> dict:
    """The integrability conditions G[mu] in L^(gamma/(1-q))(dmu) and
    G[nu] + H_f in L^gamma(dmu), next to the L^gamma(dmu) norm of u."""
    problem = _Problem(green, mu, nu, data, q)
    out = {
        'gamma': gamma,
        'g_mu_norm': lgamma_norm(problem.g_mu, mu, gamma / (1.0 - q)),
        'linear_part_norm': lgamma_norm(problem.base, mu, gamma),
    }
    if u is not None:
        out['u_norm'] = lgamma_norm(u, mu, gamma)
    return out


def solution_fields(report: SolveReport, green: GreenOperator, mu: GridMeasure,
                    nu: GridMeasure, data: BoundaryData) -> pd.DataFrame:
    """Per node: class, coordinates, u, G[mu], G[nu], H_f (interior then boundary)"""
    problem = _Problem(green, mu, nu, data, report.q)
    domain = green.domain
    nodes = domain.all_nodes
    df = pd.DataFrame({'node': np.arange(nodes.shape[0]),
                       'class': ['interior'] * domain.n_interior +
                                ['boundary'] * domain.n_boundary})
    for k, name in enumerate('xyz'[:domain.dimension]):
        df[name] = nodes[:, k]
    df['u'] = report.u.values
    df['G_mu'] = problem.g_mu.values
    df['G_nu'] = problem.g_nu.values
    df['H_f'] = problem.h_f.values
    return df


def solution_fields_to_csv(report: SolveReport, green: GreenOperator, mu: GridMeasure,  # pylint: disable=too-many-arguments,disable=too-many-positional-arguments
                           nu: GridMeasure, data: BoundaryData, fname: Union[str, Path]):
    """Writes solution_fields as CSV"""
    solution_fields(report, green, mu, nu, data).to_csv(fname, index=False,
                                                        float_format="%.17g")

# coding: utf-8
"""
Experiment definitions (one JSON document per experiment) and their runner
"""
# general packages
import json
import logging
import os
import traceback
from pathlib import Path
from typing import Literal, NamedTuple, Optional, Union

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, ValidationError

# package imports
from .artifacts import ArtifactWriter, verify_manifest
from .ballsums import ball_oscillation
from .domain import (
    EmptyInteriorError,
    GridDomain,
    ShapeDescriptor,
    nearest_interior_node,
    refinement_levels,
    shape_from_name,
)
from .green import (
    BoundaryData,
    GreenOperator,
    GridFunction,
    build_green,
    check_green_properties,
    fit_green_beta,
    green_matrix,
    green_potential,
    green_rows_to_csv,
    harmonic_extension,
    kernel_oracle_error,
)
from .gridutils import MarginReport, lambdify_expression, margin_report
from .measure import (
    Atom,
    GridMeasure,
    add_atoms,
    dist_alpha_measure,
    dyadic_radii,
    measure_from_csv,
    measure_from_expression,
    total_mass_study,
    zero_measure,
)
from .potential import (
    ExponentMode,
    check_bounded_potential,
    check_domination,
    check_iterated_inequality,
    check_lower_bound,
    finite_energy_threshold_sweep,
    kato_modulus,
    kato_threshold_sweep,
    katocond_at_infinity,
)
from .scaling import error_reduced, fit_loglog_slope, reduction_factors
from .solver import (
    Direction,
    SolverConfig,
    apply_T,
    check_class_invariance,
    check_operator_continuity,
    first_iterate,
    lgamma_solution_check,
    newton_oracle,
    picard_solve,
    solution_fields,
    uniqueness_experiment,
    verify_estimates,
)


_logger = logging.getLogger('experiments')

DEFAULT_OUT_DIR = os.getenv("SUBLINEAR_OUT_DIR", "output")

EXIT_OK = 0
EXIT_ASSERTION = 1
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


class ConfigError(ValueError):
    """The experiment document could not be read or validated."""


class InvariantViolation(AssertionError):
    """An enabled assertion failed."""

    def __init__(self, failures: list[MarginReport]):
        self.failures = failures
        super().__init__("; ".join(
            f"{f.name} failed with margin {f.margin:.6g} (tolerance {f.tolerance:.3g})" +
            (f" [{f.detail}]" if f.detail else "") for f in failures))


class ShapeSpec(BaseModel):
    """Continuum domain"""
    model_config = ConfigDict(extra="forbid")

    kind: Literal['square', 'cube', 'disk', 'ball', 'lshape']
    radius: float = Field(1.0, gt=0.0)

    def descriptor(self) -> ShapeDescriptor:
        """The ShapeDescriptor of this shape"""
        return shape_from_name(self.kind, radius=self.radius)


class AtomSpec(BaseModel):
    """A point mass at the interior node nearest to a point"""
    model_config = ConfigDict(extra="forbid")

    point: list[float]
    mass: float = Field(ge=0.0)


class MeasureSpec(BaseModel):
    """A measure as the sum of the given parts (zero when none is given)"""
    model_config = ConfigDict(extra="forbid")

    density: Optional[str] = None          # LaTeX density in x, y, z
    alpha: Optional[float] = None          # delta^-alpha dx
    delta_floor: Optional[float] = Field(None, gt=0.0)  # in units of h
    atoms: list[AtomSpec] = []
    csv: Optional[str] = None
    scale: float = Field(1.0, ge=0.0)

    def build(self, domain: GridDomain) -> GridMeasure:
        """The measure on a concrete domain"""
        measure = zero_measure(domain)
        if self.density is not None:
            measure = measure + measure_from_expression(domain, self.density)
        if self.alpha is not None:
            floor = None if self.delta_floor is None else self.delta_floor * domain.h
            measure = measure + dist_alpha_measure(domain, self.alpha, delta_floor=floor)
        if self.csv is not None:
            measure = measure + measure_from_csv(domain, self.csv)
        if self.atoms:
            measure = add_atoms(measure, [Atom(nearest_interior_node(domain, a.point), a.mass)
                                          for a in self.atoms])
        return measure.scaled(self.scale) if self.scale != 1.0 else measure


class BoundarySpec(BaseModel):
    """Boundary data: a constant, a LaTeX expression or a CSV file"""
    model_config = ConfigDict(extra="forbid")

    constant: Optional[float] = Field(None, ge=0.0)
    expression: Optional[str] = None
    csv: Optional[str] = None

    def build(self, domain: GridDomain) -> BoundaryData:
        """The boundary data on a concrete domain"""
        if self.expression is not None:
            return BoundaryData.from_expression(domain, self.expression)
        if self.csv is not None:
            return BoundaryData.from_csv(domain, self.csv)
        return BoundaryData.constant(domain, self.constant or 0.0)


class SolverSettings(BaseModel):
    """Solver settings of an experiment; q is set on the experiment"""
    model_config = ConfigDict(extra="forbid")

    tol: float = Field(1e-10, gt=0.0)
    max_iterations: int = Field(10000, gt=0)
    direction: Direction = Direction.BELOW
    oracle: bool = False
    both_directions: bool = False

    def to_config(self, q: float) -> SolverConfig:
        """The SolverConfig for the given exponent"""
        return SolverConfig(q=q, tol=self.tol, max_iterations=self.max_iterations,
                            direction=self.direction, oracle=self.oracle)


class ExperimentConfig(BaseModel):
    """One experiment. Unknown keys are rejected."""
    model_config = ConfigDict(extra="forbid")

    kind: Literal['solve', 'kato', 'threshold', 'verify', 'green-test']
    shape: ShapeSpec
    h: float = Field(gt=0.0)
    levels: int = Field(1, ge=1)
    q: float = Field(0.5, gt=0.0, lt=1.0)
    gamma: float = Field(1.5, gt=0.0)
    mu: MeasureSpec = MeasureSpec()
    nu: MeasureSpec = MeasureSpec()
    f: BoundarySpec = BoundarySpec()
    solver: SolverSettings = SolverSettings()
    exact: Optional[str] = None             # manufactured solution, LaTeX
    holder: bool = False
    alphas: list[float] = []
    exponent_mode: Literal['proof', 'statement'] = 'proof'
    expect: dict[str, Literal['bounded', 'diverging', 'inconclusive']] = {}
    expected_slope: Optional[float] = None
    slope_tolerance: float = Field(0.3, gt=0.0)
    radii: Optional[list[float]] = None
    with_center_uniform: bool = True
    iterated_s: list[float] = [1.0, 1.5, 2.0, 3.0]
    random_instances: int = Field(5, ge=0)
    corrupt_green: Optional[Literal['symmetry']] = None
    assertions: bool = True
    output_dir: Optional[str] = None
    seed: int = Field(0, ge=0, lt=2 ** 64)
    jobs: int = Field(1, ge=1)


def load_config(fname: Union[str, Path], overrides: Optional[dict] = None) -> ExperimentConfig:
    """Reads and validates an experiment document; overrides (CLI options)
    replace top level keys. Raises ConfigError."""
    try:
        with open(fname, 'rt', encoding='utf8') as f:
            content = json.load(f)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"Cannot read config {fname}: {exc}") from exc
    if not isinstance(content, dict):
        raise ConfigError(f"Config {fname} must be a JSON object")
    content.update({k: v for k, v in (overrides or {}).items() if v is not None})
    try:
        return ExperimentConfig.model_validate(content)
    except ValidationError as exc:
        raise ConfigError(f"Invalid config {fname}:\n{exc}") from exc


class OscillationReport:
    """
    osc(x, r) = max - min of u over the nodes of the closure in B(x, r),
    per sampled center, with the fitted log-log exponent per center and
    per region (interior: delta >= diam/8, boundary layer otherwise).
    """

    def __init__(self, radii: np.ndarray, centers: np.ndarray,
                 oscillation: np.ndarray, exponents: np.ndarray, regions: np.ndarray):
        self.radii = radii
        self.centers = centers
        self.oscillation = oscillation
        self.exponents = exponents
        self.regions = regions

    def flagged(self) -> np.ndarray:
        """Centers whose exponent is undefined or outside (0, 1]"""
        return ~(np.isfinite(self.exponents) & (self.exponents > 0) & (self.exponents <= 1))

    def region_summary(self) -> dict:
        """median / min exponent and flag count per region"""
        summary = {}
        for region in ('interior', 'boundary_layer'):
            sel = self.regions == region
            finite = sel & np.isfinite(self.exponents)
            summary[region] = {
                'centers': int(np.count_nonzero(sel)),
                'median_exponent': float(np.median(self.exponents[finite]))
                if np.any(finite) else None,
                'min_exponent': float(np.min(self.exponents[finite]))
                if np.any(finite) else None,
                'flagged': int(np.count_nonzero(sel & self.flagged())),
            }
        return summary

    def to_frame(self) -> pd.DataFrame:
        """One row per (center, radius)"""
        n_c, n_r = self.oscillation.shape
        return pd.DataFrame({
            'center': np.repeat(self.centers, n_r),
            'region': np.repeat(self.regions, n_r),
            'r': np.tile(self.radii, n_c),
            'oscillation': self.oscillation.ravel(),
            'exponent': np.repeat(self.exponents, n_r),
        })

    def to_dict(self):
        """Converts this object to a JSON serializable dictionary"""
        return {'radii': self.radii.tolist(), 'regions': self.region_summary()}


def holder_oscillation(u: GridFunction, domain: GridDomain,
                       radii: Optional[np.ndarray] = None,
                       centers: Optional[np.ndarray] = None,
                       stride: int = 7) -> OscillationReport:
    """
    Oscillation of u over dyadic balls and the local Hoelder exponent fitted
    as the slope of log osc against log r. Report-only: the fit cannot tell
    an exponent from a slightly larger one at desk scale.
    """
    if radii is None:
        radii = dyadic_radii(domain)
        radii = radii[radii <= domain.diameter / 4.0 * (1 + 1e-12)]
    radii = np.asarray(radii, dtype=float)
    if centers is None:
        centers = np.arange(0, domain.n_interior, max(stride, 1))
    centers = np.asarray(centers, dtype=np.int64)
    osc = ball_oscillation(domain.all_nodes, u.values, domain.interior[centers], radii)
    exponents = np.array([fit_loglog_slope(radii, row).slope for row in osc])
    regions = np.where(domain.delta[centers] >= domain.diameter / 8.0,
                       'interior', 'boundary_layer')
    return OscillationReport(radii, centers, osc, exponents, regions)


class ExperimentOutcome(NamedTuple):
    """Exit status, output directory, emitted files and failed invariants"""
    status: int
    out_dir: Path
    files: list[str]
    failures: list[MarginReport]
    message: str = ""


class _Run:
    """State of one experiment: config, writer, collected assertion results"""

    def __init__(self, config: ExperimentConfig, writer: ArtifactWriter):
        self.config = config
        self.writer = writer
        self.checks: list[MarginReport] = []
        self.rng = np.random.default_rng(config.seed)
        self.shape = config.shape.descriptor()

    def check(self, report: MarginReport) -> MarginReport:
        """Records an assertion result"""
        self.checks.append(report)
        if not report.passed:
            _logger.error("invariant %s failed: margin %s, tolerance %s %s",
                          report.name, report.margin, report.tolerance, report.detail)
        return report

    def require(self, name: str, ok: bool, detail: str = "") -> MarginReport:
        """Records a boolean assertion"""
        return self.check(MarginReport(name, 0.0 if ok else -1.0, 0.0, bool(ok), detail))

    def domains(self) -> tuple[list[GridDomain], bool]:
        """refinement_study of the config"""
        return refinement_study(self.config)

    @property
    def failures(self) -> list[MarginReport]:
        """The failed assertions"""
        return [c for c in self.checks if not c.passed]


def refinement_study(config: ExperimentConfig) -> tuple[list[GridDomain], bool]:
    """The refinement levels of an experiment and whether the study is
    inconclusive (fewer than three levels)."""
    domains = refinement_levels(config.shape.descriptor(), config.h, config.levels)
    return domains, len(domains) < 3


def _level_name(prefix: str, level: int, ext: str) -> str:
    return f"{prefix}_L{level}.{ext}"


def _run_solve(run: _Run) -> dict:  # pylint: disable=too-many-locals
    cfg = run.config
    solver_cfg = cfg.solver.to_config(cfg.q)
    domains, inconclusive = run.domains()
    exact = lambdify_expression(cfg.exact) if cfg.exact else None
    errors, summary = [], {'levels': []}
    for level, domain in enumerate(domains):
        green = build_green(domain)
        mu, nu, data = cfg.mu.build(domain), cfg.nu.build(domain), cfg.f.build(domain)
        report = picard_solve(green, mu, nu, data, solver_cfg)
        verify_estimates(report, green, mu, nu, data, cfg.q)
        report.margins['lower_bound'] = check_lower_bound(green, mu, report.u, cfg.q)
        for margin in report.margins.values():
            run.check(margin)
        run.require('monotone_iteration', report.monotonicity_violations == 0,
                    f"{report.monotonicity_violations} violations")
        run.require('uniform_bound_along_iteration', report.bound_violations == 0,
                    f"{report.bound_violations} violations")
        if report.oracle_gap is not None:
            run.check(margin_report('newton_agreement', -report.oracle_gap, 1e-8,
                                    "sup |newton - picard|"))
        entry = {'h': domain.h, 'report': report.to_dict(),
                 'lgamma': lgamma_solution_check(green, mu, nu, data, cfg.q, cfg.gamma, report.u)}
        if cfg.solver.both_directions:
            uniq = uniqueness_experiment(green, mu, nu, data, cfg.q, cfg.gamma, solver_cfg)
            run.check(MarginReport('discrete_uniqueness', -uniq.gap, 1e-6 * report.u.sup_norm(),
                                   uniq.passed, uniq.note))
            entry['uniqueness'] = uniq.to_dict()
        if exact is not None:
            error = float(np.max(np.abs(report.u.interior - exact(domain.interior))))
            errors.append(error)
            entry['sup_error'] = error
        run.writer.write_json(_level_name('solve', level, 'json'), entry)
        run.writer.write_csv(_level_name('fields', level, 'csv'),
                             solution_fields(report, green, mu, nu, data))
        summary['levels'].append({'h': domain.h, 'iterations': report.iterations,
                                  'residual': report.residual})
        if cfg.holder and level == len(domains) - 1:
            osc = holder_oscillation(report.u, domain)
            run.writer.write_csv('oscillation.csv', osc.to_frame())
            summary['oscillation'] = osc.to_dict()
    if errors:
        factors = reduction_factors(errors)
        summary['errors'] = errors
        summary['reduction_factors'] = factors.tolist()
        summary['inconclusive'] = inconclusive
        for coarse, fine in zip(errors[:-1], errors[1:]):
            run.require('refinement_error_reduction', error_reduced(coarse, fine, floor=1e-9),
                        f"{coarse:.3g} -> {fine:.3g}")
    return summary


def _run_kato(run: _Run) -> dict:
    cfg = run.config
    domains, inconclusive = run.domains()
    summary = {'levels': [], 'inconclusive': inconclusive,
               'at_infinity': None}
    for level, domain in enumerate(domains):
        green = build_green(domain)
        mu = cfg.mu.build(domain)
        summary['at_infinity'] = katocond_at_infinity(domain, mu)
        report = kato_modulus(green, mu, None if cfg.radii is None else np.array(cfg.radii),
                              with_center_uniform=cfg.with_center_uniform)
        run.require('kato_monotone', report.is_monotone())
        run.check(report.covering_margin())
        run.check(check_bounded_potential(green, mu, report))
        if cfg.expected_slope is not None and level == len(domains) - 1:
            run.check(margin_report('kato_slope',
                                    cfg.slope_tolerance - abs(report.slope.slope - cfg.expected_slope)
                                    if report.slope_defined else -np.inf, 0.0,
                                    f"slope {report.slope.slope} vs {cfg.expected_slope}"))
        run.writer.write_csv(_level_name('kato', level, 'csv'), report.to_frame())
        summary['levels'].append({'h': domain.h, **report.to_dict()})
    if cfg.alphas:
        sweep = kato_threshold_sweep(domains[-1], cfg.alphas, cfg.q, jobs=cfg.jobs)
        run.writer.write_csv('kato_sweep.csv', sweep.frame)
        summary['sweep'] = sweep.to_dict()
    return summary


def _run_threshold(run: _Run) -> dict:
    cfg = run.config
    mode = ExponentMode[cfg.exponent_mode.upper()]
    sweep = finite_energy_threshold_sweep(run.shape, cfg.h, cfg.levels, cfg.q, cfg.gamma,
                                          cfg.alphas, mode=mode, jobs=cfg.jobs)
    run.writer.write_csv('threshold.csv', sweep.frame)
    masses = [total_mass_study(run.shape, alpha, cfg.h, cfg.levels).assign(alpha=alpha)
              for alpha in cfg.alphas]
    if masses:
        run.writer.write_csv('total_mass.csv', pd.concat(masses, ignore_index=True))
    for alpha, expected in sorted(cfg.expect.items()):
        rows = sweep.frame[np.isclose(sweep.frame['alpha'], float(alpha))]
        got = rows['classification'].iloc[0] if len(rows) else 'missing'
        run.require('threshold_classification', got == expected,
                    f"alpha={alpha}: {got}, expected {expected}")
    return {'sweep': sweep.to_dict(), 'inconclusive': cfg.levels < 3}


def _random_measure(run: _Run, domain: GridDomain) -> GridMeasure:
    density = run.rng.random(domain.n_interior)
    density[run.rng.random(domain.n_interior) < 0.3] = 0.0
    return GridMeasure(domain, density * domain.cell_volume)


def _corrupt(green: GreenOperator, kind: Optional[str]) -> GreenOperator:
    if kind is None:
        return green
    matrix = np.array(green_matrix(green))
    if kind == 'symmetry' and matrix.shape[0] >= 2:
        matrix[0, 1] *= 1.5
    _logger.warning("green matrix corrupted on purpose (%s)", kind)
    return green.with_dense(matrix)


def _run_verify(run: _Run, manifest: Optional[Path] = None) -> dict:  # pylint: disable=too-many-locals
    cfg = run.config
    domain = run.domains()[0][0]
    green = build_green(domain)
    summary = {'h': domain.h}
    if green.has_dense:
        for report in check_green_properties(_corrupt(green, cfg.corrupt_green)):
            run.check(report)
    worst = {}
    for _ in range(cfg.random_instances):
        measure = _random_measure(run, domain)
        for s in cfg.iterated_s:
            report = run.check(check_iterated_inequality(green, measure, s))
            worst[s] = min(worst.get(s, np.inf), report.margin)
        run.check(check_domination(green, measure))
    summary['iterated_inequality_worst_margin'] = {str(s): m for s, m in worst.items()}

    mu, nu, data = cfg.mu.build(domain), cfg.nu.build(domain), cfg.f.build(domain)
    scale = 1.0 + data.sup_norm()
    for _ in range(cfg.random_instances):
        low = run.rng.random(domain.n_interior) * scale
        high = low + run.rng.random(domain.n_interior) * scale
        t_low = apply_T(green, mu, nu, data, GridFunction(domain, low), cfg.q).interior
        t_high = apply_T(green, mu, nu, data, GridFunction(domain, high), cfg.q).interior
        run.check(margin_report('operator_monotone', float(np.min(t_high - t_low)),
                                1e-13 * float(np.max(np.abs(t_high)))))
        run.check(check_operator_continuity(green, mu, GridFunction(domain, low),
                                            GridFunction(domain, high), cfg.q))
    solver_cfg = cfg.solver.to_config(cfg.q)
    report = picard_solve(green, mu, nu, data, solver_cfg)
    for margin in verify_estimates(report, green, mu, nu, data, cfg.q).values():
        run.check(margin)
    run.check(check_lower_bound(green, mu, report.u, cfg.q))
    run.check(check_class_invariance(green, mu, nu, data, cfg.q, seed=cfg.seed))
    if green.has_dense:
        oracle = newton_oracle(green, mu, nu, data, cfg.q,
                               first_iterate(green, mu, nu, data, cfg.q))
        run.check(margin_report('newton_agreement',
                                -float(np.max(np.abs(oracle.interior - report.u.interior))),
                                1e-8))
    summary['solve'] = report.to_dict()
    if manifest is not None:
        mismatches = verify_manifest(manifest)
        run.require('manifest_hashes', not mismatches, ", ".join(mismatches))
        summary['manifest_mismatches'] = mismatches
    return summary


def _run_green_test(run: _Run) -> dict:  # pylint: disable=too-many-locals
    cfg = run.config
    domains, inconclusive = run.domains()
    summary = {'levels': [], 'inconclusive': inconclusive}
    run.writer.write_json('domain_L0.json', domains[0].to_dict())
    center_errors, kernel_errors = [], []
    for level, domain in enumerate(domains):
        green = build_green(domain)
        entry = {'h': domain.h, 'n_interior': domain.n_interior}
        if green.has_dense:
            for report in check_green_properties(_corrupt(green, cfg.corrupt_green)):
                run.check(report)
            entry['beta'] = fit_green_beta(green).beta if domain.n_interior <= 2500 else None
            if level == 0:
                green_rows_to_csv(green, np.arange(min(3, domain.n_interior)),
                                  run.writer.register('green_rows_L0.csv'))
        if domain.is_curved:
            centre = nearest_interior_node(domain, np.zeros(domain.dimension))
            lebesgue = GridMeasure(domain, np.full(domain.n_interior, domain.cell_volume))
            radius = domain.shape.radius
            exact = (radius ** 2 - float(domain.interior[centre] @ domain.interior[centre])) \
                / (2.0 * domain.dimension)
            error = abs(green_potential(green, lebesgue).interior[centre] - exact)
            center_errors.append(error)
            entry['center_error'] = error
            if green.has_dense:
                kernel_errors.append(kernel_oracle_error(green))
                entry['kernel_error'] = kernel_errors[-1]
        data = cfg.f.build(domain)
        extension = harmonic_extension(green, data)
        low = float(np.min(data.values)) if data.values.size else 0.0
        run.check(margin_report('harmonic_max_principle',
                                min(float(np.min(extension.interior)) - low,
                                    data.sup_norm() - float(np.max(extension.interior))),
                                1e-12 * max(data.sup_norm(), 1.0)))
        summary['levels'].append(entry)
    for coarse, fine in zip(center_errors[:-1], center_errors[1:]):
        run.require('center_value_convergence', error_reduced(coarse, fine, floor=1e-12),
                    f"{coarse:.3g} -> {fine:.3g}")
    summary['center_errors'] = center_errors
    summary['kernel_errors'] = kernel_errors
    return summary


_RUNNERS = {
    'solve': _run_solve,
    'kato': _run_kato,
    'threshold': _run_threshold,
    'green-test': _run_green_test,
}


def run_experiment(config: ExperimentConfig, out_dir: Optional[Union[str, Path]] = None,
                   manifest: Optional[Union[str, Path]] = None) -> ExperimentOutcome:
    """
    Runs one experiment, writes report.json, the CSV tables and manifest.json
    into the output directory and returns the exit status:
    0 success, 1 failed assertion, 2 unusable configuration (e.g. h too
    coarse for the shape), 3 numerical failure.
    """
    out = Path(out_dir or config.output_dir or DEFAULT_OUT_DIR)
    writer = ArtifactWriter(out)
    run = _Run(config, writer)
    status, message, summary = EXIT_OK, "", {}
    try:
        if config.kind == 'verify':
            summary = _run_verify(run, None if manifest is None else Path(manifest))
        else:
            summary = _RUNNERS[config.kind](run)
        if config.assertions and run.failures:
            raise InvariantViolation(run.failures)
    except InvariantViolation as exc:
        status, message = EXIT_ASSERTION, str(exc)
        _logger.error("experiment %s: %s", config.kind, message)
    except (ConfigError, EmptyInteriorError) as exc:
        status, message = EXIT_CONFIG, f"{type(exc).__name__}: {exc}"
        _logger.error("experiment %s: %s", config.kind, message)
    except (RuntimeError, np.linalg.LinAlgError, ValueError) as exc:
        status, message = EXIT_NUMERICAL, f"{type(exc).__name__}: {exc}"
        _logger.error("experiment %s failed: %s\n%s", config.kind, message,
                      traceback.format_exc())
    writer.write_json('report.json', {
        'kind': config.kind,
        'config': config.model_dump(mode='json', exclude={'output_dir'}),
        'status': status,
        'message': message,
        'checks': [c.to_dict() for c in run.checks],
        'summary': summary,
    })
    writer.write_manifest()
    _logger.info("experiment %s finished with status %s", config.kind, status)
    return ExperimentOutcome(status, out, list(writer.files), run.failures, message)

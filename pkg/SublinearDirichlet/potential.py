# coding: utf-8
"""
Potential analysis on the discrete Green operator: Kato moduli, the iterated
and lower-bound inequalities, L^gamma norms and the threshold sweeps of the
weight measures
"""
# general packages
from concurrent.futures import ThreadPoolExecutor
from enum import Enum, auto
import logging
import os
from typing import Callable, NamedTuple, Optional

import numpy as np
import pandas as pd

# package imports
from .ballsums import ball_sums
from .domain import GridDomain, GridShape, ShapeDescriptor, refinement_levels
from .green import (
    GreenOperator,
    GridFunction,
    build_green,
    fit_green_beta,
    green_matrix,
    green_potential,
    green_rows,
)
from .gridutils import MarginReport, margin_report
from .measure import (
    GridMeasure,
    check_same_domain,
    dist_alpha_measure,
    dyadic_radii,
)
from .scaling import (
    RatioVerdict,
    SlopeFit,
    classify_ratios,
    fit_loglog_slope,
    reduction_factors,
    refinement_ratios,
)


_logger = logging.getLogger('potential')

KATO_SAMPLE_STRIDE = int(os.getenv("KATO_SAMPLE_STRIDE", "37"))
# rows per block of the ball-sum kernel, bounds the weight buffer
_ROW_BLOCK = 512
# Kato slopes below this are reported as borderline
BORDERLINE_SLOPE = 0.2


class HypothesisViolationError(ValueError):
    """The supersolution hypothesis u >= G[u^q dw] does not hold."""


class KatoReport:  # pylint: disable=too-many-instance-attributes
    """
    Kato moduli of a measure on a radius grid:
      modulus[k]        = sup_x  sum_{|x-y| < r_k} g(x,y) m_y
      center_modulus[k] = sup_z sup_x sum_{|z-y| < r_k} g(x,y) m_y, z over the closure
    lower_bound is set when the supremum was only taken over sampled x.
    """

    def __init__(self,  # pylint: disable=too-many-arguments,disable=too-many-positional-arguments
                 radii: np.ndarray,
                 modulus: np.ndarray,
                 center_modulus: Optional[np.ndarray],
                 slope: SlopeFit,
                 sup_norm: float,
                 lower_bound: bool,
                 n_centers: int):
        self.radii = radii
        self.modulus = modulus
        self.center_modulus = center_modulus
        self.slope = slope
        self.sup_norm = sup_norm
        self.lower_bound = lower_bound
        self.n_centers = n_centers

    @property
    def slope_defined(self) -> bool:
        """False for the zero measure or a window without two positive moduli"""
        return self.slope.defined

    def is_monotone(self) -> bool:
        """K and K_c nondecreasing in r, exactly"""
        ok = bool(np.all(np.diff(self.modulus) >= 0))
        if self.center_modulus is not None:
            ok = ok and bool(np.all(np.diff(self.center_modulus) >= 0))
        return ok

    def covering_margin(self, rel_tol: float = 1e-12) -> MarginReport:
        """min over r with 2r in the grid of K_c(2r) - K(r)"""
        if self.center_modulus is None:
            return MarginReport('kato_covering', 0.0, 0.0, True, "center modulus not computed")
        margin = np.inf
        for k, r in enumerate(self.radii):
            match = np.nonzero(np.isclose(self.radii, 2.0 * r, rtol=1e-12, atol=0.0))[0]
            if match.size:
                margin = min(margin, self.center_modulus[match[0]] - self.modulus[k])
        if not np.isfinite(margin):
            margin = 0.0
        scale = float(np.max(self.modulus)) if self.modulus.size else 0.0
        return margin_report('kato_covering', margin, rel_tol * max(scale, 1e-300),
                             "min K_c(2r) - K(r)")

    def to_frame(self) -> pd.DataFrame:
        """One row per radius"""
        df = pd.DataFrame({'r': self.radii, 'modulus': self.modulus})
        if self.center_modulus is not None:
            df['center_modulus'] = self.center_modulus
        df['slope'] = self.slope.slope
        df['lower_bound'] = self.lower_bound
        return df

    def to_dict(self):
        """Converts this object to a JSON serializable dictionary"""
        return {
            'radii': [float(r) for r in self.radii],
            'modulus': [float(k) for k in self.modulus],
            'center_modulus': None if self.center_modulus is None
            else [float(k) for k in self.center_modulus],
            'slope': None if not self.slope_defined else self.slope.slope,
            'slope_points': self.slope.n_points,
            'sup_norm': self.sup_norm,
            'lower_bound': self.lower_bound,
            'n_centers': self.n_centers,
        }


def kato_sample_nodes(domain: GridDomain, stride: Optional[int] = None) -> np.ndarray:
    """Sampled x for domains above the dense cap: the lattice half-line from
    the centre towards the boundary along +e_0 plus every stride-th node."""
    stride = KATO_SAMPLE_STRIDE if stride is None else stride
    pts = domain.interior
    if domain.shape.kind == GridShape.DISK:
        centre = np.zeros(domain.dimension)
    elif domain.shape.kind == GridShape.LSHAPE:
        centre = np.array([0.25, 0.25])
    else:
        centre = np.full(domain.dimension, 0.5)
    on_line = np.ones(pts.shape[0], dtype=bool)
    for axis in range(1, domain.dimension):
        offset = np.abs(pts[:, axis] - centre[axis])
        on_line &= offset <= offset.min() + 1e-12
    ray = np.nonzero(on_line & (pts[:, 0] >= centre[0] - 1e-12))[0]
    strided = np.arange(0, pts.shape[0], max(stride, 1))
    return np.unique(np.concatenate([ray, strided]))


def _center_uniform_modulus(green: GreenOperator, masses: np.ndarray,
                            radii: np.ndarray) -> np.ndarray:
    """sup_z sup_x sum_{|z-y|<r} g(x,y) m_y with z over all nodes of the closure,
    as blocks of matrix products g @ (mask_z * m)^T."""
    domain = green.domain
    g = green_matrix(green)
    centers = domain.all_nodes
    pts = domain.interior
    out = np.zeros(radii.shape[0])
    for start in range(0, centers.shape[0], _ROW_BLOCK):
        block = centers[start:start + _ROW_BLOCK]
        dist2 = np.sum((block[:, None, :] - pts[None, :, :]) ** 2, axis=2)
        for k, r in enumerate(radii):
            weights = np.where(dist2 < r * r, masses[None, :], 0.0)
            out[k] = max(out[k], float(np.max(g @ weights.T)))
    return out


def kato_modulus(green: GreenOperator, measure: GridMeasure,
                 radii: Optional[np.ndarray] = None,
                 with_center_uniform: bool = True) -> KatoReport:
    """
    Kato moduli K(r) and K_c(r) of the measure. Exact suprema over all
    interior x when the dense Green matrix is available; above the node cap the
    supremum runs over kato_sample_nodes and the report is flagged as a lower
    bound (K_c is then skipped). The slope of log K against log r is fitted on
    the window 4h <= r <= diam/4.
    """
    domain = green.domain
    check_same_domain(domain, measure.domain, "Green operator and measure")
    radii = dyadic_radii(domain) if radii is None else np.sort(np.asarray(radii, dtype=float))
    if np.any(radii < 2.0 * domain.h * (1 - 1e-12)):
        raise ValueError(f"Kato radii must be >= 2h = {2.0 * domain.h}")
    masses = measure.masses
    lower_bound = not green.has_dense
    nodes = kato_sample_nodes(domain) if lower_bound else np.arange(domain.n_interior)
    if lower_bound:
        _logger.warning("kato_modulus: %s interior nodes exceed the dense cap, " +
                        "sampling %s rows (lower bound)", domain.n_interior, nodes.shape[0])

    # the trailing infinite radius collects the full potential
    extended = np.append(radii, np.inf)
    sums = np.zeros((nodes.shape[0], extended.shape[0]))
    if not measure.is_zero:
        for start in range(0, nodes.shape[0], _ROW_BLOCK):
            block = nodes[start:start + _ROW_BLOCK]
            rows = green_rows(green, block) * masses[None, :]
            sums[start:start + block.shape[0]] = ball_sums(
                domain.interior, rows, domain.interior[block], extended)
    modulus = np.max(sums[:, :-1], axis=0)
    sup_norm = float(np.max(sums[:, -1]))

    center_modulus = None
    if with_center_uniform and green.has_dense:
        center_modulus = np.zeros(radii.shape[0]) if measure.is_zero \
            else _center_uniform_modulus(green, masses, radii)

    slope = fit_loglog_slope(radii, modulus, window=(4.0 * domain.h, domain.diameter / 4.0))
    if measure.is_zero:
        _logger.debug("kato_modulus: zero measure, slope undefined")
    report = KatoReport(radii, modulus, center_modulus, slope, sup_norm,
                        lower_bound, int(nodes.shape[0]))
    _logger.info("kato modulus on %s: slope %s, sup %s", domain, slope.slope, sup_norm)
    return report


def katocond_at_infinity(domain: GridDomain, measure: GridMeasure) -> bool:  # pylint: disable=unused-argument
    """The mass-near-infinity part of the Kato condition. It has no content on
    bounded domains and always holds here."""
    return True


def check_bounded_potential(green: GreenOperator, measure: GridMeasure,
                            report: Optional[KatoReport] = None) -> MarginReport:
    """||G[w]||_inf is finite and agrees with the Kato modulus at r = diam."""
    report = kato_modulus(green, measure, with_center_uniform=False) if report is None \
        else report
    potential = green_potential(green, measure)
    finite = bool(np.isfinite(potential.sup_norm()))
    at_diam = float(report.modulus[-1])
    margin = -abs(at_diam - report.sup_norm)
    gap = abs(report.sup_norm - potential.sup_norm())
    detail = f"K(diam)={at_diam}, sup G[w]={potential.sup_norm()}, finite={finite}"
    if report.lower_bound:
        # sampled rows only bound the supremum from below
        return MarginReport('bounded_potential', margin, 0.0, finite and margin == 0.0, detail)
    return MarginReport('bounded_potential', margin, 0.0,
                        finite and margin == 0.0 and
                        gap <= 1e-10 * max(potential.sup_norm(), 1e-300),
                        detail)


def check_domination(green: GreenOperator, measure: GridMeasure) -> MarginReport:
    """The maximum of G[w] over all nodes is attained on or next to the support."""
    domain = green.domain
    potential = green_potential(green, measure)
    if measure.is_zero:
        return MarginReport('domination', 0.0, 0.0, True, "zero measure")
    near = np.zeros(domain.n_interior, dtype=bool)
    support = measure.support
    near[support] = True
    links = domain.stencil_index[support].ravel()
    near[links[links >= 0]] = True
    top = float(np.max(potential.interior))
    top_near = float(np.max(potential.interior[near]))
    return margin_report('domination', top_near - top, 1e-12 * top,
                         "max over support and neighbours - global max")


def max_neighbor_jump(function: GridFunction) -> float:
    """max |u(x) - u(y)| over stencil neighbours (interior-interior and
    interior-boundary)"""
    domain = function.domain
    links = domain.stencil_index
    neighbour = np.where(links >= 0,
                         function.interior[np.maximum(links, 0)],
                         function.boundary[np.maximum(-1 - links, 0)])
    return float(np.max(np.abs(neighbour - function.interior[:, None])))


def continuity_surrogate(shape: ShapeDescriptor, h: float, levels: int,
                         measure_builder: Callable[[GridDomain], GridMeasure]
                         ) -> pd.DataFrame:
    """Max neighbour jump of G[w] across refinements and its decay factor
    per refinement (a discrete modulus of continuity)."""
    rows = []
    for domain in refinement_levels(shape, h, levels):
        green = build_green(domain)
        jump = max_neighbor_jump(green_potential(green, measure_builder(domain)))
        rows.append({'h': domain.h, 'max_jump': jump})
    df = pd.DataFrame(rows)
    df['decay'] = np.append(np.nan, reduction_factors(df['max_jump'].to_numpy()))
    return df


def check_iterated_inequality(green: GreenOperator, measure: GridMeasure,
                              s: float, rel_tol: float = 1e-12) -> MarginReport:
    """min over nodes of s G[G[w]^(s-1) dw] - G[w]^s, tolerance rel_tol * max G[w]^s"""
    if s < 1:
        raise ValueError(f"The iterated inequality needs s >= 1, got {s}")
    potential = green_potential(green, measure).interior
    lhs = potential ** s
    weighted = GridMeasure(measure.domain, potential ** (s - 1.0) * measure.masses)
    rhs = s * green_potential(green, weighted).interior
    margin = float(np.min(rhs - lhs)) if lhs.size else 0.0
    scale = float(np.max(lhs)) if lhs.size else 0.0
    return margin_report('iterated_inequality', margin, rel_tol * scale, f"s={s}")


def lower_bound_constant(q: float) -> float:
    """c1 = (1-q)^(1/(1-q))"""
    return (1.0 - q) ** (1.0 / (1.0 - q))


def check_lower_bound(green: GreenOperator, measure: GridMeasure, u: GridFunction,
                      q: float, rel_tol: float = 1e-10,
                      hypothesis_tol: float = 1e-8) -> MarginReport:
    """
    min over nodes of u - c1 G[w]^(1/(1-q)) for a supersolution
    u >= G[u^q dw]; raises HypothesisViolationError if u is not one (up to
    hypothesis_tol ||u||, which leaves room for the residual of an iterate).
    """
    check_same_domain(green.domain, u.domain, "Green operator and function")
    values = u.interior
    if np.any(values < 0):
        raise ValueError("The lower bound check needs u >= 0")
    scale = max(u.sup_norm(), 1e-300)
    pulled = GridMeasure(measure.domain, np.where(measure.masses > 0,
                                                  values ** q, 0.0) * measure.masses)
    hypothesis = float(np.min(values - green_potential(green, pulled).interior)) \
        if values.size else 0.0
    if hypothesis < -hypothesis_tol * scale:
        raise HypothesisViolationError(
            "u is not a supersolution of u >= G[u^q dw]: min gap " + str(hypothesis))
    bound = lower_bound_constant(q) * green_potential(green, measure).interior ** (1.0 / (1.0 - q))
    margin = float(np.min(values - bound)) if values.size else 0.0
    return margin_report('lower_bound', margin, rel_tol * scale,
                         f"c1={lower_bound_constant(q)}")


def lgamma_norm(values, measure: GridMeasure, gamma: float) -> float:
    """(sum_j v_j^gamma m_j)^(1/gamma), v on the interior nodes"""
    if gamma <= 0:
        raise ValueError(f"gamma must be positive, got {gamma}")
    if isinstance(values, GridFunction):
        values = values.interior
    values = np.asarray(values, dtype=float)
    if np.any(values < 0):
        raise ValueError("lgamma_norm needs a nonnegative function")
    total = float(np.sum(values ** gamma * measure.masses))
    return total ** (1.0 / gamma)


class ExponentMode(Enum):
    """Which exponent the finite-energy sum uses"""
    PROOF = auto()      # (gamma+q)/(1-q), consistent with the threshold algebra
    STATEMENT = auto()  # (gamma+q)/(1+q), as written in the statement


def energy_exponent(q: float, gamma: float, mode: ExponentMode = ExponentMode.PROOF) -> float:
    """The power p of G[w] in the finite-energy sum"""
    if mode == ExponentMode.PROOF:
        return (gamma + q) / (1.0 - q)
    return (gamma + q) / (1.0 + q)


def energy_threshold(q: float, gamma: float) -> float:
    """alpha* = (2 gamma + 1 + q) / (gamma + 1)"""
    return (2.0 * gamma + 1.0 + q) / (gamma + 1.0)


class SweepTable(NamedTuple):
    """A sweep over alpha with its reference threshold"""
    frame: pd.DataFrame
    threshold: float
    note: str

    def to_dict(self):
        """Converts this object to a JSON serializable dictionary"""
        return {
            'threshold': self.threshold,
            'note': self.note,
            'rows': self.frame.to_dict(orient='records')
        }


def _energy_sums(greens: list[GreenOperator], alpha: float, p: float) -> list[float]:
    sums = []
    for green in greens:
        measure = dist_alpha_measure(green.domain, alpha)
        potential = green_potential(green, measure).interior
        sums.append(float(np.sum(potential ** p * measure.masses)))
    return sums


def finite_energy_threshold_sweep(shape: ShapeDescriptor, h: float, levels: int,  # pylint: disable=too-many-arguments,disable=too-many-positional-arguments,disable=too-many-locals
                                  q: float, gamma: float, alphas,
                                  mode: ExponentMode = ExponentMode.PROOF,
                                  jobs: int = 1) -> SweepTable:
    """
    J(h) = sum_j G[mu_alpha](x_j)^p m_j over the refinements, per alpha,
    classified by the refinement ratios of J.
    """
    p = energy_exponent(q, gamma, mode)
    threshold = energy_threshold(q, gamma)
    greens = [build_green(domain) for domain in refinement_levels(shape, h, levels)]
    alphas = [float(a) for a in alphas]
    with ThreadPoolExecutor(max_workers=max(jobs, 1)) as executor:
        all_sums = list(executor.map(lambda a: _energy_sums(greens, a, p), alphas))

    rows = []
    for alpha, sums in zip(alphas, all_sums):
        ratios = refinement_ratios(sums)
        verdict = classify_ratios(ratios) if levels >= 3 else RatioVerdict.INCONCLUSIVE
        row = {'alpha': alpha}
        for green, value in zip(greens, sums):
            row[f'J(h={green.domain.h:.6g})'] = value
        row['finest_ratio'] = float(ratios[-1]) if ratios.size else np.nan
        row['ratios'] = ' '.join(f'{r:.6g}' for r in ratios)
        row['classification'] = verdict.name.lower()
        row['below_threshold'] = alpha < threshold
        rows.append(row)
        _logger.info("energy sweep alpha=%s: ratios %s -> %s", alpha, ratios.tolist(), verdict.name)
    note = f"exponent mode {mode.name.lower()}, p={p}; the statement exponent " + \
           f"(gamma+q)/(1+q)={energy_exponent(q, gamma, ExponentMode.STATEMENT)} and the " + \
           f"proof exponent (gamma+q)/(1-q)={energy_exponent(q, gamma)} differ; " + \
           "only the proof exponent reproduces the threshold algebraically"
    if levels < 3:
        note += "; fewer than 3 levels, inconclusive"
    return SweepTable(pd.DataFrame(rows), threshold, note)


def kato_threshold_sweep(domain: GridDomain, alphas, q: float,  # pylint: disable=too-many-locals,too-many-arguments
                         beta: Optional[float] = None, jobs: int = 1,
                         delta_floor: Optional[float] = None) -> SweepTable:
    """
    Kato slope of mu_alpha per alpha: pass when the modulus decays (slope > 0),
    borderline below BORDERLINE_SLOPE, compared against the threshold 1 + beta.
    beta is 1 on the disk/ball and fitted from the kernel otherwise.
    delta_floor (off by default) caps the weight near the boundary and so
    changes the measure under test.
    """
    green = build_green(domain)
    if beta is None:
        beta = 1.0 if domain.is_curved else fit_green_beta(green).beta
    alphas = [float(a) for a in alphas]

    def one(alpha):
        return kato_modulus(green, dist_alpha_measure(domain, alpha, delta_floor=delta_floor),
                            with_center_uniform=False)

    with ThreadPoolExecutor(max_workers=max(jobs, 1)) as executor:
        reports = list(executor.map(one, alphas))

    rows = []
    for alpha, report in zip(alphas, reports):
        slope = report.slope.slope
        if not report.slope_defined or slope <= 0:
            verdict = 'fail'
        elif slope < BORDERLINE_SLOPE:
            verdict = 'borderline'
        else:
            verdict = 'pass'
        rows.append({'alpha': alpha, 'slope': slope, 'expected_slope': 2.0 - alpha,
                     'classification': verdict, 'below_threshold': alpha < 1.0 + beta,
                     'lower_bound': report.lower_bound})
        _logger.info("kato sweep alpha=%s: slope %s -> %s", alpha, slope, verdict)
    note = f"q={q}, beta={beta}, threshold 1+beta={1.0 + beta}, delta floor {delta_floor}"
    return SweepTable(pd.DataFrame(rows), 1.0 + beta, note)

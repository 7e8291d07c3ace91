"""Helper functions for scaling exponents and refinement studies
"""
from enum import Enum, auto
from typing import NamedTuple, Optional
import logging

import numpy as np


_logger = logging.getLogger('scaling')

# refinement ratio limits of the finite-energy classification
BOUNDED_RATIO = 1.15
DIVERGING_RATIO = 1.25


class SlopeFit(NamedTuple):
    """A least-squares line y = slope*x + intercept in log-log coordinates"""
    slope: float
    intercept: float
    error: float
    n_points: int

    @property
    def defined(self) -> bool:
        """False when there were fewer than two usable points"""
        return self.n_points >= 2 and bool(np.isfinite(self.slope))


class RatioVerdict(Enum):
    """Classification of a sequence of refinement ratios"""
    BOUNDED = auto()
    DIVERGING = auto()
    INCONCLUSIVE = auto()


def segment_fit_error(x, y):
    """Return slope, intercept, and squared error of best-fit line for (x,y)."""
    matrix_a = np.vstack([x, np.ones_like(x)]).T
    m, b = np.linalg.lstsq(matrix_a, y, rcond=None)[0]
    y_fit = m*x + b
    error = np.sum((y - y_fit)**2)
    return m, b, error


def fit_loglog_slope(x: np.ndarray, y: np.ndarray,
                     window: Optional[tuple[float, float]] = None) -> SlopeFit:
    """Slope of log y against log x, restricted to x in the closed window.
    Points with nonpositive y (or x) carry no information and are dropped."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    mask = (x > 0) & (y > 0) & np.isfinite(x) & np.isfinite(y)
    if window is not None:
        # relative slack keeps radii computed as 2h*2^k inside the window
        mask &= (x >= window[0] * (1 - 1e-12)) & (x <= window[1] * (1 + 1e-12))
    if np.count_nonzero(mask) < 2:
        return SlopeFit(np.nan, np.nan, np.nan, int(np.count_nonzero(mask)))
    m, b, err = segment_fit_error(np.log(x[mask]), np.log(y[mask]))
    return SlopeFit(float(m), float(b), float(err), int(np.count_nonzero(mask)))


def refinement_ratios(values) -> np.ndarray:
    """values[k+1] / values[k] for a sequence over halving spacings"""
    values = np.asarray(values, dtype=float)
    return values[1:] / values[:-1]


def classify_ratios(ratios,
                    bounded_max: float = BOUNDED_RATIO,
                    diverging_min: float = DIVERGING_RATIO) -> RatioVerdict:
    """
    bounded: the finest ratio is at most bounded_max
    diverging: the ratios increase and are all at least diverging_min
    inconclusive otherwise, or with fewer than two ratios (three levels)

    Ratios that shrink towards 1 are what a slowly converging sum looks like
    on coarse grids, so they never count as divergence.
    """
    ratios = np.asarray(ratios, dtype=float)
    if ratios.size < 2 or not np.all(np.isfinite(ratios)):
        return RatioVerdict.INCONCLUSIVE
    if ratios[-1] <= bounded_max:
        return RatioVerdict.BOUNDED
    if np.all(ratios >= diverging_min) and np.all(np.diff(ratios) > 0):
        return RatioVerdict.DIVERGING
    _logger.warning("inconclusive refinement ratios %s", ratios.tolist())
    return RatioVerdict.INCONCLUSIVE


def reduction_factors(errors) -> np.ndarray:
    """errors[k] / errors[k+1], the gain of each refinement"""
    errors = np.asarray(errors, dtype=float)
    with np.errstate(divide='ignore', invalid='ignore'):
        return errors[:-1] / errors[1:]


def error_reduced(coarse: float, fine: float, factor: float = 3.0,
                  floor: float = 1e-10) -> bool:
    """Whether one refinement cut the error by factor. Errors already at
    round-off level (below floor) count as reduced."""
    return fine <= max(coarse / factor, floor)

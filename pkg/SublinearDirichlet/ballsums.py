"""Fast, reproducible sums over Euclidean balls on node clouds
"""
import os
import numpy as np

USE_NUMBA = os.getenv('USE_NUMBA', 'True').lower() in ['true', 'yes', '1', 'on']

if USE_NUMBA:
    from numba import njit
    dojit = njit
else:
    def dojit(func):
        """no-op decorator"""
        return func


@dojit
def _radius_bin(dist2, radii2):
    """Index of the smallest radius with dist < r (open ball), len(radii) if none."""
    m = radii2.shape[0]
    for k in range(m):
        if dist2 < radii2[k]:
            return k
    return m


@dojit
def ball_weighted_sums(points, weights, centers, radii, out):  # pylint: disable=too-many-locals
    """
    For every center c and every radius r (ascending) stores
        out[c, k] = sum over points p with |p - c| < r_k of weights[c, p]
    `weights` is either a (1, N) row shared by all centers or a (C, N) matrix
    with one row per center (Green rows times masses).
    Points are visited in index order and the bins accumulated afterwards, so
    the result does not depend on the evaluation schedule.
    """
    n_centers = centers.shape[0]
    n_points = points.shape[0]
    dim = points.shape[1]
    m = radii.shape[0]
    radii2 = np.empty(m)
    for k in range(m):
        radii2[k] = radii[k] * radii[k]
    shared = weights.shape[0] == 1
    bins = np.zeros(m + 1)
    for c in range(n_centers):
        for k in range(m + 1):
            bins[k] = 0.0
        row = 0 if shared else c
        for p in range(n_points):
            w = weights[row, p]
            if w == 0.0:
                continue
            dist2 = 0.0
            for a in range(dim):
                diff = points[p, a] - centers[c, a]
                dist2 += diff * diff
            bins[_radius_bin(dist2, radii2)] += w
        acc = 0.0
        for k in range(m):
            acc += bins[k]
            out[c, k] = acc


@dojit
def ball_oscillations(points, values, centers, radii, out):  # pylint: disable=too-many-locals
    """
    out[c, k] = max - min of values over points with |p - c| < r_k
    (0 when the ball holds at most one point).
    """
    n_centers = centers.shape[0]
    n_points = points.shape[0]
    dim = points.shape[1]
    m = radii.shape[0]
    radii2 = np.empty(m)
    for k in range(m):
        radii2[k] = radii[k] * radii[k]
    lo = np.empty(m)
    hi = np.empty(m)
    for c in range(n_centers):
        for k in range(m):
            lo[k] = np.inf
            hi[k] = -np.inf
        for p in range(n_points):
            dist2 = 0.0
            for a in range(dim):
                diff = points[p, a] - centers[c, a]
                dist2 += diff * diff
            v = values[p]
            for k in range(_radius_bin(dist2, radii2), m):
                if v < lo[k]:
                    lo[k] = v
                if v > hi[k]:
                    hi[k] = v
        for k in range(m):
            out[c, k] = hi[k] - lo[k] if hi[k] >= lo[k] else 0.0


def ball_sums(points: np.ndarray, weights: np.ndarray,
              centers: np.ndarray, radii: np.ndarray) -> np.ndarray:
    """Wrapper around ball_weighted_sums allocating the (centers, radii) output."""
    weights = np.ascontiguousarray(np.atleast_2d(weights), dtype=np.float64)
    out = np.zeros((centers.shape[0], radii.shape[0]))
    ball_weighted_sums(np.ascontiguousarray(points, dtype=np.float64), weights,
                       np.ascontiguousarray(centers, dtype=np.float64),
                       np.ascontiguousarray(radii, dtype=np.float64), out)
    return out


def ball_oscillation(points: np.ndarray, values: np.ndarray,
                     centers: np.ndarray, radii: np.ndarray) -> np.ndarray:
    """Wrapper around ball_oscillations allocating the (centers, radii) output."""
    out = np.zeros((centers.shape[0], radii.shape[0]))
    ball_oscillations(np.ascontiguousarray(points, dtype=np.float64),
                      np.ascontiguousarray(values, dtype=np.float64),
                      np.ascontiguousarray(centers, dtype=np.float64),
                      np.ascontiguousarray(radii, dtype=np.float64), out)
    return out


# precompile both to avoid the first call paying for the jit
_dummy_points = np.zeros((1, 2))
_dummy_radii = np.ones(1)
ball_sums(_dummy_points, np.ones((1, 1)), _dummy_points, _dummy_radii)
ball_oscillation(_dummy_points, np.ones(1), _dummy_points, _dummy_radii)
del _dummy_points, _dummy_radii

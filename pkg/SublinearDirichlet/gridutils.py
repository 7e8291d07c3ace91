"""Helpers for lattices, geometry and user supplied expressions
"""
from typing import Callable, NamedTuple
import math
import numpy as np

from sympy import E, pi, Symbol, lambdify
from sympy.parsing.latex import parse_latex


_SYMBOLS = (Symbol("x"), Symbol("y"), Symbol("z"))


class Segment(NamedTuple):
    """A straight boundary piece of a polygonal domain (2D)"""
    x0: float
    y0: float
    x1: float
    y1: float


class BoundingBox(NamedTuple):
    """An axis aligned box given by its lower and upper corner"""
    lower: tuple[float, ...]
    upper: tuple[float, ...]


class MarginReport(NamedTuple):
    """Outcome of a numerical inequality check. passed means margin >= -tolerance
    unless stated otherwise by the check."""
    name: str
    margin: float
    tolerance: float
    passed: bool
    detail: str = ""

    def to_dict(self):
        """Converts this object to a JSON serializable dictionary"""
        return {
            'name': self.name,
            'margin': float(self.margin),
            'tolerance': float(self.tolerance),
            'passed': bool(self.passed),
            'detail': self.detail
        }


def margin_report(name: str, margin: float, tolerance: float, detail: str = "") -> MarginReport:
    """A MarginReport passing when margin >= -tolerance"""
    margin = float(margin)
    return MarginReport(name, margin, float(tolerance), margin >= -tolerance, detail)


def _lattice_range(lower: float, upper: float, h: float) -> np.ndarray:
    """Integer lattice indices k with lower <= k*h <= upper (inclusive, with a
    relative slack so that end points exactly on the box are kept)."""
    slack = 1e-9
    k0 = math.ceil(lower / h - slack)
    k1 = math.floor(upper / h + slack)
    return np.arange(k0, k1 + 1, dtype=np.int64)


def _lattice_points(box: BoundingBox, h: float) -> np.ndarray:
    """All lattice points of spacing h inside the box, lexicographically ordered.

    Returns an (N, d) float array. The coordinates are computed as k*h from the
    integer indices so that refinements reproduce the coarse points bit for bit.
    """
    ranges = [_lattice_range(lo, up, h) for lo, up in zip(box.lower, box.upper)]
    grids = np.meshgrid(*ranges, indexing="ij")
    idx = np.column_stack([g.ravel() for g in grids])
    return idx.astype(float) * h


def _distance_to_segments(points: np.ndarray, segments: list[Segment]) -> np.ndarray:
    """Euclidean distance of 2D points to the union of segments."""
    best = np.full(points.shape[0], np.inf)
    for seg in segments:
        p0 = np.array([seg.x0, seg.y0])
        p1 = np.array([seg.x1, seg.y1])
        direction = p1 - p0
        length2 = float(direction @ direction)
        t = np.clip(((points - p0) @ direction) / length2, 0.0, 1.0)
        closest = p0 + t[:, None] * direction
        best = np.minimum(best, np.linalg.norm(points - closest, axis=1))
    return best


def parse_latex_with_constants(s: str):
    """A helper method to handle known constants in latex conversion."""
    expr = parse_latex(s)

    replacements = {
        Symbol("e"): E,
        Symbol("pi"): pi,
    }
    return expr.xreplace(replacements)


def lambdify_expression(latex: str) -> Callable[[np.ndarray], np.ndarray]:
    """Converts a LaTeX string (user input) into a vectorized callable taking
    an (N, d) coordinate array and returning N values.

    Variables are x, y and z; constant expressions are broadcast to all points.
    """
    parsed = parse_latex_with_constants(latex)
    unknown = parsed.free_symbols - set(_SYMBOLS)
    if unknown:
        raise ValueError(
            "Unknown symbols in expression " + \
            f"'{latex}': {sorted(str(s) for s in unknown)}")
    func = lambdify(_SYMBOLS, parsed, modules=["numpy"])

    def evaluate(points: np.ndarray) -> np.ndarray:
        coords = [points[:, k] if k < points.shape[1] else np.zeros(points.shape[0])
                  for k in range(3)]
        values = np.asarray(func(*coords), dtype=float)
        return np.array(np.broadcast_to(values, (points.shape[0],)), dtype=float)

    return evaluate

# coding: utf-8
"""
Discretized bounded domains: lattice nodes, cut-cell stencils and boundary distance
"""
# general packages
from enum import Enum, auto
import json
import logging
import math
import os
from pathlib import Path
from typing import Optional, Union

import numpy as np

# package imports
from .gridutils import (
    BoundingBox,
    Segment,
    _lattice_points,
    _distance_to_segments,
)


_logger = logging.getLogger('domain')

# lattice nodes of curved shapes closer than this (in units of h) to the
# boundary are not unknowns; their neighbours reach the boundary directly
DISK_CUT_TOLERANCE = float(os.getenv("DISK_CUT_TOLERANCE", "1e-3"))

# the polygon of the L-shape, [0,1]^2 without the open top-right quarter
LSHAPE_SEGMENTS = [
    Segment(0.0, 0.0, 1.0, 0.0),
    Segment(1.0, 0.0, 1.0, 0.5),
    Segment(1.0, 0.5, 0.5, 0.5),
    Segment(0.5, 0.5, 0.5, 1.0),
    Segment(0.5, 1.0, 0.0, 1.0),
    Segment(0.0, 1.0, 0.0, 0.0),
]


class EmptyInteriorError(ValueError):
    """The spacing is too coarse (or not compatible with the shape's lattice)
    to leave at least one interior node."""


class GridShape(Enum):
    """The supported continuum domains."""
    SQUARE = auto()   # unit square [0,1]^2 or unit cube [0,1]^3
    DISK = auto()     # disk / ball of radius R centred at the origin
    LSHAPE = auto()   # [0,1]^2 without (1/2,1]x(1/2,1], reentrant corner at (1/2,1/2)


class ShapeDescriptor:
    """Which continuum domain a grid discretizes."""

    def __init__(self, kind: GridShape, dimension: int = 2, radius: float = 1.0):
        if dimension not in (2, 3):
            raise ValueError(f"Only dimensions 2 and 3 are supported, got {dimension}")
        if kind == GridShape.LSHAPE and dimension != 2:
            raise ValueError("The L-shape is only available in dimension 2")
        if radius <= 0:
            raise ValueError(f"The radius must be positive, got {radius}")
        self.kind = kind
        self.dimension = dimension
        self.radius = float(radius) if kind == GridShape.DISK else 1.0

    @property
    def diameter(self) -> float:
        """The diameter of the continuum domain."""
        if self.kind == GridShape.DISK:
            return 2.0 * self.radius
        return math.sqrt(self.dimension) if self.kind == GridShape.SQUARE else math.sqrt(2.0)

    @property
    def is_curved(self) -> bool:
        """Whether the boundary cuts the lattice between nodes."""
        return self.kind == GridShape.DISK

    def to_dict(self):
        """Convert to a serializable dictionary."""
        return {
            'kind': self.kind.name.lower(),
            'dimension': self.dimension,
            'radius': self.radius
        }

    @classmethod
    def from_dict(cls, value):
        """Initialize from a serializable dictionary."""
        return ShapeDescriptor(GridShape[value['kind'].upper()],
                               int(value.get('dimension', 2)),
                               float(value.get('radius', 1.0)))

    def __eq__(self, other):
        return isinstance(other, ShapeDescriptor) and self.to_dict() == other.to_dict()

    def __hash__(self):
        return hash((self.kind, self.dimension, self.radius))

    def __repr__(self):
        return f"{type(self).__name__}({self.kind.name}, d={self.dimension}, R={self.radius})"


class GridDomain:  # pylint: disable=too-many-instance-attributes
    """
    A discretized bounded domain. Holds
      - the interior nodes (the unknowns), lexicographically ordered
      - the boundary nodes, lying on the continuum boundary
      - the boundary distance of every interior node
      - the 2d-point stencil of every interior node: the index of each
        neighbour (interior index >= 0, boundary index encoded as -1-j) and the
        arm length towards it (h, or shorter/longer where the boundary cuts)

    Stencil columns are ordered (+e_0, -e_0, +e_1, -e_1, ...).
    Instances are not modified after construction.
    """

    def __init__(self,  # pylint: disable=too-many-arguments,disable=too-many-positional-arguments
                 shape: ShapeDescriptor,
                 h: float,
                 interior: np.ndarray,
                 boundary: np.ndarray,
                 delta: np.ndarray,
                 stencil_index: np.ndarray,
                 stencil_arm: np.ndarray):
        self.shape = shape
        self.h = float(h)
        self.interior = interior
        self.boundary = boundary
        self.delta = delta
        self.stencil_index = stencil_index
        self.stencil_arm = stencil_arm
        for arr in (self.interior, self.boundary, self.delta,
                    self.stencil_index, self.stencil_arm):
            arr.setflags(write=False)

    @property
    def dimension(self) -> int:
        """The space dimension d"""
        return self.shape.dimension

    @property
    def n_interior(self) -> int:
        """Number of interior nodes (unknowns)"""
        return self.interior.shape[0]

    @property
    def n_boundary(self) -> int:
        """Number of boundary nodes"""
        return self.boundary.shape[0]

    @property
    def cell_volume(self) -> float:
        """h^d, the volume carried by one node"""
        return self.h ** self.dimension

    @property
    def diameter(self) -> float:
        """The diameter of the continuum domain"""
        return self.shape.diameter

    @property
    def is_curved(self) -> bool:
        """Whether the boundary is curved (cut-cell stencils)"""
        return self.shape.is_curved

    @property
    def all_nodes(self) -> np.ndarray:
        """Interior nodes followed by boundary nodes, i.e. the closure"""
        return np.vstack([self.interior, self.boundary])

    def same_grid(self, other: "GridDomain") -> bool:
        """Whether two domains discretize the same shape with the same nodes"""
        if self is other:
            return True
        return (self.shape == other.shape and self.h == other.h and
                self.n_interior == other.n_interior and
                self.n_boundary == other.n_boundary)

    def to_dict(self):
        """
        Converts this object to a JSON serializable node manifest
        (coordinates, node class and boundary distance).
        """
        nodes = [{'class': 'interior',
                  'coords': [float(c) for c in p],
                  'delta': float(d)}
                 for p, d in zip(self.interior, self.delta)]
        nodes += [{'class': 'boundary',
                   'coords': [float(c) for c in p],
                   'delta': 0.0}
                  for p in self.boundary]
        return {
            'shape': self.shape.to_dict(),
            'h': self.h,
            'n_interior': self.n_interior,
            'n_boundary': self.n_boundary,
            'nodes': nodes
        }

    @classmethod
    def from_dict(cls, value):
        """Rebuilds the domain from a manifest. The manifest only records the
        shape and spacing reliably, so the node sets are regenerated and checked."""
        domain = build_domain(ShapeDescriptor.from_dict(value['shape']), value['h'])
        if domain.n_interior != value['n_interior'] or domain.n_boundary != value['n_boundary']:
            raise ValueError("The node manifest does not match the regenerated domain")
        return domain

    def save_manifest(self, fname: Union[str, Path]):
        """Writes the JSON node manifest (for debugging)."""
        with open(fname, 'wt', encoding='utf8') as f:
            json.dump(self.to_dict(), f, indent=2)

    def __repr__(self):
        return f"{type(self).__name__}({self.shape!r}, h={self.h}, " + \
               f"interior={self.n_interior}, boundary={self.n_boundary})"


def _build_lattice_domain(shape: ShapeDescriptor, h: float) -> GridDomain:
    """Square/cube and L-shape: every node is a lattice point, the boundary
    consists of the lattice points on the continuum boundary."""
    d = shape.dimension
    n = round(1.0 / h)
    if n < 1 or abs(n * h - 1.0) > 1e-9:
        raise EmptyInteriorError(
            f"h={h} does not divide the unit interval; use h = 1/n")
    if shape.kind == GridShape.LSHAPE and n % 2 != 0:
        raise EmptyInteriorError(
            f"h={h} does not put the reentrant corner on the lattice; use h = 1/(2n)")
    h = 1.0 / n
    # integer lattice indices 0..n per axis
    idx = np.rint(_lattice_points(BoundingBox((0.0,) * d, (float(n),) * d), 1.0)
                  ).astype(np.int64)

    inside = np.all((idx > 0) & (idx < n), axis=1)
    closed = np.ones(idx.shape[0], dtype=bool)
    if shape.kind == GridShape.LSHAPE:
        half = n // 2
        inside &= ~((idx[:, 0] >= half) & (idx[:, 1] >= half))
        closed &= ~((idx[:, 0] > half) & (idx[:, 1] > half))
    on_boundary = closed & ~inside

    interior_idx = idx[inside]
    boundary_idx = idx[on_boundary]
    if interior_idx.shape[0] == 0:
        raise EmptyInteriorError(f"No interior node for {shape!r} with h={h}")

    # coordinates as k/n keep refinements bit-identical on the coarse nodes
    interior = interior_idx.astype(float) / n
    boundary = boundary_idx.astype(float) / n

    # lookup table from lattice index to node id
    lookup = np.zeros((n + 1,) * d, dtype=np.int64)
    lookup[tuple(interior_idx.T)] = np.arange(interior_idx.shape[0])
    lookup[tuple(boundary_idx.T)] = -1 - np.arange(boundary_idx.shape[0])

    stencil_index = np.empty((interior_idx.shape[0], 2 * d), dtype=np.int64)
    for axis in range(d):
        for col, sign in ((2 * axis, 1), (2 * axis + 1, -1)):
            nb = interior_idx.copy()
            nb[:, axis] += sign
            stencil_index[:, col] = lookup[tuple(nb.T)]
    stencil_arm = np.full(stencil_index.shape, h)

    if shape.kind == GridShape.SQUARE:
        delta = np.min(np.minimum(interior, 1.0 - interior), axis=1)
    else:
        delta = _distance_to_segments(interior, LSHAPE_SEGMENTS)

    return GridDomain(shape, h, interior, boundary, delta, stencil_index, stencil_arm)


def _build_disk_domain(shape: ShapeDescriptor, h: float) -> GridDomain:
    """Disk/ball: lattice points strictly inside are unknowns, boundary nodes
    are the points where the axis-parallel stencil arms cut the sphere
    (Shortley-Weller)."""
    d = shape.dimension
    radius = shape.radius
    reach = math.ceil(radius / h) + 1
    points = _lattice_points(BoundingBox((-reach * h,) * d, (reach * h,) * d), h)
    idx = np.rint(points / h).astype(np.int64) + reach
    delta_all = radius - np.linalg.norm(points, axis=1)
    inside = delta_all >= DISK_CUT_TOLERANCE * h

    interior = points[inside]
    interior_idx = idx[inside]
    if interior.shape[0] == 0:
        raise EmptyInteriorError(f"No interior node for {shape!r} with h={h}")

    lookup = np.full((2 * reach + 1,) * d, np.iinfo(np.int64).min, dtype=np.int64)
    lookup[tuple(interior_idx.T)] = np.arange(interior.shape[0])

    stencil_index = np.empty((interior.shape[0], 2 * d), dtype=np.int64)
    stencil_arm = np.full(stencil_index.shape, h)
    cut_rows, cut_cols, cut_points = [], [], []
    norm2 = np.einsum('ij,ij->i', interior, interior)
    for axis in range(d):
        for col, sign in ((2 * axis, 1), (2 * axis + 1, -1)):
            nb = interior_idx.copy()
            nb[:, axis] += sign
            found = lookup[tuple(nb.T)]
            stencil_index[:, col] = found
            cut = np.nonzero(found < 0)[0]
            xk = interior[cut, axis]
            rest = np.maximum(radius * radius - norm2[cut] + xk * xk, 0.0)
            t = -sign * xk + np.sqrt(rest)
            stencil_arm[cut, col] = t
            pts = interior[cut].copy()
            pts[:, axis] += sign * t
            cut_rows.append(cut)
            cut_cols.append(np.full(cut.shape[0], col))
            cut_points.append(pts)

    rows = np.concatenate(cut_rows)
    cols = np.concatenate(cut_cols)
    pts = np.vstack(cut_points)
    # the same point on the sphere can be reached along two axes;
    # np.unique also orders the boundary lexicographically
    boundary, inverse = np.unique(np.round(pts, 12) + 0.0, axis=0, return_inverse=True)
    stencil_index[rows, cols] = -1 - inverse.ravel()

    delta = radius - np.linalg.norm(interior, axis=1)
    return GridDomain(shape, h, interior, boundary, delta, stencil_index, stencil_arm)


def build_domain(shape: ShapeDescriptor, h: float) -> GridDomain:
    """Discretizes the shape with spacing h.

    Raises EmptyInteriorError if no interior node remains.
    """
    if h <= 0:
        raise ValueError(f"The spacing must be positive, got {h}")
    if shape.kind == GridShape.DISK:
        domain = _build_disk_domain(shape, h)
    else:
        domain = _build_lattice_domain(shape, h)
    _logger.debug("built %s", domain)
    return domain


def refine(domain: GridDomain, times: int = 1) -> GridDomain:
    """Halves the spacing (times-fold). Coarse interior nodes of lattice shapes
    are a subset of the fine ones."""
    h = domain.h
    for _ in range(times):
        h = h / 2
    return build_domain(domain.shape, h)


def refinement_levels(shape: ShapeDescriptor, h: float, levels: int) -> list[GridDomain]:
    """The domains with spacings h, h/2, ..., h/2^(levels-1)."""
    domains = [build_domain(shape, h)]
    for _ in range(levels - 1):
        domains.append(refine(domains[-1]))
    return domains


def nearest_interior_node(domain: GridDomain, point) -> int:
    """Index of the interior node closest to a point (first one on ties)"""
    point = np.asarray(point, dtype=float)
    return int(np.argmin(np.sum((domain.interior - point[None, :]) ** 2, axis=1)))


def shape_from_name(name: str,
                    dimension: int = 2,
                    radius: Optional[float] = None) -> ShapeDescriptor:
    """Parses shape names used in configs: square, cube, disk, ball, lshape."""
    aliases = {
        'square': (GridShape.SQUARE, 2),
        'cube': (GridShape.SQUARE, 3),
        'disk': (GridShape.DISK, 2),
        'ball': (GridShape.DISK, 3),
        'lshape': (GridShape.LSHAPE, 2),
        'l-shape': (GridShape.LSHAPE, 2),
    }
    key = name.lower()
    if key not in aliases:
        raise ValueError(f"Unknown shape '{name}', known: {sorted(aliases)}")
    kind, dim = aliases[key]
    if key in ('square', 'disk') and dimension == 3:
        dim = 3
    return ShapeDescriptor(kind, dim, radius if radius is not None else 1.0)

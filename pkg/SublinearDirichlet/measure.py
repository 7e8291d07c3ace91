# coding: utf-8
"""
Nonnegative measures on grid domains, the weight measures delta^-alpha dx
and their growth statistics
"""
# general packages
import logging
import math
from pathlib import Path
from typing import Callable, NamedTuple, Optional, Union

import numpy as np
import pandas as pd

# package imports
from .domain import GridDomain, ShapeDescriptor, refinement_levels
from .gridutils import lambdify_expression
from .ballsums import ball_sums
from .scaling import fit_loglog_slope


_logger = logging.getLogger('measure')


class DomainMismatchError(ValueError):
    """Objects living on different grids were combined."""


def check_same_domain(first: GridDomain, second: GridDomain, what: str = "objects"):
    """Raises DomainMismatchError unless both domains are the same grid."""
    if not first.same_grid(second):
        raise DomainMismatchError(
            f"Cannot combine {what} on different domains: {first!r} vs {second!r}")


class Atom(NamedTuple):
    """A point mass sitting on an interior node"""
    node: int
    mass: float


class GridMeasure:
    """
    A nonnegative measure on the interior nodes of a domain: an absolutely
    continuous part (density times h^d per node) plus optional atoms.
    Immutable after construction.
    """

    def __init__(self, domain: GridDomain, density_masses: np.ndarray,
                 atoms: Optional[list[Atom]] = None):
        density_masses = np.array(density_masses, dtype=float)
        if density_masses.shape != (domain.n_interior,):
            raise ValueError(
                f"Expected {domain.n_interior} node masses, got {density_masses.shape}")
        if not np.all(np.isfinite(density_masses)) or np.any(density_masses < 0):
            raise ValueError("Node masses must be nonnegative and finite")
        atoms = [Atom(int(a[0]), float(a[1])) for a in (atoms or [])]
        for atom in atoms:
            if not 0 <= atom.node < domain.n_interior:
                raise ValueError(f"Atom node index {atom.node} out of range")
            if not math.isfinite(atom.mass) or atom.mass < 0:
                raise ValueError(f"Atom mass must be nonnegative and finite, got {atom.mass}")
        self.domain = domain
        self.density_masses = density_masses
        self.atoms = atoms
        masses = density_masses.copy()
        for atom in atoms:
            masses[atom.node] += atom.mass
        self.masses = masses
        self.density_masses.setflags(write=False)
        self.masses.setflags(write=False)
        # fixed order (numpy pairwise) summation
        self.total_mass = float(np.sum(self.masses))

    @property
    def is_zero(self) -> bool:
        """True for the zero measure"""
        return not np.any(self.masses > 0)

    @property
    def support(self) -> np.ndarray:
        """Indices of the interior nodes carrying positive mass"""
        return np.nonzero(self.masses > 0)[0]

    def scaled(self, factor: float) -> "GridMeasure":
        """factor * self, factor >= 0"""
        if factor < 0:
            raise ValueError(f"Measures can only be scaled by nonnegative factors, got {factor}")
        return GridMeasure(self.domain, self.density_masses * factor,
                           [Atom(a.node, a.mass * factor) for a in self.atoms])

    def __add__(self, other: "GridMeasure") -> "GridMeasure":
        check_same_domain(self.domain, other.domain, "measures")
        return GridMeasure(self.domain, self.density_masses + other.density_masses,
                           self.atoms + other.atoms)

    def to_dict(self):
        """Converts this object to a JSON serializable dictionary"""
        return {
            'n_interior': self.domain.n_interior,
            'total_mass': self.total_mass,
            'atoms': [{'node': a.node, 'mass': a.mass} for a in self.atoms]
        }

    def __repr__(self):
        return f"{type(self).__name__}(total_mass={self.total_mass}, atoms={len(self.atoms)})"


def zero_measure(domain: GridDomain) -> GridMeasure:
    """The zero measure"""
    return GridMeasure(domain, np.zeros(domain.n_interior))


def measure_from_density(domain: GridDomain,
                         density: Union[np.ndarray, Callable[[np.ndarray], np.ndarray], float]
                         ) -> GridMeasure:
    """m_j = a(x_j) h^d. The density is an array of node values, a callable on
    the (N, d) interior coordinates, or a constant."""
    if callable(density):
        values = np.asarray(density(domain.interior), dtype=float)
    else:
        values = np.asarray(density, dtype=float)
    values = np.array(np.broadcast_to(values, (domain.n_interior,)), dtype=float)
    if not np.all(np.isfinite(values)):
        raise ValueError("The density must be finite at every interior node")
    if np.any(values < 0):
        raise ValueError("The density must be nonnegative, minimum is " +
                         f"{values.min()}")
    return GridMeasure(domain, values * domain.cell_volume)


def measure_from_expression(domain: GridDomain, latex: str) -> GridMeasure:
    """A density measure given by a LaTeX expression in x, y (and z)."""
    return measure_from_density(domain, lambdify_expression(latex))


def dist_alpha_measure(domain: GridDomain, alpha: float,
                       delta_floor: Optional[float] = None) -> GridMeasure:
    """The weight measure m_j = delta(x_j)^-alpha h^d.

    delta_floor bounds delta from below (used on curved shapes, where the cut
    tolerance lets nodes come arbitrarily close to the boundary).
    """
    if alpha >= 2:
        _logger.warning("dist_alpha_measure: alpha=%s >= 2 is outside the Kato range", alpha)
    delta = domain.delta
    if delta_floor is not None:
        delta = np.maximum(delta, delta_floor)
    if alpha == 0:
        return measure_from_density(domain, np.ones(domain.n_interior))
    return measure_from_density(domain, delta ** (-alpha))


def add_atoms(measure: GridMeasure, atoms: list[Atom]) -> GridMeasure:
    """A new measure with extra point masses"""
    return GridMeasure(measure.domain, measure.density_masses,
                       measure.atoms + [Atom(int(a[0]), float(a[1])) for a in atoms])


class SamplingPlan(NamedTuple):
    """Centers and radii (ascending) at which ball statistics are evaluated"""
    centers: np.ndarray
    radii: np.ndarray


def dyadic_radii(domain: GridDomain, start: Optional[float] = None) -> np.ndarray:
    """The geometric radius grid start, 2 start, 4 start, ... closed by diam."""
    r = 2.0 * domain.h if start is None else start
    radii = []
    while r < domain.diameter:
        radii.append(r)
        r *= 2.0
    radii.append(domain.diameter)
    return np.array(radii)


def default_sampling_plan(domain: GridDomain) -> SamplingPlan:
    """All interior nodes as centers, radii 2h, 4h, ..., diam"""
    return SamplingPlan(domain.interior, dyadic_radii(domain))


def growth_constant(domain: GridDomain, measure: GridMeasure, alpha: float,
                    sample: Optional[SamplingPlan] = None) -> float:
    """
    max over the sampled (x, r) of w(B(x,r)) / r^(d-2+alpha), with open balls.
    This is a lower bound for the best constant in the growth condition.
    """
    check_same_domain(domain, measure.domain, "measure and domain")
    if sample is None:
        sample = default_sampling_plan(domain)
    if measure.is_zero or sample.centers.shape[0] == 0:
        return 0.0
    masses = ball_sums(domain.interior, measure.masses, sample.centers, sample.radii)
    exponent = domain.dimension - 2 + alpha
    ratios = masses / sample.radii[None, :] ** exponent
    return float(np.max(ratios))


def measure_to_csv(measure: GridMeasure, fname: Union[str, Path]):
    """Writes node index, coordinates and mass"""
    domain = measure.domain
    data = {'node': np.arange(domain.n_interior)}
    for k, name in enumerate('xyz'[:domain.dimension]):
        data[name] = domain.interior[:, k]
    data['mass'] = measure.masses
    pd.DataFrame(data).to_csv(fname, index=False, float_format="%.17g")


def measure_from_csv(domain: GridDomain, fname: Union[str, Path]) -> GridMeasure:
    """Reads a measure written by measure_to_csv (or any CSV with node and mass
    columns). Coordinates, when present, must match the domain."""
    df = pd.read_csv(fname, float_precision='round_trip')
    if 'node' not in df.columns or 'mass' not in df.columns:
        raise ValueError(f"{fname}: CSV needs 'node' and 'mass' columns")
    masses = np.zeros(domain.n_interior)
    nodes = df['node'].to_numpy(dtype=np.int64)
    if np.any(nodes < 0) or np.any(nodes >= domain.n_interior):
        raise DomainMismatchError(f"{fname}: node index out of range for {domain!r}")
    coords = [c for c in 'xyz'[:domain.dimension] if c in df.columns]
    if coords:
        given = df[coords].to_numpy(dtype=float)
        if not np.allclose(given, domain.interior[nodes][:, :len(coords)], atol=1e-12):
            raise DomainMismatchError(f"{fname}: coordinates do not match {domain!r}")
    np.add.at(masses, nodes, df['mass'].to_numpy(dtype=float))
    return GridMeasure(domain, masses)


def total_mass_study(shape: ShapeDescriptor, alpha: float, h: float,
                     levels: int = 3) -> pd.DataFrame:
    """
    Total mass of the weight measure over refinements. For alpha >= 1 the
    continuum mass is infinite and the discrete total grows like h^(1-alpha)
    (log 1/h at alpha = 1); the fitted exponent of the mass against h is
    stored in the 'fitted_exponent' column (same value on every row).
    """
    rows = []
    for domain in refinement_levels(shape, h, levels):
        rows.append({'h': domain.h,
                     'total_mass': dist_alpha_measure(domain, alpha).total_mass})
    df = pd.DataFrame(rows)
    df['ratio'] = df['total_mass'] / df['total_mass'].shift(1)
    exponent = np.nan
    if levels >= 2:
        exponent = fit_loglog_slope(df['h'].to_numpy(), df['total_mass'].to_numpy()).slope
    df['fitted_exponent'] = exponent
    _logger.info("total mass study alpha=%s: masses %s, exponent %s",
                 alpha, df['total_mass'].tolist(), exponent)
    return df

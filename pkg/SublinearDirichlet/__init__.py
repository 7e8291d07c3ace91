"""Main exports of the sublinear Dirichlet problem toolkit"""  # pylint: disable=invalid-name
from .domain import GridDomain, GridShape, ShapeDescriptor, build_domain, refine, shape_from_name
from .measure import GridMeasure, dist_alpha_measure, measure_from_density, zero_measure
from .green import BoundaryData, GreenOperator, GridFunction, build_green, green_potential
from .potential import kato_modulus, finite_energy_threshold_sweep, kato_threshold_sweep
from .solver import Direction, SolverConfig, picard_solve, newton_oracle, verify_estimates
from .experiments import ExperimentConfig, load_config, run_experiment

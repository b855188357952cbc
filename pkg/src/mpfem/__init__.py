"""Max-plus finite element method for finite-horizon deterministic optimal control."""
from ._backend import NAME as BACKEND
from .assembly import (AssembledSystem, assemble, assemble_mass, assemble_stiffness_direct,
                       assemble_stiffness_hamiltonian, approximate_semigroup)
from .basis import (LIPSCHITZ, QUADRATIC, BasisFamily, BasisFunction, Box, RegularGrid,
                    build_families, evaluate, scalar_product)
from .errors import AssemblyError, ConfigError, DimensionError, OptimizerError
from .harness import ErrorReport, ExperimentConfig, convergence_sweep, run_experiment
from .optimizer import ObjectiveSpec, OptimizerConfig, OptimizerResult, maximize_concave_box, maximize_on_grid
from .problem import (ControlProblem, SmoothnessData, delta0, distance_oracle, distance_problem,
                      lq_oracle, lq_problem, verify_concavity)
from .propagation import CoordinateVector, ValueGrid, initial_coordinates, reconstruct, run, step
from .tropical import (kernel_apply, kernel_residuate, mp_add, mp_mul, mp_residuate,
                       projector_image, projector_image_kernel)

__version__ = "0.1.0"

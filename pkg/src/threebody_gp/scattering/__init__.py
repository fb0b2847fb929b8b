"""Three-body zero-energy scattering in the hyperradial reduction."""

from .coupling import CouplingResult, effective_coupling_error, periodic_test_profile
from .geometry import M_INV_NORM, M_NORM, MMatrixConstants, hyperradius, mmatrix_constants
from .norms import NORM_COLUMNS, NormReport, field_norms, pointwise_bound_constants
from .potentials import (HyperradialPotential, bump_potential, potential_from_config,
                         step_potential, table_potential, zero_potential)
from .radial import RadialGrid, ScatteringSolution, hypervolume, make_grid, solve_scattering
from .truncated import TruncatedScattering, cutoff_profile, truncate

__all__ = [
    "MMatrixConstants", "mmatrix_constants", "hyperradius", "M_NORM", "M_INV_NORM",
    "HyperradialPotential", "zero_potential", "step_potential", "bump_potential",
    "table_potential", "potential_from_config",
    "RadialGrid", "make_grid", "ScatteringSolution", "solve_scattering", "hypervolume",
    "TruncatedScattering", "truncate", "cutoff_profile",
    "NormReport", "NORM_COLUMNS", "field_norms", "pointwise_bound_constants",
    "CouplingResult", "effective_coupling_error", "periodic_test_profile",

]

"""Non-local energies of structured deformations: kernels, approximations, densities, relaxation, crystals."""
from .errors import SDLabError
from .geometry import Band, Box, Domain
from .measure import Facet, Kernel, VectorMeasure, convolve, make_kernel, mass_bound_check, total_variation
from .kinematics import (SBVFunction, StructuredDeformation, affine, deck_of_cards, extend, limit_measure,
                         staircase_approximation, step_jump, two_level_shear, two_level_shear_1d)
from .densities import EnergyDensity, SurfaceDensity, BulkDensity, builtin, recession
from .energy import (QuadPlan, averaged_energy, boundary_layer, localized_energy, reversed_limit, total_energy,
                     upscaled_energy)
from .cell import CellProblem, H1_convex, cell_value, laminate_upper_bound, nuclear_norm
from .crystal import SlipSystem, fcc_slip_systems, lattice_energy

__all__ = [
    "SDLabError", "Band", "Box", "Domain", "Facet", "Kernel", "VectorMeasure", "convolve", "make_kernel",
    "mass_bound_check", "total_variation", "SBVFunction", "StructuredDeformation", "affine", "deck_of_cards",
    "extend", "limit_measure", "staircase_approximation", "step_jump", "two_level_shear", "two_level_shear_1d",
    "EnergyDensity", "SurfaceDensity", "BulkDensity", "builtin", "recession", "QuadPlan", "averaged_energy",
    "boundary_layer", "localized_energy", "reversed_limit", "total_energy", "upscaled_energy", "CellProblem",
    "H1_convex", "cell_value", "laminate_upper_bound", "nuclear_norm", "SlipSystem", "fcc_slip_systems",
    "lattice_energy",
]

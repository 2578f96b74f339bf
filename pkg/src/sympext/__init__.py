"""Constructive area-preserving maps of the plane and of cubes, built from
boundary or density data, with every output numerically verified."""

from . import bumps, circlext, cubeflow, darboux2, fndsl, numkit
from .circlext import (extend_circle_gen, extend_circle_moser, make_lift,
                       moser_extension, gen_extension)
from .cubeflow import (balanced_partition, doublesquare_transport,
                       grid_normalize, knothe_factor, mose2_transport,
                       mose_transport, separation_normalize, square_extension)
from .darboux2 import darboux_normalize, gradient_precondition
from .fndsl import parse, parse_field, to_field
from .numkit import flow_ode, hamiltonian_field, integrate_1d, solve_monotone

__version__ = "0.1.0"

__all__ = [
    "bumps", "circlext", "cubeflow", "darboux2", "fndsl", "numkit",
    "parse", "parse_field", "to_field",
    "integrate_1d", "solve_monotone", "flow_ode", "hamiltonian_field",
    "make_lift", "extend_circle_moser", "extend_circle_gen",
    "moser_extension", "gen_extension",
    "knothe_factor", "mose_transport", "mose2_transport",
    "separation_normalize", "grid_normalize", "doublesquare_transport",
    "square_extension", "balanced_partition",
    "darboux_normalize", "gradient_precondition",
]

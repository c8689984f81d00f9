"""Calderon-Zygmund machinery for measures with polynomial growth, on atomic approximations."""

from .cube import Cube, WHOLE_SPACE, delta, enclosing_cube
from .kernels import KernelProfile, apply_S, apply_S_adjoint
from .lattice import Lattice, ad_class, build_lattice
from .measure import DiscreteMeasure, GridFunction, ball_mass, cube_mass, generate, verify_growth

__all__ = [
    "Cube",
    "WHOLE_SPACE",
    "delta",
    "enclosing_cube",
    "KernelProfile",
    "apply_S",
    "apply_S_adjoint",
    "Lattice",
    "ad_class",
    "build_lattice",
    "DiscreteMeasure",
    "GridFunction",
    "ball_mass",
    "cube_mass",
    "generate",
    "verify_growth",
]

__version__ = "0.1.0"

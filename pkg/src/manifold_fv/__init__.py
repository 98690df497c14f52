"""Finite volume solver and verification tools for scalar conservation laws
on manifolds with an L-infinity volume form and on foliated 1+1 spacetimes."""

__version__ = "0.1.0"

from .geometry import (Mesh, MeshError, VolumeForm, FoliatedSpacetime, build_circle_mesh,  # noqa: F401
                       build_interval_mesh, build_torus_mesh, build_sphere_mesh, build_flrw_strip)
from .flux_model import (FluxField, FluxError, ScalarFlux, burgers_flux, linear_flux,  # noqa: F401
                         named_flux, make_product_flux, kruzkov_pair)
from .fv_core import (SchemeConfig, SchemeError, SolverAbort, State, Trajectory, evolve,  # noqa: F401
                      step, cfl_timestep)
from .boundary_lorentzian import (BoundaryData, evolve_foliated, admissible_membership,  # noqa: F401
                                  boundary_entropy_flux, classify_boundary_face)

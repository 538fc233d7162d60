"""Adaptive finite elements for fractional powers of elliptic operators.

``A^eps w = psi`` is solved by marching a pseudo-parabolic problem in
``t in [0, 1]``; meshes are adapted for a boundary-flux goal functional with
a dual-weighted residual estimator.
"""
from .adapt import AdaptConfig, AdaptReport, adapt_loop, dorfler_mark, estimate_goal_error, starting_adaptation
from .fem import (Coefficient, FEFunction, FESpace, assemble_load, assemble_mass, assemble_stiffness,
                  boundary_flux, interpolate, l2_project)
from .linalg import SolveStats, solve_spd
from .mesh import Mesh, boundary_distance, read_mesh, refine, uniform_refine, unit_square_mesh, write_mesh
from .oracle import discrete_fractional_solve
from .pseudotime import FirstStepProblem, SchemeParams, TimeTrace, solve_fractional, step
from .rd import ReactionDiffusionProblem, solve_reaction_diffusion
from .rhs import eigen_rhs, layer_rhs, surrogate_rhs

__version__ = "0.1.0"

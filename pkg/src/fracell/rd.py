"""Singularly perturbed diffusion-reaction problem ``-eps div(k grad u) + u = f``.

This is the first-order-in-eps surrogate of the fractional problem, since
``A^eps = I + eps ln A + O(eps^2)``.
"""
from __future__ import annotations

from .fem import (Coefficient, FEFunction, FESpace, apply_dirichlet, assemble_load, assemble_mass,
                  assemble_stiffness)
from .linalg import DEFAULT_RTOL, solve_spd


class ReactionDiffusionProblem:
    """``a(u, v) = eps (k grad u, grad v) + (u, v)``, ``l(v) = (f, v)``, u = 0 on the boundary."""

    def __init__(self, eps: float, f, k=1.0, quad_degree: int = 10):
        if not eps > 0:
            raise ValueError("eps must be positive")
        self.eps = float(eps)
        self.f = Coefficient.wrap(f)
        self.k = Coefficient.wrap(k)
        self.quad_degree = quad_degree
        self.alpha = self.eps
        self.beta = 1.0
        self.default_goal_scale = self.eps

    def system(self, space: FESpace):
        K = assemble_stiffness(space, self.k)
        M = assemble_mass(space)
        b = assemble_load(space, self.f, self.quad_degree)
        return self.alpha * K + self.beta * M, b

    def solve(self, space: FESpace, rel_tol: float = DEFAULT_RTOL) -> FEFunction:
        A, b = self.system(space)
        A, b = apply_dirichlet(A, b, space)
        u, _ = solve_spd(A, b, rel_tol)
        u[space.dirichlet_dofs] = 0.0
        return FEFunction(space, u)

    def data(self, x, y):
        return self.f(x, y), None

    def discrete_data(self, space, cells, bary):
        # the discrete load integrates f itself
        return None


def solve_reaction_diffusion(eps: float, k, f, space: FESpace, rel_tol: float = DEFAULT_RTOL,
                             quad_degree: int = 10) -> FEFunction:
    return ReactionDiffusionProblem(eps, f, k, quad_degree).solve(space, rel_tol)

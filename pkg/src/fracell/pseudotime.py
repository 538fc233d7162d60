"""Pseudo-time integration for ``A^eps w = psi``.

The state ``y(t) = delta^eps (t (A - delta) + delta)^(-eps) y(0)`` obeys

    (t D + delta) y' + eps D y = 0,   D = A - delta,   y(0) = delta^(-eps) psi,

and ``y(1) = w``. A two-level scheme with weight ``sigma`` advances it on a
uniform grid ``t_n = n tau``. In matrix form the identity is the mass matrix
M and ``D = K - delta M``.
"""
from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .fem import (Coefficient, FEFunction, FESpace, assemble_mass, assemble_stiffness, l2_project,
                  physical_points)
from .linalg import DEFAULT_RTOL, NotPositiveDefiniteError, solve_spd


class StabilityWarning(UserWarning):
    pass


@dataclass(frozen=True)
class SchemeParams:
    eps: float
    delta: float
    sigma: float = 0.5
    tau: float = 1e-2
    steps: int | None = None

    def __post_init__(self):
        if not 0 < self.eps < 1:
            raise ValueError(f"eps must lie in (0, 1), got {self.eps}")
        if not self.delta > 0:
            raise ValueError(f"delta must be positive, got {self.delta}")
        if self.sigma < 0:
            raise ValueError("sigma must be non-negative")
        if not self.tau > 0:
            raise ValueError("tau must be positive")
        steps = self.steps if self.steps is not None else int(round(1.0 / self.tau))
        if steps < 1 or abs(steps * self.tau - 1.0) > 1e-12:
            raise ValueError(f"steps * tau must equal 1 (steps={steps}, tau={self.tau})")
        object.__setattr__(self, "steps", int(steps))
        if self.sigma < 0.5:
            warnings.warn(f"sigma={self.sigma} < 0.5: the two-level scheme is not unconditionally stable",
                          StabilityWarning, stacklevel=3)

    @classmethod
    def from_steps(cls, eps, delta, sigma, steps: int):
        return cls(eps, delta, sigma, 1.0 / steps, steps)

    def t(self, n: int) -> float:
        return n * self.tau

    def t_sigma(self, n: int) -> float:
        return self.sigma * self.t(n + 1) + (1.0 - self.sigma) * self.t(n)


@dataclass
class TimeTrace:
    n: list = field(default_factory=list)
    t: list = field(default_factory=list)
    norm: list = field(default_factory=list)
    goal: list = field(default_factory=list)

    def record(self, n, t, norm, goal=None):
        self.n.append(int(n))
        self.t.append(float(t))
        self.norm.append(float(norm))
        self.goal.append(float("nan") if goal is None else float(goal))

    def to_csv(self, path):
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["n", "t", "norm", "goal"])
            for row in zip(self.n, self.t, self.norm, self.goal):
                w.writerow([row[0], repr(row[1]), repr(row[2]), repr(row[3])])

    @classmethod
    def from_csv(cls, path) -> "TimeTrace":
        tr = cls()
        with Path(path).open() as fh:
            for row in csv.DictReader(fh):
                tr.record(int(row["n"]), float(row["t"]), float(row["norm"]), float(row["goal"]))
        return tr


def initial_state(psi: FEFunction, params: SchemeParams) -> FEFunction:
    return FEFunction(psi.space, params.delta ** (-params.eps) * psi.coeffs)


class TwoLevelScheme:
    """Restricted operators for repeated steps on one space."""

    def __init__(self, space: FESpace, K, M, params: SchemeParams, rel_tol: float = DEFAULT_RTOL,
                 preconditioner="auto"):
        self.space = space
        self.params = params
        self.free = space.free_dofs
        f = self.free
        self.M = M[f][:, f].tocsr()
        self.D = (K[f][:, f] - params.delta * M[f][:, f]).tocsr()
        self.rel_tol = rel_tol
        self.preconditioner = preconditioner

    def matrices(self, n: int):
        p = self.params
        ts = p.t_sigma(n)
        base = ts * self.D + p.delta * self.M
        lhs = base + (p.sigma * p.tau * p.eps) * self.D
        rhs = base - ((1.0 - p.sigma) * p.tau * p.eps) * self.D
        return lhs.tocsr(), rhs.tocsr()

    def advance(self, y: np.ndarray, n: int) -> np.ndarray:
        lhs, rhs = self.matrices(n)
        b = rhs @ y[self.free]
        try:
            x, _ = solve_spd(lhs, b, self.rel_tol, self.preconditioner)
        except NotPositiveDefiniteError as exc:
            raise NotPositiveDefiniteError(
                f"{exc}; the step matrix lost definiteness, delta={self.params.delta:g} may exceed the "
                "smallest discrete eigenvalue", exc.stats) from exc
        out = np.zeros_like(y)
        out[self.free] = x
        return out


def step(y_n: FEFunction, n: int, K, M, params: SchemeParams, rel_tol: float = DEFAULT_RTOL,
         preconditioner="auto") -> FEFunction:
    """Advance ``y^n`` to ``y^{n+1}``; Dirichlet dofs are kept at zero."""
    if not 0 <= n < params.steps:
        raise ValueError(f"step index {n} outside [0, {params.steps})")
    scheme = TwoLevelScheme(y_n.space, K, M, params, rel_tol, preconditioner)
    return FEFunction(y_n.space, scheme.advance(y_n.coeffs, n))


def solve_fractional(psi: FEFunction, K, M, params: SchemeParams, goal=None, rel_tol: float = DEFAULT_RTOL,
                     preconditioner="auto", keep_states: bool = False):
    """Integrate to ``t = 1``; returns ``(y^N, TimeTrace)``.

    ``goal`` is an optional callable on FEFunction recorded per step. With
    ``keep_states`` the trace also carries every iterate in ``trace.states``.
    """
    scheme = TwoLevelScheme(psi.space, K, M, params, rel_tol, preconditioner)
    y = initial_state(psi, params).coeffs
    trace = TimeTrace()
    states = [y] if keep_states else None

    def _record(n, y):
        u = FEFunction(psi.space, y)
        trace.record(n, params.t(n), math.sqrt(max(y @ (M @ y), 0.0)), goal(u) if goal else None)

    _record(0, y)
    for n in range(params.steps):
        y = scheme.advance(y, n)
        _record(n + 1, y)
        if keep_states:
            states.append(y)
    if keep_states:
        trace.states = states
    return FEFunction(psi.space, y), trace


class FirstStepProblem:
    """One pseudo-time step from ``y0 = delta^-eps P f`` as a linear problem.

    At ``n = 0`` the step reads ``a(y1, v) = l(v)`` with

        a(u, v) = alpha (k grad u, grad v) + beta (u, v)
        l(v)    = gamma (k grad y0, grad v) + zeta (y0, v)

    The exact data ``y0 = delta^-eps f`` drives the error estimator; the
    discrete system uses the projected ``y0``.
    """

    default_goal_scale = 1.0

    def __init__(self, f, params: SchemeParams, k=1.0, quad_degree: int = 10):
        self.f = Coefficient.wrap(f)
        self.k = Coefficient.wrap(k)
        self.params = params
        self.quad_degree = quad_degree
        p = params
        ts = p.t_sigma(0)
        self.alpha = ts + p.sigma * p.tau * p.eps
        self.beta = p.delta * (1.0 - self.alpha)
        self.gamma = ts - (1.0 - p.sigma) * p.tau * p.eps
        self.zeta = p.delta * (1.0 - self.gamma)
        self.scale0 = p.delta ** (-p.eps)
        self._cache = (None, None)

    def _discrete(self, space):
        if self._cache[0] is not space:
            K = assemble_stiffness(space, self.k)
            M = assemble_mass(space)
            psi = l2_project(space, self.f, constrained=True, quad_degree=self.quad_degree)
            self._cache = (space, (K, M, psi))
        return self._cache[1]

    def initial(self, space) -> FEFunction:
        _, _, psi = self._discrete(space)
        return initial_state(psi, self.params)

    def system(self, space):
        K, M, _ = self._discrete(space)
        y0 = self.initial(space).coeffs
        A = self.alpha * K + self.beta * M
        b = self.gamma * (K @ y0) + self.zeta * (M @ y0)
        return A, b

    def solve(self, space) -> FEFunction:
        K, M, psi = self._discrete(space)
        return step(initial_state(psi, self.params), 0, K, M, self.params)

    def data(self, x, y):
        """Exact data ``(s0, s1)`` with ``l(v) = int s0 v + s1 . grad v``."""
        c = self.scale0
        gx, gy = self.f.grad(x, y)
        kv = self.k(x, y)
        return self.zeta * c * self.f(x, y), (self.gamma * c * kv * gx, self.gamma * c * kv * gy)

    def discrete_data(self, space, cells, bary):
        """Discrete data at barycentric points of ``cells``, same layout as :meth:`data`."""
        y0 = self.initial(space)
        val = y0.eval_bary(cells, bary)
        g = y0.grad_bary(cells, bary)
        x, y = physical_points(space.mesh, bary, cells)
        kv = self.k(x, y)
        return self.zeta * val, (self.gamma * kv * g[..., 0], self.gamma * kv * g[..., 1])

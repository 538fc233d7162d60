"""Goal-oriented mesh adaptation for the boundary-flux functional.

The error in ``G(u) = -scale int_boundary k grad u . n`` is estimated by a
dual-weighted residual. The adjoint solves the primal operator with the
goal functional as load, in an enriched space: P2 on the same mesh for P1
primals, P2 on a twice-bisected mesh for P2 primals.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

from .fem import (FEFunction, FESpace, apply_dirichlet, assemble_mass, assemble_stiffness, boundary_flux,
                  facet_bary, facet_geometry, grad_barycentric, physical_points, tabulate)
from .linalg import solve_spd
from .mesh import Mesh, refine, uniform_refine, write_mesh
from .quadrature import edge_rule, triangle_rule


@dataclass
class AdaptConfig:
    eta: float = 1e-5
    max_steps: int = 20
    marking_fraction: float = 0.5
    goal_scale: float | None = None
    max_dofs: int | None = None

    def __post_init__(self):
        if not self.eta > 0:
            raise ValueError("eta must be positive")
        if self.max_steps < 1:
            raise ValueError("max_steps must be >= 1")
        if not 0 < self.marking_fraction < 1:
            raise ValueError("marking_fraction must lie in (0, 1)")


@dataclass
class AdaptStep:
    s: int
    goal: float
    dofs: int
    cells: int
    estimate: float
    vertices: int = 0


@dataclass
class AdaptReport:
    rows: list = field(default_factory=list)
    meshes: list = field(default_factory=list)
    converged: bool = False

    @property
    def final_goal(self) -> float:
        return self.rows[-1].goal

    @property
    def goals(self) -> np.ndarray:
        return np.array([r.goal for r in self.rows])

    @property
    def final_mesh(self) -> Mesh:
        return self.meshes[-1]

    def to_csv(self, path):
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["s", "G", "M_h", "cells", "estimate", "converged"])
            for r in self.rows:
                w.writerow([r.s, repr(r.goal), r.dofs, r.cells, repr(r.estimate), str(self.converged).lower()])

    @classmethod
    def from_csv(cls, path) -> "AdaptReport":
        rep = cls()
        with Path(path).open() as fh:
            for row in csv.DictReader(fh):
                rep.rows.append(AdaptStep(int(row["s"]), float(row["G"]), int(row["M_h"]), int(row["cells"]),
                                          float(row["estimate"])))
                rep.converged = row["converged"] == "true"
        return rep

    def write_meshes(self, directory, stem: str = "mesh"):
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        for r, m in zip(self.rows, self.meshes):
            write_mesh(m, directory / f"{stem}_{r.s:02d}.txt")


def goal_load(space: FESpace, k, scale: float) -> np.ndarray:
    """``J(chi_i) = -scale int_boundary k grad chi_i . n`` for every basis function."""
    mesh = space.mesh
    bf = mesh.boundary_facets
    s, w = edge_rule(3)
    a, b, length, normal = facet_geometry(mesh, bf)
    bary = facet_bary(bf[:, 1], s)
    _, coef = tabulate(space.order, bary)
    gl = grad_barycentric(mesh, bf[:, 0])
    dn = np.einsum("cqbi,cid,cd->cqb", coef, gl, normal)
    pts = a[:, None, :] + s[None, :, None] * (b - a)[:, None, :]
    kv = k(pts[..., 0], pts[..., 1])
    loc = -scale * np.einsum("cqb,cq,q,c->cb", dn, kv, w, length)
    out = np.zeros(space.dof_count)
    np.add.at(out, space.cell_dofs[bf[:, 0]], loc)
    return out


def enriched_space(space: FESpace):
    """Adjoint space and the map from its cells to cells of ``space.mesh``."""
    if space.order == 1:
        return FESpace(space.mesh, 2), np.arange(space.mesh.num_cells)
    fine = uniform_refine(space.mesh, 2)
    return FESpace(fine, 2), fine.parent


def barycentric_in(mesh: Mesh, cells, x, y) -> np.ndarray:
    """Barycentric coordinates of points ``(x, y)`` (shape ``(n, nq)``) in ``cells``."""
    p = mesh.vertices[mesh.cells[cells]]
    e1 = p[:, 1] - p[:, 0]
    e2 = p[:, 2] - p[:, 0]
    det = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
    dx = x - p[:, None, 0, 0]
    dy = y - p[:, None, 0, 1]
    l1 = (dx * e2[:, None, 1] - dy * e2[:, None, 0]) / det[:, None]
    l2 = (e1[:, None, 0] * dy - e1[:, None, 1] * dx) / det[:, None]
    return np.stack([1.0 - l1 - l2, l1, l2], axis=-1)


def _interpolate_from(fine_space: FESpace, z: np.ndarray, coarse: FESpace) -> np.ndarray:
    if fine_space.mesh is coarse.mesh:
        return z[: coarse.dof_count] if coarse.order == 1 else z.copy()
    tree = cKDTree(fine_space.dof_coords)
    dist, idx = tree.query(coarse.dof_coords)
    if dist.max() > 1e-10:
        raise RuntimeError("coarse nodes are not nodes of the enriched space")
    return z[idx]


def estimate_goal_error(u_h: FEFunction, problem, config: AdaptConfig, adjoint=None):
    """Dual-weighted residual estimate of ``G(u) - G(u_h)``.

    Returns ``(estimate, indicators)``; the indicators are per cell of
    ``u_h``'s mesh, non-negative, and sum to at least ``|estimate|``.
    """
    V = u_h.space
    mesh = V.mesh
    scale = problem.default_goal_scale if config.goal_scale is None else config.goal_scale
    k = problem.k
    if not np.any(u_h.coeffs) and _data_vanishes(problem, mesh):
        return 0.0, np.zeros(mesh.num_cells)

    Vp, parent = enriched_space(V) if adjoint is None else adjoint
    fine = Vp.mesh
    A = problem.alpha * assemble_stiffness(Vp, k) + problem.beta * assemble_mass(Vp)
    A, j = apply_dirichlet(A, goal_load(Vp, k, scale), Vp)
    z_coeffs, _ = solve_spd(A, j)
    z_coeffs[Vp.dirichlet_dofs] = 0.0
    z = FEFunction(Vp, z_coeffs)
    Pz = FEFunction(V, _interpolate_from(Vp, z_coeffs, V))

    nc = mesh.num_cells
    rho = np.zeros(nc)
    data_part = np.zeros(nc)
    lap = u_h.hessian_trace()

    bary, w = triangle_rule(6)
    chunk = 20_000
    for s in range(0, fine.num_cells, chunk):
        cf = np.arange(s, min(s + chunk, fine.num_cells))
        cc = parent[cf]
        x, y = physical_points(fine, bary, cf)
        W = w[None, :] * fine.signed_areas[cf, None]
        lc = barycentric_in(mesh, cc, x, y)
        v = z.eval_bary(cf, bary) - Pz.eval_bary(cc, lc)
        gv = z.grad_bary(cf, bary) - Pz.grad_bary(cc, lc)
        u = u_h.eval_bary(cc, lc)
        gu = u_h.grad_bary(cc, lc)
        kv = k(x, y)
        kgx, kgy = k.grad(x, y)
        div_flux = kv * lap[cc, None] + kgx * gu[..., 0] + kgy * gu[..., 1]
        s0, s1 = problem.data(x, y)
        R = s0 - problem.beta * u + problem.alpha * div_flux
        cell = np.sum(W * R * v, axis=1)
        if s1 is not None:
            cell += np.sum(W * (s1[0] * gv[..., 0] + s1[1] * gv[..., 1]), axis=1)
        rho += np.bincount(cc, cell, minlength=nc)

        dd = problem.discrete_data(V, cc, lc)
        if dd is not None:
            pz = Pz.eval_bary(cc, lc)
            gpz = Pz.grad_bary(cc, lc)
            d = (s0 - dd[0]) * pz
            if s1 is not None:
                d = d + (s1[0] - dd[1][0]) * gpz[..., 0] + (s1[1] - dd[1][1]) * gpz[..., 1]
            data_part += np.bincount(cc, np.sum(W * d, axis=1), minlength=nc)

    rho += _jump_terms(u_h, z, Pz, parent, problem.alpha, k)
    estimate = float(rho.sum() + data_part.sum())
    indicators = np.abs(rho) + np.abs(data_part)
    return estimate, indicators


def _data_vanishes(problem, mesh) -> bool:
    bary, _ = triangle_rule(4)
    x, y = physical_points(mesh, bary)
    s0, s1 = problem.data(x, y)
    zero = not np.any(s0)
    if s1 is not None:
        zero = zero and not np.any(s1[0]) and not np.any(s1[1])
    return zero


def _jump_terms(u_h, z, Pz, parent, alpha, k) -> np.ndarray:
    """Half flux jumps of ``u_h`` across coarse edges, weighted by ``z - Pz``."""
    mesh = u_h.space.mesh
    fine = z.space.mesh
    ec = fine.edge_cells
    interior = ec[:, 1] >= 0
    e = np.nonzero(interior)[0]
    t1, t2 = ec[e, 0], ec[e, 1]
    T1, T2 = parent[t1], parent[t2]
    keep = T1 != T2
    e, t1, T1, T2 = e[keep], t1[keep], T1[keep], T2[keep]
    out = np.zeros(mesh.num_cells)
    if len(e) == 0:
        return out
    a = fine.vertices[fine.edges[e, 0]]
    b = fine.vertices[fine.edges[e, 1]]
    s, w = edge_rule(3)
    pts = a[:, None, :] + s[None, :, None] * (b - a)[:, None, :]
    x, y = pts[..., 0], pts[..., 1]
    t = b - a
    length = np.linalg.norm(t, axis=1)
    n = np.stack([t[:, 1], -t[:, 0]], axis=1) / length[:, None]
    away = np.einsum("cd,cd->c", 0.5 * (a + b) - mesh.centroids[T1], n)
    n[away < 0] *= -1.0
    g1 = u_h.grad_bary(T1, barycentric_in(mesh, T1, x, y))
    g2 = u_h.grad_bary(T2, barycentric_in(mesh, T2, x, y))
    v = z.eval_bary(t1, barycentric_in(fine, t1, x, y)) - Pz.eval_bary(T1, barycentric_in(mesh, T1, x, y))
    jump = np.einsum("cqd,cd->cq", g1 - g2, n) * k(x, y)
    c = -0.5 * alpha * np.sum(jump * v * w[None, :], axis=1) * length
    out += np.bincount(T1, c, minlength=mesh.num_cells)
    out += np.bincount(T2, c, minlength=mesh.num_cells)
    return out


def dorfler_mark(indicators, fraction: float) -> np.ndarray:
    """Smallest set of cells whose indicators carry ``fraction`` of the total."""
    ind = np.asarray(indicators, float)
    total = ind.sum()
    if total <= 0:
        return np.zeros(0, np.int64)
    order = np.argsort(-ind, kind="stable")
    csum = np.cumsum(ind[order])
    count = int(np.searchsorted(csum, fraction * total) + 1)
    return np.sort(order[: min(count, len(ind))])


def adapt_loop(problem, config: AdaptConfig, initial: Mesh, order: int = 1, callback=None):
    """Solve, estimate, mark and refine until ``|estimate| <= eta``.

    Returns ``(u_h, report)``; running out of steps is reported through
    ``report.converged`` rather than raised.
    """
    scale = problem.default_goal_scale if config.goal_scale is None else config.goal_scale
    report = AdaptReport()
    mesh = initial
    for s in range(config.max_steps + 1):
        V = FESpace(mesh, order)
        u = problem.solve(V)
        G = boundary_flux(u, problem.k, scale)
        est, ind = estimate_goal_error(u, problem, config)
        report.rows.append(AdaptStep(s, G, V.dof_count, mesh.num_cells, est, mesh.num_vertices))
        report.meshes.append(mesh)
        if callback is not None:
            callback(report.rows[-1])
        if abs(est) <= config.eta:
            report.converged = True
            break
        if s == config.max_steps or (config.max_dofs and V.dof_count >= config.max_dofs):
            break
        mesh = refine(mesh, dorfler_mark(ind, config.marking_fraction))
    return u, report


def starting_adaptation(f, params, config: AdaptConfig, initial: Mesh, k=1.0, order: int = 2,
                        quad_degree: int = 10, callback=None):
    """Adapt the mesh on the first pseudo-time step with the unscaled flux goal."""
    from .pseudotime import FirstStepProblem

    problem = FirstStepProblem(f, params, k, quad_degree)
    cfg = AdaptConfig(config.eta, config.max_steps, config.marking_fraction, 1.0, config.max_dofs)
    _, report = adapt_loop(problem, cfg, initial, order, callback)
    return report.final_mesh, report

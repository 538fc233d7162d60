"""Lagrange P1/P2 spaces, matrix assembly, projection and boundary flux."""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .mesh import Mesh
from .quadrature import edge_rule, triangle_rule

_CHUNK = 40_000


class CoefficientError(ValueError):
    pass


class Coefficient:
    """A scalar field ``(x1, x2) -> value`` evaluated on arrays.

    ``grad`` is optional; when missing it is approximated by central
    differences (only the error estimator needs it).
    """

    def __init__(self, func, grad=None, name: str = "", constant: float | None = None):
        self.func = func
        self._grad = grad
        self.name = name
        self.constant = constant

    @classmethod
    def const(cls, value: float, name: str = "") -> "Coefficient":
        value = float(value)
        return cls(lambda x, y: np.full(np.shape(x), value), lambda x, y: (np.zeros(np.shape(x)),) * 2,
                   name=name or repr(value), constant=value)

    @classmethod
    def wrap(cls, obj) -> "Coefficient":
        if isinstance(obj, Coefficient):
            return obj
        if callable(obj):
            return cls(obj)
        return cls.const(obj)

    def __call__(self, x, y):
        return np.broadcast_to(np.asarray(self.func(x, y), float), np.shape(x))

    def grad(self, x, y):
        if self._grad is not None:
            gx, gy = self._grad(x, y)
            return np.broadcast_to(gx, np.shape(x)), np.broadcast_to(gy, np.shape(x))
        h = 1e-6
        gx = (self(x + h, y) - self(x - h, y)) / (2 * h)
        gy = (self(x, y + h) - self(x, y - h)) / (2 * h)
        return gx, gy

    def check_positive(self, mesh: Mesh, samples: int = 7):
        bary, _ = triangle_rule(samples)
        x, y = physical_points(mesh, bary)
        vals = self(x, y)
        if not np.all(np.isfinite(vals)) or vals.min() <= 0:
            raise CoefficientError(f"coefficient {self.name or ''} is not positive on the mesh "
                                   f"(min sample {vals.min():.3g})")


def physical_points(mesh: Mesh, bary, cells=None):
    """Map barycentric points to physical coordinates.

    ``bary`` is ``(nq, 3)`` (same points in every cell) or ``(nc, nq, 3)``.
    """
    p = mesh.vertices[mesh.cells if cells is None else mesh.cells[cells]]
    if bary.ndim == 2:
        xy = np.einsum("qi,cid->cqd", bary, p)
    else:
        xy = np.einsum("cqi,cid->cqd", bary, p)
    return xy[..., 0], xy[..., 1]


def grad_barycentric(mesh: Mesh, cells=None) -> np.ndarray:
    """``(nc, 3, 2)`` constant gradients of the barycentric coordinates."""
    p = mesh.vertices[mesh.cells if cells is None else mesh.cells[cells]]
    area2 = 2.0 * (mesh.signed_areas if cells is None else mesh.signed_areas[cells])
    nxt = p[:, [1, 2, 0]]
    nn = p[:, [2, 0, 1]]
    g = np.empty_like(p)
    g[..., 0] = nxt[..., 1] - nn[..., 1]
    g[..., 1] = nn[..., 0] - nxt[..., 0]
    return g / area2[:, None, None]


def tabulate(order: int, bary: np.ndarray):
    """Basis values ``(..., nb)`` and gradient coefficients ``(..., nb, 3)``.

    The gradient of basis function b is ``sum_i coef[..., b, i] * grad(lambda_i)``.
    Local P2 ordering: three vertices, then edge j (opposite vertex j).
    """
    l0, l1, l2 = bary[..., 0], bary[..., 1], bary[..., 2]
    lam = (l0, l1, l2)
    shape = bary.shape[:-1]
    if order == 1:
        vals = np.stack(lam, axis=-1)
        coef = np.broadcast_to(np.eye(3), shape + (3, 3)).copy()
        return vals, coef
    if order != 2:
        raise ValueError(f"unsupported element order {order}")
    vals = np.empty(shape + (6,))
    coef = np.zeros(shape + (6, 3))
    for i in range(3):
        vals[..., i] = lam[i] * (2.0 * lam[i] - 1.0)
        coef[..., i, i] = 4.0 * lam[i] - 1.0
        j, k = (i + 1) % 3, (i + 2) % 3
        vals[..., 3 + i] = 4.0 * lam[j] * lam[k]
        coef[..., 3 + i, j] = 4.0 * lam[k]
        coef[..., 3 + i, k] = 4.0 * lam[j]
    return vals, coef


@dataclass(frozen=True, eq=False)
class FESpace:
    """Continuous Lagrange space of order 1 or 2 on a mesh."""

    mesh: Mesh
    order: int = 1

    def __post_init__(self):
        if self.order not in (1, 2):
            raise ValueError(f"order must be 1 or 2, got {self.order}")

    @property
    def num_local(self) -> int:
        return 3 if self.order == 1 else 6

    @cached_property
    def cell_dofs(self) -> np.ndarray:
        m = self.mesh
        if self.order == 1:
            return m.cells
        return np.hstack([m.cells, m.num_vertices + m.cell_edges])

    @property
    def dof_count(self) -> int:
        m = self.mesh
        return m.num_vertices if self.order == 1 else m.num_vertices + m.num_edges

    @cached_property
    def dof_coords(self) -> np.ndarray:
        m = self.mesh
        if self.order == 1:
            return m.vertices
        e = m.edges
        return np.vstack([m.vertices, 0.5 * (m.vertices[e[:, 0]] + m.vertices[e[:, 1]])])

    @cached_property
    def dirichlet_dofs(self) -> np.ndarray:
        m = self.mesh
        d = m.boundary_vertices
        if self.order == 2:
            d = np.concatenate([d, m.num_vertices + m.boundary_edges])
        return np.sort(d)

    @cached_property
    def free_dofs(self) -> np.ndarray:
        mask = np.ones(self.dof_count, bool)
        mask[self.dirichlet_dofs] = False
        return np.nonzero(mask)[0]


@dataclass(eq=False)
class FEFunction:
    space: FESpace
    coeffs: np.ndarray

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, float)
        if self.coeffs.shape != (self.space.dof_count,):
            raise ValueError(f"expected {self.space.dof_count} coefficients, got {self.coeffs.shape}")

    def local(self, cells=None) -> np.ndarray:
        cd = self.space.cell_dofs
        return self.coeffs[cd if cells is None else cd[cells]]

    def eval_bary(self, cells, bary) -> np.ndarray:
        """Values at barycentric points; ``bary`` is ``(nq, 3)`` or ``(len(cells), nq, 3)``."""
        vals, _ = tabulate(self.space.order, bary)
        loc = self.local(cells)
        if vals.ndim == 2:
            return np.einsum("qb,cb->cq", vals, loc)
        return np.einsum("cqb,cb->cq", vals, loc)

    def grad_bary(self, cells, bary) -> np.ndarray:
        _, coef = tabulate(self.space.order, bary)
        loc = self.local(cells)
        gl = grad_barycentric(self.space.mesh, cells)
        if coef.ndim == 3:
            return np.einsum("qbi,cid,cb->cqd", coef, gl, loc)
        return np.einsum("cqbi,cid,cb->cqd", coef, gl, loc)

    def hessian_trace(self, cells=None) -> np.ndarray:
        """Cellwise constant Laplacian of the discrete function."""
        n = self.space.mesh.num_cells if cells is None else len(cells)
        if self.space.order == 1:
            return np.zeros(n)
        gl = grad_barycentric(self.space.mesh, cells)
        loc = self.local(cells)
        G = np.einsum("cid,cjd->cij", gl, gl)
        lap = np.zeros(n)
        for i in range(3):
            lap += 4.0 * loc[:, i] * G[:, i, i]
            j, k = (i + 1) % 3, (i + 2) % 3
            lap += 8.0 * loc[:, 3 + i] * G[:, j, k]
        return lap

    def at(self, points) -> np.ndarray:
        """Point values; points outside the mesh raise ``ValueError``."""
        pts = np.atleast_2d(np.asarray(points, float))
        cells, bary = locate(self.space.mesh, pts)
        return self.eval_bary(cells, bary[:, None, :])[:, 0]

    def mass_norm(self, M) -> float:
        return float(np.sqrt(max(self.coeffs @ (M @ self.coeffs), 0.0)))

    def to_csv(self, path) -> None:
        write_solution_csv(self, path)


def locate(mesh: Mesh, points, tol: float = 1e-12):
    """Containing cell and barycentric coordinates for each point."""
    from scipy.spatial import cKDTree

    pts = np.atleast_2d(np.asarray(points, float))
    k = min(16, mesh.num_cells)
    _, cand = cKDTree(mesh.centroids).query(pts, k=k)
    cand = cand.reshape(len(pts), k)
    cells = np.full(len(pts), -1)
    bary = np.zeros((len(pts), 3))
    todo = np.arange(len(pts))
    for j in range(k):
        if len(todo) == 0:
            break
        b = _bary(mesh, cand[todo, j], pts[todo])
        ok = b.min(axis=1) >= -tol
        cells[todo[ok]] = cand[todo[ok], j]
        bary[todo[ok]] = b[ok]
        todo = todo[~ok]
    for i in todo:
        # fall back to a full scan for strongly graded meshes
        b = _bary(mesh, np.arange(mesh.num_cells), np.repeat(pts[i:i + 1], mesh.num_cells, axis=0))
        hit = np.nonzero(b.min(axis=1) >= -tol)[0]
        if len(hit) == 0:
            raise ValueError(f"point {pts[i]} lies outside the mesh")
        cells[i], bary[i] = hit[0], b[hit[0]]
    return cells, bary


def _bary(mesh: Mesh, cells, pts) -> np.ndarray:
    p = mesh.vertices[mesh.cells[cells]]
    e1, e2 = p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]
    det = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
    d = pts - p[:, 0]
    l1 = (d[:, 0] * e2[:, 1] - d[:, 1] * e2[:, 0]) / det
    l2 = (e1[:, 0] * d[:, 1] - e1[:, 1] * d[:, 0]) / det
    return np.stack([1.0 - l1 - l2, l1, l2], axis=1)


def interpolate(space: FESpace, f) -> FEFunction:
    f = Coefficient.wrap(f)
    xy = space.dof_coords
    return FEFunction(space, np.array(f(xy[:, 0], xy[:, 1]), float))


def _assemble(space: FESpace, local_fn, quad_degree: int):
    bary, w = triangle_rule(quad_degree)
    vals, coef = tabulate(space.order, bary)
    m = space.mesh
    nb = space.num_local
    data = []
    for s in range(0, m.num_cells, _CHUNK):
        cells = np.arange(s, min(s + _CHUNK, m.num_cells))
        data.append(local_fn(cells, bary, w, vals, coef))
    data = np.concatenate(data) if data else np.zeros((0, nb, nb))
    cd = space.cell_dofs
    rows = np.repeat(cd, nb, axis=1).ravel()
    cols = np.tile(cd, (1, nb)).ravel()
    n = space.dof_count
    A = sp.coo_matrix((data.ravel(), (rows, cols)), shape=(n, n)).tocsr()
    A.sum_duplicates()
    return A


def assemble_stiffness(space: FESpace, k=1.0, quad_degree: int = 4) -> sp.csr_matrix:
    """Matrix of ``a(u, v) = int k grad u . grad v`` before boundary elimination."""
    k = Coefficient.wrap(k)
    k.check_positive(space.mesh)
    m = space.mesh

    def local(cells, bary, w, vals, coef):
        gl = grad_barycentric(m, cells)
        G = np.einsum("qbi,cid->cqbd", coef, gl)
        x, y = physical_points(m, bary, cells)
        kw = k(x, y) * w[None, :] * m.signed_areas[cells, None]
        return np.einsum("cq,cqad,cqbd->cab", kw, G, G)

    return _assemble(space, local, quad_degree)


def assemble_mass(space: FESpace, quad_degree: int = 4) -> sp.csr_matrix:
    """Gram matrix of the basis in L2."""
    m = space.mesh

    def local(cells, bary, w, vals, coef):
        loc = np.einsum("q,qa,qb->ab", w, vals, vals)
        return m.signed_areas[cells, None, None] * loc[None]

    return _assemble(space, local, quad_degree)


def assemble_load(space: FESpace, f, quad_degree: int = 4) -> np.ndarray:
    """Vector ``b[i] = int f chi_i``."""
    f = Coefficient.wrap(f)
    m = space.mesh
    bary, w = triangle_rule(quad_degree)
    vals, _ = tabulate(space.order, bary)
    b = np.zeros(space.dof_count)
    for s in range(0, m.num_cells, _CHUNK):
        cells = np.arange(s, min(s + _CHUNK, m.num_cells))
        x, y = physical_points(m, bary, cells)
        fw = f(x, y) * w[None, :] * m.signed_areas[cells, None]
        np.add.at(b, space.cell_dofs[cells], fw @ vals)
    return b


def l2_project(space: FESpace, f, constrained: bool = False, quad_degree: int = 4,
               rel_tol: float = 1e-12) -> FEFunction:
    """L2 projection of ``f``.

    With ``constrained=True`` the projection is onto the subspace vanishing
    on the boundary, which is the right-hand side of the fractional problem.
    """
    from .linalg import solve_spd

    M = assemble_mass(space, quad_degree)
    b = assemble_load(space, f, quad_degree)
    coeffs = np.zeros(space.dof_count)
    if constrained:
        free = space.free_dofs
        coeffs[free], _ = solve_spd(M[free][:, free], b[free], rel_tol)
    else:
        coeffs[:], _ = solve_spd(M, b, rel_tol)
    return FEFunction(space, coeffs)


def apply_dirichlet(matrix, rhs, space: FESpace):
    """Symmetric elimination of homogeneous Dirichlet dofs.

    Constrained rows and columns are zeroed with unit diagonal; matching rhs
    entries are set to zero.
    """
    d = space.dirichlet_dofs
    keep = np.ones(space.dof_count)
    keep[d] = 0.0
    S = sp.diags(keep)
    fixed = sp.diags(1.0 - keep)
    A = (S @ matrix @ S + fixed).tocsr()
    A.eliminate_zeros()
    b = np.array(rhs, float, copy=True)
    b[d] = 0.0
    return A, b


def facet_geometry(mesh: Mesh, facets=None):
    """Endpoints, lengths and outward unit normals of boundary facets."""
    bf = mesh.boundary_facets if facets is None else facets
    c, j = bf[:, 0], bf[:, 1]
    a = mesh.vertices[mesh.cells[c, (j + 1) % 3]]
    b = mesh.vertices[mesh.cells[c, (j + 2) % 3]]
    t = b - a
    length = np.linalg.norm(t, axis=1)
    normal = np.stack([t[:, 1], -t[:, 0]], axis=1) / length[:, None]
    return a, b, length, normal


def facet_bary(local_edge: np.ndarray, s: np.ndarray) -> np.ndarray:
    """Barycentric coordinates ``(n, nq, 3)`` of points at parameter ``s``
    along local edge ``j`` (from vertex j+1 to vertex j+2)."""
    n = len(local_edge)
    bary = np.zeros((n, len(s), 3))
    rows = np.arange(n)[:, None]
    bary[rows, :, (local_edge[:, None] + 1) % 3] = 1.0 - s[None, :]
    bary[rows, :, (local_edge[:, None] + 2) % 3] = s[None, :]
    return bary


def boundary_flux(u: FEFunction, k=1.0, scale: float = 1.0, npoints: int = 3) -> float:
    """``-scale * int_{boundary} k grad(u) . n ds`` by Gauss quadrature per facet."""
    k = Coefficient.wrap(k)
    mesh = u.space.mesh
    bf = mesh.boundary_facets
    s, w = edge_rule(npoints)
    a, b, length, normal = facet_geometry(mesh, bf)
    bary = facet_bary(bf[:, 1], s)
    g = u.grad_bary(bf[:, 0], bary)
    pts = a[:, None, :] + s[None, :, None] * (b - a)[:, None, :]
    kv = k(pts[..., 0], pts[..., 1])
    dn = np.einsum("cqd,cd->cq", g, normal)
    return float(-scale * np.sum(kv * dn * w[None, :] * length[:, None]))


def l2_error(u: FEFunction, exact, quad_degree: int = 8) -> float:
    exact = Coefficient.wrap(exact)
    m = u.space.mesh
    bary, w = triangle_rule(quad_degree)
    total = 0.0
    for s in range(0, m.num_cells, _CHUNK):
        cells = np.arange(s, min(s + _CHUNK, m.num_cells))
        x, y = physical_points(m, bary, cells)
        diff = u.eval_bary(cells, bary) - exact(x, y)
        total += float(np.sum(diff**2 * w[None, :] * m.signed_areas[cells, None]))
    return float(np.sqrt(total))


def integrate(f, mesh: Mesh, quad_degree: int = 8) -> float:
    f = Coefficient.wrap(f)
    bary, w = triangle_rule(quad_degree)
    x, y = physical_points(mesh, bary)
    return float(np.sum(f(x, y) * w[None, :] * mesh.signed_areas[:, None]))


def write_solution_csv(u: FEFunction, path) -> None:
    xy = u.space.dof_coords
    data = np.column_stack([np.arange(u.space.dof_count), xy, u.coeffs])
    np.savetxt(path, data, delimiter=",", header="dof,x,y,value", comments="",
               fmt=["%d", "%.17g", "%.17g", "%.17g"])


def read_solution_csv(path):
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return data[:, 0].astype(np.int64), data[:, 1:3], data[:, 3]


def write_vtk(u: FEFunction, path, name: str = "u") -> None:
    """Legacy ASCII VTK of the vertex values on the linear triangulation."""
    m = u.space.mesh
    nv = m.num_vertices
    lines = ["# vtk DataFile Version 3.0", name, "ASCII", "DATASET UNSTRUCTURED_GRID",
             f"POINTS {nv} double"]
    lines += [f"{x:.17g} {y:.17g} 0" for x, y in m.vertices]
    lines.append(f"CELLS {m.num_cells} {4 * m.num_cells}")
    lines += [f"3 {a} {b} {c}" for a, b, c in m.cells]
    lines.append(f"CELL_TYPES {m.num_cells}")
    lines += ["5"] * m.num_cells
    lines += [f"POINT_DATA {nv}", f"SCALARS {name} double 1", "LOOKUP_TABLE default"]
    lines += [f"{v:.17g}" for v in u.coeffs[:nv]]
    Path(path).write_text("\n".join(lines) + "\n")

"""Conforming triangular meshes with newest-vertex bisection.

Cells are stored counter-clockwise with the *newest vertex* first, so the
refinement edge of cell ``c`` is always ``(cells[c, 1], cells[c, 2])``.
Local edge ``j`` of a cell is the edge opposite local vertex ``j``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

__all__ = [
    "Mesh",
    "MeshError",
    "unit_square_mesh",
    "refine",
    "uniform_refine",
    "boundary_distance",
    "point_boundary_distance",
    "edge_census",
    "read_mesh",
    "write_mesh",
]


class MeshError(ValueError):
    pass


def _frozen(a, dtype):
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Mesh:
    """Immutable triangulation.

    ``parent[c]`` is the index of the cell of the previous mesh that cell
    ``c`` was cut from (-1 for a mesh built from scratch).
    """

    vertices: np.ndarray
    cells: np.ndarray
    generation: np.ndarray = None
    parent: np.ndarray = None
    _checked: bool = field(default=True, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "vertices", _frozen(self.vertices, float).reshape(-1, 2))
        object.__setattr__(self, "cells", _frozen(self.cells, np.int64).reshape(-1, 3))
        nc = len(self.cells)
        gen = np.zeros(nc, np.int64) if self.generation is None else self.generation
        par = np.full(nc, -1, np.int64) if self.parent is None else self.parent
        object.__setattr__(self, "generation", _frozen(gen, np.int64))
        object.__setattr__(self, "parent", _frozen(par, np.int64))
        if self._checked:
            self.check()

    @property
    def num_vertices(self) -> int:
        return len(self.vertices)

    @property
    def num_cells(self) -> int:
        return len(self.cells)

    def check(self):
        """Raise :class:`MeshError` unless every mesh invariant holds."""
        nv = self.num_vertices
        if len(self.generation) != self.num_cells or len(self.parent) != self.num_cells:
            raise MeshError("per-cell arrays do not match cell count")
        if self.cells.size and (self.cells.min() < 0 or self.cells.max() >= nv):
            raise MeshError("cell vertex index out of range")
        if np.any(self.signed_areas <= 0):
            raise MeshError("cell with non-positive signed area")
        counts = np.bincount(self.edge_cells_count, minlength=3)
        if np.any(self.edge_cells_count > 2):
            raise MeshError(f"non-manifold mesh: {counts[3:].sum()} edges in >2 cells")
        if self._has_hanging_nodes():
            raise MeshError("mesh has hanging nodes")

    def _has_hanging_nodes(self) -> bool:
        # A hanging node lies strictly inside a boundary-census edge.
        be = self.edges[self.edge_cells_count == 1]
        if len(be) == 0:
            return False
        a = self.vertices[be[:, 0]]
        b = self.vertices[be[:, 1]]
        mid = 0.5 * (a + b)
        # all boundary-census edges of a conforming mesh lie on the domain
        # boundary, so their midpoints are not vertices of the mesh
        key = {tuple(np.round(v, 13)) for v in self.vertices}
        return any(tuple(np.round(m, 13)) in key for m in mid)

    @cached_property
    def signed_areas(self) -> np.ndarray:
        p = self.vertices[self.cells]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    @cached_property
    def _edge_data(self):
        c = self.cells
        # local edge j is opposite local vertex j
        loc = np.stack([c[:, [1, 2]], c[:, [2, 0]], c[:, [0, 1]]], axis=1)
        flat = np.sort(loc.reshape(-1, 2), axis=1)
        edges, inv = np.unique(flat, axis=0, return_inverse=True)
        return edges, inv.reshape(-1, 3)

    @property
    def edges(self) -> np.ndarray:
        """Unique edges as sorted vertex pairs."""
        return self._edge_data[0]

    @property
    def cell_edges(self) -> np.ndarray:
        """``(num_cells, 3)`` edge ids; column j is the edge opposite vertex j."""
        return self._edge_data[1]

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    @cached_property
    def edge_cells_count(self) -> np.ndarray:
        return np.bincount(self.cell_edges.ravel(), minlength=self.num_edges)

    @cached_property
    def edge_cells(self) -> np.ndarray:
        """``(num_edges, 2)`` adjacent cells; second entry -1 on the boundary."""
        ec = np.full((self.num_edges, 2), -1, np.int64)
        flat = self.cell_edges.ravel()
        order = np.argsort(flat, kind="stable")
        cells = order // 3
        sorted_e = flat[order]
        first = np.ones(len(sorted_e), bool)
        first[1:] = sorted_e[1:] != sorted_e[:-1]
        ec[sorted_e[first], 0] = cells[first]
        ec[sorted_e[~first], 1] = cells[~first]
        return ec

    @cached_property
    def boundary_facets(self) -> np.ndarray:
        """``(n, 2)`` array of ``(cell, local_edge)`` pairs, one per boundary edge.

        The local edge runs from vertex ``(j+1) % 3`` to ``(j+2) % 3``, which
        traverses the boundary counter-clockwise (outward normal on the right).
        """
        bmask = self.edge_cells_count == 1
        cells, loc = np.nonzero(bmask[self.cell_edges])
        return np.stack([cells, loc], axis=1)

    @cached_property
    def boundary_edges(self) -> np.ndarray:
        return np.nonzero(self.edge_cells_count == 1)[0]

    @cached_property
    def boundary_vertices(self) -> np.ndarray:
        return np.unique(self.edges[self.boundary_edges])

    @cached_property
    def centroids(self) -> np.ndarray:
        return self.vertices[self.cells].mean(axis=1)

    @property
    def area(self) -> float:
        return float(self.signed_areas.sum())

    def diameters(self) -> np.ndarray:
        p = self.vertices[self.cells]
        lengths = np.linalg.norm(p - np.roll(p, 1, axis=1), axis=2)
        return lengths.max(axis=1)


def unit_square_mesh(n: int, diagonal: str = "right") -> Mesh:
    """Uniform triangulation of (0,1)^2 with ``n`` intervals per side.

    Every square is cut by the same diagonal: ``"right"`` runs from the
    lower-left to the upper-right corner, ``"left"`` the other way. The
    right-angle corner is the newest vertex, so the diagonals are the
    refinement edges.
    """
    if int(n) != n or n < 1:
        raise MeshError(f"n must be a positive integer, got {n!r}")
    n = int(n)
    x = np.linspace(0.0, 1.0, n + 1)
    X, Y = np.meshgrid(x, x, indexing="xy")
    vertices = np.stack([X.ravel(), Y.ravel()], axis=1)
    i, j = np.meshgrid(np.arange(n), np.arange(n), indexing="xy")
    v00 = (j * (n + 1) + i).ravel()
    v10 = v00 + 1
    v01 = v00 + n + 1
    v11 = v01 + 1
    if diagonal == "right":
        t1 = np.stack([v10, v11, v00], axis=1)
        t2 = np.stack([v01, v00, v11], axis=1)
    elif diagonal == "left":
        t1 = np.stack([v00, v10, v01], axis=1)
        t2 = np.stack([v11, v01, v10], axis=1)
    else:
        raise MeshError(f"unknown diagonal {diagonal!r}")
    cells = np.stack([t1, t2], axis=1).reshape(-1, 3)
    return Mesh(vertices, cells)


def refine(mesh: Mesh, marked) -> Mesh:
    """Newest-vertex bisection of the marked cells plus conformity closure.

    Each marked cell is bisected at least once; other cells are split only
    when a neighbour's refinement would otherwise leave a hanging node.
    Cells untouched by the refinement keep their relative order.
    """
    marked = np.asarray(sorted(marked) if isinstance(marked, (set, frozenset)) else marked)
    if marked.dtype == bool:
        marked = np.nonzero(marked)[0]
    marked = marked.astype(np.int64).ravel()
    nc = mesh.num_cells
    if marked.size and (marked.min() < 0 or marked.max() >= nc):
        raise MeshError("marked cell index out of range")
    if marked.size == 0:
        return Mesh(mesh.vertices, mesh.cells, mesh.generation, np.arange(nc), _checked=False)

    ce = mesh.cell_edges
    emark = np.zeros(mesh.num_edges, bool)
    emark[ce[marked, 0]] = True
    while True:
        need = emark[ce].any(axis=1) & ~emark[ce[:, 0]]
        if not need.any():
            break
        emark[ce[need, 0]] = True

    nv = mesh.num_vertices
    midx = np.full(mesh.num_edges, -1, np.int64)
    new_edges = np.nonzero(emark)[0]
    midx[new_edges] = nv + np.arange(len(new_edges))
    e = mesh.edges[new_edges]
    vertices = np.vstack([mesh.vertices, 0.5 * (mesh.vertices[e[:, 0]] + mesh.vertices[e[:, 1]])])

    c = mesh.cells
    gen = mesh.generation
    cut0 = emark[ce[:, 0]]
    cut1 = emark[ce[:, 1]]
    cut2 = emark[ce[:, 2]]
    out_cells, out_gen, out_parent = [], [], []

    keep = np.nonzero(~cut0)[0]
    out_cells.append(c[keep])
    out_gen.append(gen[keep])
    out_parent.append(keep)

    idx = np.nonzero(cut0)[0]
    v0, v1, v2 = c[idx, 0], c[idx, 1], c[idx, 2]
    m = midx[ce[idx, 0]]
    g = gen[idx] + 1
    # child A = (m, v0, v1) has refinement edge = parent edge 2
    # child B = (m, v2, v0) has refinement edge = parent edge 1
    a_cut = cut2[idx]
    b_cut = cut1[idx]
    sel = ~a_cut
    out_cells.append(np.stack([m[sel], v0[sel], v1[sel]], axis=1))
    out_gen.append(g[sel])
    out_parent.append(idx[sel])
    sel = a_cut
    m2 = midx[ce[idx[sel], 2]]
    out_cells.append(np.stack([m2, m[sel], v0[sel]], axis=1))
    out_cells.append(np.stack([m2, v1[sel], m[sel]], axis=1))
    out_gen += [g[sel] + 1, g[sel] + 1]
    out_parent += [idx[sel], idx[sel]]
    sel = ~b_cut
    out_cells.append(np.stack([m[sel], v2[sel], v0[sel]], axis=1))
    out_gen.append(g[sel])
    out_parent.append(idx[sel])
    sel = b_cut
    m1 = midx[ce[idx[sel], 1]]
    out_cells.append(np.stack([m1, m[sel], v2[sel]], axis=1))
    out_cells.append(np.stack([m1, v0[sel], m[sel]], axis=1))
    out_gen += [g[sel] + 1, g[sel] + 1]
    out_parent += [idx[sel], idx[sel]]

    cells = np.concatenate(out_cells)
    parent = np.concatenate(out_parent)
    generation = np.concatenate(out_gen)
    order = np.argsort(parent, kind="stable")
    return Mesh(vertices, cells[order], generation[order], parent[order], _checked=False)


def uniform_refine(mesh: Mesh, times: int = 2) -> Mesh:
    """Bisect every cell ``times`` times; ``parent`` maps to the input mesh."""
    parent = np.arange(mesh.num_cells)
    out = mesh
    for _ in range(times):
        out = refine(out, np.arange(out.num_cells))
        parent = parent[out.parent]
    return Mesh(out.vertices, out.cells, out.generation, parent, _checked=False)


def edge_census(mesh: Mesh) -> dict:
    """Multiplicity of every undirected edge, counted independently of the
    cached edge tables."""
    counts: dict = {}
    for tri in mesh.cells.tolist():
        for a, b in ((tri[0], tri[1]), (tri[1], tri[2]), (tri[2], tri[0])):
            key = (a, b) if a < b else (b, a)
            counts[key] = counts.get(key, 0) + 1
    return counts


def _point_segment_distance(p, a, b):
    ab = b - a
    t = np.einsum("...d,...d->...", p - a, ab) / np.einsum("...d,...d->...", ab, ab)
    t = np.clip(t, 0.0, 1.0)
    proj = a + t[..., None] * ab
    return np.linalg.norm(p - proj, axis=-1)


def boundary_distance(mesh: Mesh, cell=None):
    """Distance from cell centroid(s) to the mesh boundary.

    ``cell`` may be an index, an index array, or None for all cells.
    """
    scalar = np.ndim(cell) == 0 and cell is not None
    idx = np.arange(mesh.num_cells) if cell is None else np.atleast_1d(cell)
    out = point_boundary_distance(mesh, mesh.centroids[idx])
    return float(out[0]) if scalar else out


def point_boundary_distance(mesh: Mesh, points) -> np.ndarray:
    p = np.atleast_2d(np.asarray(points, float))
    e = mesh.edges[mesh.boundary_edges]
    a = mesh.vertices[e[:, 0]]
    b = mesh.vertices[e[:, 1]]
    out = np.empty(len(p))
    chunk = max(1, 2_000_000 // max(len(e), 1))
    for s in range(0, len(p), chunk):
        d = _point_segment_distance(p[s:s + chunk, None, :], a[None], b[None])
        out[s:s + chunk] = d.min(axis=1)
    return out


def write_mesh(mesh: Mesh, path) -> None:
    path = Path(path)
    with path.open("w") as fh:
        fh.write(f"vertices {mesh.num_vertices}\n")
        np.savetxt(fh, mesh.vertices, fmt="%.17g")
        fh.write(f"cells {mesh.num_cells}\n")
        np.savetxt(fh, mesh.cells, fmt="%d")


def read_mesh(path) -> Mesh:
    tokens = Path(path).read_text().split()
    try:
        if tokens[0] != "vertices":
            raise MeshError("expected 'vertices' header")
        nv = int(tokens[1])
        pos = 2
        verts = np.array(tokens[pos:pos + 2 * nv], float).reshape(nv, 2)
        pos += 2 * nv
        if tokens[pos] != "cells":
            raise MeshError("expected 'cells' header")
        nc = int(tokens[pos + 1])
        pos += 2
        cells = np.array(tokens[pos:pos + 3 * nc], np.int64).reshape(nc, 3)
    except (IndexError, ValueError) as exc:
        raise MeshError(f"malformed mesh file {path}: {exc}") from exc
    return Mesh(verts, cells)

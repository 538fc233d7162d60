from math import factorial

import numpy as np
import pytest
import scipy.linalg

from fracell.fem import (Coefficient, CoefficientError, FEFunction, FESpace, apply_dirichlet, assemble_load,
                         assemble_mass, assemble_stiffness, boundary_flux, integrate, interpolate, l2_error,
                         l2_project, read_solution_csv, write_solution_csv, write_vtk)
from fracell.linalg import is_symmetric
from fracell.mesh import Mesh, refine, unit_square_mesh
from fracell.quadrature import triangle_rule


@pytest.mark.parametrize("degree", [1, 2, 4, 6, 8, 10])
def test_triangle_rule_exact_on_monomials(degree):
    pts, w = triangle_rule(degree)
    for a in range(degree + 1):
        for b in range(degree + 1 - a):
            exact = 2.0 * factorial(a) * factorial(b) / factorial(a + b + 2)
            assert np.sum(w * pts[:, 1] ** a * pts[:, 2] ** b) == pytest.approx(exact, rel=1e-12, abs=1e-15)


@pytest.mark.parametrize("order", [1, 2])
def test_dof_counts(order):
    m = unit_square_mesh(8)
    V = FESpace(m, order)
    assert V.dof_count == (81 if order == 1 else 81 + m.num_edges)
    if order == 2:
        assert V.dof_count == 289
    xy = V.dof_coords[V.dirichlet_dofs]
    on = np.isclose(xy, 0).any(axis=1) | np.isclose(xy, 1).any(axis=1)
    assert on.all()
    assert len(V.dirichlet_dofs) == (32 if order == 1 else 64)


@pytest.mark.parametrize("order", [1, 2])
def test_stiffness_basic(order):
    V = FESpace(refine(unit_square_mesh(4), [0, 7, 11]), order)
    K = assemble_stiffness(V)
    assert is_symmetric(K)
    assert np.abs(K @ np.ones(V.dof_count)).max() <= 1e-10
    rng = np.random.default_rng(0)
    v = rng.standard_normal(V.dof_count)
    v[V.dirichlet_dofs] = 0
    assert v @ K @ v > 0


@pytest.mark.parametrize("order", [1, 2])
def test_mass_basic(order):
    V = FESpace(refine(unit_square_mesh(3), [2, 5]), order)
    M = assemble_mass(V)
    assert is_symmetric(M)
    assert M.sum() == pytest.approx(1.0, abs=1e-10)
    one = interpolate(V, 1.0)
    assert one.mass_norm(M) == pytest.approx(1.0, abs=1e-12)
    assert np.linalg.eigvalsh(M.toarray()).min() > 0


def test_rayleigh_quotient_of_first_eigenfunction():
    V = FESpace(unit_square_mesh(32), 1)
    K, M = assemble_stiffness(V), assemble_mass(V)
    v = interpolate(V, lambda x, y: np.sin(np.pi * x) * np.sin(np.pi * y)).coeffs
    rq = (v @ K @ v) / (v @ M @ v)
    assert abs(rq / (2 * np.pi**2) - 1) < 0.02


def test_assembly_independent_of_cell_order():
    m = refine(unit_square_mesh(4), [1, 2, 30])
    perm = np.random.default_rng(3).permutation(m.num_cells)
    mp = Mesh(m.vertices, m.cells[perm])
    k = Coefficient(lambda x, y: 1 + x * y)
    for order in (1, 2):
        V, Vp = FESpace(m, order), FESpace(mp, order)
        # P2 edge dofs are numbered by sorted vertex pairs, so they coincide
        for asm in (lambda s: assemble_stiffness(s, k), assemble_mass):
            A, B = asm(V), asm(Vp)
            assert abs(A - B).max() <= 1e-12 * abs(A).max()


def test_nonpositive_coefficient_rejected():
    with pytest.raises(CoefficientError):
        assemble_stiffness(FESpace(unit_square_mesh(2)), lambda x, y: x - 0.5)


@pytest.mark.parametrize("order", [1, 2])
def test_l2_project_reproduces_space_members(order):
    V = FESpace(unit_square_mesh(4), order)
    np.testing.assert_allclose(l2_project(V, 1.0).coeffs, 1.0, atol=1e-10)
    psi = l2_project(V, lambda x, y: x)
    np.testing.assert_allclose(psi.coeffs, V.dof_coords[:, 0], atol=1e-10)
    M = assemble_mass(V)
    b = assemble_load(V, lambda x, y: x)
    assert np.linalg.norm(M @ psi.coeffs - b) <= 1e-10 * np.linalg.norm(b)


def test_l2_project_order_for_surrogate_rhs():
    f = lambda x, y: (1 - x) * y**2
    norm_f_sq = 1.0 / 15.0  # int (1-x)^2 dx * int y^4 dy
    errs = []
    for n in (8, 16, 32):
        V = FESpace(unit_square_mesh(n), 1)
        psi = l2_project(V, f)
        M = assemble_mass(V)
        e_quad = l2_error(psi, f)
        # Pythagoras for an orthogonal projection: ||f - Pf||^2 = ||f||^2 - ||Pf||^2
        e_pyth = np.sqrt(norm_f_sq - psi.coeffs @ M @ psi.coeffs)
        assert e_quad == pytest.approx(e_pyth, rel=1e-6)
        errs.append(e_quad)
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert orders.min() >= 1.8


def test_constrained_projection_vanishes_on_boundary():
    V = FESpace(unit_square_mesh(4), 2)
    psi = l2_project(V, 1.0, constrained=True)
    assert np.all(psi.coeffs[V.dirichlet_dofs] == 0)


def test_apply_dirichlet():
    V = FESpace(unit_square_mesh(6), 1)
    K = assemble_stiffness(V)
    b = assemble_load(V, 1.0)
    A, rhs = apply_dirichlet(K, b, V)
    assert is_symmetric(A)
    assert np.linalg.eigvalsh(A.toarray()).min() > 0
    x = scipy.linalg.solve(A.toarray(), rhs)
    assert np.all(x[V.dirichlet_dofs] == 0)
    A2, rhs2 = apply_dirichlet(A, rhs, V)
    assert abs(A2 - A).max() == 0 and np.array_equal(rhs2, rhs)


def test_boundary_flux_zero_and_quadratic():
    V = FESpace(unit_square_mesh(4), 2)
    assert boundary_flux(FEFunction(V, np.zeros(V.dof_count))) == 0.0
    # u = x(1-x) is represented exactly; outward flux is -1 on both vertical sides
    u = interpolate(V, lambda x, y: x * (1 - x))
    assert boundary_flux(u, 1.0, 1.0) == pytest.approx(2.0, rel=1e-12)
    assert boundary_flux(u, 2.0, 0.5) == pytest.approx(2.0, rel=1e-12)


def test_boundary_flux_matches_divergence_theorem_p1():
    # for P1 functions the flux of a linear function is exact
    V = FESpace(refine(unit_square_mesh(3), [4]), 1)
    u = interpolate(V, lambda x, y: 3 * x - 2 * y)
    assert boundary_flux(u) == pytest.approx(0.0, abs=1e-12)


def test_integrate_and_csv(tmp_path):
    m = unit_square_mesh(4)
    assert integrate(lambda x, y: x * y, m) == pytest.approx(0.25)
    u = interpolate(FESpace(m, 2), lambda x, y: x + y)
    write_solution_csv(u, tmp_path / "u.csv")
    assert (tmp_path / "u.csv").read_text().splitlines()[0] == "dof,x,y,value"
    dofs, xy, vals = read_solution_csv(tmp_path / "u.csv")
    np.testing.assert_array_equal(dofs, np.arange(u.space.dof_count))
    np.testing.assert_array_equal(vals, u.coeffs)
    np.testing.assert_array_equal(xy, u.space.dof_coords)
    write_vtk(u, tmp_path / "u.vtk")
    assert "UNSTRUCTURED_GRID" in (tmp_path / "u.vtk").read_text()


@pytest.mark.parametrize("order", [1, 2])
def test_point_evaluation_reproduces_space_members(order):
    m = refine(unit_square_mesh(5), [0, 3, 17, 40])
    g = (lambda x, y: 1 + 2 * x - y) if order == 1 else (lambda x, y: x * y - x**2 + 3 * y)
    u = interpolate(FESpace(m, order), g)
    pts = np.random.default_rng(7).random((200, 2))
    pts = np.vstack([pts, [[0, 0], [1, 1], [0.5, 0.0]]])
    np.testing.assert_allclose(u.at(pts), g(pts[:, 0], pts[:, 1]), atol=1e-12)
    with pytest.raises(ValueError):
        u.at([[1.5, 0.5]])

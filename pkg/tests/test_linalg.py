import numpy as np
import pytest
import scipy.sparse as sp

from fracell.fem import FESpace, apply_dirichlet, assemble_load, assemble_mass, assemble_stiffness
from fracell.linalg import (LinearSolveError, NotPositiveDefiniteError, OracleScaleError, dense_generalized_eig,
                            is_symmetric, oracle_cap, solve_spd)
from fracell.mesh import unit_square_mesh


def poisson_system(n=16, order=1):
    V = FESpace(unit_square_mesh(n), order)
    A, b = apply_dirichlet(assemble_stiffness(V), assemble_load(V, 1.0), V)
    return A, b


@pytest.mark.parametrize("pc", ["none", "jacobi", "direct", "amg", "auto"])
def test_pcg_matches_direct_solve(pc):
    A, b = poisson_system(12, 2)
    x, stats = solve_spd(A, b, 1e-10, pc)
    ref = sp.linalg.spsolve(A.tocsc(), b)
    assert stats.converged
    assert np.linalg.norm(A @ x - b) <= 1e-10 * np.linalg.norm(b)
    assert np.linalg.norm(x - ref) <= 1e-7 * np.linalg.norm(ref)


def test_zero_rhs_short_circuits():
    A, b = poisson_system(4)
    x, stats = solve_spd(A, np.zeros_like(b))
    assert np.all(x == 0) and stats.iterations == 0


def test_direct_preconditioner_needs_few_iterations():
    A, b = poisson_system(16)
    _, stats = solve_spd(A, b, 1e-10, "direct")
    assert stats.iterations <= 3


def test_indefinite_matrix_detected():
    A = sp.diags([1.0, -1.0, 2.0]).tocsr()
    with pytest.raises(NotPositiveDefiniteError):
        solve_spd(A, np.ones(3), preconditioner="none")
    with pytest.raises(NotPositiveDefiniteError):
        solve_spd(A, np.ones(3), preconditioner="jacobi")


def test_iteration_cap_reports_stats():
    A, b = poisson_system(16)
    with pytest.raises(LinearSolveError) as info:
        solve_spd(A, b, 1e-12, "none", maxiter=3)
    assert info.value.stats.iterations == 3
    assert not info.value.stats.converged


def test_generalized_eigenpairs_are_m_orthonormal():
    V = FESpace(unit_square_mesh(6), 1)
    K, M = assemble_stiffness(V), assemble_mass(V)
    eig = dense_generalized_eig(K, M, V.free_dofs)
    Phi = eig.vectors
    np.testing.assert_allclose(Phi.T @ (M @ Phi), np.eye(len(eig.values)), atol=1e-10)
    np.testing.assert_allclose(Phi.T @ (K @ Phi), np.diag(eig.values), atol=1e-8 * eig.values.max())
    assert np.all(Phi[V.dirichlet_dofs] == 0)
    assert np.all(np.diff(eig.values) >= 0)


def test_discrete_eigenvalue_bounds_continuous_from_above():
    lam = []
    for n in (4, 8, 16):
        V = FESpace(unit_square_mesh(n), 1)
        lam.append(dense_generalized_eig(assemble_stiffness(V), assemble_mass(V), V.free_dofs).values[0])
    assert all(l > 2 * np.pi**2 for l in lam)
    assert lam[0] > lam[1] > lam[2]


def test_oracle_cap(monkeypatch):
    V = FESpace(unit_square_mesh(8), 1)
    K, M = assemble_stiffness(V), assemble_mass(V)
    monkeypatch.setenv("FRACELL_ORACLE_CAP", "10")
    assert oracle_cap() == 10
    with pytest.raises(OracleScaleError):
        dense_generalized_eig(K, M, V.free_dofs)
    monkeypatch.delenv("FRACELL_ORACLE_CAP")
    assert oracle_cap() == 2500


def test_is_symmetric():
    assert is_symmetric(sp.identity(3))
    assert not is_symmetric(sp.csr_matrix(np.array([[1.0, 2.0], [0.0, 1.0]])))


def test_single_interior_dof_eigenvalue_by_hand():
    # n = 2: the centre vertex couples to 6 triangles of area 1/8, so
    # K_cc = 4 (five-point stencil) and M_cc = 6 * (1/8) / 6 = 1/8, giving 32
    V = FESpace(unit_square_mesh(2), 1)
    eig = dense_generalized_eig(assemble_stiffness(V), assemble_mass(V), V.free_dofs)
    assert eig.values.tolist() == pytest.approx([32.0], rel=1e-12)

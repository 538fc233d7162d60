"""Preconditioned conjugate gradients and the dense generalized eigensolver."""
from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

DEFAULT_RTOL = 1e-10
DEFAULT_ORACLE_CAP = 2500


@dataclass
class SolveStats:
    iterations: int
    final_residual: float
    converged: bool


class LinearSolveError(RuntimeError):
    def __init__(self, message, stats: SolveStats | None = None):
        super().__init__(message)
        self.stats = stats


class NotPositiveDefiniteError(LinearSolveError):
    pass


class OracleScaleError(ValueError):
    pass


def oracle_cap() -> int:
    return int(os.environ.get("FRACELL_ORACLE_CAP", DEFAULT_ORACLE_CAP))


def make_preconditioner(A, kind: str = "auto"):
    """Return a callable ``r -> M^{-1} r``.

    ``jacobi`` is the diagonal; ``direct`` applies a sparse LU of ``A`` (so
    CG finishes in one or two sweeps); ``amg`` uses smoothed aggregation.
    """
    n = A.shape[0]
    if kind == "auto":
        kind = "direct" if n <= 600_000 else "amg"
    if kind == "none":
        return lambda r: r
    if kind == "jacobi":
        d = A.diagonal()
        if np.any(d <= 0):
            raise NotPositiveDefiniteError("non-positive diagonal entry; matrix is not SPD")
        inv = 1.0 / d
        return lambda r: inv * r
    if kind == "direct":
        lu = spla.splu(sp.csc_matrix(A), permc_spec="MMD_AT_PLUS_A",
                       diag_pivot_thresh=0.0, options={"SymmetricMode": True})
        return lu.solve
    if kind == "amg":
        import pyamg

        ml = pyamg.smoothed_aggregation_solver(sp.csr_matrix(A), symmetry="symmetric")
        return ml.aspreconditioner(cycle="V")
    raise ValueError(f"unknown preconditioner {kind!r}")


def solve_spd(A, b, rel_tol: float = DEFAULT_RTOL, preconditioner="auto", maxiter: int | None = None,
              x0=None, callback=None):
    """Solve ``A x = b`` for symmetric positive definite ``A`` by PCG.

    Stops when ``||b - A x|| <= rel_tol * ||b||``. Raises
    :class:`LinearSolveError` (carrying :class:`SolveStats`) if the
    iteration cap is hit, and :class:`NotPositiveDefiniteError` when a
    search direction has non-positive curvature.
    """
    if not 0 < rel_tol < 1:
        raise ValueError("rel_tol must lie in (0, 1)")
    b = np.asarray(b, float)
    n = b.shape[0]
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return np.zeros(n), SolveStats(0, 0.0, True)
    apply_P = make_preconditioner(A, preconditioner) if isinstance(preconditioner, str) else preconditioner
    maxiter = maxiter or max(10 * n, 100)
    x = np.zeros(n) if x0 is None else np.array(x0, float)
    r = b - A @ x
    rnorm = np.linalg.norm(r)
    target = rel_tol * bnorm
    it = 0
    if rnorm <= target:
        return x, SolveStats(0, rnorm / bnorm, True)
    z = apply_P(r)
    p = z.copy()
    rz = r @ z
    while it < maxiter:
        Ap = A @ p
        pAp = p @ Ap
        if not pAp > 0:
            stats = SolveStats(it, rnorm / bnorm, False)
            raise NotPositiveDefiniteError(
                f"CG breakdown at iteration {it}: p^T A p = {pAp:.3e}", stats)
        alpha = rz / pAp
        x += alpha * p
        r -= alpha * Ap
        it += 1
        if callback is not None:
            callback(x)
        rnorm = np.linalg.norm(r)
        if rnorm <= target:
            # guard against drift of the recursive residual
            rtrue = np.linalg.norm(b - A @ x)
            if rtrue <= target:
                return x, SolveStats(it, rtrue / bnorm, True)
            r = b - A @ x
        z = apply_P(r)
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
    stats = SolveStats(it, rnorm / bnorm, False)
    raise LinearSolveError(f"CG did not converge in {it} iterations "
                           f"(relative residual {rnorm / bnorm:.3e})", stats)


@dataclass
class EigenPairs:
    """Generalized eigenpairs on the free (non-Dirichlet) dofs.

    ``vectors`` has one M-orthonormal column per eigenvalue, expressed in
    the full dof numbering (zero rows on constrained dofs).
    """

    values: np.ndarray
    vectors: np.ndarray
    free: np.ndarray

    def coefficients(self, M, y) -> np.ndarray:
        """Expansion coefficients ``(M y, phi_k)``."""
        return self.vectors.T @ (M @ y)

    def synthesize(self, coeffs) -> np.ndarray:
        return self.vectors @ coeffs


def dense_generalized_eig(K, M, free=None, cap: int | None = None) -> EigenPairs:
    """Full spectrum of ``K x = lam M x`` restricted to the ``free`` dofs."""
    n = K.shape[0]
    free = np.arange(n) if free is None else np.asarray(free)
    cap = oracle_cap() if cap is None else cap
    if len(free) > cap:
        raise OracleScaleError(f"{len(free)} dofs exceeds the dense oracle cap of {cap}")
    Kf = _dense(K)[np.ix_(free, free)]
    Mf = _dense(M)[np.ix_(free, free)]
    Kf = 0.5 * (Kf + Kf.T)
    Mf = 0.5 * (Mf + Mf.T)
    vals, vecs = scipy.linalg.eigh(Kf, Mf)
    full = np.zeros((n, len(free)))
    full[free] = vecs
    return EigenPairs(vals, full, free)


def _dense(A):
    return A.toarray() if sp.issparse(A) else np.asarray(A, float)


def is_symmetric(A, rtol: float = 1e-12) -> bool:
    A = sp.csr_matrix(A)
    diff = abs(A - A.T)
    scale = abs(A).max() if A.nnz else 1.0
    return diff.nnz == 0 or diff.max() <= rtol * scale

"""Reference solutions: dense spectral solves on the discrete space and sine
series on the unit square (k = 1)."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fem import FEFunction
from .linalg import EigenPairs, dense_generalized_eig
from .rhs import SeparableFunction


class UnsupportedRHSError(TypeError):
    pass


def spectrum(space, K, M) -> EigenPairs:
    return dense_generalized_eig(K, M, free=space.free_dofs)


def discrete_fractional_solve(K, M, eps: float, psi: FEFunction, eig: EigenPairs | None = None) -> FEFunction:
    """``w = sum_k (psi, phi_k) lam_k^(-eps) phi_k`` on the constrained space."""
    if not 0 < eps < 1:
        raise ValueError("eps must lie in (0, 1)")
    eig = eig or spectrum(psi.space, K, M)
    c = eig.coefficients(M, psi.coeffs)
    return FEFunction(psi.space, eig.synthesize(c * eig.values ** (-eps)))


def fractional_power_apply(eig: EigenPairs, M, y, power: float) -> np.ndarray:
    """``A^power y`` in coefficient form."""
    return eig.synthesize(eig.coefficients(M, y) * eig.values**power)


def pseudo_time_modes(eig: EigenPairs, M, psi, eps: float, delta: float, t) -> np.ndarray:
    """Exact eigen-coefficients ``a_k(t) = (psi, phi_k) (delta + (lam_k - delta) t)^(-eps)``.

    Returns shape ``(len(t), n_modes)`` for array ``t``.
    """
    c = eig.coefficients(M, getattr(psi, "coeffs", psi))
    t = np.atleast_1d(np.asarray(t, float))
    return c[None, :] * (delta + (eig.values[None, :] - delta) * t[:, None]) ** (-eps)


@dataclass
class SineSeries:
    """Coefficients ``f_mn = (f, phi_mn)`` for ``phi_mn = 2 sin(m pi x1) sin(n pi x2)``."""

    max_mode: int
    coefficients: np.ndarray
    tail_estimate: float = 0.0

    @property
    def eigenvalues(self) -> np.ndarray:
        m = np.arange(1, self.max_mode + 1)
        return np.pi**2 * (m[:, None] ** 2 + m[None, :] ** 2)

    def evaluate(self, points, multiplier=None) -> np.ndarray:
        """``sum_mn multiplier(lam_mn) f_mn phi_mn`` at the given points."""
        pts = np.atleast_2d(np.asarray(points, float))
        C = self.coefficients if multiplier is None else self.coefficients * multiplier(self.eigenvalues)
        m = np.arange(1, self.max_mode + 1)
        Sx = np.sin(np.pi * np.outer(pts[:, 0], m))
        Sy = np.sin(np.pi * np.outer(pts[:, 1], m))
        return 2.0 * np.einsum("pm,mn,pn->p", Sx, C, Sy)


def sine_series(f, max_mode: int = 200) -> SineSeries:
    if not isinstance(f, SeparableFunction):
        raise UnsupportedRHSError("sine series needs a separable right-hand side")
    if max_mode < 1:
        raise ValueError("max_mode must be >= 1")
    a = f.gx.sine_coefs(2 * max_mode)
    b = f.gy.sine_coefs(2 * max_mode)
    N = max_mode
    A, B = np.abs(a), np.abs(b)
    # sup-norm size of the next band of modes, weighted by |phi| <= 2
    tail = 4.0 * float(A.sum() * B.sum() - A[:N].sum() * B[:N].sum())
    return SineSeries(N, 2.0 * np.outer(a[:N], b[:N]), tail)


def continuous_series_solution(f, eps: float, max_mode: int, points) -> np.ndarray:
    """Values of the solution of ``(-Laplace)^eps u = f`` on the unit square."""
    if max_mode < 1:
        raise ValueError("max_mode must be >= 1")
    s = sine_series(f, max_mode)
    return s.evaluate(points, lambda lam: lam ** (-eps))


def _sine_integrals(N):
    m = np.arange(1, N + 1)
    return (1.0 - np.cos(m * np.pi)) / (m * np.pi)


def reaction_diffusion_goal(f, eps: float, max_mode: int = 3000) -> float:
    """Exact ``-eps int_boundary grad u . n`` for ``-eps Laplace u + u = f``.

    Uses ``G = int f - int u``, where ``int u`` is summed from the series.
    """
    s = sine_series(f, max_mode)
    I = _sine_integrals(max_mode)
    # int phi_mn = 2 I_m I_n
    S = np.sum(s.coefficients * 2.0 * np.outer(I, I) / (1.0 + eps * s.eigenvalues))
    return f.integral() - float(S)


def first_step_goal(f, eps: float, delta: float, tau: float, sigma: float = 0.5,
                    max_mode: int = 3000) -> float:
    """Exact ``-int_boundary grad y1 . n`` after one continuous-in-space
    two-level step from ``y0 = delta^(-eps) f``.

    Requires ``f`` to vanish on the boundary, so that the series of
    ``-Laplace f`` tested with 1 reproduces the boundary flux of ``f``.
    """
    s = sine_series(f, max_mode)
    lam = s.eigenvalues
    D = lam - delta
    ts = sigma * tau
    ratio = (ts * D + delta - (1 - sigma) * tau * eps * D) / (ts * D + delta + sigma * tau * eps * D)
    r_inf = (ts - (1 - sigma) * tau * eps) / (ts + sigma * tau * eps)
    I = _sine_integrals(max_mode)
    weight = s.coefficients * 2.0 * np.outer(I, I) * lam
    return delta ** (-eps) * (float(np.sum((ratio - r_inf) * weight)) + r_inf * f.boundary_flux())

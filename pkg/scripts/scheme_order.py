"""Time-step convergence of the two-level scheme against the spectral solve.

    python scripts/scheme_order.py --sigma 0.5 1.0 --steps 10 20 40 80 160
"""
import argparse

import numpy as np

from fracell.fem import FEFunction, FESpace, assemble_mass, assemble_stiffness, l2_project
from fracell.mesh import unit_square_mesh
from fracell.oracle import discrete_fractional_solve, spectrum
from fracell.pseudotime import SchemeParams, solve_fractional
from fracell.rhs import surrogate_rhs


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=8)
    ap.add_argument("--eps", type=float, nargs="+", default=[0.1, 0.5, 0.9])
    ap.add_argument("--sigma", type=float, nargs="+", default=[0.5, 1.0])
    ap.add_argument("--steps", type=int, nargs="+", default=[10, 20, 40, 80, 160])
    args = ap.parse_args()
    V = FESpace(unit_square_mesh(args.n), 1)
    K, M = assemble_stiffness(V), assemble_mass(V)
    psi = l2_project(V, surrogate_rhs(), constrained=True)
    eig = spectrum(V, K, M)
    delta = 2 * np.pi**2
    print("eps,sigma,N,rel_error,order")
    for eps in args.eps:
        ref = discrete_fractional_solve(K, M, eps, psi, eig)
        for sigma in args.sigma:
            prev = None
            for N in args.steps:
                w, _ = solve_fractional(psi, K, M, SchemeParams.from_steps(eps, delta, sigma, N), rel_tol=1e-13)
                err = FEFunction(V, w.coeffs - ref.coeffs).mass_norm(M) / ref.mass_norm(M)
                order = "" if prev is None else f"{np.log2(prev / err):.3f}"
                print(f"{eps},{sigma},{N},{err:.4e},{order}")
                prev = err


if __name__ == "__main__":
    main()

"""Adaptive solves of the diffusion-reaction surrogate for a range of eps.

Prints one row per eps with the final goal value, the series reference and
the mesh size; with --trace the per-step rows are printed as well.

    python scripts/surrogate_tables.py --order 1 --eps 1e-1 1e-2 1e-3
"""
import argparse
import time

from fracell.adapt import AdaptConfig, adapt_loop
from fracell.fem import FESpace, boundary_flux
from fracell.mesh import unit_square_mesh
from fracell.oracle import reaction_diffusion_goal
from fracell.rd import ReactionDiffusionProblem
from fracell.rhs import surrogate_rhs


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--order", type=int, default=1)
    ap.add_argument("--eps", type=float, nargs="+", default=[1e-1, 1e-2, 1e-3, 1e-4, 1e-5])
    ap.add_argument("--eta", type=float, default=1e-5)
    ap.add_argument("--max-steps", type=int, default=80)
    ap.add_argument("--trace", action="store_true")
    ap.add_argument("--uniform-only", action="store_true", help="only the goal on the initial 8x8 mesh")
    args = ap.parse_args()
    f = surrogate_rhs()
    print("eps,G,G_series,vertices,M_h,steps,converged,seconds")
    for eps in args.eps:
        prob = ReactionDiffusionProblem(eps, f)
        t0 = time.perf_counter()
        if args.uniform_only:
            u = prob.solve(FESpace(unit_square_mesh(8), args.order))
            print(f"{eps:g},{boundary_flux(u, 1.0, eps):.7g},{reaction_diffusion_goal(f, eps):.7g},81,"
                  f"{u.space.dof_count},0,,{time.perf_counter() - t0:.1f}")
            continue
        cb = (lambda r: print(f"#  s={r.s} G={r.goal:.7g} M_h={r.dofs} est={r.estimate:.3e}", flush=True)) \
            if args.trace else None
        _, rep = adapt_loop(prob, AdaptConfig(args.eta, args.max_steps), unit_square_mesh(8), args.order, cb)
        last = rep.rows[-1]
        print(f"{eps:g},{last.goal:.7g},{reaction_diffusion_goal(f, eps):.7g},{last.vertices},{last.dofs},{last.s},"
              f"{str(rep.converged).lower()},{time.perf_counter() - t0:.1f}", flush=True)


if __name__ == "__main__":
    main()

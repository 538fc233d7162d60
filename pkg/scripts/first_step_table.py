"""Goal values along the first-step mesh adaptation for the boundary-layer data.

Prints ``s,G,M_h`` per adaptation step for each eps, followed by the
continuum value of the one-step goal from the sine series.

    python scripts/first_step_table.py --eps 1e-1 1e-2 1e-3 --steps 10
"""
import argparse

import numpy as np

from fracell.adapt import AdaptConfig, starting_adaptation
from fracell.mesh import unit_square_mesh
from fracell.oracle import first_step_goal
from fracell.pseudotime import SchemeParams
from fracell.rhs import layer_rhs


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--eps", type=float, nargs="+", default=[1e-1, 1e-2, 1e-3])
    ap.add_argument("--mu", type=float, default=0.01)
    ap.add_argument("--tau", type=float, default=0.01)
    ap.add_argument("--steps", type=int, default=10)
    ap.add_argument("--diagonal", default="left", choices=["left", "right"])
    args = ap.parse_args()
    delta = 2 * np.pi**2
    f = layer_rhs(args.mu)
    for eps in args.eps:
        print(f"# eps={eps:g}")
        print("s,G,M_h")
        params = SchemeParams(eps, delta, 0.5, args.tau)
        starting_adaptation(f, params, AdaptConfig(1e-5, args.steps), unit_square_mesh(8, args.diagonal),
                            callback=lambda r: print(f"{r.s},{r.goal:.6f},{r.dofs}", flush=True))
        print(f"# continuum one-step goal {first_step_goal(f, eps, delta, args.tau):.6f}")


if __name__ == "__main__":
    main()

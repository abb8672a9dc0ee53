"""Grid refinement of the n = 1 solver on a smooth non-polynomial solution.

u = exp(x0 + x1 / 2) has Laplacian 1.25 u, so g = 1.25 u and phi = u on
the sphere. The compact stencil is second order, so the sup error should
drop by about 4 per halving of h.
"""

import argparse

import numpy as np

from quatma.grid import Domain
from quatma.solver import DirichletProblem, SolveConfig, dirichlet_solve


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--grids", type=int, nargs="+", default=[9, 17, 33])
    args = ap.parse_args()
    prev = None
    print(f"{'grid':>5} {'h':>8} {'sup error':>11} {'order':>6} {'iters':>5}")
    for R in args.grids:
        D = Domain.ball(1, R)
        x = D.coords()
        u = np.broadcast_to(np.exp(x[0] + 0.5 * x[1]), D.shape).copy()
        res = dirichlet_solve(DirichletProblem(D, u, 1.25 * u), SolveConfig(tol_fp=1e-11))
        err = float(np.max(np.abs(res.u - u)[D.interior]))
        order = f"{np.log2(prev[1] / err) / np.log2(prev[0] / D.h):6.2f}" if prev else "     -"
        print(f"{R:5d} {D.h:8.4f} {err:11.3e} {order} {res.iterations:5d}")
        prev = (D.h, err)


if __name__ == "__main__":
    main()

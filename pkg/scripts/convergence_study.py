"""Mesh-convergence table for the two closed-form fixtures.

p = 2: -u'' = pi^2 sin(pi x) on (0, 1), exact u = sin(pi x).
p = 3: -(|u'| u')' = 1 on (-1, 1), exact u = (2/3)(1 - |x|^(3/2)).
"""
import argparse
import math
from pathlib import Path

import numpy as np

from glap import io
from glap.mesh import interval_mesh
from glap.solver import DiscreteProblem, inner_solve
from glap.young import YoungFunction


def fixture(p, h):
    if p == 2:
        dp = DiscreteProblem(interval_mesh(0, 1, h), YoungFunction.power(2))
        x = dp.mesh.vertices[:, 0]
        return dp, np.pi ** 2 * np.sin(np.pi * x), np.sin(np.pi * x)
    dp = DiscreteProblem(interval_mesh(-1, 1, h), YoungFunction.power(3))
    x = dp.mesh.vertices[:, 0]
    return dp, np.ones_like(x), (1 - np.abs(x) ** 1.5) / 1.5


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--levels", type=int, default=6, help="number of halvings from h = 1/16")
    ap.add_argument("--out", default="out/convergence")
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows, series = [], {}
    for p in (2, 3):
        hs, errs = [], []
        for k in range(args.levels):
            h = 1 / (16 * 2 ** k)
            dp, psi, exact = fixture(p, h)
            u, rep = inner_solve(dp, psi, tol=1e-12)
            err = float(np.abs(u.values - exact).max())
            order = math.log2(errs[-1] / err) if errs else float("nan")
            hs.append(h)
            errs.append(err)
            rows.append((p, h, err, order, rep.iterations, rep.converged))
            print(f"p={p} h=1/{round(1 / h):<5d} err={err:.3e} order={order:5.2f} newton={rep.iterations}")
        series[f"p={p}"] = (hs, errs)
    io.write_csv(out / "convergence.csv", ["p", "h", "max_error", "order", "newton_iters", "converged"], rows)
    io.write_svg(out / "convergence.svg", series, title="max error vs h", xlabel="h",
                 ylabel="max error", logx=True, logy=True)


if __name__ == "__main__":
    main()

"""Grid refinement: FE half-sphere spectrum, grid mean curvature and nullspace residuals."""
import argparse
import math

import numpy as np

from capflow import io
from capflow.cap_geometry import make_cap
from capflow.linear_stability import halfsphere_reference, homotopy_mode, nullspace_residuals
from capflow.surface_calculus import Field, Grid, embed


def fe_rows(ns):
    cap = make_cap(1.0, 0.5, 0.5)
    ref = halfsphere_reference(cap, 2, 8)
    for n in ns:
        err = max(float(np.max(np.abs(homotopy_mode(k, cap, n, 0.0)[:4] - ref[k][:4]) / np.maximum(np.abs(ref[k][:4]), 4.0)))
                  for k in range(3))
        yield ("fe_halfsphere", n, err)


def curvature_rows(ns, order):
    cap = make_cap(0.5, 0.3, 0.4)
    f = lambda p, t: 0.02 * np.sin(t) ** 2 * np.cos(2 * p) + 0.01 * np.cos(t)  # noqa: E731
    ref = embed(Grid.for_cap(cap, 32, 4 * max(ns), fd_order=order), Field.from_function(Grid.for_cap(cap, 32, 4 * max(ns), fd_order=order), f), cap)
    for n in ns:
        g = Grid.for_cap(cap, 32, n, fd_order=order)
        e = embed(g, Field.from_function(g, f), cap)
        yield (f"H_boundary_fd{order}", n, float(np.max(np.abs(e.H[:, -1] - ref.H[:, -1]))))


def nullspace_rows(ns):
    cap = make_cap(0.5, 0.3, 0.4)
    for n in ns:
        yield ("nullspace_max", n, max(nullspace_residuals(cap, n, n)))


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--out", default="refinement.csv")
    args = p.parse_args()
    rows = list(fe_rows((100, 200, 400, 800)))
    for order in (2, 6):
        rows += curvature_rows((16, 32, 64), order)
    rows += nullspace_rows((8, 16, 32))
    out = []
    for i, (name, n, err) in enumerate(rows):
        prev = rows[i - 1] if i and rows[i - 1][0] == name else None
        rate = math.log2(prev[2] / err) if prev and err > 0 else math.nan
        out.append((name, n, err, rate))
        print(f"{name:20s} n={n:4d} err={err:.3e} rate={rate:.2f}")
    io.write_csv(args.out, ["quantity", "n", "error", "rate"], out)


if __name__ == "__main__":
    main()

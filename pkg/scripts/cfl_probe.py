"""Largest stable RK4 step of the linear flow versus dt_stability_bound."""
import argparse

import numpy as np

from capflow import io
from capflow.cap_geometry import make_cap
from capflow.flow_sim import Flow, dt_stability_bound, evolve, random_smooth_perturbation
from capflow.surface_calculus import Grid


def stable(cap, grid, dt, steps=200):
    u0 = random_smooth_perturbation(grid, 0, 0.01)
    traj = evolve(u0, cap, grid, T_end=steps * dt, dt=dt, mode="linear", sample_every=10**9)
    return traj.status != "StepRejected" and np.max(np.abs(traj.final)) <= 0.01


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--a", type=float, default=0.5)
    p.add_argument("--b", type=float, default=0.3)
    p.add_argument("--r", type=float, default=0.4)
    p.add_argument("--sizes", default="16,32")
    p.add_argument("--out", default="cfl_probe.csv")
    args = p.parse_args()
    cap = make_cap(args.a, args.b, args.r)
    rows = []
    for n in (int(s) for s in args.sizes.split(",")):
        grid = Grid.for_cap(cap, n, n)
        bound = dt_stability_bound(grid, cap)
        lo, hi = bound, 64 * bound
        if not stable(cap, grid, lo):
            lo = hi = float("nan")
        else:
            for _ in range(12):
                mid = (lo * hi) ** 0.5
                lo, hi = (mid, hi) if stable(cap, grid, mid) else (lo, mid)
        rho = Flow(cap, grid, mode="linear").spectral_radius()
        rows.append((n, bound, lo, lo / bound, 2.785 / rho))
        print(f"n={n}: bound={bound:.3e} empirical={lo:.3e} ratio={lo / bound:.2f} rk4 limit from power iteration={2.785 / rho:.3e}")
    io.write_csv(args.out, ["n", "dt_bound", "dt_empirical", "ratio", "dt_power_iteration"], rows)


if __name__ == "__main__":
    main()

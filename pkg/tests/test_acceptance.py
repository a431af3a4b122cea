"""Acceptance criteria, each at its stated tolerance.

Every test prints one PASS/FAIL line.  Run directly (python3 tests/test_acceptance.py)
for the summary alone.  Criteria 9 and 11 are known not to meet their thresholds
(see README); they are asserted as stated and marked as expected failures.
"""
from __future__ import annotations

import math
import time

import numpy as np
import pytest

from capflow.cap_geometry import degenerate_cap, feasible_r_range, make_cap
from capflow.errors import NoStationaryCap
from capflow.flow_sim import (
    eigenfunction_perturbation,
    evolve,
    decay_rate,
    fit_sphere,
    Flow,
    mode_perturbation,
    random_smooth_perturbation,
    rhs_linear,
    rhs_nonlinear,
)
from capflow.linear_stability import (
    analytic_nullspace,
    assemble_mode,
    homotopy_mode,
    homotopy_spectrum,
    mode0_inhomogeneous_residual,
    nonlocal_mode0,
    nullspace_residuals,
    spectrum,
)
from capflow.surface_calculus import Field, Grid

CAPS = {
    "S0": [(1.0, 0.5, 0.5), (1.5, 0.3, 0.2), (0.5, 0.2, 0.4), (3.0, 1.0, 1 / 3)],
    "S+": [(0.0, 0.5, 1.0), (0.5, 0.3, 0.4), (-0.5, 0.2, 0.5), (1.5, 1.0, 0.5)],
    "S-": [(1.0, 0.3, 0.5), (2.0, 0.5, 0.4), (0.8, 0.1, 0.5), (3.0, 0.5, 0.2)],
}
FLOW_CAP = (0.5, 0.3, 0.4)


def report(n: int, ok: bool, detail: str) -> None:
    print(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}", flush=True)


# ---------------------------------------------------------------- checks


def criterion_1():
    rng = np.random.default_rng(20240601)
    worst = [0.0, 0.0]
    sign_ok = True
    n = 0
    while n < 1000:
        a, b = rng.uniform(-0.99, 4.0), rng.uniform(0.01, 3.0)
        try:
            iv = feasible_r_range(a, b)
        except NoStationaryCap:
            continue
        hi = iv.hi if iv.bounded else 50 * iv.lo
        r = iv.lo + rng.uniform(0.001, 0.999) * (hi - iv.lo)
        cap = make_cap(a, b, r)
        worst[0] = max(worst[0], abs(cap.cos_alpha - (b / r - a)))
        worst[1] = max(worst[1], abs(cap.R * cap.sin_alpha - r) / r)
        sign_ok &= np.sign(cap.c_crit) == -np.sign(cap.cos_alpha) or (cap.cos_alpha == 0 and cap.c_crit == 0)
        n += 1
    ok = worst[0] <= 1e-12 and worst[1] <= 1e-12 and bool(sign_ok)
    return ok, f"1000 caps: max|cos err|={worst[0]:.2e}, max rel R sin err={worst[1]:.2e}, c_crit signs ok={bool(sign_ok)}"


def _half_errors(n_theta):
    cap = make_cap(1.0, 0.5, 0.5)
    worst = 0.0
    for k in range(3):
        mu = homotopy_mode(k, cap, n_theta, 0.0)[:4]
        ref = np.array([(l * (l + 1) - 2) / 0.25 for l in range(k, k + 8, 2)])
        # lambda = 0 at l = 1: normalise by max(|lambda|, 1/R^2)
        worst = max(worst, float(np.max(np.abs(mu - ref) / np.maximum(np.abs(ref), 1 / 0.25))))
    return worst


def criterion_2():
    e400, e800 = _half_errors(400), _half_errors(800)
    ok = e400 < 1e-3 and e800 < 2.5e-4
    return ok, f"rel err {e400:.3e} (n=400), {e800:.3e} (n=800), ratio {e400 / e800:.2f}"


def _all_caps():
    for reg, caps in CAPS.items():
        for p in caps:
            yield reg, make_cap(*p)


def criterion_3_4():
    dims, ratios, pos, k2 = [], [], [], []
    for _, cap in _all_caps():
        assert cap.b > cap.c_crit
        rep = spectrum(cap, 4, 400)
        dims.append(rep.nullspace_dim)
        pos.append(rep.min_positive)
        k2.append(min(float(rep.modes[k][0]) for k in range(2, 5)))
        # 16 -> 32: at 64 the S- residuals already sit at the rounding floor (~1e-11)
        r1 = nullspace_residuals(cap, 16, 16)
        r2 = nullspace_residuals(cap, 32, 32)
        ratios.append(min(a / b for a, b in zip(r1, r2)))
    ok3 = all(d == 3 for d in dims) and min(ratios) >= 3.5
    ok4 = min(pos) > 0 and min(k2) > 0
    d3 = f"12 caps: nullspace_dim={sorted(set(dims))}, min refinement factor 16->32 = {min(ratios):.1f}"
    d4 = f"12 caps: min min_positive={min(pos):.4g}, min k>=2 eigenvalue={min(k2):.4g}"
    return (ok3, d3), (ok4, d4)


def criterion_5():
    cap = make_cap(1.0, 0.5, 0.5)
    lam = nonlocal_mode0(assemble_mode(0, cap, 400), cap)
    dist = float(np.min(np.abs(lam + 8.0)))
    return dist > 0.05 * 8.0, f"nearest mode-0 eigenvalue to -8 is at distance {dist:.4g} (limit 0.4)"


def criterion_6():
    cap = degenerate_cap(0.5, 0.4)
    angles, lams, res = [], [], []
    for n in (100, 200, 400):
        sys = assemble_mode(0, cap, n)
        lam, vec = nonlocal_mode0(sys, cap, return_vectors=True)
        i = int(np.argmin(np.abs(lam)))
        v, c = vec[:, i], np.cos(sys.theta)
        cosang = min(1.0, abs(v @ c) / np.linalg.norm(v) / np.linalg.norm(c))
        angles.append(math.acos(cosang))
        lams.append(abs(lam[i]))
        res.append(mode0_inhomogeneous_residual(cap, n)[0])
    order = math.log2(angles[0] / angles[2]) / 2
    small = max(lams) < 1e-6
    bounded = min(res) > 0.05 and min(res) / max(res) > 0.9
    ok = order > 1.8 and small and bounded
    return ok, (f"b={cap.b:.6f}: angle to cos(theta) {angles[0]:.2e}->{angles[2]:.2e} (order {order:.2f}), "
                f"|lambda|<={max(lams):.1e}, LS residual {res[0]:.4f},{res[1]:.4f},{res[2]:.4f}")


def criterion_7():
    cap = make_cap(*FLOW_CAP)
    rep = spectrum(cap, 4, 400)
    k, idx = rep.smallest_positive_mode()
    lam = rep.min_positive
    grid = Grid.for_cap(cap, 8, 16)
    u0 = eigenfunction_perturbation(cap, grid, k, idx, 0.01, n_theta_fe=400)
    traj = evolve(u0, cap, grid, T_end=5.0 / lam, mode="linear", sample_every=50)
    rate, r2 = decay_rate(traj)
    err = abs(rate - lam) / lam
    return err < 0.02 and r2 >= 0.999, f"lambda={lam:.6f} (k={k}), fitted rate={rate:.6f}, rel err={err:.2e}, R^2={r2:.6f}"


def criterion_8():
    cap = make_cap(*FLOW_CAP)
    lam = spectrum(cap, 4, 400).min_positive
    grid = Grid.for_cap(cap, 64, 64)
    T = 5.0 / lam
    traj = evolve(mode_perturbation(grid, 0.01, k=2), cap, grid, T_end=T, dt=T / 800, scheme="rkc", sample_every=100)
    V = traj["volume"]
    drift = float(np.max(np.abs(V / V[0] - 1)))
    inc = traj.max_energy_increase()
    fit = fit_sphere(Flow(cap, grid).embedding(traj.final))
    r, ca = fit.contact()
    mismatch = abs(ca - (cap.b / r - cap.a))
    ok = traj.status in ("completed", "converged") and drift < 1e-4 and inc <= 1e-10 and fit.residual < 1e-4 * fit.R and mismatch < 1e-3
    return ok, (f"status={traj.status}, volume drift={drift:.2e}, max rel energy increase={inc:.2e}, "
                f"fit residual/R={fit.residual / fit.R:.2e}, |cos a_fit - (b/r_fit - a)|={mismatch:.2e}")


def criterion_9():
    cap = make_cap(*FLOW_CAP)
    lam = spectrum(cap, 4, 400).min_positive
    grid = Grid.for_cap(cap, 32, 32)
    v1 = analytic_nullspace(cap, grid).v1
    traj = evolve(0.02 * v1, cap, grid, T_end=5.0 / lam, dt=0.01, scheme="rkc", sample_every=5)
    cx = np.array([c[0] for c in traj.centers])
    rem = float(np.max(traj["remainder"]))
    drift_ok = traj.status in ("completed", "converged") and abs(cx[-1]) > 0.01
    ok = drift_ok and rem < 5e-4
    return ok, f"status={traj.status}, center x {cx[0]:.5f}->{cx[-1]:.5f}, max remainder={rem:.3e} (limit 5e-4)"


def _max_jump(cap, steps):
    d = np.linspace(0.0, 1.0, steps + 1)
    curves = homotopy_spectrum(cap, d, 3, 400, n_eigs=5)
    return max(float(np.max(np.abs(np.diff(c, axis=0)))) for c in curves.values())


def criterion_10():
    cap = make_cap(1.0, 0.5, 0.5)
    j1, j2 = _max_jump(cap, 20), _max_jump(cap, 40)
    ratio = j2 / j1
    return 0.3 <= ratio <= 0.7, f"max adjacent jump {j1:.4g} (dd=0.05) -> {j2:.4g} (dd=0.025), ratio {ratio:.3f}"


def _linearization_orders(chart_consistent):
    cap = make_cap(*FLOW_CAP)
    grid = Grid.for_cap(cap, 32, 32)
    worst = math.inf
    for seed in range(5):
        w = random_smooth_perturbation(grid, seed, 1.0)
        lin = rhs_linear(w, cap, grid, chart_consistent=chart_consistent).full
        errs = []
        for eps in (1e-2, 5e-3, 2.5e-3):
            non = rhs_nonlinear(eps * w, cap, grid).full
            errs.append(np.max(np.abs(non - eps * lin)) / (eps * w.max_abs()))
        worst = min(worst, math.log2(errs[0] / errs[1]), math.log2(errs[1] / errs[2]))
    return worst


def criterion_11():
    spec = _linearization_orders(False)
    chart = _linearization_orders(True)
    return spec >= 0.9, (f"5 fields, eps 1e-2/5e-3/2.5e-3: min observed order {spec:.3f} (need >= 0.9); "
                         f"INFO chart-consistent contact-line operator: {chart:.3f}")


# ---------------------------------------------------------------- pytest


def _run(n, fn, capsys=None):
    t = time.perf_counter()
    ok, detail = fn()
    detail += f" [{time.perf_counter() - t:.1f}s]"
    if capsys is not None:
        with capsys.disabled():
            print()
            report(n, ok, detail)
    else:
        report(n, ok, detail)
    return ok, detail


def test_criterion_1(capsys):
    ok, detail = _run(1, criterion_1, capsys)
    assert ok, detail


def test_criterion_2(capsys):
    ok, detail = _run(2, criterion_2, capsys)
    assert ok, detail


@pytest.fixture(scope="module")
def c34():
    return criterion_3_4()


def test_criterion_3(capsys, c34):
    ok, detail = _run(3, lambda: c34[0], capsys)
    assert ok, detail


def test_criterion_4(capsys, c34):
    ok, detail = _run(4, lambda: c34[1], capsys)
    assert ok, detail


def test_criterion_5(capsys):
    ok, detail = _run(5, criterion_5, capsys)
    assert ok, detail


def test_criterion_6(capsys):
    ok, detail = _run(6, criterion_6, capsys)
    assert ok, detail


def test_criterion_7(capsys):
    ok, detail = _run(7, criterion_7, capsys)
    assert ok, detail


def test_criterion_8(capsys):
    ok, detail = _run(8, criterion_8, capsys)
    assert ok, detail


@pytest.mark.xfail(strict=True, reason="translated cap already has remainder 5.3e-4 > 5e-4 in this chart")
def test_criterion_9(capsys):
    ok, detail = _run(9, criterion_9, capsys)
    assert ok, detail


def test_criterion_10(capsys):
    ok, detail = _run(10, criterion_10, capsys)
    assert ok, detail


@pytest.mark.xfail(strict=True, reason="specified contact-line term differs from the exact linearization off the half-sphere")
def test_criterion_11(capsys):
    ok, detail = _run(11, criterion_11, capsys)
    assert ok, detail


if __name__ == "__main__":
    results = []
    for n, fn in ((1, criterion_1), (2, criterion_2)):
        results.append(_run(n, fn)[0])
    (ok3, d3), (ok4, d4) = criterion_3_4()
    report(3, ok3, d3)
    report(4, ok4, d4)
    results += [ok3, ok4]
    for n, fn in ((5, criterion_5), (6, criterion_6), (7, criterion_7), (8, criterion_8),
                  (9, criterion_9), (10, criterion_10), (11, criterion_11)):
        results.append(_run(n, fn)[0])
    print(f"{sum(results)}/11 criteria pass")

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from capflow.cap_geometry import make_cap
from capflow.errors import AngleDegenerate, ContactNotPlanar
from capflow.surface_calculus import (
    BoundaryQuantities,
    Field,
    Grid,
    area,
    area_integral,
    boundary_quantities,
    check_angle,
    embed,
    embed_points,
    enclosed_volume,
    energy,
    laplace_beltrami_reference,
    mean_of_H,
    trace_mismatch,
    write_field_csv,
)

HALF = make_cap(1.0, 0.5, 0.5)
CAP = make_cap(0.5, 0.3, 0.4)


def cap_area(cap):
    return 2 * math.pi * cap.R**2 * (1 - math.cos(cap.theta_max))


def cap_volume(cap):
    h = cap.R * (1 - math.cos(cap.theta_max))
    return math.pi * h * h * (3 * cap.R - h) / 3


def test_grid_validation():
    with pytest.raises(ValueError):
        Grid(7, 16, 1.0)
    with pytest.raises(ValueError):
        Grid(8, 4, 1.0)
    with pytest.raises(ValueError):
        Grid(8, 16, 1.0, fd_order=3)
    with pytest.raises(ValueError):
        Grid(8, 16, 4.0)
    g = Grid.for_cap(CAP, 16, 12)
    assert g.shape == (16, 13) and g.theta[-1] == CAP.theta_max
    assert g.theta[0] == pytest.approx(0.5 * g.h_theta)


@pytest.mark.parametrize("cap", [HALF, CAP, make_cap(1.0, 0.3, 0.5), make_cap(0.0, 0.5, 1.0)])
def test_reference_cap_geometry(cap):
    grid = Grid.for_cap(cap, 32, 32)
    emb = embed(grid, None, cap)
    assert np.max(np.abs(emb.H * cap.R + 2)) < 1e-7
    assert area(emb) == pytest.approx(cap_area(cap), rel=1e-7)
    assert enclosed_volume(emb) == pytest.approx(cap_volume(cap), rel=1e-7)
    bq = boundary_quantities(emb)
    assert np.allclose(bq.kappa, -1 / cap.r, rtol=1e-10)
    assert np.allclose(bq.cos_angle, cap.cos_alpha, atol=1e-8)
    assert bq.length == pytest.approx(2 * math.pi * cap.r, rel=1e-12)
    assert bq.enclosed_area == pytest.approx(math.pi * cap.r**2, rel=1e-12)
    assert energy(emb, cap.a, cap.b) == pytest.approx(
        cap_area(cap) - cap.a * math.pi * cap.r**2 + cap.b * 2 * math.pi * cap.r, rel=1e-7
    )


@given(st.floats(-0.1, 0.1))
def test_halfsphere_constant_offset_is_sphere(c):
    # for alpha = pi/2 the offset direction is the normal, so rho = c is a sphere of radius R + c
    grid = Grid.for_cap(HALF, 16, 16)
    emb = embed(grid, np.full(grid.shape, c), HALF)
    R = HALF.R + c
    assert np.max(np.abs(emb.H * R + 2)) < 1e-6
    assert area(emb) == pytest.approx(2 * math.pi * R * R, rel=1e-7)
    assert enclosed_volume(emb) == pytest.approx(2 * math.pi * R**3 / 3, rel=1e-7)
    assert mean_of_H(emb) == pytest.approx(-2 / R, rel=1e-7)


@pytest.mark.parametrize(
    "f,lam",
    [
        (lambda p, t: np.cos(t), 2.0),
        (lambda p, t: np.sin(t) * np.cos(p), 2.0),
        (lambda p, t: np.sin(t) ** 2 * np.sin(2 * p), 6.0),
        (lambda p, t: 3 * np.cos(t) ** 2 - 1, 6.0),
    ],
)
def test_laplace_beltrami_harmonics(f, lam):
    grid = Grid.for_cap(CAP, 32, 32)
    u = Field.from_function(grid, f)
    lb = laplace_beltrami_reference(grid, u, CAP)
    assert np.max(np.abs(lb.full + lam / CAP.R**2 * u.full)) < 1e-6 * lam / CAP.R**2


@pytest.mark.parametrize("order,expect", [(2, 1.8), (6, 3.5)])
def test_mean_curvature_refinement(order, expect):
    f = lambda p, t: 0.02 * np.sin(t) ** 2 * np.cos(2 * p) + 0.01 * np.cos(t)

    def H_at(n):
        grid = Grid.for_cap(CAP, 32, n, fd_order=order)
        return embed(grid, Field.from_function(grid, f), CAP)

    ref = H_at(256)
    errs = []
    for n in (16, 32):
        e = H_at(n)
        # compare at the shared boundary column
        errs.append(np.max(np.abs(e.H[:, -1] - ref.H[:, -1])))
    assert math.log2(errs[0] / errs[1]) > expect


@given(st.integers(0, 15), st.integers(0, 10_000))
def test_phi_rotation_equivariance(shift, seed):
    grid = Grid.for_cap(CAP, 16, 16)
    rng = np.random.default_rng(seed)
    c = rng.normal(size=3) * 0.01
    rho = Field.from_function(grid, lambda p, t: c[0] * np.sin(t) * np.cos(p) + c[1] * np.cos(t) + c[2] * np.sin(t) ** 2 * np.sin(2 * p))
    e1 = embed(grid, rho, CAP)
    e2 = embed(grid, np.roll(rho.full, shift, axis=0), CAP)
    assert np.allclose(np.roll(e1.H, shift, axis=0), e2.H, atol=1e-10)
    assert area(e1) == pytest.approx(area(e2), rel=1e-12)
    assert enclosed_volume(e1) == pytest.approx(enclosed_volume(e2), rel=1e-12)


def test_polar_filter_idempotent_and_keeps_low_modes():
    grid = Grid.for_cap(CAP, 32, 32)
    rng = np.random.default_rng(0)
    u = rng.normal(size=grid.shape)
    v = grid.polar_filter(u)
    assert np.allclose(grid.polar_filter(v), v)
    low = Field.from_function(grid, lambda p, t: np.cos(t) + np.sin(t) * np.cos(p)).full
    assert np.allclose(grid.polar_filter(low), low)
    assert np.all(grid.filter_modes >= 1) and grid.filter_modes[-1] == grid.n_phi // 2


def test_field_arithmetic_and_trace():
    grid = Grid.for_cap(CAP, 16, 24)
    u = Field.from_function(grid, lambda p, t: np.cos(t) * np.sin(p))
    w = 2 * u - u * 0.5
    assert np.allclose(w.full, 1.5 * u.full)
    assert trace_mismatch(grid, u) < 1e-7
    bad = Field(u.interior, u.trace + 1e-3)
    assert trace_mismatch(grid, bad) > 9e-4
    assert Field.zeros(grid).max_abs() == 0.0
    with pytest.raises(ValueError):
        embed(grid, np.zeros((3, 3)), CAP)


def test_area_integral_of_one_is_area():
    grid = Grid.for_cap(CAP, 16, 16)
    emb = embed(grid, None, CAP)
    assert area_integral(emb, 1.0) == pytest.approx(area(emb))


def test_contact_not_planar():
    grid = Grid.for_cap(CAP, 16, 16)
    emb = embed(grid, None, CAP)
    q = emb.X.copy()
    q[2] += 1e-3
    lifted = embed_points(grid, CAP, np.zeros(grid.shape), q, emb.offset_dir)
    with pytest.raises(ContactNotPlanar):
        enclosed_volume(lifted)
    with pytest.raises(ContactNotPlanar):
        boundary_quantities(lifted)


def test_check_angle():
    z = np.zeros(4)
    ok = BoundaryQuantities(z, np.full(4, 0.5), np.zeros((3, 4)), z + 1, 1.0, 1.0)
    check_angle(ok)
    assert ok.angle_margin == pytest.approx(0.5)
    bad = BoundaryQuantities(z, np.array([0.0, 0.9995, 0.1, 0.2]), np.zeros((3, 4)), z + 1, 1.0, 1.0)
    with pytest.raises(AngleDegenerate):
        check_angle(bad)


def test_write_field_csv(tmp_path):
    grid = Grid.for_cap(CAP, 8, 8)
    u = Field.from_function(grid, lambda p, t: np.cos(t) / 3)
    path = tmp_path / "f.csv"
    write_field_csv(path, grid, u)
    data = np.loadtxt(path, delimiter=",", skiprows=1)
    assert data.shape == (8 * 9, 3)
    assert np.array_equal(data[:, 2].reshape(grid.shape), u.full)

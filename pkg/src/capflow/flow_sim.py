"""Time integration of the volume-preserving flow and of its linearization.

The unknown is the normal height rho over the reference cap in the
curvilinear chart.  Interior nodes move with (H - mean H) divided by the
normal component of the offset direction; the contact line moves with
(a + b kappa + cos angle) divided by the conormal component.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .cap_geometry import CapParams
from .curvilinear import CutoffProfile, dpsi_dw, epsilon0, reference_point
from .errors import (
    AngleDegenerate,
    CapflowError,
    DegenerateFit,
    InsufficientDecay,
    OffsetOutOfChart,
    StepRejected,
)
from .linear_stability import (
    analytic_nullspace,
    apply_A0_full,
    assemble_mode,
    l2_tilde_norm,
    nonlocal_mode0,
    project_nullspace,
    solve_mode,
)
from .surface_calculus import (
    Embedding,
    Field,
    Grid,
    area,
    boundary_quantities,
    check_angle,
    embed_points,
    enclosed_volume,
)

C_CFL = 0.2
COLUMNS = (
    "t", "volume", "energy", "max_rho", "l2_rho", "a0", "a1", "a2",
    "remainder", "fit_residual", "fit_R", "angle_margin",
)


@dataclass
class FlowState:
    t: float
    rho: Field
    embedding: Embedding | None = None


@dataclass
class Flow:
    """A flow problem: reference cap, grid, chart cutoff and dynamics."""

    cap: CapParams
    grid: Grid
    cutoff: CutoffProfile | None = None
    mode: str = "nonlinear"
    balanced: bool = True
    polar_filter: bool = True
    eps0: float | None = None
    chart_consistent: bool = False

    def __post_init__(self):
        if self.cutoff is None:
            self.cutoff = CutoffProfile.for_cap(self.cap)
        if self.eps0 is None:
            self.eps0 = epsilon0(self.cap)
        if self.mode not in ("nonlinear", "linear"):
            raise ValueError(f"unknown flow mode {self.mode!r}")

    @cached_property
    def _frame(self):
        P, T = self.grid.mesh
        q = reference_point((P, T), self.cap)
        d = dpsi_dw((P, T), np.zeros(self.grid.shape), self.cap, self.cutoff, self.eps0)
        return q, d

    def embedding(self, u: np.ndarray) -> Embedding:
        if np.max(np.abs(u)) >= self.eps0:
            raise OffsetOutOfChart(f"|rho|={float(np.max(np.abs(u))):.17g} >= eps0={self.eps0:.17g}")
        q, d = self._frame
        return embed_points(self.grid, self.cap, u, q, d)

    def raw_nonlinear(self, u: np.ndarray, emb: Embedding | None = None):
        emb = emb or self.embedding(u)
        bq = boundary_quantities(emb)
        check_angle(bq)
        dA = emb.dA
        Hbar = np.sum(emb.H * dA) / np.sum(dA)
        d = emb.offset_dir
        out = (emb.H - Hbar) / np.einsum("i...,i...->...", emb.n, d)
        den_b = np.einsum("ij,ij->j", bq.conormal, d[:, :, -1])
        out[:, -1] = (self.cap.a + self.cap.b * bq.kappa + bq.cos_angle) / den_b
        return out, emb, bq

    @cached_property
    def reference_residual(self) -> np.ndarray:
        """Discrete residual of the nonlinear operator at rho = 0 (zero in the continuum)."""
        return self.raw_nonlinear(np.zeros(self.grid.shape))[0]

    def rhs(self, u: np.ndarray):
        """Time derivative of the full nodal array u; also returns the embedding when built."""
        if self.mode == "linear":
            return -apply_A0_full(u, self.cap, self.grid, self.chart_consistent), None
        out, emb, _ = self.raw_nonlinear(u)
        if self.balanced:
            out = out - self.reference_residual
        return out, emb

    def _filtered(self, f: np.ndarray) -> np.ndarray:
        return self.grid.polar_filter(f) if self.polar_filter else f

    def _stage(self, u: np.ndarray) -> np.ndarray:
        return self._filtered(self.rhs(u)[0])

    def spectral_radius(self, iters: int = 60, seed: int = 0) -> float:
        """Power-iteration estimate of the largest |eigenvalue| of the filtered linearized operator."""
        cached = getattr(self, "_radius", None)
        if cached is not None:
            return cached
        rng = np.random.default_rng(seed)
        v = self.grid.polar_filter(rng.standard_normal(self.grid.shape))
        lam = 0.0
        for _ in range(iters):
            v /= np.linalg.norm(v)
            w = self._filtered(-apply_A0_full(v, self.cap, self.grid, self.chart_consistent))
            lam = float(np.linalg.norm(w))
            v = w
        self._radius = lam
        return lam

    def rkc_stages(self, dt: float, safety: float = 1.3) -> int:
        need = safety * dt * self.spectral_radius()
        eps = 2.0 / 13.0
        return max(2, math.ceil(math.sqrt(1.0 + 1.5 * need / (1.0 - 2.0 * eps / 15.0))))

    def step(self, state: FlowState, dt: float, scheme: str = "rk4") -> FlowState:
        u = state.rho.full
        try:
            k1, emb = self.rhs(u)
            k1 = self._filtered(k1)
            if scheme == "rk4":
                k2 = self._stage(u + 0.5 * dt * k1)
                k3 = self._stage(u + 0.5 * dt * k2)
                k4 = self._stage(u + dt * k3)
                new = u + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            elif scheme == "rkc":
                new = _rkc2(self._stage, u, k1, dt, self.rkc_stages(dt))
            elif scheme == "euler":
                new = u + dt * k1
            else:
                raise ValueError(f"unknown scheme {scheme!r}")
        except (AngleDegenerate, OffsetOutOfChart) as exc:
            raise StepRejected(f"{type(exc).__name__}: {exc.reason}") from exc
        if not np.all(np.isfinite(new)):
            raise StepRejected("non-finite values")
        if np.max(np.abs(new)) >= self.eps0:
            raise StepRejected(f"max|rho|={float(np.max(np.abs(new))):.17g} >= eps0")
        state.embedding = emb
        return FlowState(state.t + dt, Field.from_full(new))


def _chebyshev(s: int, x: float):
    T = np.zeros(s + 1)
    dT = np.zeros(s + 1)
    d2T = np.zeros(s + 1)
    T[0], T[1], dT[1] = 1.0, x, 1.0
    for j in range(2, s + 1):
        T[j] = 2 * x * T[j - 1] - T[j - 2]
        dT[j] = 2 * T[j - 1] + 2 * x * dT[j - 1] - dT[j - 2]
        d2T[j] = 4 * dT[j - 1] + 2 * x * d2T[j - 1] - d2T[j - 2]
    return T, dT, d2T


def _rkc2(F, y0: np.ndarray, f0: np.ndarray, dt: float, s: int) -> np.ndarray:
    """One step of the damped second-order Runge-Kutta-Chebyshev method with s stages."""
    eps = 2.0 / 13.0
    w0 = 1.0 + eps / (s * s)
    T, dT, d2T = _chebyshev(s, w0)
    w1 = dT[s] / d2T[s]
    b = np.empty(s + 1)
    b[2:] = d2T[2:] / dT[2:] ** 2
    b[0] = b[1] = b[2]
    prev2 = y0
    prev = y0 + (b[1] * w1) * dt * f0
    for j in range(2, s + 1):
        mu = 2.0 * b[j] * w0 / b[j - 1]
        nu = -b[j] / b[j - 2]
        mut = 2.0 * b[j] * w1 / b[j - 1]
        gam = -(1.0 - b[j - 1] * T[j - 1]) * mut
        y = (1.0 - mu - nu) * y0 + mu * prev + nu * prev2 + mut * dt * F(prev) + gam * dt * f0
        prev2, prev = prev, y
    return prev


def rhs_nonlinear(state, cap: CapParams, grid: Grid, cutoff: CutoffProfile | None = None, balanced: bool = False) -> Field:
    """Discrete nonlinear velocity; balanced=True subtracts the rho = 0 discretization residual."""
    flow = Flow(cap, grid, cutoff, balanced=balanced)
    rho = state.rho if isinstance(state, FlowState) else state
    u = rho.full if isinstance(rho, Field) else np.asarray(rho, dtype=float)
    return Field.from_full(flow.rhs(u)[0])


def rhs_linear(rho, cap: CapParams, grid: Grid, chart_consistent: bool = False) -> Field:
    u = rho.full if isinstance(rho, Field) else np.asarray(rho, dtype=float)
    return Field.from_full(-apply_A0_full(u, cap, grid, chart_consistent))


def dt_stability_bound(grid: Grid, cap: CapParams, c_cfl: float = C_CFL) -> float:
    """c_cfl times the smallest of the diffusive time scales of the discrete operator.

    Interior: R^2 h_theta^2, and R^2 sin^2(theta_j) / K_j^2 for the azimuthal
    modes K_j kept on ring j by the polar filter.  Contact line: R^2 sin(a) h_phi^2 / b
    from the line-tension diffusion and R h_theta / sin^2(a) from the flux coupling.
    """
    R, sa = cap.R, cap.sin_alpha
    h = grid.h_theta
    ring = np.min(np.sin(grid.theta) ** 2 / grid.filter_modes.astype(float) ** 2)
    flux = abs(grid._theta_ops[0][grid.n_ghost + grid.n_theta, -1]) * h
    scales = (
        R * R * h * h,
        R * R * ring,
        R * R * sa * (2 * math.pi / grid.n_phi) ** 2 / cap.b,
        R * h / (sa * sa * flux),
    )
    return c_cfl * min(scales)


# ---------------------------------------------------------------- diagnostics


@dataclass
class SphereFit:
    center: np.ndarray
    R: float
    residual: float

    def contact(self) -> tuple[float, float]:
        """(r_fit, cos alpha_fit) of the fitted sphere cut by z = 0."""
        zc = float(self.center[2])
        return math.sqrt(max(self.R**2 - zc**2, 0.0)), zc / self.R


def fit_sphere(emb: Embedding) -> SphereFit:
    """Weighted algebraic least-squares sphere through the embedded nodes."""
    X = emb.X.reshape(3, -1).T
    w = np.sqrt(emb.dA.ravel())
    A = np.column_stack([2.0 * X, np.ones(len(X))]) * w[:, None]
    rhs = np.sum(X * X, axis=1) * w
    sv = np.linalg.svd(A, compute_uv=False)
    if sv[-1] <= 1e-12 * sv[0]:
        raise DegenerateFit("nodes are (nearly) coplanar")
    sol = np.linalg.lstsq(A, rhs, rcond=None)[0]
    c = sol[:3]
    R = math.sqrt(sol[3] + c @ c)
    dist = np.linalg.norm(X - c, axis=1) - R
    res = math.sqrt(np.sum(w * w * dist * dist) / np.sum(w * w))
    return SphereFit(c, R, res)


@dataclass
class Trajectory:
    columns: dict[str, list] = field(default_factory=lambda: {c: [] for c in COLUMNS})
    centers: list = field(default_factory=list)
    step_energy: list = field(default_factory=list)
    status: str = "running"
    reason: str = ""
    dt: float = math.nan
    steps: int = 0
    final: np.ndarray | None = None

    @property
    def times(self) -> np.ndarray:
        return np.asarray(self.columns["t"])

    def __getitem__(self, key: str) -> np.ndarray:
        return np.asarray(self.columns[key])

    def __len__(self) -> int:
        return len(self.columns["t"])

    def max_energy_increase(self) -> float:
        """Largest relative step-to-step energy increase (negative when strictly decreasing)."""
        E = np.asarray(self.step_energy)
        if E.size < 2:
            return -math.inf
        return float(np.max((E[1:] - E[:-1]) / np.abs(E[:-1])))

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(COLUMNS)
            for row in zip(*(self.columns[c] for c in COLUMNS)):
                w.writerow([f"{v:.17g}" for v in row])


class Diagnostics:
    def __init__(self, flow: Flow):
        self.flow = flow
        self.basis = analytic_nullspace(flow.cap, flow.grid)

    def record(self, traj: Trajectory, t: float, u: np.ndarray, emb: Embedding | None = None) -> None:
        flow = self.flow
        cap, grid = flow.cap, flow.grid
        emb = emb or flow.embedding(u)
        bq = boundary_quantities(emb)
        proj = project_nullspace(u, cap, grid, self.basis)
        fit = fit_sphere(emb)
        energy = area(emb) - cap.a * bq.enclosed_area + cap.b * bq.length
        vals = (
            t, enclosed_volume(emb), energy, float(np.max(np.abs(u))),
            l2_tilde_norm(u, cap, grid), proj.a0, proj.a1, proj.a2,
            l2_tilde_norm(proj.remainder, cap, grid), fit.residual, fit.R, bq.angle_margin,
        )
        for c, v in zip(COLUMNS, vals):
            traj.columns[c].append(float(v))
        traj.centers.append(fit.center.copy())


def evolve(
    initial,
    cap: CapParams,
    grid: Grid,
    cutoff: CutoffProfile | None = None,
    T_end: float = 1.0,
    dt: float | str | None = "auto",
    sample_every: int = 10,
    *,
    mode: str = "nonlinear",
    scheme: str = "rk4",
    c_cfl: float = C_CFL,
    track_energy: bool | None = None,
    flow: Flow | None = None,
) -> Trajectory:
    """Integrate to T_end; the step is shrunk so an integer number of steps lands on T_end."""
    flow = flow or Flow(cap, grid, cutoff, mode=mode)
    if dt in (None, "auto"):
        # RKC stages grow with dt, so its automatic step is a fixed multiple of the explicit bound
        dt = dt_stability_bound(grid, cap, c_cfl) * (100.0 if scheme == "rkc" else 1.0)
    n_steps = max(1, math.ceil(T_end / dt - 1e-12))
    dt = T_end / n_steps
    track_energy = (flow.mode == "nonlinear") if track_energy is None else track_energy
    u0 = initial.full if isinstance(initial, Field) else np.asarray(initial, dtype=float)
    # stage derivatives are filtered, so filtered-out modes of the data would never evolve
    u0 = flow._filtered(u0)
    state = FlowState(0.0, Field.from_full(u0))
    traj = Trajectory(dt=dt)
    diag = Diagnostics(flow)
    diag.record(traj, 0.0, u0)
    moved = False
    for n in range(n_steps):
        try:
            new = flow.step(state, dt, scheme)
        except StepRejected as exc:
            traj.status, traj.reason = "StepRejected", exc.reason
            break
        if track_energy:
            traj.step_energy.append(_energy_of(flow, state))
        state = FlowState((n + 1) * dt, new.rho)
        traj.steps = n + 1
        u = state.rho.full
        moved = moved or bool(np.any(u != u0))
        if (n + 1) % sample_every == 0 or n + 1 == n_steps:
            diag.record(traj, state.t, u)
    else:
        traj.status = "completed"
    traj.final = state.rho.full.copy()
    if traj.status == "completed":
        if track_energy:
            traj.step_energy.append(_energy_of(flow, state))
        if not moved and np.max(np.abs(u0)) == 0.0:
            traj.status = "stationary"
        elif _converged(traj):
            traj.status = "converged"
    return traj


def _energy_of(flow: Flow, state: FlowState) -> float:
    emb = state.embedding or flow.embedding(state.rho.full)
    bq = boundary_quantities(emb)
    return area(emb) - flow.cap.a * bq.enclosed_area + flow.cap.b * bq.length


def _converged(traj: Trajectory, factor: float = 1e-2) -> bool:
    rem = traj["remainder"]
    return bool(rem[-1] <= factor * max(rem[0], 1e-300)) or bool(traj["fit_residual"][-1] < 1e-4 * traj["fit_R"][-1])


def decay_rate(traj: Trajectory, window: float = 0.5, key: str = "remainder") -> tuple[float, float]:
    """Least-squares exponential rate of `key` over the final `window` fraction; returns (rate, R^2)."""
    y = traj[key]
    t = traj.times
    m = max(int(math.ceil(window * len(y))), 2)
    if m < 10:
        raise ValueError("need at least 10 samples in the tail window")
    y, t = y[-m:], t[-m:]
    if np.min(y) < 1e-13:
        raise InsufficientDecay(f"{key} below the rounding floor in the fit window")
    ly = np.log(y)
    A = np.column_stack([t, np.ones_like(t)])
    coef, *_ = np.linalg.lstsq(A, ly, rcond=None)
    fit = A @ coef
    ss_res = float(np.sum((ly - fit) ** 2))
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else (1.0 if ss_res == 0 else 0.0)
    return float(-coef[0]), r2


# ---------------------------------------------------------------- initial data


def fe_to_grid(theta_fe: np.ndarray, values: np.ndarray, grid: Grid) -> np.ndarray:
    """Interpolate a nodal finite-element profile onto the grid's theta nodes."""
    return np.interp(grid.theta, theta_fe, values)


def eigenfunction_perturbation(
    cap: CapParams, grid: Grid, k: int, index: int, amplitude: float, n_theta_fe: int = 400, sin_phase: bool = False
) -> Field:
    """amplitude * (mode-k eigenfunction) * cos(k phi), scaled to max |rho| = amplitude."""
    sys = assemble_mode(k, cap, n_theta_fe)
    if k == 0:
        _, vec = nonlocal_mode0(sys, cap, return_vectors=True)
    else:
        _, vec = solve_mode(sys)
    prof = fe_to_grid(sys.theta, vec[:, index], grid)
    ang = np.sin(k * grid.phi) if sin_phase else np.cos(k * grid.phi)
    u = ang[:, None] * prof[None, :]
    return Field.from_full(amplitude * u / np.max(np.abs(u)))


def random_smooth_perturbation(
    grid: Grid, seed: int, amplitude: float, k_max: int = 4, j_max: int = 4
) -> Field:
    """Deterministic smooth field: sum of sin^k(theta) P_j(cos theta) (a cos k phi + b sin k phi)
    with Gaussian coefficients damped by 1/(1 + k^2 + j^2)^2, scaled to max |rho| = amplitude."""
    rng = np.random.default_rng(seed)
    P, T = grid.mesh
    u = np.zeros(grid.shape)
    ct, st = np.cos(T), np.sin(T)
    for k in range(k_max + 1):
        for j in range(j_max + 1):
            a, b = rng.standard_normal(2)
            if k == 0:
                b = 0.0
            leg = np.polynomial.legendre.Legendre.basis(j)(ct)
            u += (st**k * leg * (a * np.cos(k * P) + b * np.sin(k * P))) / (1 + k * k + j * j) ** 2
    return Field.from_full(amplitude * u / np.max(np.abs(u)))


def mode_perturbation(grid: Grid, amplitude: float, k: int = 2) -> Field:
    """amplitude * sin(theta) * cos(k phi)."""
    return Field.from_function(grid, lambda p, t: amplitude * np.sin(t) * np.cos(k * p))

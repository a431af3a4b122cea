"""Linearized operator around a stationary cap and its azimuthal-mode spectra.

Each azimuthal wavenumber k reduces the operator to a Sturm-Liouville problem
in theta whose eigenvalue also appears in the boundary condition.  It is
discretized with P1 finite elements; the contact-line value is the last
nodal unknown and carries its own mass R/sin(alpha).
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .cap_geometry import CapParams, make_cap, feasible_alpha_range, feasible_r_range, cap_from_angle, region
from .errors import CapflowError, ComplexSpectrum, InvalidMode, NotHalfsphere, SolverFailure
from .surface_calculus import Field, Grid, laplace_beltrami_reference

_GAUSS = np.polynomial.legendre.leggauss(4)


@dataclass
class ModeSystem:
    k: int
    K: np.ndarray
    M: np.ndarray
    theta: np.ndarray
    constrained: bool
    cap: CapParams

    @property
    def free(self) -> slice:
        return slice(1, None) if self.constrained else slice(0, None)

    @property
    def h(self) -> float:
        return float(self.theta[1] - self.theta[0])


def _element_integrals(theta: np.ndarray, k: int):
    """Per-element 2x2 blocks of int s u'v', int s uv, int uv/s with s = sin(theta)."""
    gx, gw = _GAUSS
    lo, hi = theta[:-1], theta[1:]
    h = hi - lo
    t = 0.5 * (lo + hi)[:, None] + 0.5 * h[:, None] * gx[None, :]
    w = 0.5 * h[:, None] * gw[None, :]
    s = np.sin(t)
    phiL = (hi[:, None] - t) / h[:, None]
    phiR = (t - lo[:, None]) / h[:, None]
    basis = (phiL, phiR)
    grad = (-1.0 / h, 1.0 / h)
    stiff = np.empty((theta.size - 1, 2, 2))
    mass = np.empty_like(stiff)
    inv = np.empty_like(stiff)
    for a in range(2):
        for b in range(2):
            stiff[:, a, b] = grad[a] * grad[b] * np.sum(w * s, axis=1)
            mass[:, a, b] = np.sum(w * s * basis[a] * basis[b], axis=1)
            inv[:, a, b] = np.sum(w * basis[a] * basis[b] / s, axis=1) if k else 0.0
    return stiff, mass, inv


def _scatter(blocks: np.ndarray) -> np.ndarray:
    n = blocks.shape[0] + 1
    A = np.zeros((n, n))
    i = np.arange(n - 1)
    A[i, i] += blocks[:, 0, 0]
    A[i, i + 1] += blocks[:, 0, 1]
    A[i + 1, i] += blocks[:, 1, 0]
    A[i + 1, i + 1] += blocks[:, 1, 1]
    return A


def _mode_matrices(k: int, theta: np.ndarray):
    stiff, mass, inv = _element_integrals(theta, k)
    return _scatter(stiff), _scatter(mass), _scatter(inv)


def boundary_coefficient(k: int, cap: CapParams) -> float:
    return cap.cos_alpha - cap.b * (1 - k * k) / (cap.R * cap.sin_alpha**2)


def assemble_mode(k: int, cap: CapParams, n_theta: int) -> ModeSystem:
    """Stiffness of the bilinear form B and the weighted mass for wavenumber k."""
    if k < 0 or int(k) != k:
        raise InvalidMode(f"wavenumber {k} must be a non-negative integer")
    if n_theta < 16:
        raise ValueError("n_theta must be >= 16")
    k = int(k)
    theta = np.linspace(0.0, cap.theta_max, n_theta + 1)
    S, Mw, Inv = _mode_matrices(k, theta)
    K = S - 2.0 * Mw + k * k * Inv
    M = cap.R**2 * Mw
    K[-1, -1] += boundary_coefficient(k, cap)
    M[-1, -1] += cap.R / cap.sin_alpha
    if k:
        K[0, :] = K[:, 0] = 0.0
        M[0, :] = M[:, 0] = 0.0
    return ModeSystem(k, K, M, theta, bool(k), cap)


def _embed_free(sys: ModeSystem, vecs: np.ndarray) -> np.ndarray:
    if not sys.constrained:
        return vecs
    return np.vstack([np.zeros((1, vecs.shape[1])), vecs])


def solve_mode(sys: ModeSystem) -> tuple[np.ndarray, np.ndarray]:
    """Ascending eigenvalues and M-orthonormal eigenvectors (columns, full nodal length)."""
    f = sys.free
    try:
        lam, vec = sla.eigh(sys.K[f, f], sys.M[f, f])
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise SolverFailure(f"mode {sys.k}: {exc}") from exc
    if not np.all(np.isfinite(lam)):
        raise SolverFailure(f"mode {sys.k}: non-finite eigenvalues")
    return lam, _embed_free(sys, vec)


def mean_functional(sys: ModeSystem, cap: CapParams, flux: str = "weak"):
    """Pieces of the rank-one mode-0 term: (m, c0, c1).

    The reference-surface mean of (Laplace-Beltrami + |sigma|^2) u is
    c0^T u + lam * c1^T u.  By Gauss the Laplacian integrates to the boundary
    flux.  With flux="weak" the flux is read off the boundary row of the
    eigen-equation (exact for eigenpairs, hence the lam-dependence); with
    flux="difference" it is a second-order one-sided difference and c1 = 0.
    m is the interior mass against the constant 1.
    """
    _, Mw, _ = _mode_matrices(0, sys.theta)
    den = cap.R**2 * (1.0 + cap.cos_alpha)
    m = cap.R**2 * Mw.sum(axis=1)
    c1 = np.zeros_like(m)
    if flux == "weak":
        # int (Lap_S + 2) u sin = -B(u, 1) + (R / sin a) (boundary row of the operator)
        c0 = -sys.K.sum(axis=0) / den
        c1[-1] = cap.R / cap.sin_alpha / den
    elif flux == "difference":
        h = sys.h
        c0 = 2.0 * Mw.sum(axis=1)
        c0[-3:] += cap.sin_alpha * np.array([0.5, -2.0, 1.5]) / h
        c0 /= den
    else:
        raise ValueError(f"unknown flux evaluation {flux!r}")
    return m, c0, c1


def nonlocal_mode0(sys: ModeSystem, cap: CapParams, return_vectors: bool = False, flux: str = "weak"):
    """Mode-0 spectrum of the full linearization, including the mean-curvature average."""
    if sys.k != 0:
        raise InvalidMode("nonlocal correction only acts on mode 0")
    m, c0, c1 = mean_functional(sys, cap, flux)
    A = sys.K + np.outer(m, c0)
    B = sys.M - np.outer(m, c1)
    try:
        lam, vec = sla.eig(A, B)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise SolverFailure(f"nonlocal mode 0: {exc}") from exc
    if not np.all(np.isfinite(lam)):
        raise SolverFailure("nonlocal mode 0: non-finite eigenvalues")
    scale = np.max(np.abs(lam))
    if np.max(np.abs(lam.imag)) > 1e-8 * scale:
        raise ComplexSpectrum(f"imaginary part {float(np.max(np.abs(lam.imag))):.3g}")
    order = np.argsort(lam.real)
    lam = lam.real[order]
    if not return_vectors:
        return lam
    vec = vec.real[:, order]
    vec /= np.sqrt(np.einsum("ij,ik,kj->j", vec, sys.M, vec))
    return lam, vec


@dataclass
class SpectrumReport:
    modes: dict[int, np.ndarray]
    nullspace_dim: int
    min_positive: float
    flag_has_negative: bool
    tol_null: float
    params: dict
    n_theta: int
    vectors: dict[int, np.ndarray] = field(default_factory=dict, repr=False)
    theta: np.ndarray | None = field(default=None, repr=False)

    def multiplicity(self, k: int) -> int:
        return 1 if k == 0 else 2

    def smallest_positive_mode(self) -> tuple[int, int]:
        """(k, index) of the eigenvalue reported as min_positive."""
        for k, lam in self.modes.items():
            hit = np.nonzero(lam == self.min_positive)[0]
            if hit.size:
                return k, int(hit[0])
        raise ValueError("no positive eigenvalue")

    def rows(self, n_keep: int | None = None):
        p = self.params
        for k, lam in self.modes.items():
            for i, v in enumerate(lam[:n_keep]):
                yield (p["a"], p["b"], p["r"], p["alpha"], k, i, float(v))

    def as_dict(self, n_keep: int | None = 10) -> dict:
        return {
            "params": self.params,
            "n_theta": self.n_theta,
            "nullspace_dim": self.nullspace_dim,
            "min_positive": self.min_positive,
            "flag_has_negative": self.flag_has_negative,
            "tol_null": self.tol_null,
            "modes": {str(k): [float(x) for x in lam[:n_keep]] for k, lam in self.modes.items()},
        }


def spectrum(cap: CapParams, k_max: int, n_theta: int, keep_vectors: bool = False) -> SpectrumReport:
    if k_max < 2:
        raise ValueError("k_max must be >= 2")
    modes, vectors = {}, {}
    sys0 = assemble_mode(0, cap, n_theta)
    res = nonlocal_mode0(sys0, cap, return_vectors=keep_vectors)
    modes[0], vectors[0] = (res if keep_vectors else (res, None))
    for k in range(1, k_max + 1):
        lam, vec = solve_mode(assemble_mode(k, cap, n_theta))
        modes[k] = lam
        vectors[k] = vec
    pooled = np.sort(np.concatenate([np.repeat(lam, 1 if k == 0 else 2) for k, lam in modes.items()]))
    h = cap.theta_max / n_theta
    tol = 10.0 * np.max(np.abs(pooled[:5])) * h * h
    null = int(np.sum(np.abs(pooled) < tol))
    pos = pooled[pooled > tol]
    report = SpectrumReport(
        modes=modes,
        nullspace_dim=null,
        min_positive=float(pos[0]) if pos.size else math.nan,
        flag_has_negative=bool(np.any(pooled < -tol)),
        tol_null=float(tol),
        params=cap.as_dict(),
        n_theta=n_theta,
        vectors=vectors if keep_vectors else {},
        theta=sys0.theta,
    )
    return report


def halfsphere_reference(cap: CapParams, k_max: int, l_max: int) -> dict[int, np.ndarray]:
    """Neumann spectrum of the hemisphere: (l(l+1) - 2)/R^2 with l - k even."""
    if abs(cap.cos_alpha) > 1e-12:
        raise NotHalfsphere(f"cos(alpha)={cap.cos_alpha:.17g}")
    return {k: np.array([(l * (l + 1) - 2) / cap.R**2 for l in range(k, l_max + 1, 2)]) for k in range(k_max + 1)}


def homotopy_mode(k: int, cap: CapParams, n_theta: int, d: float) -> np.ndarray:
    """Eigenvalues (as lambda = (mu - 2)/R^2) of the boundary-scaled hemisphere operator."""
    theta = np.linspace(0.0, cap.theta_max, n_theta + 1)
    S, Mw, Inv = _mode_matrices(k, theta)
    K = S + k * k * Inv
    M = Mw.copy()
    K[-1, -1] += d / cap.R * (2.0 - cap.b * (1 - k * k))
    M[-1, -1] += d / cap.R
    f = slice(1, None) if k else slice(0, None)
    try:
        mu = sla.eigh(K[f, f], M[f, f], eigvals_only=True)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise SolverFailure(f"homotopy mode {k}, d={d}: {exc}") from exc
    return (mu - 2.0) / cap.R**2


def homotopy_spectrum(cap: CapParams, d_values, k_max: int, n_theta: int, n_eigs: int = 5) -> dict[int, np.ndarray]:
    """Per-mode curves of shape (len(d_values), n_eigs), matched by sorted order."""
    if abs(cap.cos_alpha) > 1e-12:
        raise NotHalfsphere(f"cos(alpha)={cap.cos_alpha:.17g}")
    d_values = np.asarray(d_values, dtype=float)
    if np.any(np.diff(d_values) < 0) or d_values.min() < 0 or d_values.max() > 1:
        raise ValueError("d_values must be sorted inside [0, 1]")
    return {k: np.array([homotopy_mode(k, cap, n_theta, d)[:n_eigs] for d in d_values]) for k in range(k_max + 1)}


# ---------------------------------------------------------------- grid side


@dataclass
class NullBasis:
    v0: Field
    v1: Field
    v2: Field

    def __iter__(self):
        return iter((self.v0, self.v1, self.v2))


def analytic_nullspace(cap: CapParams, grid: Grid) -> NullBasis:
    if cap.c_alpha is None:
        v0 = Field.from_function(grid, lambda p, t: np.cos(t))
    else:
        v0 = Field.from_function(grid, lambda p, t: 1.0 + cap.c_alpha * np.cos(t))
    v1 = Field.from_function(grid, lambda p, t: np.sin(p) * np.sin(t))
    v2 = Field.from_function(grid, lambda p, t: np.cos(p) * np.sin(t))
    return NullBasis(v0, v1, v2)


def reference_area_weights(cap: CapParams, grid: Grid) -> np.ndarray:
    return cap.R**2 * np.sin(grid.theta)[None, :] * grid.weights


def boundary_weight(cap: CapParams, grid: Grid) -> float:
    """Arc-length weight R sin(alpha) h_phi times the 1/sin^2(alpha) boundary factor."""
    return cap.R * grid.h_phi / cap.sin_alpha


def _full(rho) -> np.ndarray:
    return rho.full if isinstance(rho, Field) else np.asarray(rho, dtype=float)


def apply_A0_full(u: np.ndarray, cap: CapParams, grid: Grid, chart_consistent: bool = False) -> np.ndarray:
    """Linearized operator on full nodal arrays.

    chart_consistent=True uses the exact linearization of the contact-line law in the
    offset chart: the contact line moves by rho/sin(alpha) in the plane, so the
    line-tension term picks up an extra 1/sin(alpha).
    """
    lap = laplace_beltrami_reference(grid, u, cap).full
    s2 = 2.0 / cap.R**2
    dA = reference_area_weights(cap, grid)
    g = lap + s2 * u
    out = -g + np.sum(g * dA) / np.sum(dA)
    ut = grid.d_theta_boundary(u)
    ub = u[:, -1]
    upp = grid.d_phi2(u[:, -1:])[:, 0]
    sa, ca, R = cap.sin_alpha, cap.cos_alpha, cap.R
    bt = cap.b / (R * sa * sa) / (sa if chart_consistent else 1.0)
    out[:, -1] = (sa / R) * (sa * ut + ca * ub - bt * (upp + ub))
    return out


def apply_A0(rho, cap: CapParams, grid: Grid) -> Field:
    return Field.from_full(apply_A0_full(_full(rho), cap, grid))


def A0_matrix(cap: CapParams, grid: Grid) -> np.ndarray:
    """Dense matrix of apply_A0 on the flattened (n_phi, n_theta+1) state; coarse grids only."""
    n = grid.n_phi * (grid.n_theta + 1)
    cols = np.empty((n, n))
    e = np.zeros(n)
    for j in range(n):
        e[j] = 1.0
        cols[:, j] = apply_A0_full(e.reshape(grid.shape), cap, grid).ravel()
        e[j] = 0.0
    return cols


def l2_tilde_inner(u, v, cap: CapParams, grid: Grid) -> float:
    u, v = _full(u), _full(v)
    dA = reference_area_weights(cap, grid)
    return float(np.sum(u * v * dA) + boundary_weight(cap, grid) * np.sum(u[:, -1] * v[:, -1]))


def l2_tilde_norm(u, cap: CapParams, grid: Grid) -> float:
    return math.sqrt(max(l2_tilde_inner(u, u, cap, grid), 0.0))


@dataclass
class Projection:
    a0: float
    a1: float
    a2: float
    remainder: Field


def project_nullspace(v, cap: CapParams, grid: Grid, basis: NullBasis | None = None) -> Projection:
    basis = basis or analytic_nullspace(cap, grid)
    u = _full(v)
    dA = reference_area_weights(cap, grid)
    a0 = float(np.sum(u * dA) / np.sum(basis.v0.full * dA))
    a1 = l2_tilde_inner(u, basis.v1, cap, grid) / l2_tilde_inner(basis.v1, basis.v1, cap, grid)
    a2 = l2_tilde_inner(u, basis.v2, cap, grid) / l2_tilde_inner(basis.v2, basis.v2, cap, grid)
    rem = u - a0 * basis.v0.full - a1 * basis.v1.full - a2 * basis.v2.full
    return Projection(a0, a1, a2, Field.from_full(rem))


def nullspace_residuals(cap: CapParams, n_phi: int, n_theta: int, **grid_kw) -> list[float]:
    grid = Grid.for_cap(cap, n_phi, n_theta, **grid_kw)
    return [apply_A0(v, cap, grid).max_abs() for v in analytic_nullspace(cap, grid)]


def mode0_inhomogeneous_residual(cap: CapParams, n_theta: int, c: float = 1.0) -> tuple[float, np.ndarray]:
    """Least-squares solve of the mode-0 nullspace system with inhomogeneity c.

    Solves B(rho, h) = -c int h sin(theta) d(theta) for all h.  Eigen-directions
    of the local mode-0 pencil whose eigenvalue is below the null tolerance are
    treated as exact kernel; the returned residual is the part of the load the
    remaining directions cannot absorb, measured in the dual mass norm.
    """
    sys = assemble_mode(0, cap, n_theta)
    lam, vec = solve_mode(sys)
    _, Mw, _ = _mode_matrices(0, sys.theta)
    load = -c * Mw.sum(axis=1)
    coef = vec.T @ load
    h = sys.h
    tol = 10.0 * np.max(np.abs(lam[:5])) * h * h
    kernel = np.abs(lam) < tol
    sol = vec[:, ~kernel] @ (coef[~kernel] / lam[~kernel])
    residual = float(np.sqrt(np.sum(coef[kernel] ** 2)) / np.sqrt(np.sum(coef**2)))
    return residual, sol


# ---------------------------------------------------------------- scans


def pick_cap(a: float, b: float, r_rule="mid") -> CapParams:
    """Cap for (a, b) with r chosen by rule: a number, 'mid' (middle contact angle) or 'mid_r'."""
    if isinstance(r_rule, (int, float)):
        return make_cap(a, b, float(r_rule))
    if r_rule == "mid_r":
        iv = feasible_r_range(a, b)
        if iv.bounded:
            return make_cap(a, b, iv.midpoint())
        r_rule = "mid"
    if r_rule == "mid":
        iv = feasible_alpha_range(a, b)
        return cap_from_angle(a, b, 0.5 * (iv.lo + iv.hi))
    raise ValueError(f"unknown r rule {r_rule!r}")


def _scan_cell(a: float, b: float, r_rule, k_max: int, n_theta: int) -> dict:
    row = {"a": a, "b": b}
    try:
        cap = pick_cap(a, b, r_rule)
    except CapflowError as exc:
        row.update(status="NoStationaryCap", reason=exc.reason)
        return row
    row.update(r=cap.r, alpha=cap.alpha, c_crit=cap.c_crit, margin=cap.b - cap.c_crit, region=region(cap))
    row["proven_stable_region"] = bool(cap.b > cap.c_crit)
    try:
        rep = spectrum(cap, k_max, n_theta)
    except CapflowError as exc:
        row.update(status=type(exc).__name__, reason=exc.reason)
        return row
    row.update(
        status="ok",
        nullspace_dim=rep.nullspace_dim,
        min_positive=rep.min_positive,
        flag_has_negative=rep.flag_has_negative,
    )
    return row


def scan_parameters(a_list, b_list, r_rule="mid", k_max: int = 4, n_theta: int = 200, threads: int = 1) -> list[dict]:
    if not len(a_list) or not len(b_list):
        raise ValueError("scan lists must be non-empty")
    cells = [(a, b) for a in a_list for b in b_list]
    work = lambda ab: _scan_cell(ab[0], ab[1], r_rule, k_max, n_theta)  # noqa: E731
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(work, cells))
    return [work(c) for c in cells]

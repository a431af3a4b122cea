"""Discrete differential geometry of height fields over a spherical cap.

Grid layout: azimuth phi_i = 2 pi i / n_phi (periodic), polar nodes at cell
centres theta_j = (j - 1/2) h plus one boundary node at theta_max.  Arrays
carry shape (n_phi, n_theta + 1); the last column is the contact line.

phi derivatives are spectral.  theta derivatives use Fornberg stencils of the
configured order; near the pole the stencil reaches across it through the
reflection rho(phi, -theta) = rho(phi + pi, theta), which needs n_phi even.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from . import fd
from .cap_geometry import CapParams
from .curvilinear import CutoffProfile, dpsi_dw, reference_point
from .errors import AngleDegenerate, ContactNotPlanar, DegenerateMetric

ANGLE_LIMIT = 1.0 - 1e-3
PLANAR_TOL = 1e-8


@dataclass(frozen=True)
class Grid:
    n_phi: int
    n_theta: int
    theta_max: float
    fd_order: int = 6
    quad_degree: int = 4

    def __post_init__(self):
        if self.n_phi < 8 or self.n_phi % 2:
            raise ValueError("n_phi must be even and >= 8")
        if self.n_theta < 8:
            raise ValueError("n_theta must be >= 8")
        if self.fd_order < 2 or self.fd_order % 2:
            raise ValueError("fd_order must be even and >= 2")
        if not 0 < self.theta_max < math.pi:
            raise ValueError("theta_max must lie in (0, pi)")

    @classmethod
    def for_cap(cls, cap: CapParams, n_phi: int, n_theta: int, **kw) -> "Grid":
        return cls(n_phi, n_theta, cap.theta_max, **kw)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_phi, self.n_theta + 1)

    @property
    def h_theta(self) -> float:
        return self.theta_max / self.n_theta

    @property
    def h_phi(self) -> float:
        return 2 * math.pi / self.n_phi

    @cached_property
    def phi(self) -> np.ndarray:
        return self.h_phi * np.arange(self.n_phi)

    @cached_property
    def theta(self) -> np.ndarray:
        h = self.h_theta
        return np.r_[(np.arange(self.n_theta) + 0.5) * h, self.theta_max]

    @cached_property
    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        return np.meshgrid(self.phi, self.theta, indexing="ij")

    @cached_property
    def n_ghost(self) -> int:
        return self.fd_order // 2 + 2

    @cached_property
    def _theta_ops(self):
        g = self.n_ghost
        x_ext = np.r_[-self.theta[g - 1 :: -1], self.theta]
        targets = np.arange(g, g + self.n_theta + 1)
        D1, D2 = fd.diff_matrices(x_ext, targets, self.fd_order)
        return np.ascontiguousarray(D1.T), np.ascontiguousarray(D2.T)

    @cached_property
    def theta_weights(self) -> np.ndarray:
        edges = self.h_theta * np.arange(self.n_theta + 1)
        edges[-1] = self.theta_max
        return fd.composite_weights(self.theta, edges, self.quad_degree)

    @cached_property
    def weights(self) -> np.ndarray:
        """Quadrature weights in the (phi, theta) parameter plane, shape (n_phi, n_theta+1)."""
        return np.broadcast_to(self.h_phi * self.theta_weights, self.shape)

    @cached_property
    def filter_modes(self) -> np.ndarray:
        """Largest azimuthal wavenumber kept on each ring by the polar filter."""
        k = np.floor(np.sin(self.theta) / self.h_theta).astype(int)
        return np.clip(k, 1, self.n_phi // 2)

    # -- derivatives on arrays whose last two axes are (phi, theta) --

    def _ext(self, f: np.ndarray) -> np.ndarray:
        g = self.n_ghost
        ref = np.roll(f, self.n_phi // 2, axis=-2)[..., g - 1 :: -1]
        return np.concatenate([ref, f], axis=-1)

    def d_theta(self, f: np.ndarray) -> np.ndarray:
        return self._ext(f) @ self._theta_ops[0]

    def d_theta2(self, f: np.ndarray) -> np.ndarray:
        return self._ext(f) @ self._theta_ops[1]

    def d_theta_boundary(self, f: np.ndarray) -> np.ndarray:
        return self._ext(f) @ self._theta_ops[0][:, -1]

    def d_theta_both(self, f: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        e = self._ext(f)
        return e @ self._theta_ops[0], e @ self._theta_ops[1]

    @cached_property
    def _wavenumbers(self) -> np.ndarray:
        k = np.arange(self.n_phi // 2 + 1, dtype=float)
        return k

    def d_phi(self, f: np.ndarray) -> np.ndarray:
        F = np.fft.rfft(f, axis=-2)
        ik = 1j * self._wavenumbers
        ik[-1] = 0.0
        return np.fft.irfft(F * ik[:, None], n=self.n_phi, axis=-2)

    def d_phi2(self, f: np.ndarray) -> np.ndarray:
        F = np.fft.rfft(f, axis=-2)
        return np.fft.irfft(F * (-self._wavenumbers**2)[:, None], n=self.n_phi, axis=-2)

    def d_phi_both(self, f: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        F = np.fft.rfft(f, axis=-2)
        k = self._wavenumbers
        ik = 1j * k
        ik[-1] = 0.0
        d1 = np.fft.irfft(F * ik[:, None], n=self.n_phi, axis=-2)
        d2 = np.fft.irfft(F * (-k * k)[:, None], n=self.n_phi, axis=-2)
        return d1, d2

    @cached_property
    def _filter_mask(self) -> np.ndarray:
        k = self._wavenumbers[:, None]
        return (k <= self.filter_modes[None, :]).astype(float)

    def polar_filter(self, f: np.ndarray) -> np.ndarray:
        """Drop azimuthal modes k > K_j on ring j (K_j ~ sin(theta_j)/h_theta)."""
        F = np.fft.rfft(f, axis=-2)
        return np.fft.irfft(F * self._filter_mask, n=self.n_phi, axis=-2)


@dataclass
class Field:
    """Height values at the polar nodes plus the contact-line trace."""

    interior: np.ndarray
    trace: np.ndarray

    @classmethod
    def from_full(cls, values: np.ndarray) -> "Field":
        values = np.asarray(values, dtype=float)
        return cls(values[:, :-1].copy(), values[:, -1].copy())

    @classmethod
    def zeros(cls, grid: Grid) -> "Field":
        return cls.from_full(np.zeros(grid.shape))

    @classmethod
    def from_function(cls, grid: Grid, f) -> "Field":
        P, T = grid.mesh
        return cls.from_full(np.broadcast_to(f(P, T), grid.shape))

    @property
    def full(self) -> np.ndarray:
        return np.concatenate([self.interior, self.trace[:, None]], axis=1)

    def __add__(self, other: "Field") -> "Field":
        return Field.from_full(self.full + other.full)

    def __sub__(self, other: "Field") -> "Field":
        return Field.from_full(self.full - other.full)

    def __mul__(self, c: float) -> "Field":
        return Field.from_full(c * self.full)

    __rmul__ = __mul__

    def max_abs(self) -> float:
        return float(np.max(np.abs(self.full)))


def trace_mismatch(grid: Grid, field: Field) -> float:
    """Distance between the stored trace and the interior extrapolated to theta_max."""
    idx, w = fd.interp_row(grid.theta[:-1], grid.theta_max, grid.fd_order + 1)
    extrap = field.interior[:, idx] @ w
    return float(np.max(np.abs(extrap - field.trace)))


def _as_full(grid: Grid, rho) -> np.ndarray:
    if rho is None:
        return np.zeros(grid.shape)
    if isinstance(rho, Field):
        return rho.full
    rho = np.asarray(rho, dtype=float)
    if rho.shape != grid.shape:
        raise ValueError(f"field shape {rho.shape} does not match grid {grid.shape}")
    return rho


def _dot(u, v):
    return np.einsum("i...,i...->...", u, v)


@dataclass
class Embedding:
    grid: Grid
    cap: CapParams
    rho: np.ndarray
    X: np.ndarray
    n: np.ndarray
    E: np.ndarray
    F: np.ndarray
    G: np.ndarray
    e: np.ndarray
    f: np.ndarray
    g2: np.ndarray
    H: np.ndarray
    sqrt_det: np.ndarray
    offset_dir: np.ndarray
    X_phi: np.ndarray
    X_theta: np.ndarray

    @property
    def dA(self) -> np.ndarray:
        return self.sqrt_det * self.grid.weights


def embed(grid: Grid, rho, cap: CapParams, cutoff: CutoffProfile | None = None, eps0: float | None = None) -> Embedding:
    cutoff = cutoff or CutoffProfile.for_cap(cap)
    rho = _as_full(grid, rho)
    P, T = grid.mesh
    d = dpsi_dw((P, T), rho, cap, cutoff, eps0)
    return embed_points(grid, cap, rho, reference_point((P, T), cap), d)


def embed_points(grid: Grid, cap: CapParams, rho: np.ndarray, q: np.ndarray, d: np.ndarray) -> Embedding:
    """Embedding of X = q + rho d for precomputed reference points and offset directions."""
    X = q + rho * d
    Xp, Xpp = grid.d_phi_both(X)
    Xt, Xtt = grid.d_theta_both(X)
    Xpt = grid.d_phi(Xt)
    N = np.cross(Xp, Xt, axis=0)
    sd = np.sqrt(_dot(N, N))
    if np.any(sd < 1e-12) or not np.all(np.isfinite(sd)):
        raise DegenerateMetric(f"area element {float(np.min(sd)):.3g} below 1e-12")
    n = N / sd
    E, F, G = _dot(Xp, Xp), _dot(Xp, Xt), _dot(Xt, Xt)
    e, f, g2 = _dot(Xpp, n), _dot(Xpt, n), _dot(Xtt, n)
    H = (e * G - 2 * f * F + g2 * E) / (E * G - F * F)
    return Embedding(grid, cap, rho, X, n, E, F, G, e, f, g2, H, sd, d, Xp, Xt)


def area_integral(emb: Embedding, f) -> float:
    vals = f.full if isinstance(f, Field) else np.broadcast_to(np.asarray(f, dtype=float), emb.grid.shape)
    return float(np.sum(vals * emb.dA))


def area(emb: Embedding) -> float:
    return float(np.sum(emb.dA))


def mean_of_H(emb: Embedding) -> float:
    dA = emb.dA
    return float(np.sum(emb.H * dA) / np.sum(dA))


def _check_planar(emb: Embedding) -> None:
    z = emb.X[2, :, -1]
    if np.max(np.abs(z)) > PLANAR_TOL * emb.cap.R:
        raise ContactNotPlanar(f"contact curve leaves z=0 by {float(np.max(np.abs(z))):.3g}")


def enclosed_volume(emb: Embedding) -> float:
    _check_planar(emb)
    return float(np.sum(_dot(emb.X, emb.n) * emb.dA) / 3.0)


@dataclass
class BoundaryQuantities:
    kappa: np.ndarray
    cos_angle: np.ndarray
    conormal: np.ndarray
    speed: np.ndarray
    length: float
    enclosed_area: float

    @property
    def angle_margin(self) -> float:
        return float(1.0 - np.max(np.abs(self.cos_angle)))


def boundary_quantities(emb: Embedding) -> BoundaryQuantities:
    _check_planar(emb)
    grid = emb.grid
    c = emb.X[:2, :, -1:]
    c1, c2 = grid.d_phi_both(c)
    c, c1, c2 = c[..., 0], c1[..., 0], c2[..., 0]
    speed = np.hypot(c1[0], c1[1])
    kappa = (c1[0] * c2[1] - c1[1] * c2[0]) / speed**3
    tau = c1 / speed
    conormal = np.stack([-tau[1], tau[0], np.zeros_like(speed)])
    length = float(np.sum(speed) * grid.h_phi)
    enclosed = float(abs(0.5 * np.sum(c[0] * c1[1] - c[1] * c1[0]) * grid.h_phi))
    return BoundaryQuantities(kappa, -emb.n[2, :, -1], conormal, speed, length, enclosed)


def check_angle(bq: BoundaryQuantities) -> None:
    if np.max(np.abs(bq.cos_angle)) >= ANGLE_LIMIT:
        raise AngleDegenerate(f"|cos angle| reached {float(np.max(np.abs(bq.cos_angle))):.17g}")


def energy(emb: Embedding, a: float, b: float) -> float:
    bq = boundary_quantities(emb)
    return area(emb) - a * bq.enclosed_area + b * bq.length


def laplace_beltrami_reference(grid: Grid, rho, cap: CapParams) -> Field:
    """Laplace-Beltrami operator of the reference sphere applied to rho at every node."""
    u = _as_full(grid, rho)
    ut, utt = grid.d_theta_both(u)
    upp = grid.d_phi2(u)
    th = grid.theta
    s = np.sin(th)
    out = (utt + (np.cos(th) / s) * ut + upp / (s * s)) / cap.R**2
    return Field.from_full(out)


def write_field_csv(path, grid: Grid, field: Field) -> None:
    vals = _as_full(grid, field)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["phi", "theta", "value"])
        for i, p in enumerate(grid.phi):
            for j, t in enumerate(grid.theta):
                w.writerow([f"{p:.17g}", f"{t:.17g}", f"{vals[i, j]:.17g}"])


def write_embedding_csv(path, emb: Embedding) -> None:
    grid = emb.grid
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["phi", "theta", "x", "y", "z", "H"])
        for i, p in enumerate(grid.phi):
            for j, t in enumerate(grid.theta):
                x, y, z = emb.X[:, i, j]
                w.writerow([f"{v:.17g}" for v in (p, t, x, y, z, emb.H[i, j])])

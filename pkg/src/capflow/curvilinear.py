"""Normal-offset chart around a stationary cap that keeps the contact line on z = 0.

Psi(q, w) = q + w n(q) + t(q, w) T(q), with the tangential correction
t = -w eta(theta) cot(alpha) acting only in a band next to the contact line.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .cap_geometry import CapParams
from .errors import OffsetOutOfChart

EPS0_FACTOR = 0.3


@dataclass(frozen=True)
class SurfacePoint:
    phi: float
    theta: float

    def __post_init__(self):
        object.__setattr__(self, "phi", float(self.phi) % (2 * math.pi))


def smoothstep5(x):
    x = np.clip(x, 0.0, 1.0)
    return x * x * x * (10.0 + x * (-15.0 + 6.0 * x))


@dataclass(frozen=True)
class CutoffProfile:
    """eta(theta): 0 below theta_max - delta, 1 at theta_max, C2 in between."""

    theta_max: float
    delta: float
    kind: str = "quintic"

    @classmethod
    def for_cap(cls, cap: CapParams, fraction: float = 0.25, kind: str = "quintic") -> "CutoffProfile":
        return cls(cap.theta_max, fraction * cap.theta_max, kind)

    def __call__(self, theta):
        x = (np.asarray(theta, dtype=float) - (self.theta_max - self.delta)) / self.delta
        if self.kind == "quintic":
            return smoothstep5(x)
        if self.kind == "septic":
            # C3 alternative, used for sensitivity checks
            x = np.clip(x, 0.0, 1.0)
            return x**4 * (35.0 + x * (-84.0 + x * (70.0 - 20.0 * x)))
        raise ValueError(f"unknown cutoff kind {self.kind!r}")


def epsilon0(cap: CapParams) -> float:
    return EPS0_FACTOR * cap.R


def _frame(phi, theta):
    sp, cp = np.sin(phi), np.cos(phi)
    st, ct = np.sin(theta), np.cos(theta)
    n = np.stack([sp * st, cp * st, ct])
    T = np.stack([sp * ct, cp * ct, -st])
    return n, T


def reference_point(p: SurfacePoint | tuple, cap: CapParams):
    phi, theta = _coords(p)
    n, _ = _frame(phi, theta)
    q = cap.R * n
    q[2] = q[2] + cap.H_center
    return q


def _coords(p):
    if isinstance(p, SurfacePoint):
        return p.phi, p.theta
    phi, theta = p
    return np.asarray(phi, dtype=float), np.asarray(theta, dtype=float)


def _check_offset(w, cap: CapParams, eps0: float | None):
    eps0 = epsilon0(cap) if eps0 is None else eps0
    if np.any(np.abs(w) >= eps0):
        raise OffsetOutOfChart(f"|w|={float(np.max(np.abs(w))):.17g} >= eps0={eps0:.17g}")


def dpsi_dw(p, w, cap: CapParams, cutoff: CutoffProfile, eps0: float | None = None):
    """Offset direction n - eta cot(alpha) T; independent of w since t is linear in w."""
    phi, theta = _coords(p)
    _check_offset(w, cap, eps0)
    n, T = _frame(phi, theta)
    cot = cap.cos_alpha / cap.sin_alpha
    return n - (cutoff(theta) * cot) * T


def psi(p, w, cap: CapParams, cutoff: CutoffProfile, eps0: float | None = None):
    phi, theta = _coords(p)
    w = np.asarray(w, dtype=float)
    d = dpsi_dw((phi, theta), w, cap, cutoff, eps0)
    q = reference_point((phi, theta), cap)
    return q + w * d

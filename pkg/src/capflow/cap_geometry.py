"""Parameter algebra of stationary spherical caps.

A cap sits on the plane z = 0 with contact radius r and contact angle alpha.
Stationarity ties the angle to the energy coefficients through
cos(alpha) = b/r - a.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

from .errors import NoStationaryCap

COS_MARGIN = 1e-8
DEGENERATE_TOL = 1e-9


class _DegenerateBranch:
    """Marker returned when the radial-expansion coefficient is undefined."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "DegenerateBranch"

    def __bool__(self) -> bool:
        return False


DegenerateBranch = _DegenerateBranch()


@dataclass(frozen=True)
class Interval:
    """Open interval (lo, hi); hi may be +inf."""

    lo: float
    hi: float

    def __contains__(self, x: float) -> bool:
        return self.lo < x < self.hi

    @property
    def bounded(self) -> bool:
        return math.isfinite(self.hi)

    def midpoint(self) -> float:
        if not self.bounded:
            raise ValueError("unbounded interval has no midpoint")
        return 0.5 * (self.lo + self.hi)


@dataclass(frozen=True)
class CapParams:
    a: float
    b: float
    r: float
    alpha: float
    R: float
    H_center: float
    c_alpha: float | None
    c_crit: float
    cos_alpha: float = field(repr=False)
    sin_alpha: float = field(repr=False)

    @property
    def theta_max(self) -> float:
        return math.pi - self.alpha

    @property
    def degenerate(self) -> bool:
        return self.c_alpha is None

    @property
    def halfsphere(self) -> bool:
        return abs(self.cos_alpha) <= 1e-12

    def as_dict(self) -> dict:
        return {
            "a": self.a,
            "b": self.b,
            "r": self.r,
            "alpha": self.alpha,
            "R": self.R,
            "H_center": self.H_center,
            "c_alpha": self.c_alpha,
            "c_crit": self.c_crit,
        }


def _check_a(a: float) -> None:
    if not a > -1.0:
        raise NoStationaryCap(f"a={a:.17g} <= -1 admits no stationary cap")


def feasible_r_range(a: float, b: float) -> Interval:
    _check_a(a)
    if a <= 1.0:
        return Interval(b / (a + 1.0), math.inf)
    return Interval(b / (a + 1.0), b / (a - 1.0))


def feasible_alpha_range(a: float, b: float) -> Interval:
    _check_a(a)
    if a <= 1.0:
        return Interval(0.0, math.acos(-a))
    return Interval(0.0, math.pi)


def c_alpha_coefficient(cap: CapParams):
    """Coefficient of cos(theta) in the radial-expansion null mode, or DegenerateBranch."""
    return _c_alpha(cap.b, cap.R, cap.cos_alpha, cap.sin_alpha)


def _c_alpha(b: float, R: float, ca: float, sa: float):
    den = R * sa * sa - b * ca
    if abs(den) < DEGENERATE_TOL * R:
        return DegenerateBranch
    return (R * ca * sa * sa - b) / den


def _build(a: float, b: float, r: float, ca: float) -> CapParams:
    sa = math.sqrt((1.0 - ca) * (1.0 + ca))
    alpha = math.atan2(sa, ca)
    R = r / sa
    H = r * ca / sa
    c = _c_alpha(b, R, ca, sa)
    return CapParams(
        a=a,
        b=b,
        r=r,
        alpha=alpha,
        R=R,
        H_center=H,
        c_alpha=None if c is DegenerateBranch else c,
        c_crit=-R * sa * sa * ca / 3.0,
        cos_alpha=ca,
        sin_alpha=sa,
    )


def make_cap(a: float, b: float, r: float) -> CapParams:
    if not b > 0:
        raise ValueError("line tension b must be positive")
    rng = feasible_r_range(a, b)
    if r not in rng:
        raise NoStationaryCap(f"r={r:.17g} outside ({rng.lo:.17g}, {rng.hi:.17g})")
    ca = b / r - a
    if abs(ca) > 1.0 - COS_MARGIN:
        raise NoStationaryCap(f"|cos(alpha)|={abs(ca):.17g} too close to 1")
    return _build(a, b, r, ca)


def cap_from_angle(a: float, b: float, alpha: float) -> CapParams:
    if not b > 0:
        raise ValueError("line tension b must be positive")
    rng = feasible_alpha_range(a, b)
    if alpha not in rng:
        raise NoStationaryCap(f"alpha={alpha:.17g} outside ({rng.lo:.17g}, {rng.hi:.17g})")
    ca = math.cos(alpha)
    if abs(ca) > 1.0 - COS_MARGIN:
        raise NoStationaryCap(f"|cos(alpha)|={abs(ca):.17g} too close to 1")
    r = b / (ca + a)
    # keep the stored angle consistent with the recomputed cosine
    return _build(a, b, r, b / r - a)


def degenerate_cap(a: float, r: float) -> CapParams:
    """Stationary cap with R sin^2(alpha) = b cos(alpha), solved for b.

    With b = r (cos(alpha) + a) the condition reduces to
    sin(alpha) = cos(alpha)^2 + a cos(alpha) on cos(alpha) in (0, 1).
    """
    from scipy.optimize import brentq

    def g(c: float) -> float:
        return math.sqrt(1.0 - c * c) - c * c - a * c

    lo, hi = 1e-12, 1.0 - 1e-12
    if g(lo) * g(hi) > 0:
        raise NoStationaryCap(f"no degenerate cap for a={a:.17g}")
    c = brentq(g, lo, hi, xtol=1e-15, rtol=1e-15)
    b = r * (c + a)
    if not b > 0:
        raise NoStationaryCap(f"degenerate branch needs b > 0 (a={a:.17g})")
    return _build(a, b, r, c)


@dataclass(frozen=True)
class ReferenceQuantities:
    H: float
    sigma2: float
    gauss: float
    kappa: float
    II_conormal: float
    tau_dn: float

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def ssc_reference(cap: CapParams) -> ReferenceQuantities:
    R = cap.R
    return ReferenceQuantities(
        H=-2.0 / R,
        sigma2=2.0 / R**2,
        gauss=1.0 / R**2,
        kappa=-1.0 / cap.r,
        II_conormal=-1.0 / R,
        tau_dn=1.0 / (R * cap.sin_alpha),
    )


def region(cap: CapParams, tol: float = 1e-12) -> str:
    """Parameter-plane set: S0 (half-sphere), S+ or S-, by the sign of cos(alpha)."""
    if abs(cap.cos_alpha) <= tol:
        return "S0"
    return "S+" if cap.cos_alpha > 0 else "S-"

"""Stationary spherical caps on a plane: geometry, linear stability and the capillary flow."""
from .cap_geometry import CapParams, cap_from_angle, degenerate_cap, make_cap
from .errors import CapflowError

__all__ = ["CapParams", "CapflowError", "cap_from_angle", "degenerate_cap", "make_cap"]
__version__ = "0.1.0"

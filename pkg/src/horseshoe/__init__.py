"""Numerical laboratory for a non-uniformly hyperbolic horseshoe map
with an internal homoclinic tangency."""

__version__ = "0.1.0"

from .map_core import MapParams, REF_EX, REF_STRICT  # noqa: F401

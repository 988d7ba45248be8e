"""Constant mean curvature n-noids by the loop-group Weierstrass method."""

__version__ = "0.1.0"

"""Numerical lab for resonances of asymptotically hyperbolic warped ends."""

__version__ = "0.1.0"

"""Propagation-of-chaos measurements for interacting diffusions on the torus."""

__version__ = "0.1.0"

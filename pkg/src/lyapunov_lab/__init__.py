"""Entropy and large-deviation Lyapunov functionals, checked by direct simulation."""

__version__ = "0.1.0"

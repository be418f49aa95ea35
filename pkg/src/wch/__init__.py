"""Radial interface solutions of the Willmore-type Cahn-Hilliard flow.

Modules: potential, layer, correction, geometry, ansatz, kernels,
reduction, pde and cli.
"""
from .potential import Potential

__all__ = ["Potential"]
__version__ = "0.1.0"

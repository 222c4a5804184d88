"""Non-overlapping two-subdomain decomposition for the 2-D Laplace and Helmholtz
equations: discrete interface operators, their spectra, and the interface
iterations built on them."""

from .errors import *  # noqa: F401,F403
from .grid import GridSpec, Grid2D, build_grid
from .local_solve import Decomposition, assemble, monolithic_solve

__version__ = "0.1.0"

__all__ = ["GridSpec", "Grid2D", "build_grid", "Decomposition", "assemble", "monolithic_solve"]

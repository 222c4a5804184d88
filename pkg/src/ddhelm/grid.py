"""Rectangle geometry, the vertical interface and node bookkeeping.

Nodes are ``(ix, iy)`` with ``0 <= ix <= nx`` and ``0 <= iy <= ny``; only
interior nodes carry unknowns (homogeneous Dirichlet data on the outer
boundary). The interface is the grid column ``ix = split_ix``. Global
interior nodes are numbered column-major::

    g(ix, iy) = (ix - 1) * (ny - 1) + (iy - 1)

Subdomain 1 lies left of the interface (outward normal +x on the
interface), subdomain 2 right of it (outward normal -x).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateMesh, InvalidSplit, ShapeMismatch


@dataclass(frozen=True)
class GridSpec:
    Lx: float = 1.0
    Ly: float = 1.0
    nx: int = 32
    ny: int = 32
    split_ix: int = 16

    @property
    def hx(self) -> float:
        return self.Lx / self.nx

    @property
    def hy(self) -> float:
        return self.Ly / self.ny

    def validate(self) -> None:
        if self.nx < 3 or self.ny < 2:
            raise DegenerateMesh(f"need nx >= 3 and ny >= 2, got nx={self.nx}, ny={self.ny}")
        if not 0 < self.split_ix < self.nx:
            raise InvalidSplit(f"split_ix must satisfy 0 < split_ix < nx={self.nx}, got {self.split_ix}")
        if not (self.Lx > 0 and self.Ly > 0):
            raise DegenerateMesh(f"domain lengths must be positive, got Lx={self.Lx}, Ly={self.Ly}")

    @classmethod
    def square(cls, n: int, L: float = 1.0) -> "GridSpec":
        """``(n+1) x (n+1)`` node square split down the middle."""
        return cls(Lx=L, Ly=L, nx=n, ny=n, split_ix=n // 2)


@dataclass(frozen=True, eq=False)
class Grid2D:
    spec: GridSpec
    interior1: np.ndarray
    interior2: np.ndarray
    gamma: np.ndarray
    hx: float
    hy: float
    n_interior: int = field(default=0)

    @property
    def ny_int(self) -> int:
        return self.spec.ny - 1

    @property
    def n_gamma(self) -> int:
        return self.gamma.size

    def interior(self, m: int) -> np.ndarray:
        if m == 1:
            return self.interior1
        if m == 2:
            return self.interior2
        raise ValueError(f"subdomain tag must be 1 or 2, got {m}")

    def local_nodes(self, m: int) -> np.ndarray:
        """Global indices of subdomain ``m`` unknowns: its interior, then the interface."""
        return np.concatenate([self.interior(m), self.gamma])

    def index(self, ix, iy):
        return (np.asarray(ix) - 1) * self.ny_int + (np.asarray(iy) - 1)

    def coords(self) -> tuple[np.ndarray, np.ndarray]:
        """Coordinates of all global interior nodes, in global order."""
        ix, iy = np.divmod(np.arange(self.n_interior), self.ny_int)
        return (ix + 1) * self.hx, (iy + 1) * self.hy

    def ixiy(self) -> tuple[np.ndarray, np.ndarray]:
        ix, iy = np.divmod(np.arange(self.n_interior), self.ny_int)
        return ix + 1, iy + 1

    def sample(self, func) -> np.ndarray:
        """Evaluate ``func(x, y)`` at every global interior node."""
        x, y = self.coords()
        return np.asarray(func(x, y), dtype=float) * np.ones(self.n_interior)


def build_grid(spec: GridSpec) -> Grid2D:
    spec.validate()
    nyi = spec.ny - 1
    cols = np.arange(nyi)

    def column_block(ix_lo, ix_hi):
        # columns ix_lo..ix_hi inclusive, column-major
        if ix_hi < ix_lo:
            return np.zeros(0, dtype=np.int64)
        ix = np.arange(ix_lo, ix_hi + 1)
        return ((ix[:, None] - 1) * nyi + cols[None, :]).ravel().astype(np.int64)

    interior1 = column_block(1, spec.split_ix - 1)
    interior2 = column_block(spec.split_ix + 1, spec.nx - 1)
    gamma = column_block(spec.split_ix, spec.split_ix)
    return Grid2D(
        spec=spec,
        interior1=interior1,
        interior2=interior2,
        gamma=gamma,
        hx=spec.hx,
        hy=spec.hy,
        n_interior=(spec.nx - 1) * nyi,
    )


def interface_weights(grid: Grid2D) -> np.ndarray:
    """Diagonal of the interface Gram matrix (trapezoid rule, zero end values)."""
    return np.full(grid.n_gamma, grid.hy)


def interface_gram(grid: Grid2D) -> np.ndarray:
    return np.diag(interface_weights(grid))


@dataclass
class InterfaceField:
    """Nodal values on the interface together with their quadrature weights."""

    values: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values)
        self.weights = np.asarray(self.weights, dtype=float)
        if self.values.shape != self.weights.shape:
            raise ShapeMismatch(
                f"values {self.values.shape} and weights {self.weights.shape} differ"
            )

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.values, dtype=dtype)

    def __len__(self):
        return self.values.size

    def inner(self, other) -> complex:
        """Weighted pairing ``other* W self``."""
        return np.vdot(np.asarray(other), self.weights * self.values)

    def norm(self) -> float:
        return float(np.sqrt(np.sum(self.weights * np.abs(self.values) ** 2)))


def restrict_to_gamma(grid: Grid2D, u) -> InterfaceField:
    u = np.asarray(u)
    if u.shape != (grid.n_interior,):
        raise ShapeMismatch(f"expected a vector of length {grid.n_interior}, got shape {u.shape}")
    return InterfaceField(u[grid.gamma], interface_weights(grid))


def weighted_norm(w: np.ndarray, v) -> float:
    v = np.asarray(v)
    return float(np.sqrt(np.sum(w * np.abs(v) ** 2)))

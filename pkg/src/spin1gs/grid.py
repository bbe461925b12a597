"""Rectangular grids with zero-Dirichlet boundary, finite differences and quadrature.

Fields are plain ``numpy`` arrays of shape ``grid.shape``.  Gradients live on
cell edges: for each axis a forward difference array whose length along that
axis is ``n - 1``.  Kinetic energies, S-quantities and the Laplacian all use
this one edge discretisation, so that

    -integrate(f * laplacian(f)) == sum over edges of (Df)^2 * h^dim

holds exactly for fields vanishing on the boundary.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np


@dataclass(frozen=True)
class GridSpec:
    dim: int = 1
    extent: float = 8.0
    n: int = 257

    def __post_init__(self):
        if self.dim not in (1, 2, 3):
            raise ValueError(f"dim must be 1, 2 or 3, got {self.dim}")
        if not self.extent > 0:
            raise ValueError(f"extent must be positive, got {self.extent}")
        if self.n < 3:
            raise ValueError(f"need at least 3 points per axis, got {self.n}")
        if self.n % 2 == 0:
            raise ValueError(f"n must be odd so that 0 is a node, got {self.n}")


class Grid:
    """Uniform node grid on the box [-L, L]^dim."""

    def __init__(self, spec: GridSpec):
        self.spec = spec
        self.dim = spec.dim
        self.n = spec.n
        self.extent = spec.extent
        self.h = 2.0 * spec.extent / (spec.n - 1)
        self.shape = (spec.n,) * spec.dim
        self.axis = np.linspace(-spec.extent, spec.extent, spec.n)
        self.cell = self.h**self.dim

    def __repr__(self):
        return f"Grid(dim={self.dim}, extent={self.extent}, n={self.n}, h={self.h})"

    def __eq__(self, other):
        return isinstance(other, Grid) and self.spec == other.spec

    def __hash__(self):
        return hash(self.spec)

    @cached_property
    def coords(self) -> tuple[np.ndarray, ...]:
        return tuple(np.meshgrid(*([self.axis] * self.dim), indexing="ij"))

    @cached_property
    def radius(self) -> np.ndarray:
        return np.sqrt(sum(x**2 for x in self.coords))

    @cached_property
    def interior(self) -> np.ndarray:
        """Boolean mask of nodes not on the boundary layer."""
        mask = np.zeros(self.shape, dtype=bool)
        mask[(slice(1, -1),) * self.dim] = True
        return mask

    @cached_property
    def weights(self) -> np.ndarray:
        """Composite trapezoid weights (product rule over axes)."""
        w1 = np.full(self.n, self.h)
        w1[0] = w1[-1] = 0.5 * self.h
        w = w1
        for _ in range(self.dim - 1):
            w = np.multiply.outer(w, w1)
        return w

    def check(self, f: np.ndarray) -> np.ndarray:
        f = np.asarray(f, dtype=float)
        if f.shape != self.shape:
            raise ValueError(f"field shape {f.shape} does not conform to grid {self.shape}")
        return f

    def zeros(self) -> np.ndarray:
        return np.zeros(self.shape)

    def dirichlet(self, f: np.ndarray) -> np.ndarray:
        """Copy of ``f`` with the boundary layer set to zero."""
        out = np.where(self.interior, f, 0.0)
        return out

    # -- differential operators ------------------------------------------

    def laplacian(self, f: np.ndarray) -> np.ndarray:
        f = self.check(f)
        out = np.zeros_like(f)
        inner = (slice(1, -1),) * self.dim
        for ax in range(self.dim):
            fwd = list(inner)
            bwd = list(inner)
            fwd[ax] = slice(2, None)
            bwd[ax] = slice(None, -2)
            out[inner] += f[tuple(fwd)] - 2.0 * f[inner] + f[tuple(bwd)]
        out /= self.h**2
        return out

    def grad(self, f: np.ndarray) -> tuple[np.ndarray, ...]:
        """Forward differences on edges, one array per axis."""
        f = self.check(f)
        return tuple(np.diff(f, axis=ax) / self.h for ax in range(self.dim))

    def edge_mean(self, f: np.ndarray) -> tuple[np.ndarray, ...]:
        """Arithmetic mean of the two endpoint values of every edge."""
        f = self.check(f)
        out = []
        for ax in range(self.dim):
            lo = [slice(None)] * self.dim
            hi = [slice(None)] * self.dim
            lo[ax] = slice(None, -1)
            hi[ax] = slice(1, None)
            out.append(0.5 * (f[tuple(lo)] + f[tuple(hi)]))
        return tuple(out)

    def grad_sq(self, f: np.ndarray) -> float:
        """Discrete squared-gradient energy sum_edges |Df|^2 h^dim."""
        return sum(float(np.sum(g * g)) for g in self.grad(f)) * self.cell

    # -- quadrature --------------------------------------------------------

    def integrate(self, f: np.ndarray) -> float:
        f = self.check(f)
        return float(np.sum(self.weights * f))

    def integrate_edges(self, e: tuple[np.ndarray, ...]) -> float:
        return sum(float(np.sum(a)) for a in e) * self.cell


def build_grid(spec: GridSpec | None = None, **kwargs) -> Grid:
    if spec is None:
        spec = GridSpec(**kwargs)
    return Grid(spec)


def laplacian(grid: Grid, f: np.ndarray) -> np.ndarray:
    return grid.laplacian(f)


def integrate(grid: Grid, f: np.ndarray) -> float:
    return grid.integrate(f)


def trap_potential(grid: Grid, kind: str = "harmonic", strengths=(1.0,)) -> np.ndarray:
    """Trap V(x) = sum_i gamma_i^2 x_i^2.

    A single strength is broadcast over all axes.
    """
    if kind != "harmonic":
        raise ValueError(f"unknown trap kind {kind!r}")
    gam = np.atleast_1d(np.asarray(strengths, dtype=float))
    if gam.size == 1:
        gam = np.repeat(gam, grid.dim)
    if gam.size != grid.dim:
        raise ValueError(f"need {grid.dim} trap strengths, got {gam.size}")
    if np.any(gam <= 0):
        raise ValueError("trap strengths must be positive")
    return sum(g**2 * x**2 for g, x in zip(gam, grid.coords))

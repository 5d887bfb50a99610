"""
Domain types for the discretized unit-area conformally flat torus.
"""

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from apps.core.exceptions import GridMismatchError, InvalidFieldError


@dataclass(frozen=True)
class Grid:
    """
    Uniform periodic grid on [0,1)^2 with n points per side.
    """
    n: int

    def __post_init__(self):
        if self.n < 16 or self.n & (self.n - 1):
            raise InvalidFieldError(f"Grid size must be a power of two >= 16, got {self.n}")

    @property
    def dx(self) -> float:
        return 1.0 / self.n

    @property
    def shape(self):
        return (self.n, self.n)

    @cached_property
    def coordinates(self):
        """Node coordinates (x1, x2); axis 0 carries x1, axis 1 carries x2."""
        x = np.arange(self.n) * self.dx
        return np.meshgrid(x, x, indexing='ij')

    @cached_property
    def wavenumbers(self):
        """Integer wavenumbers k in {-n/2, ..., n/2-1} laid out like fft2 output."""
        k = np.fft.fftfreq(self.n, d=1.0 / self.n)
        return np.meshgrid(k, k, indexing='ij')

    def offsets(self, point):
        """Minimal-image displacement x - point for every node."""
        x1, x2 = self.coordinates
        d1 = x1 - point[0]
        d2 = x2 - point[1]
        return d1 - np.rint(d1), d2 - np.rint(d2)

    def node_point(self, node):
        return (node[0] * self.dx, node[1] * self.dx)


@dataclass(frozen=True, eq=False)
class ScalarField:
    """
    Real function sampled on the grid; values[i, j] samples (i*dx, j*dx).

    Extended fields (extended=True) may hold -inf, as the concentration
    potential does where h vanishes.
    """
    grid: Grid
    values: np.ndarray
    extended: bool = False

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64)
        if values.shape != self.grid.shape:
            raise InvalidFieldError(f"Field shape {values.shape} does not match grid {self.grid.shape}")
        if np.isnan(values).any():
            raise InvalidFieldError("Field contains NaN values")
        if not self.extended and not np.isfinite(values).all():
            raise InvalidFieldError("Field contains non-finite values")
        values.setflags(write=False)
        object.__setattr__(self, 'values', values)

    def like(self, values, extended=False) -> 'ScalarField':
        return ScalarField(self.grid, values, extended=extended)

    def at(self, node) -> float:
        return float(self.values[node[0] % self.grid.n, node[1] % self.grid.n])

    def check_grid(self, other: 'ScalarField'):
        if other.grid != self.grid:
            raise GridMismatchError(f"Grid mismatch: n={self.grid.n} vs n={other.grid.n}")

    @classmethod
    def constant(cls, grid: Grid, value: float) -> 'ScalarField':
        return cls(grid, np.full(grid.shape, float(value)))

    @classmethod
    def from_function(cls, grid: Grid, func) -> 'ScalarField':
        """Sample func(x1, x2) on the grid nodes."""
        x1, x2 = grid.coordinates
        return cls(grid, np.broadcast_to(func(x1, x2), grid.shape).copy())


@dataclass(frozen=True, eq=False)
class Surface:
    """
    Torus with metric g = e^phi |dx|^2, normalized to unit area.
    """
    grid: Grid
    phi: ScalarField
    area_element: ScalarField = field(init=False)

    def __post_init__(self):
        if self.phi.grid != self.grid:
            raise GridMismatchError("Conformal factor lives on a different grid")
        object.__setattr__(self, 'area_element', self.phi.like(np.exp(self.phi.values)))

    @property
    def n(self) -> int:
        return self.grid.n

    @property
    def dx(self) -> float:
        return self.grid.dx

    @property
    def area(self) -> float:
        return float(self.area_element.values.sum() * self.dx ** 2)

    def make_field(self, values, extended=False) -> ScalarField:
        return ScalarField(self.grid, values, extended=extended)

    def check(self, *fields: ScalarField):
        for f in fields:
            if f.grid != self.grid:
                raise GridMismatchError(f"Field on n={f.grid.n} used with surface on n={self.grid.n}")

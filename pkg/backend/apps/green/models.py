"""
Green-function records and the condition report for critical-parameter convergence.
"""

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from apps.surface.models import ScalarField


@dataclass(frozen=True, eq=False)
class GreenData:
    """
    Green field for a pole with its local expansion
    G = -4 ln r + A + b1 y1 + b2 y2 + c1 y1^2 + 2 c2 y1 y2 + c3 y2^2 + O(r^3).

    A, b, quad and fit_residual are NaN until fit_regular_part fills them.
    """
    pole: Tuple[int, int]
    G: ScalarField
    A: float = float('nan')
    b: Tuple[float, float] = (float('nan'), float('nan'))
    quad: Tuple[float, float, float] = (float('nan'), float('nan'), float('nan'))
    fit_residual: float = float('nan')

    @property
    def fitted(self) -> bool:
        return bool(np.isfinite(self.A))

    def as_dict(self) -> dict:
        return {
            'pole': list(self.pole),
            'A': self.A,
            'b': list(self.b),
            'quad': list(self.quad),
            'fit_residual': self.fit_residual,
        }


@dataclass(frozen=True, eq=False)
class ConcentrationPotential:
    """Phi = A + 2 ln h (-inf where h = 0), its argmax p0 and the bound C0."""
    field: ScalarField
    p0: Tuple[int, int]
    max_value: float
    c0: float


@dataclass(frozen=True)
class ConditionReport:
    p0: Tuple[int, int]
    lhs: float
    rhs: float
    simplified: float
    satisfied: bool
    k: Tuple[float, float]
    c0: float
    implication_holds: bool
    green: Optional[dict] = None

    def as_dict(self) -> dict:
        return {
            'p0': list(self.p0),
            'lhs': self.lhs,
            'rhs': self.rhs,
            'simplified': self.simplified,
            'satisfied': self.satisfied,
            'k': list(self.k),
            'C0': self.c0,
            'implication_holds': self.implication_holds,
            'green': self.green,
        }


@dataclass(frozen=True, eq=False)
class RobinMap:
    """
    Regular part A(q) over the whole grid, solved on every stride-th node in
    each direction and spectrally interpolated in between.
    """
    field: ScalarField
    stride: int

    def __call__(self, node) -> float:
        return self.field.at(node)

    @property
    def spread(self) -> float:
        return float(self.field.values.max() - self.field.values.min())

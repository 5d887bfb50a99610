"""
Results of the direct elliptic solver and of the subcritical-data construction.
"""

from dataclasses import dataclass, field
from typing import List

from apps.surface.models import ScalarField


@dataclass(frozen=True, eq=False)
class NewtonResult:
    """
    Gauged iterate (int u dmu_g = 0) with the L2 norm of the gradient map.

    linear_failure is set when the inner CG solve broke down or met
    negative curvature; the iterate is then the best one reached.
    """
    u: ScalarField
    residual: float
    iterations: int
    converged: bool
    linear_failure: bool = False
    history: List[float] = field(default_factory=list)
    j_value: float = float('nan')

    def as_dict(self) -> dict:
        return {
            'residual': self.residual,
            'iterations': self.iterations,
            'converged': self.converged,
            'linear_failure': self.linear_failure,
            'history': list(self.history),
            'J': self.j_value,
        }


@dataclass(frozen=True, eq=False)
class SeedResult:
    """Glued-bubble initial datum with J0 < C0; margin = C0 - J0."""
    u0: ScalarField
    j0: float
    c0: float
    margin: float
    eps: float
    scan: List[dict] = field(default_factory=list)

    def as_dict(self) -> dict:
        return {
            'J0': self.j0,
            'C0': self.c0,
            'margin': self.margin,
            'eps': self.eps,
            'scan': list(self.scan),
        }

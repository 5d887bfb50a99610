"""
Prescribed weight and diagnostic records of the variational core.
"""

from dataclasses import astuple, dataclass, fields

import numpy as np

from apps.core.exceptions import DegenerateWeightError
from apps.surface.models import ScalarField


@dataclass(frozen=True, eq=False)
class Weight:
    """
    Prescribed function h >= 0 with max h > 0; h may vanish on open sets.
    """
    h: ScalarField
    max_h: float
    zero_fraction: float

    @classmethod
    def from_field(cls, h: ScalarField) -> 'Weight':
        values = h.values
        if (values < 0.0).any():
            raise DegenerateWeightError(f"Weight is negative somewhere (min {values.min():.3e})")
        max_h = float(values.max())
        if max_h <= 0.0:
            raise DegenerateWeightError("Weight vanishes identically")
        zero_fraction = float(np.mean(values == 0.0))
        return cls(h=h, max_h=max_h, zero_fraction=zero_fraction)

    @property
    def grid(self):
        return self.h.grid


# Column names of series.csv, in order
DIAGNOSTIC_COLUMNS = (
    't', 'mass', 'weighted_mass', 'J', 'dissipation', 'fn_l2',
    'residual_l2', 'max_u', 'h1', 'h2', 'tm_gap',
)


@dataclass(frozen=True)
class Diagnostics:
    """One sample of the monitored quantities along a flow."""
    t: float
    mass: float
    weighted_mass: float
    j_value: float
    dissipation: float
    fn_l2: float
    residual_l2: float
    max_u: float
    h1: float
    h2: float
    tm_gap: float

    def as_row(self) -> dict:
        return dict(zip(DIAGNOSTIC_COLUMNS, astuple(self)))

    def as_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

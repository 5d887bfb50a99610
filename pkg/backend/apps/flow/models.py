"""
State, configuration and outcome records for integrating the mean-field flow.
"""

from dataclasses import dataclass, replace
from enum import Enum
from typing import List, Optional

import numpy as np
import pandas as pd

from apps.blowup.models import BlowupReport
from apps.core.exceptions import ConfigurationError
from apps.functionals.models import DIAGNOSTIC_COLUMNS, Diagnostics
from apps.surface.models import ScalarField


class Scheme(str, Enum):
    EXPLICIT = 'explicit'
    IMEX = 'imex'


class Termination(str, Enum):
    CONVERGED = 'Converged'
    BUDGET_EXHAUSTED = 'BudgetExhausted'
    BLOWUP_SUSPECTED = 'BlowupSuspected'
    NUMERICAL_FAILURE = 'NumericalFailure'


@dataclass(frozen=True)
class FlowConfig:
    rho: float = 8.0 * np.pi
    scheme: Scheme = Scheme.IMEX
    dt_init: float = 1e-3
    dt_safety: float = 0.2
    t_max: float = 10.0
    step_max: int = 200_000
    residual_tol: float = 1e-6
    blowup_max_u: float = 12.0
    blowup_local_mass: float = 7.0 * np.pi
    blowup_radius: float = 0.1
    sample_every: int = 10
    snapshot_interval: Optional[float] = None

    def __post_init__(self):
        if not self.rho > 0.0:
            raise ConfigurationError(f"rho must be positive, got {self.rho}")
        if not self.dt_init > 0.0:
            raise ConfigurationError(f"dt_init must be positive, got {self.dt_init}")
        if not self.residual_tol > 0.0:
            raise ConfigurationError(f"residual_tol must be positive, got {self.residual_tol}")
        if self.sample_every < 1:
            raise ConfigurationError("sample_every must be at least 1")
        try:
            object.__setattr__(self, 'scheme', Scheme(self.scheme))
        except ValueError:
            raise ConfigurationError(f"Unknown scheme {self.scheme!r}")

    def with_overrides(self, **changes) -> 'FlowConfig':
        return replace(self, **changes)


@dataclass(frozen=True, eq=False)
class FlowState:
    """Immutable snapshot of the flow; dt is the step size the next step will try."""
    u: ScalarField
    t: float
    step_index: int
    mass0: float
    dt: float


@dataclass
class RunResult:
    final: FlowState
    series: List[Diagnostics]
    termination: Termination
    blowup: Optional[BlowupReport] = None
    log_weighted_mass_bound: float = 0.0
    samples_below_c0: int = 0
    message: str = ''

    def series_frame(self) -> pd.DataFrame:
        return pd.DataFrame([d.as_row() for d in self.series], columns=list(DIAGNOSTIC_COLUMNS))

    def is_monotone(self, rel_tol: float = 1e-10) -> bool:
        """Sampled J never increases beyond rel_tol * (1 + |J|)."""
        values = [d.j_value for d in self.series]
        return all(b <= a + rel_tol * (1.0 + abs(a)) for a, b in zip(values, values[1:]))

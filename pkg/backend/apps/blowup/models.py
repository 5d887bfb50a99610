"""
Records produced by concentration analysis.
"""

from dataclasses import dataclass, field
from typing import List, Optional, Tuple


@dataclass(frozen=True)
class BubbleFit:
    """
    Fit of a rescaled radial profile to -2 ln(1 + a s^2).

    success is False when the profile shows no bubble-like decay; a and the
    residual are then reported as computed but carry no meaning.
    """
    a: float
    a_theory: float
    profile_residual: float
    success: bool
    center: Optional[Tuple[float, float]] = None
    lam: Optional[float] = None
    local_mass: Optional[float] = None

    def as_dict(self) -> dict:
        return {
            'center': list(self.center) if self.center is not None else None,
            'lambda': self.lam,
            'a': self.a,
            'a_theory': self.a_theory,
            'profile_residual': self.profile_residual,
            'local_mass': self.local_mass,
            'success': self.success,
        }


@dataclass(frozen=True)
class BlowupReport:
    suspected: bool
    quantization: float
    peak_count: int
    mean_u: float
    max_u: float
    fits: List[BubbleFit] = field(default_factory=list)

    def as_dict(self) -> dict:
        return {
            'suspected': self.suspected,
            'quantization': self.quantization,
            'peak_count': self.peak_count,
            'mean_u': self.mean_u,
            'max_u': self.max_u,
            'fits': [fit.as_dict() for fit in self.fits],
        }

"""
Spectral geometry of the unit-area conformally flat torus.

All operators work in conformal coordinates: for g = e^phi |dx|^2 we have
dmu_g = e^phi dx, Delta_g = e^-phi Delta_flat and |grad_g f|^2_g = e^-phi |grad f|^2.
Flat derivatives are Fourier multipliers on the periodic grid.
"""

import logging
from functools import lru_cache

import numpy as np
from scipy import fft
from scipy.special import logsumexp

from apps.core.exceptions import InvalidFieldError, SolvabilityError
from meanfield_lab import settings

from .models import Grid, ScalarField, Surface

logger = logging.getLogger(__name__)

TWO_PI = 2.0 * np.pi

# Relative tolerance on the flat mean of a Poisson right-hand side
SOLVABILITY_TOL = 1e-10


@lru_cache(maxsize=16)
def _multipliers(n: int):
    """Wavenumber multipliers for rfft2 layout: (i k1, i k2, -|k|^2) times 2 pi factors."""
    k1 = fft.fftfreq(n, d=1.0 / n)
    k2 = fft.rfftfreq(n, d=1.0 / n)
    # odd derivatives drop the Nyquist mode so real fields stay real
    d1 = np.where(np.abs(k1) == n // 2, 0.0, k1)
    d2 = np.where(np.abs(k2) == n // 2, 0.0, k2)
    K1, K2 = np.meshgrid(k1, k2, indexing='ij')
    D1, D2 = np.meshgrid(d1, d2, indexing='ij')
    ik1 = 1j * TWO_PI * D1
    ik2 = 1j * TWO_PI * D2
    lap = -(TWO_PI ** 2) * (K1 ** 2 + K2 ** 2)
    return ik1, ik2, lap


def _forward(values):
    return fft.rfft2(values, workers=settings.THREADS)


def _inverse(coeffs, n):
    return fft.irfft2(coeffs, s=(n, n), workers=settings.THREADS)


def flat_laplacian(values: np.ndarray) -> np.ndarray:
    n = values.shape[0]
    _, _, lap = _multipliers(n)
    return _inverse(lap * _forward(values), n)


def flat_gradient(values: np.ndarray):
    n = values.shape[0]
    ik1, ik2, _ = _multipliers(n)
    coeffs = _forward(values)
    return _inverse(ik1 * coeffs, n), _inverse(ik2 * coeffs, n)


def flat_dirichlet_energy(values: np.ndarray) -> float:
    """Integral of |grad f|^2 dx over the flat torus."""
    g1, g2 = flat_gradient(values)
    n = values.shape[0]
    return float(np.sum(g1 * g1 + g2 * g2) / n ** 2)


def shifted_inverse(values: np.ndarray, shift: float) -> np.ndarray:
    """
    Solve (shift - Delta_flat) v = f spectrally.

    With shift == 0 the zero mode is dropped, giving the mean-zero Poisson inverse.
    """
    n = values.shape[0]
    _, _, lap = _multipliers(n)
    symbol = shift - lap
    coeffs = _forward(values)
    if shift == 0.0:
        symbol[0, 0] = 1.0
        coeffs[0, 0] = 0.0
    return _inverse(coeffs / symbol, n)


def make_surface(grid: Grid, phi_raw: ScalarField) -> Surface:
    """
    Shift the conformal factor by a constant so the torus has unit area.
    """
    if phi_raw.extended or not np.isfinite(phi_raw.values).all():
        raise InvalidFieldError("Conformal factor must be finite")
    # log of the Riemann sum, computed without overflow
    log_area = logsumexp(phi_raw.values) + 2.0 * np.log(grid.dx)
    phi = phi_raw.like(phi_raw.values - log_area)
    surface = Surface(grid=grid, phi=phi)
    logger.debug(f"Normalized conformal factor by shift {-log_area:.6e} (n={grid.n})")
    return surface


def integrate(surface: Surface, f: ScalarField) -> float:
    """Riemann sum of f dmu_g; spectrally accurate for smooth periodic f."""
    surface.check(f)
    return float(np.sum(f.values * surface.area_element.values) * surface.dx ** 2)


def laplace_beltrami(surface: Surface, f: ScalarField) -> ScalarField:
    surface.check(f)
    return f.like(flat_laplacian(f.values) * np.exp(-surface.phi.values))


def grad_energy_density(surface: Surface, f: ScalarField) -> ScalarField:
    """|grad_g f|^2_g; its dmu_g integral is the flat Dirichlet energy."""
    surface.check(f)
    g1, g2 = flat_gradient(f.values)
    return f.like((g1 * g1 + g2 * g2) * np.exp(-surface.phi.values))


def gauss_curvature(surface: Surface) -> ScalarField:
    """K = -1/2 e^-phi Delta_flat phi."""
    phi = surface.phi.values
    return surface.phi.like(-0.5 * np.exp(-phi) * flat_laplacian(phi))


def poisson_solve(surface: Surface, f: ScalarField) -> ScalarField:
    """
    Mean-zero solution of -Delta_flat v = f.

    Raises SolvabilityError when the flat mean of f is not zero to within
    SOLVABILITY_TOL relative to the size of f.
    """
    surface.check(f)
    mean = float(np.mean(f.values))
    scale = 1.0 + float(np.mean(np.abs(f.values)))
    if abs(mean) > SOLVABILITY_TOL * scale:
        raise SolvabilityError(f"Right-hand side has nonzero mean {mean:.3e}")
    return f.like(shifted_inverse(f.values, 0.0))


def sobolev_norms(surface: Surface, f: ScalarField):
    """(L2, H1, H2) norms with respect to dmu_g; H2 adds ||Delta_g f||^2."""
    l2_sq = integrate(surface, f.like(f.values ** 2))
    grad_sq = integrate(surface, grad_energy_density(surface, f))
    lap = laplace_beltrami(surface, f)
    lap_sq = integrate(surface, lap.like(lap.values ** 2))
    h1_sq = l2_sq + grad_sq
    h2_sq = h1_sq + lap_sq
    return float(np.sqrt(l2_sq)), float(np.sqrt(h1_sq)), float(np.sqrt(h2_sq))

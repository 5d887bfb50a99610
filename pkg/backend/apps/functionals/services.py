"""
Variational core of the mean-field problem.

    J(u)  = int (1/2 |grad_g u|^2 + rho u) dmu_g - rho ln int h e^u dmu_g
    M(u)  = -Delta_g u - rho (h e^u / int h e^u dmu_g - 1)
    L(xi) = -Delta_g xi - rho (w xi - w int w xi dmu_g),  w = h e^u / int h e^u dmu_g

Exponentials are evaluated as e^(u - m) with m the maximum of u over the
support of h, and m is reinserted inside logarithms, so the functional stays
computable close to blow-up.
"""

import logging

import numpy as np

from apps.core.exceptions import DegenerateWeightError, FieldRangeError
from apps.surface import services as geometry
from apps.surface.models import ScalarField, Surface

from .models import Diagnostics, Weight

logger = logging.getLogger(__name__)

RHO_CRITICAL = 8.0 * np.pi

# Largest exponent evaluated without the max-shift guard
MAX_EXPONENT = 700.0


def _shifted_weighted_sum(surface: Surface, h: np.ndarray, u: np.ndarray):
    """Return (m, S) with int h e^u dmu_g = e^m * S."""
    support = h > 0.0
    if not support.any():
        raise DegenerateWeightError("Weight vanishes identically")
    m = float(u[support].max())
    s = float(np.sum(h * np.exp(u - m) * surface.area_element.values) * surface.dx ** 2)
    if not s > 0.0:
        raise DegenerateWeightError("Weighted mass is not positive")
    return m, s


def log_weighted_mass(surface: Surface, weight: Weight, u: ScalarField) -> float:
    surface.check(weight.h, u)
    m, s = _shifted_weighted_sum(surface, weight.h.values, u.values)
    return m + np.log(s)


def weighted_mass(surface: Surface, weight: Weight, u: ScalarField) -> float:
    """int h e^u dmu_g; may be inf when the log exceeds the float range."""
    with np.errstate(over='ignore'):
        return float(np.exp(log_weighted_mass(surface, weight, u)))


def normalized_density(surface: Surface, weight: Weight, u: ScalarField) -> np.ndarray:
    """w = h e^u / int h e^u dmu_g, which integrates to one."""
    surface.check(weight.h, u)
    h = weight.h.values
    m, s = _shifted_weighted_sum(surface, h, u.values)
    return h * np.exp(u.values - m) / s


def mass(surface: Surface, u: ScalarField) -> float:
    """int e^u dmu_g, the quantity the flow conserves."""
    surface.check(u)
    max_u = float(u.values.max())
    if max_u > MAX_EXPONENT:
        raise FieldRangeError(f"max u = {max_u:.1f} exceeds {MAX_EXPONENT}; unresolved blow-up")
    return geometry.integrate(surface, u.like(np.exp(u.values)))


def functional_J(surface: Surface, weight: Weight, u: ScalarField, rho: float = RHO_CRITICAL) -> float:
    dirichlet = geometry.flat_dirichlet_energy(u.values)
    return 0.5 * dirichlet + rho * geometry.integrate(surface, u) - rho * log_weighted_mass(surface, weight, u)


def gradient_map(surface: Surface, weight: Weight, u: ScalarField, rho: float = RHO_CRITICAL) -> ScalarField:
    """M(u); its dmu_g integral vanishes and M(u + c) = M(u)."""
    w = normalized_density(surface, weight, u)
    minus_lap = -geometry.laplace_beltrami(surface, u).values
    return u.like(minus_lap - rho * (w - 1.0))


def jacobi_apply(surface: Surface, weight: Weight, u: ScalarField, xi: ScalarField,
                 rho: float = RHO_CRITICAL) -> ScalarField:
    """Linearization of the gradient map at u applied to xi."""
    surface.check(xi)
    w = normalized_density(surface, weight, u)
    w_xi = w * xi.values
    mean_w_xi = float(np.sum(w_xi * surface.area_element.values) * surface.dx ** 2)
    minus_lap = -geometry.laplace_beltrami(surface, xi).values
    return xi.like(minus_lap - rho * (w_xi - w * mean_w_xi))


def tm_gap(surface: Surface, u: ScalarField) -> float:
    """
    (1/16 pi) int |grad u|^2 + int u - ln int e^u; bounded below by the
    Trudinger-Moser inequality and invariant under u -> u + c.
    """
    surface.check(u)
    values = u.values
    m = float(values.max())
    log_mass = m + np.log(float(np.sum(np.exp(values - m) * surface.area_element.values) * surface.dx ** 2))
    dirichlet = geometry.flat_dirichlet_energy(values)
    return dirichlet / (16.0 * np.pi) + geometry.integrate(surface, u) - log_mass


def dissipation(surface: Surface, u: ScalarField, u_t: ScalarField) -> float:
    """int e^u u_t^2 dmu_g = -dJ/dt along the flow."""
    surface.check(u, u_t)
    with np.errstate(over='ignore'):
        integrand = np.exp(u.values) * u_t.values ** 2
    return float(np.sum(integrand * surface.area_element.values) * surface.dx ** 2)


def compute_diagnostics(surface: Surface, weight: Weight, u: ScalarField, u_t: ScalarField, t: float,
                        rho: float = RHO_CRITICAL) -> Diagnostics:
    """Evaluate every monitored quantity for the state (u, u_t) at time t."""
    residual = gradient_map(surface, weight, u, rho)
    residual_l2 = np.sqrt(geometry.integrate(surface, residual.like(residual.values ** 2)))
    diss = dissipation(surface, u, u_t)
    _, h1, h2 = geometry.sobolev_norms(surface, u)
    return Diagnostics(
        t=float(t),
        mass=mass(surface, u),
        weighted_mass=weighted_mass(surface, weight, u),
        j_value=functional_J(surface, weight, u, rho),
        dissipation=diss,
        fn_l2=float(np.sqrt(diss)),
        residual_l2=float(residual_l2),
        max_u=float(u.values.max()),
        h1=h1,
        h2=h2,
        tm_gap=tm_gap(surface, u),
    )

"""
Direct solution of the stationary mean-field equation

    -Delta_g u = rho (h e^u / int h e^u dmu_g - 1)

by damped Newton iteration on the gradient map, and construction of
initial data with J(u0) below the concentration bound C0.
"""

import logging
from concurrent.futures import ThreadPoolExecutor

import numpy as np
from scipy.sparse.linalg import LinearOperator, cg

from apps.core.exceptions import GeometryError, SubcriticalConstructionError
from apps.functionals import services as functionals
from apps.functionals.models import Weight
from apps.green.models import GreenData
from apps.surface import services as geometry
from apps.surface.models import ScalarField, Surface
from meanfield_lab import settings

from .models import NewtonResult, SeedResult

logger = logging.getLogger(__name__)

INNER_RTOL = 1e-11
MAX_HALVINGS = 30

DEFAULT_EPS_RANGE = np.logspace(-3.0, -1.0, 41)
DEFAULT_DELTA = 0.1

# Bubble cores narrower than this many grid spacings are not trusted
MIN_CORE_CELLS = 2.0


def _gauge(surface: Surface, u: ScalarField) -> ScalarField:
    return u.like(u.values - geometry.integrate(surface, u))


def _residual_norm(surface, weight, u, rho) -> float:
    M = functionals.gradient_map(surface, weight, u, rho)
    return float(np.sqrt(geometry.integrate(surface, M.like(M.values ** 2))))


def _newton_direction(surface: Surface, weight: Weight, u: ScalarField, rho: float):
    """
    Solve e^phi L(xi) = -e^phi M(u) for flat-mean-zero xi. Both sides have
    zero flat mean and e^phi L is symmetric, so CG runs on that subspace with
    the mean-zero Poisson inverse as preconditioner. Returns (xi, ok).
    """
    n = surface.n
    area = surface.area_element.values
    M = functionals.gradient_map(surface, weight, u, rho)
    rhs = -(area * M.values)
    rhs -= rhs.mean()

    def apply(x):
        x = x.reshape(n, n)
        x = x - x.mean()
        Lx = functionals.jacobi_apply(surface, weight, u, u.like(x), rho).values * area
        return (Lx - Lx.mean()).ravel()

    def precondition(r):
        return geometry.shifted_inverse(r.reshape(n, n), 0.0).ravel()

    operator = LinearOperator((n * n, n * n), matvec=apply, dtype=np.float64)
    preconditioner = LinearOperator((n * n, n * n), matvec=precondition, dtype=np.float64)
    xi, info = cg(operator, rhs.ravel(), rtol=INNER_RTOL, atol=0.0, M=preconditioner, maxiter=20 * n)
    xi -= xi.mean()

    if info != 0:
        logger.warning(f"Newton inner CG did not converge (info={info})")
        return u.like(xi.reshape(n, n)), False
    curvature = float(np.dot(xi, apply(xi)))
    if not curvature > 0.0:
        logger.warning(f"Jacobi operator is not positive along the Newton direction ({curvature:.3e})")
        return u.like(xi.reshape(n, n)), False
    return u.like(xi.reshape(n, n)), True


def newton_solve(surface: Surface, weight: Weight, rho: float, u_init: ScalarField, tol: float = 1e-10,
                 max_iter: int = 50) -> NewtonResult:
    """
    Damped Newton iteration for M(u) = 0 on the gauge slice int u dmu_g = 0.

    A step is halved until ||M|| decreases; when no halving helps, or
    max_iter is reached, the best iterate is returned with converged=False.
    """
    surface.check(u_init)
    functionals.log_weighted_mass(surface, weight, u_init)

    u = _gauge(surface, u_init)
    residual = _residual_norm(surface, weight, u, rho)
    history = [residual]
    linear_failure = False
    iterations = 0

    while residual >= tol and iterations < max_iter:
        xi, ok = _newton_direction(surface, weight, u, rho)
        if not ok:
            linear_failure = True
            break

        step = 1.0
        for _ in range(MAX_HALVINGS):
            candidate = _gauge(surface, u.like(u.values + step * xi.values))
            candidate_residual = _residual_norm(surface, weight, candidate, rho)
            if candidate_residual < residual:
                break
            step *= 0.5
        else:
            logger.warning(f"Newton stalled at residual {residual:.3e} after {iterations} iterations")
            break

        u, residual = candidate, candidate_residual
        iterations += 1
        history.append(residual)
        logger.info(f"Newton iteration {iterations}: residual={residual:.3e}, step={step:g}")

    converged = residual < tol
    j_value = functionals.functional_J(surface, weight, u, rho)
    logger.info(f"Newton finished: converged={converged}, residual={residual:.3e}, "
                f"iterations={iterations}, J={j_value:.10g}")
    return NewtonResult(u=u, residual=residual, iterations=iterations, converged=converged,
                        linear_failure=linear_failure, history=history, j_value=float(j_value))


def _quintic_step(t):
    t = np.clip(t, 0.0, 1.0)
    return t * t * t * (10.0 - 15.0 * t + 6.0 * t * t)


def _regular_part(surface: Surface, green_data: GreenData, y1, y2, r, inner: float):
    """G + 4 ln r off the pole; the fitted expansion within inner of it."""
    c1, c2, c3 = green_data.quad
    fitted = (green_data.A + green_data.b[0] * y1 + green_data.b[1] * y2
              + c1 * y1 ** 2 + 2.0 * c2 * y1 * y2 + c3 * y2 ** 2)
    with np.errstate(divide='ignore'):
        sampled = green_data.G.values + 4.0 * np.log(r)
    return np.where(r >= inner, sampled, fitted)


def glued_bubble(surface: Surface, green_data: GreenData, eps: float, delta: float = DEFAULT_DELTA) -> ScalarField:
    """
    u_eps = chi (H - 2 ln(eps^2 + r^2)) + (1 - chi) G, with H = G + 4 ln r the
    regular part at the pole and chi a quintic cutoff falling from 1 at
    r = delta to 0 at r = 2 delta. The result is shifted to unit mass.
    """
    if not green_data.fitted:
        raise GeometryError("Green data must carry a fitted regular part")
    pole = green_data.pole
    scale = float(np.exp(0.5 * surface.phi.at(pole)))
    if 2.0 * delta / scale >= 0.5:
        raise GeometryError(f"Glue radius {delta} does not fit in the torus chart")

    d1, d2 = surface.grid.offsets(surface.grid.node_point(pole))
    y1, y2 = scale * d1, scale * d2
    r = np.hypot(y1, y2)
    regular = _regular_part(surface, green_data, y1, y2, r, 4.0 * surface.dx)
    core = regular - 2.0 * np.log(eps ** 2 + r ** 2)
    chi = 1.0 - _quintic_step((r - delta) / delta)
    values = chi * core + (1.0 - chi) * green_data.G.values
    u = surface.make_field(values)
    return u.like(values - np.log(functionals.mass(surface, u)))


def construct_subcritical_data(surface: Surface, weight: Weight, green_data: GreenData, eps_range=None,
                               delta: float = DEFAULT_DELTA, c0=None) -> SeedResult:
    """
    Scan the glued-bubble family over eps_range and return the member with
    the smallest J (smallest eps on ties), provided it lies below C0.

    C0 defaults to -4 pi (A + 2 ln h)(p0) - 8 pi ln pi - 8 pi from green_data.
    Values of eps narrower than two grid spacings in normal coordinates are
    evaluated but never selected.
    """
    eps_values = np.sort(np.asarray(DEFAULT_EPS_RANGE if eps_range is None else eps_range, dtype=float))
    pole = green_data.pole
    h0 = weight.h.at(pole)
    if not h0 > 0.0:
        raise SubcriticalConstructionError(f"h vanishes at the pole {pole}")
    if c0 is None:
        c0 = -4.0 * np.pi * (green_data.A + 2.0 * np.log(h0)) - 8.0 * np.pi * np.log(np.pi) - 8.0 * np.pi
    rho = functionals.RHO_CRITICAL
    min_eps = MIN_CORE_CELLS * surface.dx * float(np.exp(0.5 * surface.phi.at(pole)))

    def evaluate(eps):
        u = glued_bubble(surface, green_data, eps, delta)
        return u, functionals.functional_J(surface, weight, u, rho)

    with ThreadPoolExecutor(max_workers=settings.THREADS) as executor:
        results = list(executor.map(evaluate, eps_values))

    scan = []
    best = None
    for eps, (u, j_value) in zip(eps_values, results):
        resolved = bool(eps >= min_eps)
        scan.append({'eps': float(eps), 'J': float(j_value), 'mass': functionals.mass(surface, u),
                     'resolved': resolved})
        if resolved and (best is None or j_value < best[2]):
            best = (eps, u, j_value)
        logger.debug(f"eps={eps:.4e}: J={j_value:.10g} ({'resolved' if resolved else 'unresolved'})")

    if best is None or not best[2] < c0:
        found = 'none resolved' if best is None else f"min J = {best[2]:.10g}"
        logger.error(f"No subcritical datum below C0 = {c0:.10g} ({found})")
        raise SubcriticalConstructionError(f"No eps in range gives J < C0 = {c0:.10g} ({found})", scan=scan)

    eps, u0, j0 = best
    logger.info(f"Subcritical datum: eps={eps:.4e}, J0={j0:.10g}, C0={c0:.10g}, margin={c0 - j0:.4e}")
    return SeedResult(u0=u0, j0=float(j0), c0=float(c0), margin=float(c0 - j0), eps=float(eps), scan=scan)

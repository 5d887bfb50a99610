"""
Green function of -Delta_g with the normalization

    -Delta_g G(., p) = 8 pi (delta_p - 1),   int G dmu_g = 0,

its local expansion G = -4 ln r + A(p) + b.y + y^T C y + O(r^3) in the
conformal normal coordinates y = e^(phi(p)/2) (x - p), the concentration
potential A + 2 ln h with the lower bound C0, and the condition checker for
convergence at the critical parameter.
"""

import logging
from concurrent.futures import ThreadPoolExecutor

import numpy as np
from scipy.signal import resample

from apps.core.exceptions import DegenerateWeightError, GeometryError
from apps.functionals.models import Weight
from apps.surface import services as geometry
from apps.surface.models import ScalarField, Surface
from meanfield_lab import settings

from .models import ConcentrationPotential, ConditionReport, GreenData, RobinMap

logger = logging.getLogger(__name__)

EIGHT_PI = 8.0 * np.pi

# Fit annulus in units of dx, measured in normal coordinates
FIT_INNER = 4
FIT_OUTER = 16

# Largest flat radius where the conformal chart is trusted
CHART_LIMIT = 0.25

DEFAULT_STRIDE = 4


def green_function(surface: Surface, pole) -> ScalarField:
    """
    Solve -Delta_flat G = 8 pi delta_p - 8 pi e^phi with a single-node delta of
    mass one, then shift so that int G dmu_g = 0.
    """
    n = surface.n
    i, j = pole[0] % n, pole[1] % n
    rhs = -EIGHT_PI * surface.area_element.values
    rhs[i, j] += EIGHT_PI / surface.dx ** 2
    # solvable only on a unit-area surface
    G = geometry.poisson_solve(surface, surface.make_field(rhs))
    return G.like(G.values - geometry.integrate(surface, G))


def _window(surface: Surface, pole, radius: int):
    """Node indices and flat offsets of the (2 radius + 1)^2 block around the pole."""
    n = surface.n
    steps = np.arange(-radius, radius + 1)
    rows = (pole[0] + steps) % n
    cols = (pole[1] + steps) % n
    d1, d2 = np.meshgrid(steps * surface.dx, steps * surface.dx, indexing='ij')
    return np.ix_(rows, cols), d1, d2


def fit_regular_part(surface: Surface, green_data: GreenData, inner: float = FIT_INNER,
                     outer: float = FIT_OUTER) -> GreenData:
    """
    Least-squares fit of G + 4 ln r to A + b.y + c1 y1^2 + 2 c2 y1 y2 + c3 y2^2
    over inner dx <= r <= outer dx.
    """
    if not 0 < inner < outer:
        raise GeometryError(f"Fit annulus needs 0 < inner < outer, got [{inner}, {outer}]")
    pole = green_data.pole
    scale = float(np.exp(0.5 * surface.phi.at(pole)))
    r_in = inner * surface.dx
    r_out = outer * surface.dx
    flat_extent = r_out / scale
    if flat_extent > CHART_LIMIT:
        raise GeometryError(f"Fit annulus reaches flat radius {flat_extent:.3f} > {CHART_LIMIT}")

    index, d1, d2 = _window(surface, pole, int(np.ceil(flat_extent / surface.dx)) + 1)
    y1 = scale * d1
    y2 = scale * d2
    r = np.hypot(y1, y2)
    mask = (r >= r_in) & (r <= r_out)
    if mask.sum() < 6:
        raise GeometryError("Fit annulus contains too few grid nodes")

    y1, y2, r = y1[mask], y2[mask], r[mask]
    target = green_data.G.values[index][mask] + 4.0 * np.log(r)
    design = np.column_stack([np.ones_like(r), y1, y2, y1 ** 2, 2.0 * y1 * y2, y2 ** 2])
    coef, *_ = np.linalg.lstsq(design, target, rcond=None)
    residual = float(np.sqrt(np.mean((design @ coef - target) ** 2)))

    return GreenData(
        pole=tuple(int(p) for p in pole),
        G=green_data.G,
        A=float(coef[0]),
        b=(float(coef[1]), float(coef[2])),
        quad=(float(coef[3]), float(coef[4]), float(coef[5])),
        fit_residual=residual,
    )


def compute_green_data(surface: Surface, pole, inner: float = FIT_INNER, outer: float = FIT_OUTER) -> GreenData:
    pole = (int(pole[0]) % surface.n, int(pole[1]) % surface.n)
    G = green_function(surface, pole)
    return fit_regular_part(surface, GreenData(pole=pole, G=G), inner, outer)


def robin_map(surface: Surface, stride: int = DEFAULT_STRIDE) -> RobinMap:
    """
    Regular part A on every stride-th node, solved concurrently on
    settings.THREADS workers and interpolated spectrally to the full grid.
    """
    n = surface.n
    if stride < 1 or n % stride:
        raise GeometryError(f"Stride {stride} does not divide n = {n}")
    coarse = np.arange(0, n, stride)
    poles = [(int(i), int(j)) for i in coarse for j in coarse]

    def solve(pole):
        return compute_green_data(surface, pole).A

    logger.info(f"Computing A on {len(poles)} poles (n={n}, stride={stride}, threads={settings.THREADS})")
    with ThreadPoolExecutor(max_workers=settings.THREADS) as executor:
        values = np.array(list(executor.map(solve, poles))).reshape(len(coarse), len(coarse))

    if stride > 1:
        values = resample(resample(values, n, axis=0), n, axis=1)
    robin = RobinMap(field=surface.make_field(values), stride=stride)
    logger.info(f"A ranges over [{values.min():.8g}, {values.max():.8g}]")
    return robin


def concentration_potential(surface: Surface, weight: Weight, robin) -> ConcentrationPotential:
    """
    Phi = A + 2 ln h, -inf where h = 0, with p0 the first maximizer in
    row-major order and C0 = -4 pi max Phi - 8 pi ln pi - 8 pi.

    robin is a RobinMap or a ScalarField of A values.
    """
    A = robin.field if isinstance(robin, RobinMap) else robin
    surface.check(A, weight.h)
    h = weight.h.values
    if not (h > 0.0).any():
        raise DegenerateWeightError("Weight vanishes identically")

    with np.errstate(divide='ignore'):
        values = A.values + 2.0 * np.log(h)
    flat_index = int(np.argmax(values))
    p0 = tuple(int(k) for k in np.unravel_index(flat_index, values.shape))
    max_value = float(values[p0])
    c0 = -4.0 * np.pi * max_value - EIGHT_PI * np.log(np.pi) - EIGHT_PI
    return ConcentrationPotential(field=surface.make_field(values, extended=True), p0=p0,
                                  max_value=max_value, c0=float(c0))


def check_condition(surface: Surface, weight: Weight, stride: int = DEFAULT_STRIDE, robin=None) -> ConditionReport:
    """
    Evaluate at p0 = argmax(A + 2 ln h)

        full:        Delta_g h + 2 b.k > -(8 pi + |b|^2 - 2K) h
        simplified:  Delta_g ln h + 8 pi - 2K > 0

    with k the orthonormal-frame gradient of h. The identity
    lhs - rhs = h (simplified + |k/h + b|^2) makes simplified > 0 imply the
    full inequality; a violation is logged as an error.
    """
    if robin is None:
        robin = robin_map(surface, stride)
    potential = concentration_potential(surface, weight, robin)
    p0 = potential.p0
    green = compute_green_data(surface, p0)

    h_field = weight.h
    h0 = h_field.at(p0)
    if not h0 > 0.0:
        raise DegenerateWeightError(f"h vanishes at the concentration point {p0}")

    lap_h = geometry.laplace_beltrami(surface, h_field).at(p0)
    g1, g2 = geometry.flat_gradient(h_field.values)
    frame = float(np.exp(-0.5 * surface.phi.at(p0)))
    k = (frame * float(g1[p0]), frame * float(g2[p0]))
    curvature = geometry.gauss_curvature(surface).at(p0)
    b = green.b

    b_dot_k = b[0] * k[0] + b[1] * k[1]
    b_sq = b[0] ** 2 + b[1] ** 2
    k_sq = k[0] ** 2 + k[1] ** 2
    lhs = lap_h + 2.0 * b_dot_k
    rhs = -(EIGHT_PI + b_sq - 2.0 * curvature) * h0
    simplified = lap_h / h0 - k_sq / h0 ** 2 + EIGHT_PI - 2.0 * curvature
    satisfied = bool(lhs > rhs)
    implication_holds = bool(satisfied or not simplified > 0.0)

    if not implication_holds:
        logger.error(f"simplified = {simplified:.6g} > 0 but lhs = {lhs:.10g} <= rhs = {rhs:.10g} at {p0}")
    logger.info(f"Condition at p0={p0}: lhs={lhs:.8g}, rhs={rhs:.8g}, simplified={simplified:.8g}, "
                f"C0={potential.c0:.10g}")

    return ConditionReport(
        p0=p0,
        lhs=float(lhs),
        rhs=float(rhs),
        simplified=float(simplified),
        satisfied=satisfied,
        k=k,
        c0=potential.c0,
        implication_holds=implication_holds,
        green=green.as_dict(),
    )

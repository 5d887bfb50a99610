"""
Concentration analysis: local masses, rescaled profiles, bubble fits and
annulus energies.

Balls are measured with the flat minimal-image distance scaled by e^(phi/2)
at the center, the same normal-coordinate approximation the Green module uses.
Off-grid samples come from a bicubic spline over a spectrally refined copy of
the field, so smooth periodic states are interpolated to high accuracy.
"""

import logging

import numpy as np
from scipy.interpolate import RectBivariateSpline
from scipy.ndimage import label, maximum_filter
from scipy.optimize import least_squares
from scipy.signal import resample
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from apps.core.exceptions import GeometryError
from apps.functionals import services as functionals
from apps.functionals.models import Weight
from apps.surface import services as geometry
from apps.surface.models import ScalarField, Surface

from .models import BlowupReport, BubbleFit

logger = logging.getLogger(__name__)

RHO_QUANTIZED = 8.0 * np.pi

# Rescaled windows must stay inside this flat radius
CHART_LIMIT = 0.25

# Radial window of the bubble fit in rescaled units
PROFILE_WINDOW = 8.0

# Largest grid the spectral refinement produces
_MAX_REFINED = 2048
_SPLINE_PAD = 4


def _center_scale(surface: Surface, center) -> float:
    node = (int(round(center[0] * surface.n)) % surface.n, int(round(center[1] * surface.n)) % surface.n)
    return float(np.exp(0.5 * surface.phi.at(node)))


def _ball_distance(surface: Surface, center) -> np.ndarray:
    d1, d2 = surface.grid.offsets(center)
    return _center_scale(surface, center) * np.hypot(d1, d2)


class PeriodicSampler:
    """
    Evaluate a smooth periodic grid field at arbitrary points of the torus.
    """

    def __init__(self, values: np.ndarray, refine: int = 4):
        n = values.shape[0]
        factor = max(1, min(refine, _MAX_REFINED // n))
        fine = values
        if factor > 1:
            m = n * factor
            fine = resample(resample(values, m, axis=0), m, axis=1)
        m = fine.shape[0]
        padded = np.pad(fine, _SPLINE_PAD, mode='wrap')
        coords = (np.arange(m + 2 * _SPLINE_PAD) - _SPLINE_PAD) / m
        self._spline = RectBivariateSpline(coords, coords, padded, kx=3, ky=3)

    def __call__(self, x1, x2) -> np.ndarray:
        return self._spline.ev(np.mod(x1, 1.0), np.mod(x2, 1.0))


def local_mass(surface: Surface, weight: Weight, u: ScalarField, center, r=None,
               rho: float = RHO_QUANTIZED) -> float:
    """
    Measure of the ball B_r(center) under V e^u dmu_g with V = rho h / int h e^u dmu_g.

    r=None integrates over the whole torus, which gives rho exactly.
    """
    if r is not None and not 0.0 < r < 0.5:
        raise GeometryError(f"Ball radius {r} outside (0, 0.5)")
    density = functionals.normalized_density(surface, weight, u) * surface.area_element.values
    if r is not None:
        density = np.where(_ball_distance(surface, center) < r, density, 0.0)
    return float(rho * np.sum(density) * surface.dx ** 2)


def rescaled_profile(surface: Surface, u: ScalarField, center, lam: float, radii, n_angles: int = 64):
    """
    Angular averages of u(center + e^(-lam/2) x) - u(center) on the circles |x| = s.

    Returns a list of (s, value) pairs; the value at s = 0 is zero by construction.
    """
    surface.check(u)
    radii = np.asarray(radii, dtype=float)
    scale = np.exp(-0.5 * lam)
    if scale * radii.max() >= CHART_LIMIT:
        raise GeometryError(
            f"Rescaled window e^(-lam/2)*{radii.max():g} = {scale * radii.max():.3g} exceeds {CHART_LIMIT}"
        )
    sampler = PeriodicSampler(u.values)
    peak = float(sampler(center[0], center[1]))
    theta = 2.0 * np.pi * np.arange(n_angles) / n_angles
    profile = []
    for s in radii:
        if s == 0.0:
            profile.append((0.0, 0.0))
            continue
        x1 = center[0] + scale * s * np.cos(theta)
        x2 = center[1] + scale * s * np.sin(theta)
        profile.append((float(s), float(np.mean(sampler(x1, x2)) - peak)))
    return profile


def bubble_profile(s, a):
    return -2.0 * np.log1p(a * np.asarray(s) ** 2)


def bubble_fit(profile, phi_at_center: float, mass0: float) -> BubbleFit:
    """
    One-parameter least-squares fit of -2 ln(1 + a s^2) over s in [0, 8].
    """
    s = np.array([p[0] for p in profile], dtype=float)
    v = np.array([p[1] for p in profile], dtype=float)
    keep = s <= PROFILE_WINDOW
    s, v = s[keep], v[keep]
    a_theory = float(np.pi * np.exp(phi_at_center) / mass0)

    decays = v.size >= 3 and v[-1] < -0.1
    monotone = v.size >= 2 and np.mean(np.diff(v) > 1e-9) <= 0.1
    if not (decays and monotone):
        logger.info("Profile shows no bubble-like decay; fit skipped")
        return BubbleFit(a=0.0, a_theory=a_theory, profile_residual=float(np.max(np.abs(v))), success=False)

    guess = max((np.exp(-0.5 * v[-1]) - 1.0) / s[-1] ** 2, 1e-12)
    result = least_squares(lambda p: bubble_profile(s, np.exp(p[0])) - v, x0=[np.log(guess)],
                           xtol=1e-14, ftol=1e-14, gtol=1e-14)
    a = float(np.exp(result.x[0]))
    residual = float(np.max(np.abs(bubble_profile(s, a) - v)))
    success = bool(result.success and np.isfinite(a) and a > 0.0)
    return BubbleFit(a=a, a_theory=a_theory, profile_residual=residual, success=success)


def _energy_sampler(u: ScalarField) -> PeriodicSampler:
    g1, g2 = geometry.flat_gradient(u.values)
    return PeriodicSampler(g1 * g1 + g2 * g2)


def _polar_energy(sampler: PeriodicSampler, center, rho_in: float, rho_out: float,
                  panels: int = 32, order: int = 8, n_angles: int = 128) -> float:
    nodes, weights = np.polynomial.legendre.leggauss(order)
    edges = np.linspace(rho_in, rho_out, panels + 1)
    theta = 2.0 * np.pi * np.arange(n_angles) / n_angles
    cos_t, sin_t = np.cos(theta), np.sin(theta)
    total = 0.0
    for lo, hi in zip(edges[:-1], edges[1:]):
        half = 0.5 * (hi - lo)
        radii = lo + half * (nodes + 1.0)
        x1 = center[0] + np.outer(radii, cos_t)
        x2 = center[1] + np.outer(radii, sin_t)
        ring = sampler(x1, x2).mean(axis=1) * 2.0 * np.pi * radii
        total += half * float(np.dot(weights, ring))
    return 0.5 * total


def neck_energy(surface: Surface, u: ScalarField, center, r_in: float, r_out: float) -> float:
    """
    1/2 int |grad_g u|^2 dmu_g over the annulus r_in <= r < r_out (r_in = 0 gives a ball).

    Conformal invariance turns this into the flat Dirichlet energy over the
    flat annulus of radii r / e^(phi(center)/2), evaluated by polar quadrature.
    """
    surface.check(u)
    if not 0.0 <= r_in < r_out < 0.5:
        raise GeometryError(f"Annulus radii must satisfy 0 <= r_in < r_out < 0.5, got ({r_in}, {r_out})")
    scale = _center_scale(surface, center)
    return _polar_energy(_energy_sampler(u), center, r_in / scale, r_out / scale)


def outside_energy(surface: Surface, u: ScalarField, center, delta: float) -> float:
    """1/2 int over the complement of B_delta(center) of |grad_g u|^2 dmu_g."""
    total = 0.5 * geometry.flat_dirichlet_energy(u.values)
    return total - neck_energy(surface, u, center, 0.0, delta)


def _refine_peak(values: np.ndarray, node, dx: float):
    """Subgrid maximum from a quadratic least-squares fit on the 3x3 stencil."""
    n = values.shape[0]
    i, j = node
    offsets = [(a, b) for a in (-1, 0, 1) for b in (-1, 0, 1)]
    design = np.array([[1.0, a, b, a * a, a * b, b * b] for a, b in offsets])
    samples = np.array([values[(i + a) % n, (j + b) % n] for a, b in offsets])
    c = np.linalg.lstsq(design, samples, rcond=None)[0]
    hessian = np.array([[2.0 * c[3], c[4]], [c[4], 2.0 * c[5]]])
    shift = np.zeros(2)
    if np.all(np.linalg.eigvalsh(hessian) < 0.0):
        shift = np.clip(np.linalg.solve(hessian, -c[1:3]), -0.5, 0.5)
    return (((i + shift[0]) * dx) % 1.0, ((j + shift[1]) * dx) % 1.0)


def _peak_nodes(values: np.ndarray, floor: float):
    """
    One node per plateau of local maxima above floor, highest first.

    Tied maxima (a peak centered between grid nodes) are connected nodes of
    one plateau; plateaus touching across the periodic boundary are merged.
    """
    is_peak = (values == maximum_filter(values, size=3, mode='wrap')) & (values > floor)
    labels, count = label(is_peak, structure=np.ones((3, 3), dtype=int))
    if count == 0:
        return []
    rows, cols = [], []
    for edge, opposite in ((labels[0, :], labels[-1, :]), (labels[:, 0], labels[:, -1])):
        for shift in (-1, 0, 1):
            across = np.roll(opposite, shift)
            touching = (edge > 0) & (across > 0)
            rows.extend(edge[touching] - 1)
            cols.extend(across[touching] - 1)
    graph = coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(count, count))
    _, component = connected_components(graph, directed=False)
    best = {}
    for node in zip(*np.nonzero(is_peak)):
        key = int(component[labels[node] - 1])
        if key not in best or values[node] > values[best[key]]:
            best[key] = node
    return sorted(best.values(), key=lambda node: -values[node])


def synthetic_bubble(surface: Surface, center, eps: float) -> ScalarField:
    """u = -2 ln(eps^2 + r^2) with r the scaled distance to center."""
    r = _ball_distance(surface, center)
    return surface.make_field(-2.0 * np.log(eps ** 2 + r ** 2))


def _smooth_step(t):
    """C-infinity step, 0 for t <= 0 and 1 for t >= 1."""
    t = np.clip(t, 0.0, 1.0)
    with np.errstate(divide='ignore', over='ignore'):
        f0 = np.where(t > 0.0, np.exp(-1.0 / np.where(t > 0.0, t, 1.0)), 0.0)
        f1 = np.where(t < 1.0, np.exp(-1.0 / np.where(t < 1.0, 1.0 - t, 1.0)), 0.0)
    return f0 / (f0 + f1)


def exact_bubble(surface: Surface, center, a: float, lam: float,
                 inner: float = 0.2, outer: float = 0.4) -> ScalarField:
    """
    lam - 2 ln(1 + a e^lam r^2) inside r <= inner, flattened smoothly to a
    constant by r = outer so the field stays smooth and periodic.
    """
    r = np.hypot(*surface.grid.offsets(center))
    bubble = lam - 2.0 * np.log1p(a * np.exp(lam) * r ** 2)
    floor = lam - 2.0 * np.log1p(a * np.exp(lam) * outer ** 2)
    chi = 1.0 - _smooth_step((r - inner) / (outer - inner))
    return surface.make_field(chi * bubble + (1.0 - chi) * floor)


def detect(surface: Surface, weight: Weight, state, mass0: float, threshold: float = 12.0,
           mass_threshold: float = 7.0 * np.pi, radius: float = 0.1) -> BlowupReport:
    """
    Classify a flow state as concentrating or not.

    Concentration is suspected when max u exceeds threshold and the local mass
    of radius `radius` around the highest peak exceeds mass_threshold. Every
    local maximum within 2 of the top is then fitted with a bubble.
    """
    u = state.u
    values = u.values
    max_u = float(values.max())
    mean_u = geometry.integrate(surface, u)
    top = np.unravel_index(int(np.argmax(values)), values.shape)
    top_center = _refine_peak(values, top, surface.dx)
    quantization = local_mass(surface, weight, u, top_center, radius)

    if max_u <= threshold:
        return BlowupReport(suspected=False, quantization=quantization, peak_count=0, mean_u=mean_u, max_u=max_u)

    peaks = _peak_nodes(values, max_u - 2.0)
    fits = []
    for node in peaks:
        center = _refine_peak(values, node, surface.dx)
        lam = float(values[node])
        mass_here = local_mass(surface, weight, u, center, radius)
        phi_c = surface.phi.at(node)
        try:
            profile = rescaled_profile(surface, u, center, lam, np.linspace(0.0, PROFILE_WINDOW, 33))
            fit = bubble_fit(profile, phi_c, mass0)
        except GeometryError as e:
            logger.info(f"No bubble fit at {center}: {e}")
            fit = BubbleFit(a=0.0, a_theory=float(np.pi * np.exp(phi_c) / mass0),
                            profile_residual=float('inf'), success=False)
        fits.append(BubbleFit(a=fit.a, a_theory=fit.a_theory, profile_residual=fit.profile_residual,
                              success=fit.success, center=center, lam=lam, local_mass=mass_here))

    if len(peaks) > 1:
        logger.warning(f"{len(peaks)} concentration peaks found; a single blow-up point is expected at rho = 8 pi")

    suspected = quantization > mass_threshold
    report = BlowupReport(suspected=suspected, quantization=quantization, peak_count=len(peaks),
                          mean_u=mean_u, max_u=max_u, fits=fits)
    logger.info(f"Blow-up check at t={state.t:.6g} (step {state.step_index}): max_u={max_u:.3f}, "
                f"local mass={quantization:.4f}, peaks={len(peaks)}, suspected={suspected}")
    return report

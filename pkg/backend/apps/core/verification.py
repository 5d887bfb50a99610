"""
Invariant suite behind `manage.py verify`. Each check computes one error
measure against a closed form, an oracle or an identity and compares it with
a tolerance for the chosen level (quick: n = 64, full: n = 256). Checks
registered with full_only run at the full level alone.
"""

import json
import logging
import time
from dataclasses import asdict, dataclass

import numpy as np

from apps.blowup import services as blowup
from apps.flow import services as flow
from apps.flow.models import FlowConfig, FlowState, Scheme, Termination
from apps.functionals import services as functionals
from apps.functionals.models import Weight
from apps.green import services as green
from apps.green.ewald import flat_torus_robin_constant
from apps.stationary import services as stationary
from apps.surface import services as geometry
from apps.surface.models import Grid, ScalarField

from .config import WEIGHT_BUILTINS, random_smooth

logger = logging.getLogger(__name__)

LEVELS = {
    'quick': {'n': 64, 'flow_n': 64, 'green_tol': 1e-2, 'bubble_lam': 6.0,
              'bubble_radii': (2.0, 3.0), 'bubble_tol': 1e-2, 'pairs': 5},
    'full': {'n': 256, 'flow_n': 64, 'green_tol': 1e-3, 'bubble_lam': 8.0,
             'bubble_radii': (2.0, 5.0, 10.0), 'bubble_tol': 1e-3, 'pairs': 20},
}

TWO_PI = 2.0 * np.pi


@dataclass
class CheckResult:
    name: str
    passed: bool
    value: float
    tolerance: float
    seconds: float
    detail: str = ''


CHECKS = []

# Checks too long for the quick level
FULL_ONLY = set()


def check(name, full_only=False):
    def register(func):
        CHECKS.append((name, func))
        if full_only:
            FULL_ONLY.add(name)
        return func
    return register


def _flat(n):
    grid = Grid(n)
    return geometry.make_surface(grid, ScalarField.constant(grid, 0.0))


def _curved(n, seed):
    grid = Grid(n)
    return geometry.make_surface(grid, random_smooth(grid, amplitude=0.5, max_mode=3, seed=seed))


@check('poisson round-trip')
def _poisson_round_trip(params):
    surface = _flat(params['n'])
    x1, x2 = surface.grid.coordinates
    worst = 0.0
    for k1, k2 in ((1, 0), (2, -3), (5, 4)):
        f = np.cos(TWO_PI * (k1 * x1 + k2 * x2)) + np.sin(TWO_PI * (k2 * x1 - k1 * x2))
        eigenvalue = TWO_PI ** 2 * (k1 * k1 + k2 * k2)
        worst = max(worst, np.abs(geometry.flat_laplacian(f) + eigenvalue * f).max() / eigenvalue)
        v = geometry.poisson_solve(surface, surface.make_field(f))
        worst = max(worst, np.abs(v.values - f / eigenvalue).max() * eigenvalue)
    return worst, 1e-10


@check('gauss-bonnet')
def _gauss_bonnet(params):
    worst = 0.0
    for seed in range(10):
        surface = _curved(params['n'], seed)
        worst = max(worst, abs(geometry.integrate(surface, geometry.gauss_curvature(surface))))
    return worst, 1e-8


@check('conformal invariance')
def _conformal_invariance(params):
    worst = 0.0
    for seed in range(10):
        surface = _curved(params['n'], seed)
        u = random_smooth(surface.grid, amplitude=1.0, max_mode=4, seed=100 + seed)
        curved = geometry.integrate(surface, geometry.grad_energy_density(surface, u))
        flat = geometry.flat_dirichlet_energy(u.values)
        worst = max(worst, abs(curved - flat) / flat)
    return worst, 1e-10


def _random_pair(n, seed):
    surface = _curved(n, seed)
    weight = Weight.from_field(WEIGHT_BUILTINS['one_plus_half_cos'](surface.grid))
    u = random_smooth(surface.grid, amplitude=1.0, max_mode=3, seed=1000 + seed)
    xi = random_smooth(surface.grid, amplitude=1.0, max_mode=3, seed=2000 + seed)
    return surface, weight, u, xi


@check('gradient consistency')
def _gradient_consistency(params):
    worst = 0.0
    t = 1e-5
    for seed in range(params['pairs']):
        surface, weight, u, xi = _random_pair(64, seed)
        plus = functionals.functional_J(surface, weight, u.like(u.values + t * xi.values))
        minus = functionals.functional_J(surface, weight, u.like(u.values - t * xi.values))
        M = functionals.gradient_map(surface, weight, u)
        exact = geometry.integrate(surface, M.like(M.values * xi.values))
        worst = max(worst, abs((plus - minus) / (2 * t) - exact) / max(abs(exact), 1e-12))
    return worst, 1e-6


@check('jacobi consistency')
def _jacobi_consistency(params):
    worst = 0.0
    t = 1e-5
    for seed in range(params['pairs']):
        surface, weight, u, xi = _random_pair(64, seed)
        plus = functionals.gradient_map(surface, weight, u.like(u.values + t * xi.values)).values
        minus = functionals.gradient_map(surface, weight, u.like(u.values - t * xi.values)).values
        exact = functionals.jacobi_apply(surface, weight, u, xi).values
        worst = max(worst, np.linalg.norm((plus - minus) / (2 * t) - exact) / np.linalg.norm(exact))
    return worst, 1e-4


def _criterion_flow(params):
    surface = _flat(params['flow_n'])
    weight = Weight.from_field(WEIGHT_BUILTINS['one_plus_half_cos'](surface.grid))
    return surface, weight, ScalarField.constant(surface.grid, 0.0)


@check('mass conservation')
def _mass_conservation(params):
    surface, weight, u0 = _criterion_flow(params)
    config = FlowConfig(scheme=Scheme.IMEX, dt_init=1e-4, t_max=1.0)
    result = flow.run(surface, weight, u0, config)
    if result.termination not in (Termination.CONVERGED, Termination.BUDGET_EXHAUSTED) or not result.is_monotone():
        return float('inf'), 1e-6
    drift = max(abs(d.mass - result.series[0].mass) for d in result.series) / result.series[0].mass
    return drift, 1e-6


@check('dissipation identity')
def _dissipation_identity(params):
    surface, weight, u0 = _criterion_flow(params)
    config = FlowConfig(scheme=Scheme.IMEX, dt_init=1e-5, t_max=1.0)
    mass0 = functionals.mass(surface, u0)
    state = FlowState(u=u0, t=0.0, step_index=0, mass0=mass0, dt=config.dt_init)
    worst = 0.0
    for _ in range(100):
        j0 = functionals.functional_J(surface, weight, state.u)
        d0 = functionals.dissipation(surface, state.u, flow.time_derivative(surface, weight, config.rho, state.u))
        following = flow.step(state, surface, weight, config)
        j1 = functionals.functional_J(surface, weight, following.u)
        d1 = functionals.dissipation(surface, following.u,
                                     flow.time_derivative(surface, weight, config.rho, following.u))
        rate = (j1 - j0) / (following.t - state.t)
        average = 0.5 * (d0 + d1)
        worst = max(worst, abs(rate + average) / (1.0 + average))
        state = following
    return worst, 1e-3


@check('critical convergence', full_only=True)
def _critical_convergence(params):
    surface = _flat(128)
    weight = Weight.from_field(WEIGHT_BUILTINS['one_plus_half_cos'](surface.grid))
    report = green.check_condition(surface, weight)
    if not report.satisfied:
        return float('inf'), 1e-6
    seed = stationary.construct_subcritical_data(surface, weight, green.compute_green_data(surface, report.p0),
                                                 c0=report.c0)
    result = flow.run(surface, weight, seed.u0, FlowConfig(t_max=50.0), c0=report.c0)
    if result.termination is not Termination.CONVERGED or result.samples_below_c0 != len(result.series):
        return float('inf'), 1e-6
    return result.series[-1].residual_l2, 1e-6


@check('green gauge')
def _green_gauge(params):
    surface = _curved(params['n'], 7)
    G = green.green_function(surface, (params['n'] // 4, params['n'] // 8))
    return abs(geometry.integrate(surface, G)), 1e-8


@check('green pairing')
def _green_pairing(params):
    surface = _flat(params['n'])
    pole = (params['n'] // 3, params['n'] // 5)
    G = green.green_function(surface, pole)
    psi = ScalarField.from_function(surface.grid, lambda x1, x2: np.cos(TWO_PI * x1))
    pairing = geometry.integrate(surface, G.like(-G.values * geometry.laplace_beltrami(surface, psi).values))
    expected = 8.0 * np.pi * (psi.at(pole) - geometry.integrate(surface, psi))
    return abs(pairing - expected), 1e-3


@check('green oracle')
def _green_oracle(params):
    surface = _flat(params['n'])
    oracle = flat_torus_robin_constant()
    worst = 0.0
    for pole in ((0, 0), (params['n'] // 2, params['n'] // 4), (params['n'] // 3, 7)):
        data = green.compute_green_data(surface, pole)
        worst = max(worst, abs(data.A - oracle), abs(data.b[0]), abs(data.b[1]))
    return worst, params['green_tol']


@check('condition implication')
def _condition_implication(params):
    surface = _flat(params['n'])
    robin = green.robin_map(surface)
    failures = 0
    for builder in WEIGHT_BUILTINS.values():
        report = green.check_condition(surface, Weight.from_field(builder(surface.grid)), robin=robin)
        failures += not report.implication_holds
    return float(failures), 0.0


@check('quantization')
def _quantization(params):
    surface = _flat(params['n'])
    weight = Weight.from_field(ScalarField.constant(surface.grid, 1.0))
    center = (0.5, 0.5)
    worst = 0.0
    for eps in (1e-2, 1e-3):
        u = blowup.synthetic_bubble(surface, center, eps)
        u = u.like(u.values + 10.0)
        state = FlowState(u=u, t=0.0, step_index=0, mass0=functionals.mass(surface, u), dt=1e-3)
        report = blowup.detect(surface, weight, state, state.mass0)
        if report.peak_count != 1:
            return float('inf'), 0.02
        worst = max(worst, abs(report.quantization - 8.0 * np.pi) / (8.0 * np.pi))
    return worst, 0.02


@check('bubble energy')
def _bubble_energy(params):
    surface = _flat(params['n'])
    lam = params['bubble_lam']
    center = (0.5, 0.5)
    u = blowup.exact_bubble(surface, center, a=1.0, lam=lam)
    worst = 0.0
    for R in params['bubble_radii']:
        numeric = blowup.neck_energy(surface, u, center, 0.0, R * np.exp(-0.5 * lam))
        exact = 8.0 * np.pi * (np.log1p(R * R) + 1.0 / (1.0 + R * R) - 1.0)
        worst = max(worst, abs(numeric - exact) / exact)
    return worst, params['bubble_tol']


@check('subcritical newton')
def _subcritical_newton(params):
    surface = _flat(64)
    weight = Weight.from_field(WEIGHT_BUILTINS['one_plus_half_cos'](surface.grid))
    result = stationary.newton_solve(surface, weight, 4.0 * np.pi, ScalarField.constant(surface.grid, 0.0),
                                     tol=1e-10, max_iter=10)
    return result.residual, 1e-10


def run_suite(level: str = 'quick'):
    params = LEVELS[level]
    results = []
    for name, func in CHECKS:
        if name in FULL_ONLY and level != 'full':
            continue
        started = time.time()
        try:
            value, tolerance = func(params)
            passed = bool(value <= tolerance)
            detail = ''
        except Exception as e:
            logger.exception(f"Check {name!r} raised")
            value, tolerance, passed, detail = float('nan'), float('nan'), False, f"{type(e).__name__}: {e}"
        results.append(CheckResult(name=name, passed=passed, value=float(value), tolerance=float(tolerance),
                                   seconds=time.time() - started, detail=detail))
        logger.info(f"{name}: {'PASS' if passed else 'FAIL'} ({value:.3e} vs {tolerance:.1e})")
    return results


def format_table(results) -> str:
    width = max(len(r.name) for r in results)
    lines = [f"{'check':<{width}}  result  {'value':>10}  {'tolerance':>10}  seconds"]
    for r in results:
        status = 'PASS' if r.passed else 'FAIL'
        line = f"{r.name:<{width}}  {status:<6}  {r.value:>10.3e}  {r.tolerance:>10.1e}  {r.seconds:7.1f}"
        if r.detail:
            line += f"  {r.detail}"
        lines.append(line)
    return '\n'.join(lines)


def cmd_verify(level: str = 'quick', as_json: bool = False) -> int:
    """Run the invariant suite; exit 0 iff every check passes."""
    results = run_suite(level)
    if as_json:
        print(json.dumps({'level': level, 'checks': [asdict(r) for r in results]}, indent=2))
    else:
        print(format_table(results))
    failed = [r.name for r in results if not r.passed]
    if failed:
        logger.error(f"Failing checks: {', '.join(failed)}")
        return 1
    return 0

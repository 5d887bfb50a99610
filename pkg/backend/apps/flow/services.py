"""
Time integration of the mean-field flow

    d/dt e^u = Delta_g u + rho (h e^u / int h e^u dmu_g - 1),

written as u_t = -e^-u M(u) with M the gradient map. Two schemes are offered:
classical RK4 for cross-validation, and an IMEX scheme that treats the
Laplacian implicitly and never divides by e^u.
"""

import logging
import time

import numpy as np
from scipy.sparse.linalg import LinearOperator, cg

from apps.blowup import services as blowup
from apps.core.exceptions import DegenerateWeightError, FieldRangeError, NumericalFailure
from apps.functionals import services as functionals
from apps.functionals.models import Weight
from apps.surface import services as geometry
from apps.surface.models import ScalarField, Surface

from .models import FlowConfig, FlowState, RunResult, Scheme, Termination

logger = logging.getLogger(__name__)

MIN_DT = 1e-14
MASS_DRIFT_TOL = 1e-8
J_INCREASE_TOL = 1e-10
CG_TOL = 1e-10
DT_GROWTH = 1.1

# Newton corrections after the linear IMEX iterate, and the mass defect they aim for
IMEX_CORRECTIONS = 4
IMEX_MASS_TOL = 1e-13


def time_derivative(surface: Surface, weight: Weight, rho: float, u: ScalarField) -> ScalarField:
    """u_t = e^-u (Delta_g u + rho (h e^u / int h e^u - 1)) = -e^-u M(u)."""
    min_u = float(u.values.min())
    if min_u < -functionals.MAX_EXPONENT:
        raise FieldRangeError(f"min u = {min_u:.1f}; e^-u overflows")
    residual = functionals.gradient_map(surface, weight, u, rho)
    return u.like(-np.exp(-u.values) * residual.values)


def _rk4_update(surface, weight, rho, u: ScalarField, dt: float) -> ScalarField:
    def rate(values):
        return time_derivative(surface, weight, rho, u.like(values)).values

    k1 = rate(u.values)
    k2 = rate(u.values + 0.5 * dt * k1)
    k3 = rate(u.values + 0.5 * dt * k2)
    k4 = rate(u.values + dt * k3)
    return u.like(u.values + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4))


def _shifted_cg(surface: Surface, diag: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Solve (diag - Delta_flat) x = rhs by CG, preconditioned with the mean of diag."""
    n = surface.n

    def apply(x):
        x = x.reshape(n, n)
        return (diag * x - geometry.flat_laplacian(x)).ravel()

    shift = float(diag.mean())

    def precondition(r):
        return geometry.shifted_inverse(r.reshape(n, n), shift).ravel()

    operator = LinearOperator((n * n, n * n), matvec=apply, dtype=np.float64)
    preconditioner = LinearOperator((n * n, n * n), matvec=precondition, dtype=np.float64)
    solution, info = cg(operator, rhs.ravel(), rtol=CG_TOL, atol=0.0, M=preconditioner, maxiter=10 * n)
    if info != 0:
        raise NumericalFailure(f"IMEX linear solve did not converge (info={info})")
    return solution.reshape(n, n)


def _imex_update(surface, weight, rho, u: ScalarField, dt: float) -> ScalarField:
    """
    Backward Euler for e^u with the weight term frozen at the old state,

        (e^v - e^u)/dt = Delta_g v + rho (h e^u / int h e^u - 1),

    solved by Newton iteration from v = u. The first iterate is the linear step
    (e^u/dt - Delta_g) v = e^u u/dt + rho (w - 1); its O(dt^2) mass defect is
    removed by the following iterates, since the equation itself integrates to
    int e^v dmu_g = int e^u dmu_g. Everything is multiplied by e^phi so each
    Newton operator diag(e^(v+phi)/dt) - Delta_flat is symmetric positive.
    """
    area = surface.area_element.values
    w = functionals.normalized_density(surface, weight, u)
    source = np.exp(u.values) * area / dt + rho * area * (w - 1.0)
    mass_before = functionals.mass(surface, u)
    v = u.values
    for _ in range(1 + IMEX_CORRECTIONS):
        diag = np.exp(v) * area / dt
        v = v + _shifted_cg(surface, diag, source - diag + geometry.flat_laplacian(v))
        defect = abs(functionals.mass(surface, u.like(v)) - mass_before)
        if defect <= IMEX_MASS_TOL * mass_before:
            break
    return u.like(v)


def _explicit_cap(surface: Surface, u: ScalarField, safety: float) -> float:
    """Largest stable RK4 step: sigma dx^2 min(e^(u+phi)) / 4."""
    return safety * surface.dx ** 2 * float(np.exp(u.values + surface.phi.values).min()) / 4.0


def step(state: FlowState, surface: Surface, weight: Weight, config: FlowConfig) -> FlowState:
    """
    Advance one accepted step. A trial is rejected and dt halved when the
    mass drifts by more than 1e-8 mass0 or J increases beyond round-off.
    """
    u = state.u
    rho = config.rho
    mass_before = functionals.mass(surface, u)
    j_before = functionals.functional_J(surface, weight, u, rho)
    dt = state.dt
    remaining = config.t_max - state.t
    rejected = 0

    while True:
        trial_dt = min(dt, remaining) if remaining > MIN_DT else dt
        if config.scheme is Scheme.EXPLICIT:
            trial_dt = min(trial_dt, _explicit_cap(surface, u, config.dt_safety))
        if trial_dt < MIN_DT:
            raise NumericalFailure(f"Step size underflow (dt = {trial_dt:.3e}) at t = {state.t:.6g}")

        if config.scheme is Scheme.EXPLICIT:
            candidate = _rk4_update(surface, weight, rho, u, trial_dt)
        else:
            candidate = _imex_update(surface, weight, rho, u, trial_dt)

        drift = abs(functionals.mass(surface, candidate) - mass_before)
        j_after = functionals.functional_J(surface, weight, candidate, rho)
        if drift <= MASS_DRIFT_TOL * state.mass0 and j_after <= j_before + J_INCREASE_TOL * (1.0 + abs(j_before)):
            break

        rejected += 1
        logger.debug(f"Rejected step at t={state.t:.6g}, dt={trial_dt:.3e}: drift={drift:.3e}, "
                     f"dJ={j_after - j_before:.3e}")
        dt = 0.5 * trial_dt

    next_dt = dt if rejected else min(dt * DT_GROWTH, max(config.dt_init, dt))
    return FlowState(u=candidate, t=state.t + trial_dt, step_index=state.step_index + 1,
                     mass0=state.mass0, dt=next_dt)


def _residual_l2(surface, weight, u, rho) -> float:
    residual = functionals.gradient_map(surface, weight, u, rho)
    return float(np.sqrt(geometry.integrate(surface, residual.like(residual.values ** 2))))


def _sample(surface, weight, state: FlowState, rho):
    u_t = time_derivative(surface, weight, rho, state.u)
    return functionals.compute_diagnostics(surface, weight, state.u, u_t, state.t, rho)


def run(surface: Surface, weight: Weight, u0: ScalarField, config: FlowConfig, c0=None,
        snapshot_sink=None) -> RunResult:
    """
    Integrate from u0 until convergence, blow-up suspicion or budget exhaustion.

    c0, when given, counts samples with J below the lower bound C0 that any
    blowing-up flow must respect. snapshot_sink(state) is called every
    config.snapshot_interval units of flow time.
    """
    surface.check(u0)
    mass0 = functionals.mass(surface, u0)
    functionals.log_weighted_mass(surface, weight, u0)
    rho = config.rho
    state = FlowState(u=u0, t=0.0, step_index=0, mass0=mass0, dt=config.dt_init)
    series = [_sample(surface, weight, state, rho)]
    residual = series[-1].residual_l2
    next_snapshot = 0.0 if config.snapshot_interval else None
    report = None
    message = ''
    started = time.time()

    logger.info(f"Starting {config.scheme.value} run: n={surface.n}, rho={rho:.6g}, mass0={mass0:.12g}, "
                f"J0={series[-1].j_value:.10g}")

    while True:
        if next_snapshot is not None and state.t >= next_snapshot:
            if snapshot_sink is not None:
                snapshot_sink(state)
            next_snapshot += config.snapshot_interval

        if residual < config.residual_tol:
            termination = Termination.CONVERGED
            break
        if state.t >= config.t_max - MIN_DT or state.step_index >= config.step_max:
            termination = Termination.BUDGET_EXHAUSTED
            break
        sampled = state.step_index % config.sample_every == 0
        if sampled and float(state.u.values.max()) > config.blowup_max_u:
            report = blowup.detect(surface, weight, state, mass0, threshold=config.blowup_max_u,
                                   mass_threshold=config.blowup_local_mass, radius=config.blowup_radius)
            if report.suspected:
                termination = Termination.BLOWUP_SUSPECTED
                break

        try:
            state = step(state, surface, weight, config)
            residual = _residual_l2(surface, weight, state.u, rho)
        except (NumericalFailure, FieldRangeError, DegenerateWeightError) as e:
            logger.error(f"Run failed at t={state.t:.6g}, step {state.step_index}: {e}")
            termination = Termination.NUMERICAL_FAILURE
            message = str(e)
            break

        if state.step_index % config.sample_every == 0:
            series.append(_sample(surface, weight, state, rho))

    if termination is not Termination.NUMERICAL_FAILURE and series[-1].t != state.t:
        series.append(_sample(surface, weight, state, rho))

    log_bound = max(abs(np.log(d.weighted_mass)) for d in series)
    below = 0
    if c0 is not None:
        below = sum(d.j_value < c0 - J_INCREASE_TOL * (1.0 + abs(c0)) for d in series)
        if below and termination is Termination.BLOWUP_SUSPECTED:
            logger.error(f"Blow-up suspected although J fell below C0 = {c0:.10g} in {below} samples")
        elif below:
            logger.info(f"J below C0 = {c0:.10g} in {below} samples; concentration is excluded")

    logger.info(f"Run finished: {termination.value} at t={state.t:.6g} after {state.step_index} steps "
                f"({time.time() - started:.1f}s), residual={residual:.3e}")
    return RunResult(final=state, series=series, termination=termination, blowup=report,
                     log_weighted_mass_bound=float(log_bound), samples_below_c0=int(below), message=message)

"""
Subcommands of the laboratory. Each takes a resolved RunConfig, writes its
artifacts under the configured output directory and returns an exit code.
"""

import json
import logging
from pathlib import Path

import numpy as np

from apps.core.exceptions import GeometryError, SubcriticalConstructionError
from apps.flow import services as flow
from apps.flow.models import Termination
from apps.green import services as green
from apps.stationary import services as stationary
from apps.surface.fieldio import write_field

from .config import RunConfig

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_BLOWUP = 2
EXIT_BUDGET = 3
EXIT_CONDITION_FAILS = 4

TERMINATION_EXIT_CODES = {
    Termination.CONVERGED: EXIT_OK,
    Termination.BLOWUP_SUSPECTED: EXIT_BLOWUP,
    Termination.BUDGET_EXHAUSTED: EXIT_BUDGET,
    Termination.NUMERICAL_FAILURE: EXIT_ERROR,
}


def _json_default(value):
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, Path):
        return str(value)
    raise TypeError(f"{type(value).__name__} is not JSON serializable")


def write_json(path: Path, payload: dict) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, default=_json_default))
    return path


def _emit(payload: dict):
    print(json.dumps(payload, indent=2, default=_json_default))


def _build_problem(config: RunConfig):
    surface = config.build_surface()
    weight = config.build_weight(surface)
    return surface, weight


def _condition_refuses_seed(config: RunConfig, report) -> bool:
    """Seeded data exists only where the condition holds at p0; check.json records the refusal."""
    if report.satisfied:
        return False
    logger.warning(f"Condition fails at p0={report.p0}; no subcritical datum is constructed")
    write_json(config.output_dir / 'check.json', report.as_dict())
    return True


def _seed_initial(config: RunConfig, surface, weight, report):
    green_data = green.compute_green_data(surface, report.p0)
    return stationary.construct_subcritical_data(surface, weight, green_data, eps_range=config.eps_range(),
                                                 delta=config.raw['seed']['delta'], c0=report.c0)


def cmd_run(config: RunConfig) -> int:
    """Integrate the flow; writes series.csv, summary.json, u_final.kwf and snapshots."""
    out = config.output_dir
    surface, weight = _build_problem(config)
    flow_config = config.flow_config()

    report = None
    if config.initial_kind == 'seed':
        report = green.check_condition(surface, weight, stride=config.raw['green']['stride'])
    elif config.raw['flow']['monitor_condition']:
        try:
            report = green.check_condition(surface, weight, stride=config.raw['green']['stride'])
        except GeometryError as e:
            logger.warning(f"Condition not monitored: {e}")

    seed = None
    if config.initial_kind == 'seed':
        if _condition_refuses_seed(config, report):
            return EXIT_CONDITION_FAILS
        seed = _seed_initial(config, surface, weight, report)
        u0 = seed.u0
    else:
        u0 = config.build_initial(surface)

    snapshot_dir = out / 'snapshots'

    def save_snapshot(state):
        write_field(snapshot_dir / f"u_t{state.t:.6f}.kwf", state.u)

    c0 = report.c0 if report is not None and np.isclose(flow_config.rho, 8.0 * np.pi) else None
    result = flow.run(surface, weight, u0, flow_config, c0=c0,
                      snapshot_sink=save_snapshot if flow_config.snapshot_interval else None)

    out.mkdir(parents=True, exist_ok=True)
    result.series_frame().to_csv(out / 'series.csv', index=False, float_format='%.17g')
    write_field(out / 'u_final.kwf', result.final.u)
    summary = {
        'termination': result.termination.value,
        'message': result.message,
        't': result.final.t,
        'steps': result.final.step_index,
        'final': result.series[-1].as_dict(),
        'monotone': result.is_monotone(),
        'log_weighted_mass_bound': result.log_weighted_mass_bound,
        'C0': report.c0 if report is not None else None,
        'samples_below_C0': result.samples_below_c0,
        'condition': report.as_dict() if report is not None else None,
        'seed': seed.as_dict() if seed is not None else None,
        'blowup': result.blowup.as_dict() if result.blowup is not None else None,
        'config': config.raw,
    }
    write_json(out / 'summary.json', summary)
    logger.info(f"Run artifacts written to {out}")
    return TERMINATION_EXIT_CODES[result.termination]


def cmd_green(config: RunConfig, pole=None) -> int:
    """Green data at pole (default green.pole) as green.json, optionally with green.kwf."""
    surface, _ = _build_problem(config)
    pole = tuple(int(p) for p in (pole if pole is not None else config.raw['green']['pole']))
    data = green.compute_green_data(surface, pole)
    payload = data.as_dict()
    write_json(config.output_dir / 'green.json', payload)
    if config.raw['green']['dump_field']:
        write_field(config.output_dir / 'green.kwf', data.G)
    _emit(payload)
    return EXIT_OK


def cmd_check(config: RunConfig) -> int:
    surface, weight = _build_problem(config)
    report = green.check_condition(surface, weight, stride=config.raw['green']['stride'])
    write_json(config.output_dir / 'check.json', report.as_dict())
    _emit(report.as_dict())
    return EXIT_OK if report.satisfied else EXIT_CONDITION_FAILS


def cmd_stationary(config: RunConfig) -> int:
    """
    Newton solve from the configured initial datum. Exit 0 when converged,
    3 when the iteration budget ran out, 1 on a linear-solver failure, 4 when
    seeded data is requested where the condition fails.
    """
    surface, weight = _build_problem(config)
    if config.initial_kind == 'seed':
        report = green.check_condition(surface, weight, stride=config.raw['green']['stride'])
        if _condition_refuses_seed(config, report):
            return EXIT_CONDITION_FAILS
        u_init = _seed_initial(config, surface, weight, report).u0
    else:
        u_init = config.build_initial(surface)

    params = config.raw['stationary']
    result = stationary.newton_solve(surface, weight, config.stationary_rho, u_init,
                                     tol=params['tol'], max_iter=params['max_iter'])
    payload = result.as_dict()
    write_json(config.output_dir / 'newton.json', payload)
    write_field(config.output_dir / 'u_star.kwf', result.u)
    _emit(payload)
    if result.converged:
        return EXIT_OK
    return EXIT_ERROR if result.linear_failure else EXIT_BUDGET


def cmd_seed(config: RunConfig) -> int:
    """Subcritical datum as seed.json and u0.kwf; exit 4 when the condition fails at p0."""
    surface, weight = _build_problem(config)
    report = green.check_condition(surface, weight, stride=config.raw['green']['stride'])
    if _condition_refuses_seed(config, report):
        _emit({'condition': report.as_dict()})
        return EXIT_CONDITION_FAILS

    try:
        seed = _seed_initial(config, surface, weight, report)
    except SubcriticalConstructionError as e:
        payload = {'error': str(e), 'scan': e.scan, 'C0': report.c0}
        write_json(config.output_dir / 'seed.json', payload)
        _emit(payload)
        return EXIT_ERROR

    payload = seed.as_dict()
    payload['p0'] = list(report.p0)
    write_json(config.output_dir / 'seed.json', payload)
    write_field(config.output_dir / 'u0.kwf', seed.u0)
    _emit(payload)
    return EXIT_OK

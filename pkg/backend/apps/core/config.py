"""
Run configuration: a nested YAML mapping merged over DEFAULTS, adjusted by
dotted `section.key=value` overrides and validated against RUN_CONFIG_SCHEMA.

    grid:    {n}
    surface: {phi, params, file}
    weight:  {h, params, file}
    initial: {u0, params, file}
    flow:    {rho, scheme, dt_init, t_max, step_max, residual_tol, sample_every,
              snapshot_interval, monitor_condition, blowup_max_u,
              blowup_local_mass, blowup_radius}
    green:   {stride, pole, dump_field}
    stationary: {rho, tol, max_iter}
    seed:    {eps_min, eps_max, eps_count, delta}
    output:  {dir}
    random_seed
"""

import copy
import logging
import re
from dataclasses import dataclass
from pathlib import Path

import jsonschema
import numpy as np
import yaml

from apps.flow.models import FlowConfig
from apps.functionals.models import Weight
from apps.surface import services as geometry
from apps.surface.fieldio import read_field
from apps.surface.models import Grid, ScalarField, Surface
from meanfield_lab import settings

from .exceptions import ConfigurationError

logger = logging.getLogger(__name__)

DEFAULTS = {
    'grid': {'n': settings.DEFAULT_N},
    'surface': {'phi': 'flat', 'params': {}, 'file': None},
    'weight': {'h': 'one_plus_half_cos', 'params': {}, 'file': None},
    'initial': {'u0': 'zero', 'params': {}, 'file': None},
    'flow': {
        'rho': '8pi',
        'scheme': 'imex',
        'dt_init': 1e-3,
        't_max': 10.0,
        'step_max': 200000,
        'residual_tol': 1e-6,
        'sample_every': 10,
        'snapshot_interval': None,
        'monitor_condition': True,
        'blowup_max_u': 12.0,
        'blowup_local_mass': '7pi',
        'blowup_radius': 0.1,
    },
    'green': {'stride': 4, 'pole': [0, 0], 'dump_field': False},
    'stationary': {'rho': None, 'tol': 1e-10, 'max_iter': 50},
    'seed': {'eps_min': 1e-3, 'eps_max': 1e-1, 'eps_count': 41, 'delta': 0.1},
    'output': {'dir': str(settings.OUTPUT_DIR)},
    'random_seed': 0,
}

_RHO = {'anyOf': [
    {'type': 'number', 'exclusiveMinimum': 0},
    {'type': 'string', 'pattern': r'^\s*[0-9.eE+-]*\s*\*?\s*pi\s*$'},
]}
_PARAMS = {'type': 'object', 'additionalProperties': {'type': ['number', 'integer', 'string', 'boolean']}}
_FILE = {'type': ['string', 'null']}

RUN_CONFIG_SCHEMA = {
    'type': 'object',
    'additionalProperties': False,
    'properties': {
        'grid': {
            'type': 'object',
            'additionalProperties': False,
            'properties': {'n': {'type': 'integer', 'minimum': 16, 'maximum': 4096}},
        },
        'surface': {
            'type': 'object',
            'additionalProperties': False,
            'properties': {
                'phi': {'enum': ['flat', 'cosine', 'wave', 'random_smooth', 'file']},
                'params': _PARAMS,
                'file': _FILE,
            },
        },
        'weight': {
            'type': 'object',
            'additionalProperties': False,
            'properties': {
                'h': {'enum': ['const', 'one_plus_half_cos', 'near_vanishing', 'vanishing_patch', 'file']},
                'params': _PARAMS,
                'file': _FILE,
            },
        },
        'initial': {
            'type': 'object',
            'additionalProperties': False,
            'properties': {
                'u0': {'enum': ['zero', 'cosine', 'seed', 'file']},
                'params': _PARAMS,
                'file': _FILE,
            },
        },
        'flow': {
            'type': 'object',
            'additionalProperties': False,
            'properties': {
                'rho': _RHO,
                'scheme': {'enum': ['imex', 'explicit']},
                'dt_init': {'type': 'number', 'exclusiveMinimum': 0},
                't_max': {'type': 'number', 'minimum': 0},
                'step_max': {'type': 'integer', 'minimum': 0},
                'residual_tol': {'type': 'number', 'exclusiveMinimum': 0},
                'sample_every': {'type': 'integer', 'minimum': 1},
                'snapshot_interval': {'type': ['number', 'null'], 'exclusiveMinimum': 0},
                'monitor_condition': {'type': 'boolean'},
                'blowup_max_u': {'type': 'number'},
                'blowup_local_mass': _RHO,
                'blowup_radius': {'type': 'number', 'exclusiveMinimum': 0, 'exclusiveMaximum': 0.5},
            },
        },
        'green': {
            'type': 'object',
            'additionalProperties': False,
            'properties': {
                'stride': {'type': 'integer', 'minimum': 1},
                'pole': {'type': 'array', 'items': {'type': 'integer'}, 'minItems': 2, 'maxItems': 2},
                'dump_field': {'type': 'boolean'},
            },
        },
        'stationary': {
            'type': 'object',
            'additionalProperties': False,
            'properties': {
                'rho': {'anyOf': [_RHO, {'type': 'null'}]},
                'tol': {'type': 'number', 'exclusiveMinimum': 0},
                'max_iter': {'type': 'integer', 'minimum': 0},
            },
        },
        'seed': {
            'type': 'object',
            'additionalProperties': False,
            'properties': {
                'eps_min': {'type': 'number', 'exclusiveMinimum': 0},
                'eps_max': {'type': 'number', 'exclusiveMinimum': 0},
                'eps_count': {'type': 'integer', 'minimum': 1},
                'delta': {'type': 'number', 'exclusiveMinimum': 0, 'maximum': 0.2},
            },
        },
        'output': {
            'type': 'object',
            'additionalProperties': False,
            'properties': {'dir': {'type': 'string'}},
        },
        'random_seed': {'type': 'integer', 'minimum': 0},
    },
}

_INTEGER_KEYS = (
    ('grid', 'n'), ('flow', 'step_max'), ('flow', 'sample_every'),
    ('green', 'stride'), ('stationary', 'max_iter'), ('seed', 'eps_count'),
)

_NUMBER = re.compile(r'^[+-]?(\d+\.?\d*|\.\d+)([eE][+-]?\d+)?$')
_PI_MULTIPLE = re.compile(r'^([0-9.eE+-]*)\s*\*?\s*pi$')


def parse_rho(value) -> float:
    """Accept 25.13, '8pi', '8*pi' or 'pi'."""
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return float(value)
    match = _PI_MULTIPLE.match(str(value).strip())
    if not match:
        raise ConfigurationError(f"Cannot read rho from {value!r}")
    factor = match.group(1)
    try:
        return (float(factor) if factor else 1.0) * np.pi
    except ValueError:
        raise ConfigurationError(f"Cannot read rho from {value!r}")


def _parse_override_value(raw: str):
    try:
        return _coerce_numbers(yaml.safe_load(raw))
    except yaml.YAMLError as e:
        raise ConfigurationError(f"Cannot read override value {raw!r}: {e}")


def apply_overrides(payload: dict, overrides) -> dict:
    """Apply `section.key=value` overrides in place."""
    for item in overrides or ():
        key, sep, value = item.partition('=')
        parts = [segment for segment in key.strip().split('.') if segment]
        if not sep or not parts:
            raise ConfigurationError(f"Invalid override {item!r}; expected section.key=value")
        target = payload
        for segment in parts[:-1]:
            if not isinstance(target.get(segment), dict):
                target[segment] = {}
            target = target[segment]
        target[parts[-1]] = _parse_override_value(value)
    return payload


def _coerce_numbers(node):
    """YAML 1.1 reads '1e-3' as a string; turn numeric-looking strings into floats."""
    if isinstance(node, dict):
        return {key: _coerce_numbers(value) for key, value in node.items()}
    if isinstance(node, list):
        return [_coerce_numbers(value) for value in node]
    if isinstance(node, str) and _NUMBER.match(node.strip()):
        return float(node)
    return node


def _merge(base: dict, update: dict) -> dict:
    merged = copy.deepcopy(base)
    for key, value in update.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _merge(merged[key], value)
        else:
            merged[key] = value
    return merged


@dataclass(frozen=True)
class RunConfig:
    """Resolved, validated run configuration; raw is embedded in every summary."""
    raw: dict
    source: str = None

    @property
    def n(self) -> int:
        return int(self.raw['grid']['n'])

    @property
    def rho(self) -> float:
        return parse_rho(self.raw['flow']['rho'])

    @property
    def stationary_rho(self) -> float:
        value = self.raw['stationary']['rho']
        return self.rho if value is None else parse_rho(value)

    @property
    def output_dir(self) -> Path:
        return Path(self.raw['output']['dir'])

    @property
    def random_seed(self) -> int:
        return int(self.raw['random_seed'])

    @property
    def initial_kind(self) -> str:
        return self.raw['initial']['u0']

    def eps_range(self) -> np.ndarray:
        seed = self.raw['seed']
        return np.logspace(np.log10(seed['eps_min']), np.log10(seed['eps_max']), int(seed['eps_count']))

    def flow_config(self) -> FlowConfig:
        flow = self.raw['flow']
        return FlowConfig(
            rho=self.rho,
            scheme=flow['scheme'],
            dt_init=float(flow['dt_init']),
            t_max=float(flow['t_max']),
            step_max=int(flow['step_max']),
            residual_tol=float(flow['residual_tol']),
            sample_every=int(flow['sample_every']),
            snapshot_interval=flow['snapshot_interval'],
            blowup_max_u=float(flow['blowup_max_u']),
            blowup_local_mass=parse_rho(flow['blowup_local_mass']),
            blowup_radius=float(flow['blowup_radius']),
        )

    def build_surface(self) -> Surface:
        spec = self.raw['surface']
        grid = Grid(self.n)
        if spec['phi'] == 'file':
            phi = _load_on_grid(spec['file'], grid)
        else:
            params = dict(spec['params'])
            params.setdefault('seed', self.random_seed)
            phi = _call_builtin(PHI_BUILTINS[spec['phi']], grid, params)
        return geometry.make_surface(grid, phi)

    def build_weight(self, surface: Surface) -> Weight:
        spec = self.raw['weight']
        if spec['h'] == 'file':
            h = _load_on_grid(spec['file'], surface.grid)
        else:
            h = _call_builtin(WEIGHT_BUILTINS[spec['h']], surface.grid, spec['params'])
        return Weight.from_field(h)

    def build_initial(self, surface: Surface) -> ScalarField:
        """Initial datum for the zero, cosine and file kinds; seed is built by the commands."""
        spec = self.raw['initial']
        if spec['u0'] == 'file':
            return _load_on_grid(spec['file'], surface.grid)
        if spec['u0'] == 'seed':
            raise ConfigurationError("Seeded initial data needs the Green geometry; "
                                     "build it with construct_subcritical_data")
        return _call_builtin(INITIAL_BUILTINS[spec['u0']], surface.grid, spec['params'])


def _call_builtin(builder, grid: Grid, params: dict) -> ScalarField:
    try:
        return builder(grid, **params)
    except TypeError as e:
        raise ConfigurationError(f"Bad parameters for builtin {builder.__name__.lstrip('_')}: {e}")


def _load_on_grid(path, grid: Grid) -> ScalarField:
    field = read_field(path)
    if field.grid != grid:
        raise ConfigurationError(f"{path} holds an n={field.grid.n} field, configuration asks for n={grid.n}")
    return field


TWO_PI = 2.0 * np.pi


def _phi_flat(grid, seed=0):
    return ScalarField.constant(grid, 0.0)


def _phi_cosine(grid, amplitude=0.2, seed=0):
    return ScalarField.from_function(grid, lambda x1, x2: amplitude * np.cos(TWO_PI * x1))


def _phi_wave(grid, amplitude=0.2, seed=0):
    return ScalarField.from_function(grid, lambda x1, x2: amplitude * np.sin(TWO_PI * x2))


def random_smooth(grid: Grid, amplitude: float = 0.3, max_mode: int = 3, seed: int = 0) -> ScalarField:
    """Random trigonometric polynomial of degree max_mode scaled to sup norm amplitude."""
    rng = np.random.default_rng(seed)
    x1, x2 = grid.coordinates
    values = np.zeros(grid.shape)
    modes = range(-int(max_mode), int(max_mode) + 1)
    for k1 in modes:
        for k2 in modes:
            if k1 == 0 and k2 == 0:
                continue
            a, b = rng.normal(size=2) / (1.0 + k1 * k1 + k2 * k2)
            phase = TWO_PI * (k1 * x1 + k2 * x2)
            values += a * np.cos(phase) + b * np.sin(phase)
    peak = np.abs(values).max()
    return ScalarField(grid, amplitude * values / peak if peak > 0 else values)


def _h_const(grid, value=1.0):
    return ScalarField.constant(grid, value)


def _h_one_plus_half_cos(grid):
    return ScalarField.from_function(grid, lambda x1, x2: 1.0 + 0.5 * np.cos(TWO_PI * x1))


def _h_near_vanishing(grid):
    return ScalarField.from_function(grid, lambda x1, x2: 1.0 + 0.999 * np.cos(TWO_PI * x1))


def _h_vanishing_patch(grid):
    """exp(1 - 1/sin 2 pi x1) on 0 < x1 < 1/2, zero on the other half-torus."""
    def bump(x1, x2):
        s = np.sin(TWO_PI * x1)
        with np.errstate(divide='ignore', over='ignore'):
            return np.where(s > 0.0, np.exp(1.0 - 1.0 / np.where(s > 0.0, s, 1.0)), 0.0)

    return ScalarField.from_function(grid, bump)


def _u0_zero(grid):
    return ScalarField.constant(grid, 0.0)


def _u0_cosine(grid, amplitude=1.0):
    return ScalarField.from_function(grid, lambda x1, x2: amplitude * np.cos(TWO_PI * x1) * np.cos(TWO_PI * x2))


PHI_BUILTINS = {
    'flat': _phi_flat,
    'cosine': _phi_cosine,
    'wave': _phi_wave,
    'random_smooth': random_smooth,
}

WEIGHT_BUILTINS = {
    'const': _h_const,
    'one_plus_half_cos': _h_one_plus_half_cos,
    'near_vanishing': _h_near_vanishing,
    'vanishing_patch': _h_vanishing_patch,
}

INITIAL_BUILTINS = {
    'zero': _u0_zero,
    'cosine': _u0_cosine,
}


def _check_files(raw: dict):
    for section, key in (('surface', 'phi'), ('weight', 'h'), ('initial', 'u0')):
        spec = raw[section]
        if spec[key] != 'file':
            continue
        if not spec.get('file'):
            raise ConfigurationError(f"{section}.{key} is 'file' but {section}.file is not set")
        if not Path(spec['file']).is_file():
            raise ConfigurationError(f"{section}.file does not exist: {spec['file']}")


def resolve_config(payload: dict = None, overrides=None, source: str = None) -> RunConfig:
    """Merge payload over DEFAULTS, apply overrides, validate and return the RunConfig."""
    raw = _merge(DEFAULTS, _coerce_numbers(payload or {}))
    apply_overrides(raw, overrides)
    try:
        jsonschema.validate(raw, RUN_CONFIG_SCHEMA)
    except jsonschema.ValidationError as e:
        location = '.'.join(str(part) for part in e.absolute_path) or '<root>'
        raise ConfigurationError(f"Invalid configuration at {location}: {e.message}")

    for section, key in _INTEGER_KEYS:
        raw[section][key] = int(raw[section][key])
    raw['random_seed'] = int(raw['random_seed'])
    n = raw['grid']['n']
    if n & (n - 1):
        raise ConfigurationError(f"grid.n must be a power of two, got {n}")
    if raw['seed']['eps_min'] > raw['seed']['eps_max']:
        raise ConfigurationError("seed.eps_min exceeds seed.eps_max")
    parse_rho(raw['flow']['rho'])
    if raw['stationary']['rho'] is not None:
        parse_rho(raw['stationary']['rho'])
    if n % raw['green']['stride']:
        raise ConfigurationError(f"green.stride must divide grid.n = {n}")
    _check_files(raw)
    return RunConfig(raw=raw, source=source)


def load_config(path=None, overrides=None) -> RunConfig:
    """Read a YAML run configuration; path None gives the defaults."""
    payload = {}
    if path is not None:
        path = Path(path)
        try:
            with path.open('r', encoding='utf-8') as handle:
                payload = yaml.safe_load(handle) or {}
        except OSError as e:
            raise ConfigurationError(f"Cannot read configuration {path}: {e}")
        except yaml.YAMLError as e:
            raise ConfigurationError(f"Malformed YAML in {path}: {e}")
        if not isinstance(payload, dict):
            raise ConfigurationError(f"{path} must hold a mapping at the top level")
    config = resolve_config(payload, overrides, source=str(path) if path else None)
    logger.debug(f"Resolved configuration from {path or 'defaults'}")
    return config

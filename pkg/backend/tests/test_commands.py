"""Subcommands end to end through manage.main."""
import json

import numpy as np
import pandas as pd
import pytest

from apps.core import verification
from apps.core.verification import CHECKS, FULL_ONLY, LEVELS, CheckResult, format_table, run_suite
from apps.functionals.models import DIAGNOSTIC_COLUMNS
from apps.surface.fieldio import read_field, write_field
from manage import main

from .factories import TWO_PI, flat_surface


def _invoke(tmp_path, command, *overrides):
    argv = [command, '-o', str(tmp_path)]
    for item in overrides:
        argv += ['--set', item]
    return main(argv)


@pytest.fixture
def peaked_weight(tmp_path):
    """h = exp(5 cos 2 pi x1): Delta ln h at the maximum is far below -8 pi."""
    surface = flat_surface(64)
    h = surface.make_field(np.exp(5.0 * np.cos(TWO_PI * surface.grid.coordinates[0])))
    return write_field(tmp_path / 'peaked.kwf', h)


class TestRun:
    def test_constant_solution_converges(self, tmp_path):
        code = _invoke(tmp_path, 'run', 'grid.n=32', 'weight.h=const', 'flow.monitor_condition=false')
        assert code == 0
        summary = json.loads((tmp_path / 'summary.json').read_text())
        assert summary['termination'] == 'Converged'
        assert summary['steps'] == 0
        assert summary['config']['grid']['n'] == 32
        assert summary['condition'] is None
        assert read_field(tmp_path / 'u_final.kwf').grid.n == 32

    def test_exhausted_budget_exits_three(self, tmp_path):
        code = _invoke(tmp_path, 'run', 'grid.n=32', 'initial.u0=cosine', 'initial.params.amplitude=0.1',
                       'flow.t_max=0', 'flow.monitor_condition=false')
        assert code == 3
        assert json.loads((tmp_path / 'summary.json').read_text())['termination'] == 'BudgetExhausted'

    def test_series_and_snapshots(self, tmp_path):
        code = _invoke(tmp_path, 'run', 'grid.n=32', 'initial.u0=cosine', 'initial.params.amplitude=0.1',
                       'flow.t_max=1e-3', 'flow.sample_every=1', 'flow.snapshot_interval=5e-4',
                       'flow.monitor_condition=false')
        assert code == 3
        series = pd.read_csv(tmp_path / 'series.csv')
        assert list(series.columns) == list(DIAGNOSTIC_COLUMNS)
        assert series['t'].iloc[0] == 0.0
        assert series['J'].is_monotonic_decreasing
        snapshots = sorted((tmp_path / 'snapshots').glob('u_t*.kwf'))
        assert snapshots[0].name == 'u_t0.000000.kwf'
        assert len(snapshots) >= 2

    def test_monitored_run_reports_the_lower_bound(self, tmp_path):
        code = _invoke(tmp_path, 'run', 'grid.n=64', 'green.stride=16', 'weight.h=const')
        assert code == 0
        summary = json.loads((tmp_path / 'summary.json').read_text())
        assert summary['condition']['satisfied'] is True
        assert summary['C0'] == summary['condition']['C0']
        assert summary['samples_below_C0'] == 1


def test_green_writes_the_expansion(tmp_path):
    code = _invoke(tmp_path, 'green', 'grid.n=64', 'green.dump_field=true', 'green.pole=[5, 9]')
    assert code == 0
    payload = json.loads((tmp_path / 'green.json').read_text())
    assert payload['pole'] == [5, 9]
    assert abs(payload['b'][0]) <= 1e-3 and abs(payload['b'][1]) <= 1e-3
    assert (tmp_path / 'green.kwf').is_file()


def test_green_pole_flag(tmp_path):
    assert main(['green', '-o', str(tmp_path), '--set', 'grid.n=64', '--pole', '7', '3']) == 0
    assert json.loads((tmp_path / 'green.json').read_text())['pole'] == [7, 3]


def test_green_on_a_coarse_grid_fails(tmp_path):
    assert _invoke(tmp_path, 'green', 'grid.n=32') == 1


class TestCheck:
    def test_constant_weight_is_satisfied(self, tmp_path):
        assert _invoke(tmp_path, 'check', 'grid.n=64', 'green.stride=16', 'weight.h=const') == 0
        report = json.loads((tmp_path / 'check.json').read_text())
        assert report['simplified'] == pytest.approx(8.0 * np.pi)
        assert report['implication_holds'] is True

    def test_peaked_weight_fails(self, tmp_path, peaked_weight):
        code = _invoke(tmp_path, 'check', 'grid.n=64', 'green.stride=16', 'weight.h=file',
                       f'weight.file={peaked_weight}')
        assert code == 4
        report = json.loads((tmp_path / 'check.json').read_text())
        assert report['satisfied'] is False
        assert report['simplified'] < 0.0

    def test_seed_refuses_when_the_condition_fails(self, tmp_path, peaked_weight):
        code = _invoke(tmp_path, 'seed', 'grid.n=64', 'green.stride=16', 'weight.h=file',
                       f'weight.file={peaked_weight}')
        assert code == 4
        assert not (tmp_path / 'u0.kwf').exists()

    @pytest.mark.parametrize('command, artifact', [('run', 'summary.json'), ('stationary', 'u_star.kwf')])
    def test_seeded_commands_refuse_when_the_condition_fails(self, tmp_path, peaked_weight, command, artifact):
        code = _invoke(tmp_path, command, 'grid.n=64', 'green.stride=16', 'weight.h=file',
                       f'weight.file={peaked_weight}', 'initial.u0=seed')
        assert code == 4
        assert json.loads((tmp_path / 'check.json').read_text())['satisfied'] is False
        assert not (tmp_path / artifact).exists()


class TestStationary:
    def test_subcritical_solve(self, tmp_path):
        assert _invoke(tmp_path, 'stationary', 'grid.n=32', 'stationary.rho=4pi') == 0
        payload = json.loads((tmp_path / 'newton.json').read_text())
        assert payload['converged'] is True
        assert payload['residual'] < 1e-10
        assert (tmp_path / 'u_star.kwf').is_file()

    def test_iteration_budget(self, tmp_path):
        assert _invoke(tmp_path, 'stationary', 'grid.n=32', 'stationary.rho=4pi', 'stationary.max_iter=0') == 3


class TestErrors:
    def test_missing_configuration_file(self, tmp_path):
        assert main(['run', '--config', str(tmp_path / 'absent.yaml')]) == 1

    def test_invalid_override(self, tmp_path, capsys):
        assert _invoke(tmp_path, 'run', 'flow.scheme=leapfrog') == 1
        assert 'error:' in capsys.readouterr().err

    def test_unknown_command(self):
        with pytest.raises(SystemExit):
            main(['integrate'])


class TestVerify:
    def test_every_check_is_registered_once(self):
        names = [name for name, _ in CHECKS]
        assert len(names) == len(set(names))
        assert {'gauss-bonnet', 'mass conservation', 'green oracle', 'quantization'} <= set(names)
        assert set(LEVELS) == {'quick', 'full'}

    def test_critical_convergence_runs_only_at_the_full_level(self, monkeypatch):
        assert FULL_ONLY == {'critical convergence'}

        def cheap(params):
            return 0.0, 1.0

        monkeypatch.setattr(verification, 'CHECKS', [('gauss-bonnet', cheap), ('critical convergence', cheap)])
        assert [r.name for r in run_suite('quick')] == ['gauss-bonnet']
        assert [r.name for r in run_suite('full')] == ['gauss-bonnet', 'critical convergence']

    def test_table_lists_each_check(self):
        results = [
            CheckResult(name='gauss-bonnet', passed=True, value=1e-12, tolerance=1e-8, seconds=0.2),
            CheckResult(name='green oracle', passed=False, value=2e-2, tolerance=1e-2, seconds=1.5,
                        detail='off by 2e-2'),
        ]
        lines = format_table(results).splitlines()
        assert len(lines) == 3
        assert lines[1].startswith('gauss-bonnet') and 'PASS' in lines[1]
        assert 'FAIL' in lines[2] and lines[2].endswith('off by 2e-2')

    @pytest.mark.slow
    def test_quick_suite_passes(self, capsys):
        assert main(['verify', 'quick', '--json']) == 0
        payload = json.loads(capsys.readouterr().out)
        assert payload['level'] == 'quick'
        assert all(check['passed'] for check in payload['checks'])

#!/usr/bin/env python
"""Command-line utility for the mean-field flow laboratory."""
import argparse
import logging
import sys

EPILOG = """
exit codes: 0 converged / satisfied / all checks pass, 1 error or numerical
failure, 2 blow-up suspected, 3 budget exhausted, 4 condition not satisfied.

Configuration keys and defaults (override any of them with --set section.key=value):
  grid.n=128  surface.phi=flat  weight.h=one_plus_half_cos  initial.u0=zero
  flow.rho=8pi  flow.scheme=imex  flow.dt_init=1e-3  flow.t_max=10  flow.step_max=200000
  flow.residual_tol=1e-6  flow.sample_every=10  flow.snapshot_interval=null
  flow.monitor_condition=true  green.stride=4  green.pole=[0,0]  green.dump_field=false
  stationary.rho=null (flow.rho)  stationary.tol=1e-10  stationary.max_iter=50
  seed.eps_min=1e-3  seed.eps_max=1e-1  seed.eps_count=41  seed.delta=0.1
  output.dir=runs  random_seed=0
"""


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog='manage.py',
        description='Mean-field flow laboratory for the Kazdan-Warner equation on flat tori',
        epilog=EPILOG,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--config', '-c', help='YAML run configuration (defaults when omitted)')
    common.add_argument('--set', dest='overrides', action='append', default=[], metavar='KEY=VALUE',
                        help='override a configuration value, e.g. --set flow.rho=4pi (repeatable)')
    common.add_argument('--output', '-o', help='output directory (same as --set output.dir=...)')

    commands = parser.add_subparsers(dest='command', required=True)
    commands.add_parser('run', parents=[common], help='integrate the mean-field flow')
    green = commands.add_parser('green', parents=[common], help='Green function and regular part at a pole')
    green.add_argument('--pole', type=int, nargs=2, metavar=('I', 'J'), help='pole grid node')
    commands.add_parser('check', parents=[common], help='evaluate the convergence condition at p0')
    commands.add_parser('stationary', parents=[common], help='solve the stationary equation by Newton iteration')
    commands.add_parser('seed', parents=[common], help='construct initial data with J below C0')
    verify = commands.add_parser('verify', help='run the invariant suite')
    verify.add_argument('level', nargs='?', default='quick', choices=['quick', 'full'])
    verify.add_argument('--json', action='store_true', help='machine-readable output')
    return parser


def main(argv=None) -> int:
    """Dispatch a subcommand and translate laboratory errors into exit code 1."""
    from meanfield_lab.settings import configure_logging

    configure_logging()
    logger = logging.getLogger('meanfield_lab')
    args = build_parser().parse_args(argv)

    from apps.core import commands
    from apps.core.config import load_config
    from apps.core.exceptions import LabError
    from apps.core.verification import cmd_verify

    try:
        if args.command == 'verify':
            return cmd_verify(args.level, as_json=args.json)

        overrides = list(args.overrides)
        if args.output:
            overrides.append(f"output.dir={args.output}")
        config = load_config(args.config, overrides)

        if args.command == 'run':
            return commands.cmd_run(config)
        if args.command == 'green':
            return commands.cmd_green(config, args.pole)
        if args.command == 'check':
            return commands.cmd_check(config)
        if args.command == 'stationary':
            return commands.cmd_stationary(config)
        if args.command == 'seed':
            return commands.cmd_seed(config)
    except (LabError, OSError) as e:
        logger.error(f"{args.command} failed: {e}")
        print(f"error: {e}", file=sys.stderr)
        return 1
    return 1


if __name__ == '__main__':
    sys.exit(main())

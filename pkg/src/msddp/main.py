"""Command-line interface: ``msddp run | sweep | generate``."""
import argparse
import json
import logging
import sys
from typing import Dict, List, Optional

from . import config
from .errors import BadParams, MsddpError
from .harness import ALGORITHMS, SWEEP_FAMILIES, experiment_sweep, run, run_bounds, write_atomic
from .instance_io import emit_instance
from .instances import GENERATORS, describe

logger = logging.getLogger(__name__)


def setup_logging(level: Optional[str] = None):
    """Setup logging configuration"""
    handlers = [logging.StreamHandler(sys.stderr)]
    if config.LOG_FILE:
        handlers.append(logging.FileHandler(config.LOG_FILE))
    logging.basicConfig(
        level=getattr(logging, (level or config.LOG_LEVEL).upper(), logging.INFO),
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        handlers=handlers,
        force=True,
    )


def _value(text: str):
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            pass
    if text.lower() in ('true', 'false'):
        return text.lower() == 'true'
    return text


def parse_params(items: Optional[List[str]], multi: bool = False) -> Dict:
    """``KEY=V`` pairs; with ``multi`` the value is a comma separated list."""
    params = {}
    for item in items or []:
        key, sep, raw = item.partition('=')
        if not sep or not key:
            raise BadParams(f"expected KEY=VALUE, got {item!r}")
        values = [_value(v) for v in raw.split(',') if v] if multi else _value(raw)
        params[key] = values
    return params


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog='msddp', description='Dual dynamic programming for multistage '
                                                               'stochastic mixed-integer nonlinear programs')
    parser.add_argument('--log-level', default=None, help='overrides MSDDP_LOG_LEVEL')
    sub = parser.add_subparsers(dest='command', required=True)

    p = sub.add_parser('run', help='solve an instance file')
    p.add_argument('instance', help='instance JSON file')
    p.add_argument('--algorithm', choices=ALGORITHMS, default='nbd')
    p.add_argument('--eps', type=float, default=1e-3)
    p.add_argument('--eps-per-stage', type=float, default=None,
                   help='terminate at T times this value instead of --eps')
    p.add_argument('--seed', type=int, default=None)
    p.add_argument('--max-iters', type=int, default=None)
    p.add_argument('--samples', type=int, default=1, help='sample paths per iteration (ddp-stoch)')
    p.add_argument('--trace', default=None, help='trace CSV output path')
    p.add_argument('--result', default=None, help='result JSON output path')
    p.add_argument('--cuts', default=None, help='cut export JSON output path')
    p.add_argument('--adversarial', action='store_true', default=None,
                   help='farthest-point tie-breaking in the grid oracles')
    p.add_argument('--bounds-only', action='store_true',
                   help='evaluate the complexity bounds for the instance and exit')
    p.add_argument('--threads', type=int, default=None, help='overrides MSDDP_THREADS')

    p = sub.add_parser('sweep', help='run an instance family over a parameter grid')
    p.add_argument('family', choices=sorted(SWEEP_FAMILIES))
    p.add_argument('--grid', action='append', metavar='KEY=V1,V2',
                   help='generator parameter values; repeat for several parameters')
    p.add_argument('--eps', type=float, nargs='+', default=[1e-1])
    p.add_argument('--out', required=True, help='output directory')
    p.add_argument('--algorithm', choices=ALGORITHMS, default=None)
    p.add_argument('--max-iters', type=int, default=None)
    p.add_argument('--threads', type=int, default=None)

    p = sub.add_parser('generate', help='write a generated instance file')
    p.add_argument('family', choices=sorted(GENERATORS))
    p.add_argument('--param', action='append', metavar='KEY=VALUE')
    p.add_argument('-o', '--output', default=None, help='output path (stdout when omitted)')
    return parser


def _run(args) -> int:
    if args.bounds_only:
        report = run_bounds(args.instance, args.eps, args.samples, args.result)
        if args.result is None:
            print(json.dumps(report.to_record(), indent=2))
        return 0
    outcome = run(args.instance, args.algorithm, args.eps, samples=args.samples, seed=args.seed,
                  max_iters=args.max_iters, trace=args.trace, result=args.result, cuts=args.cuts,
                  adversarial=args.adversarial, eps_per_stage=args.eps_per_stage, threads=args.threads)
    if outcome.error and outcome.result is None:
        print(f"error: {outcome.error}", file=sys.stderr)
    elif args.result is None and outcome.document is not None:
        print(json.dumps(outcome.document, indent=2))
    return outcome.exit_code


def _sweep(args) -> int:
    summary = experiment_sweep(args.family, parse_params(args.grid, multi=True), args.eps, args.out,
                               algorithm=args.algorithm, max_iters=args.max_iters, threads=args.threads)
    logger.info(f"Wrote {len(summary)} rows to {args.out}")
    return 0


def _generate(args) -> int:
    text = emit_instance(describe(args.family, **parse_params(args.param)))
    if args.output is None:
        sys.stdout.write(text)
    else:
        write_atomic(args.output, text)
        logger.info(f"Wrote {args.family} instance to {args.output}")
    return 0


COMMANDS = {'run': _run, 'sweep': _sweep, 'generate': _generate}


def main(argv: Optional[List[str]] = None) -> int:
    """Main entry point"""
    args = build_parser().parse_args(argv)
    setup_logging(args.log_level)
    if getattr(args, 'threads', None) is not None and args.threads < 1:
        logger.error("--threads must be at least 1")
        return 1
    try:
        return COMMANDS[args.command](args)
    except MsddpError as e:
        logger.error(f"{args.command} failed: {e}")
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return 1


if __name__ == '__main__':
    sys.exit(main())

import argparse
import logging
import sys
from typing import List, Optional

from config import DEFAULT_CONFIG_PATH, LOG_LEVEL, RunConfig, apply_overrides, load_config
from pipeline import dispatch
from utils.errors import EXIT_INTERNAL, PaymentNetworkError, exit_code_for

logger = logging.getLogger(__name__)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--config', type=str, default=None,
                        help=f"YAML run configuration (default: {DEFAULT_CONFIG_PATH.name} if present)")
    common.add_argument('--seed', type=int, default=None, help='Random seed')
    common.add_argument('--jobs', type=int, default=None, help='Worker processes (default: available cores)')
    common.add_argument('--out', type=str, default=None, help='Output directory')
    common.add_argument('--input', type=str, default=None, help='Payment records CSV')
    common.add_argument('--roster', type=str, default=None, help='Industry roster CSV')
    common.add_argument('--verbose', '-v', action='store_true', help='Debug logging')

    parser = argparse.ArgumentParser(
        prog='paynet',
        description='Nowcast inter-industry payment growth from quarterly payment networks',
    )
    sub = parser.add_subparsers(dest='command', required=True)

    synth = sub.add_parser('synth', parents=[common], help='Generate synthetic payment records')
    synth.add_argument('--sectors', type=int, default=None, help='Number of sectors')

    sub.add_parser('features', parents=[common], help='Write network features and graph exports')

    run = sub.add_parser('run', parents=[common], help='Run the full forecasting experiment')
    run.add_argument('--algorithms', type=str, default=None,
                     help="Comma-separated algorithms, first is the headline (e.g. 'forest,boosted')")

    dm = sub.add_parser('dm', parents=[common], help='Diebold-Mariano tests on saved predictions')
    dm.add_argument('--predictions', type=str, default=None, help='Prediction table (default: <out>/predictions.csv)')
    dm.add_argument('--hac-lag', type=int, default=None, help='Newey-West lag for the variance')

    sub.add_parser('report', parents=[common], help='Re-render reports from saved predictions')

    grid = sub.add_parser('grid', parents=[common], help='Hyperparameter grid over the experiment')
    grid.add_argument('--algorithms', type=str, default=None, help='Comma-separated algorithms')
    return parser


def resolve_config(args: argparse.Namespace) -> RunConfig:
    """Config file (explicit, else the committed default) with CLI flags applied on top"""
    path = args.config
    if path is None and DEFAULT_CONFIG_PATH.exists():
        path = DEFAULT_CONFIG_PATH
    config = load_config(path)
    algorithms = getattr(args, 'algorithms', None)
    return apply_overrides(config, **{
        'seed': args.seed,
        'jobs': args.jobs,
        'paths.output_dir': args.out,
        'paths.input': args.input,
        'paths.roster': args.roster,
        'synth.sectors': getattr(args, 'sectors', None),
        'model.algorithms': [a.strip() for a in algorithms.split(',') if a.strip()] if algorithms else None,
        'evaluation.hac_lag': getattr(args, 'hac_lag', None),
    })


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else LOG_LEVEL,
        format='%(asctime)s %(levelname)s %(name)s: %(message)s',
    )
    try:
        config = resolve_config(args)
        kwargs = {'predictions_path': args.predictions} if args.command == 'dm' else {}
        dispatch(args.command, config, **kwargs)
    except PaymentNetworkError as e:
        logger.error(str(e))
        return exit_code_for(e)
    except Exception as e:
        logger.exception(f"Unexpected error: {str(e)}")
        return EXIT_INTERNAL
    return 0


if __name__ == '__main__':
    sys.exit(main())

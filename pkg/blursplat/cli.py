"""Command line entry point: blursplat synth|run|eval|bench-metrics|render."""
import argparse
import logging
import os
import sys

from .config import RunConfig
from .detector import ScoresFileMetric, builtin_sharpness_metric
from .enums import *
from .errors import BlurSplatError, BlurSplatErrors, BlurSplatStageError
from .lie import SE3Pose
from .pipeline import cmd_bench_metrics, cmd_eval, cmd_render, cmd_run, cmd_synth
from .scene import read_scene

logger = logging.getLogger('blursplat')

EXIT_OK = 0
EXIT_CONFIG_ERROR = 2
EXIT_STAGE_FAILURE = 3


def build_parser():
    parser = argparse.ArgumentParser(prog='blursplat', description='Blur-aware Gaussian splatting SLAM backend')
    parser.add_argument('--config', default=None, help='configuration file layered over the defaults')
    parser.add_argument('--set', dest='overrides', action='append', default=[], metavar='KEY=VALUE',
                        help='override a configuration value, may be repeated')
    parser.add_argument('--seed', type=int, default=None, help='seed for all stochastic initialization')
    parser.add_argument('--verbose', action='store_true', help='log per-iteration losses')
    subparsers = parser.add_subparsers(dest='command')
    subparsers.required = True

    synth = subparsers.add_parser('synth', help='synthesize a blurred benchmark dataset')
    synth.add_argument('out_dir')
    source = synth.add_mutually_exclusive_group(required=True)
    source.add_argument('--reference', action='store_true', help='render frames of the reference plane scene')
    source.add_argument('--source', default=None, help='directory of dense sharp PNG frames')

    run = subparsers.add_parser('run', help='track, map and refine a dataset')
    run.add_argument('dataset_dir')
    run.add_argument('--run-dir', default=None)

    evaluate = subparsers.add_parser('eval', help='compare a run against ground truth')
    evaluate.add_argument('run_dir')
    evaluate.add_argument('gt_dir')

    bench = subparsers.add_parser('bench-metrics', help='rank blur metrics on sharp/blurred pairs')
    bench.add_argument('pairs_dir')
    bench.add_argument('--scores', action='append', default=[], metavar='NAME=FILE',
                       help='import external scores (TSV path<TAB>score), may be repeated')
    bench.add_argument('--scores-polarity', default=Polarity.higher_is_sharper.name,
                       choices=[polarity.name for polarity in Polarity])
    bench.add_argument('--out', default=None, help='TSV output file, default <pairs_dir>/metrics.tsv')

    render = subparsers.add_parser('render', help='render a scene file from a pose')
    render.add_argument('scene_file')
    render.add_argument('--pose', nargs=7, type=float, default=[0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0],
                        metavar=('TX', 'TY', 'TZ', 'QX', 'QY', 'QZ', 'QW'))
    render.add_argument('--out', required=True, help='PNG output file')
    render.add_argument('--depth-out', default=None, help='optional PFM depth output file')
    return parser


def _log_errors(ex):
    errors = ex.errors if isinstance(ex, BlurSplatErrors) else [ex.error]
    for error in errors:
        logger.error('%s object_id=%s field=%s info=%s context=%s', error.get('msg_key'), error.get('object_id'),
                     error.get('field'), error.get('info'), error.get('context'))


def _plugins(args):
    plugins = [builtin_sharpness_metric()]
    for item in args.scores:
        name, _, filename = item.partition('=')
        if not filename:
            name, filename = os.path.splitext(os.path.basename(item))[0], item
        plugins.append(ScoresFileMetric(filename, name=name, polarity=Polarity[args.scores_polarity]))
    return plugins


def run_command(args):
    if args.command == 'run':
        config = RunConfig.load(args.config, dataset_dir=args.dataset_dir, overrides=args.overrides)
        result = cmd_run(config, run_dir=args.run_dir or os.path.join(args.dataset_dir, config['run_dir']),
                         seed=args.seed)
        for line in result.report.summary_lines(config['report_locale']):
            print(line)
        return
    if args.command == 'eval':
        report = cmd_eval(args.run_dir, args.gt_dir)
        for line in report.summary_lines():
            print(line)
        return
    if args.command == 'bench-metrics':
        rows = cmd_bench_metrics(args.pairs_dir, _plugins(args),
                                 args.out or os.path.join(args.pairs_dir, 'metrics.tsv'))
        for row in rows:
            print('{0}\t{1}\t{2}\t{3}\t{4}'.format(row['metric'], row['accuracy'], row['effect_size'],
                                                  row['consistency'], row['flag'] or ''))
        return
    config = RunConfig.load(args.config, overrides=args.overrides, check_paths=False)
    if args.command == 'synth':
        seed = config['seed'] if args.seed is None else args.seed
        cmd_synth(config, args.out_dir, source_dir=None if args.reference else args.source, seed=seed)
    elif args.command == 'render':
        tx, ty, tz, qx, qy, qz, qw = args.pose
        pose = SE3Pose((qw, qx, qy, qz), (tx, ty, tz))
        cmd_render(read_scene(args.scene_file), config.camera(), pose, args.out, args.depth_out)


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format='%(asctime)s %(levelname)s %(name)s: %(message)s')
    try:
        run_command(args)
    except BlurSplatStageError as ex:
        logger.error('stage %s failed', ex.stage.name)
        _log_errors(ex)
        return EXIT_STAGE_FAILURE
    except BlurSplatError as ex:
        _log_errors(ex)
        return EXIT_CONFIG_ERROR
    return EXIT_OK


if __name__ == '__main__':
    sys.exit(main())

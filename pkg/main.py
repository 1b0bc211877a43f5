"""
Capacity Loss Simulator - Command Line Entry Point
Runs the DPC / ZF / BD experiments and writes one CSV per experiment
"""

import argparse
import csv
import dataclasses
import json
import logging
import os
import sys
from datetime import datetime
from typing import List, Optional

from errors import ConfigParseError, ConfigurationError, ExperimentError
from config import (RunSettings, config_violations, load_experiment_file,
                    load_run_settings, parse_config_text)
from sim_harness import Experiment, ResultRow, builtin_experiments, run_experiment

logger = logging.getLogger(__name__)

__version__ = '1.0.0'

CSV_HEADER = ['experiment', 'snr_db', 'metric', 'mean', 'ci95', 'trials', 'seed']
METADATA_FILE = 'run_metadata.json'

EXIT_OK = 0
EXIT_EXPERIMENT_FAILED = 1
EXIT_USAGE = 2
EXIT_IO = 3


@dataclasses.dataclass
class RunManifest:
    experiments: List[str]
    config_path: Optional[str]
    output_dir: str
    seed: Optional[int]
    workers: int
    trials: Optional[int]


def _number(value: float) -> str:
    return f"{value:.9g}"


def format_row(row: ResultRow) -> List[str]:
    return [
        row.experiment,
        _number(row.snr_db),
        row.metric,
        _number(row.mean),
        _number(row.half_width_95),
        str(row.trials),
        str(row.seed),
    ]


def write_csv(path: str, rows: List[ResultRow]):
    with open(path, 'w', newline='', encoding='utf-8') as f:
        writer = csv.writer(f, lineterminator='\n')
        writer.writerow(CSV_HEADER)
        for row in rows:
            writer.writerow(format_row(row))


def resolve_experiments(manifest: RunManifest) -> List[Experiment]:
    """Presets named on the command line plus the experiment file, if given.

    Raises:
        KeyError: an experiment name does not resolve
    """
    presets = {experiment.name: experiment for experiment in builtin_experiments()}
    resolved = []
    for name in manifest.experiments:
        if name not in presets:
            raise KeyError(name)
        resolved.append(presets[name])
    if manifest.config_path:
        resolved.append(load_experiment_file(manifest.config_path))
    if manifest.trials is not None:
        resolved = [dataclasses.replace(e, trials=manifest.trials) for e in resolved]
    return resolved


def cmd_run(manifest: RunManifest) -> int:
    """Run the requested experiments and write their CSVs plus run metadata"""
    try:
        experiments = resolve_experiments(manifest)
    except KeyError as e:
        known = ', '.join(preset.name for preset in builtin_experiments())
        logger.error(f"❌ Unknown experiment {e} (known: {known})")
        return EXIT_USAGE
    except ConfigParseError as e:
        logger.error(f"❌ {manifest.config_path}: {e}")
        return EXIT_USAGE
    except ConfigurationError as e:
        logger.error(f"❌ Invalid experiment: {e}")
        return EXIT_USAGE
    except OSError as e:
        logger.error(f"❌ Cannot read {manifest.config_path}: {e}")
        return EXIT_IO

    if not experiments:
        logger.error("❌ Nothing to run: pass --experiment and/or --config")
        return EXIT_USAGE

    try:
        os.makedirs(manifest.output_dir, exist_ok=True)
    except OSError as e:
        logger.error(f"❌ Cannot create output directory {manifest.output_dir}: {e}")
        return EXIT_IO

    metadata = {
        'version': __version__,
        'timestamp': datetime.now().isoformat(),
        'seed': manifest.seed,
        'workers': manifest.workers,
        'experiments': [],
    }
    for experiment in experiments:
        try:
            rows = run_experiment(experiment, workers=manifest.workers, seed=manifest.seed)
        except ExperimentError as e:
            logger.error(f"❌ {e}")
            return EXIT_EXPERIMENT_FAILED

        path = os.path.join(manifest.output_dir, f"{experiment.name}.csv")
        try:
            write_csv(path, rows)
        except OSError as e:
            logger.error(f"❌ Cannot write {path}: {e}")
            return EXIT_IO
        logger.info(f"📄 Wrote {len(rows)} rows to {path}")
        metadata['experiments'].append({**experiment.to_dict(), 'csv': path})

    metadata_path = os.path.join(manifest.output_dir, METADATA_FILE)
    try:
        with open(metadata_path, 'w', encoding='utf-8') as f:
            json.dump(metadata, f, indent=2)
    except OSError as e:
        logger.error(f"❌ Cannot write {metadata_path}: {e}")
        return EXIT_IO
    return EXIT_OK


def cmd_validate(config_path: str) -> int:
    """Parse an experiment file and report every invariant it violates"""
    try:
        with open(config_path, 'r') as f:
            parsed = parse_config_text(f.read())
    except ConfigParseError as e:
        print(f"{config_path}:{e.line}:{e.column}: {e}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as e:
        print(f"{config_path}: {e}", file=sys.stderr)
        return EXIT_IO

    problems = config_violations(parsed)
    for problem in problems:
        print(f"{config_path}: {problem}", file=sys.stderr)
    if problems:
        return EXIT_EXPERIMENT_FAILED
    print(f"{config_path}: OK")
    return EXIT_OK


def cmd_list_experiments() -> int:
    for experiment in builtin_experiments():
        print(f"{experiment.name}: {experiment.description} ({experiment.trials} trials)")
        for case in experiment.cases:
            config = case.config
            print(f"  {case.label}: M={config.M} L={config.L} N={config.N} "
                  f"kappa={case.kappa_law.describe()} outputs={','.join(case.outputs)}")
    return EXIT_OK


def build_parser(settings: RunSettings) -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog='capacity-loss',
        description='Sum capacity loss of linear precoding (ZF, BD) against DPC in Ricean fading')
    parser.add_argument('--version', action='version', version=f'%(prog)s {__version__}')
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--verbose', action='store_true', help='log at DEBUG level')
    commands = parser.add_subparsers(dest='command', required=True)

    run = commands.add_parser('run', parents=[common], help='run experiments and write CSV results')
    run.add_argument('--experiment', action='append', default=[], metavar='NAME',
                     help='built-in experiment to run (repeatable)')
    run.add_argument('--config', metavar='PATH', help='experiment file in section.key = value form')
    run.add_argument('--seed', type=int, default=settings.seed,
                     help='master seed, overrides system.seed (env SIM_SEED)')
    run.add_argument('--trials', type=int, default=settings.trials,
                     help='Monte Carlo trials per experiment (env SIM_TRIALS)')
    run.add_argument('--workers', type=int, default=settings.workers,
                     help='worker processes (env SIM_WORKERS, default 1)')
    run.add_argument('--out', default=settings.output_dir, metavar='DIR',
                     help='output directory (env SIM_OUTPUT_DIR, default results)')

    validate = commands.add_parser('validate', parents=[common], help='check an experiment file')
    validate.add_argument('--config', required=True, metavar='PATH', help='experiment file to check')

    commands.add_parser('list-experiments', parents=[common], help='list the built-in experiments')
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    settings = load_run_settings()
    parser = build_parser(settings)
    args = parser.parse_args(argv)

    logging.basicConfig(
        level=logging.DEBUG if args.verbose else getattr(logging, settings.log_level, logging.INFO),
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
    )

    if args.command == 'list-experiments':
        return cmd_list_experiments()
    if args.command == 'validate':
        return cmd_validate(args.config)

    if args.seed is not None and not 0 <= args.seed < 2 ** 64:
        parser.error(f"--seed must be an unsigned 64-bit integer, got {args.seed}")
    if args.trials is not None and args.trials < 1:
        parser.error(f"--trials must be >= 1, got {args.trials}")
    if args.workers < 1:
        parser.error(f"--workers must be >= 1, got {args.workers}")

    manifest = RunManifest(
        experiments=args.experiment,
        config_path=args.config,
        output_dir=args.out,
        seed=args.seed,
        workers=args.workers,
        trials=args.trials,
    )
    logger.info(f"🚀 Capacity loss simulator {__version__}")
    logger.info(f"📂 Writing results to {manifest.output_dir}")
    return cmd_run(manifest)


if __name__ == '__main__':
    try:
        sys.exit(main())
    except KeyboardInterrupt:
        logger.info("\n👋 Run stopped by user")
        sys.exit(130)

"""
Main module for DeskBBF - sample-efficient value-based RL at desk scale

This module serves as the entry point for DeskBBF, wiring the trainer,
suite runner, environments and metrics into one command-line interface.
"""

import os
import sys
import json
import logging
import argparse
from typing import Any, Dict, List, Optional, Tuple

from colorama import Fore, Style, init as colorama_init

# Setup logging
logging.basicConfig(
    level=logging.INFO,
    format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
    handlers=[
        logging.StreamHandler(),
        logging.FileHandler('deskbbf.log')
    ]
)
logger = logging.getLogger('deskbbf')

from src.envs.reference import reference_table, write_reference_csv
from src.envs.registry import list_envs, make_env
from src.envs.trajectory import record_trajectory, write_trajectory_csv
from src.formatters.converter import SUPPORTED_FORMATS, FormatConverter, render_table
from src.metrics.report import (
    acceptance_check, build_reports, compare_with_reported, fixture_matrices, write_report,
)
from src.metrics.scores import load_refs, load_score_dir
from src.network.architecture import describe
from src.schedules.schedule import schedule_table
from src.storage.handler import StorageHandler
from src.trainer.config import (
    AgentConfig, ConfigError, dump_key_values, load_config, parse_value, read_key_value_file,
)
from src.trainer.loop import evaluate, load_checkpoint, train
from src.trainer.suite import REFS, load_suite, run_suite
from src.utils.security import SecurityManager

DEFAULT_RUNS_DIR = 'runs'


class DeskBBF:
    """
    Main class for the DeskBBF application.
    """

    def __init__(self, base_dir: str = None):
        """
        Initialize DeskBBF.

        Args:
            base_dir: Directory holding run directories (default: ./runs)
        """
        self.base_dir = base_dir or os.path.join(os.getcwd(), DEFAULT_RUNS_DIR)
        self.storage = StorageHandler(self.base_dir)
        self.security = SecurityManager()
        logger.info(f"Initialized DeskBBF with run directory: {self.base_dir}")

    def train(self, config: AgentConfig, resume: bool = False) -> Dict[str, Any]:
        """
        Train one run.

        Args:
            config: Run configuration
            resume: Continue from the run's checkpoint

        Returns:
            Dictionary with the run name, final score and counters
        """
        record = train(config, self.storage, resume=resume, show_progress=True)
        return {
            'run': config.run_name,
            'run_dir': self.storage.run_dir(config.run_name),
            'final_score': record.final_score(),
            'gradient_steps': record.gradient_steps,
            'resets': len(record.resets),
            'resumed': record.resumed,
        }

    def evaluate_checkpoint(self, checkpoint: str, episodes: Optional[int] = None,
                            seed: int = 0) -> Dict[str, Any]:
        """
        Evaluate the target network stored in a checkpoint.

        Returns:
            Dictionary with the episode returns and their mean
        """
        config, agent, meta = load_checkpoint(checkpoint)
        env = make_env(config.env, config.sticky_prob, seed)
        returns = evaluate(agent.bundle, env, episodes or config.eval_episodes, seed,
                           config.eval_epsilon, config.stack_depth)
        return {
            'run': config.run_name,
            'env_steps': meta['schedule_state']['env_steps'],
            'returns': returns,
            'mean_return': sum(returns) / len(returns) if returns else None,
        }

    def report(self, scores_dir: Optional[str] = None, fixture: Optional[str] = None,
               refs_path: Optional[str] = None, out_path: str = 'report.csv',
               profile_path: Optional[str] = None, compare: Optional[str] = None,
               formats: Optional[List[str]] = None, resamples: int = 2000, seed: int = 0,
               acceptance: Optional[Tuple[str, str]] = None) -> Dict[str, Any]:
        """
        Aggregate run-suite scores or a published fixture.

        Returns:
            Dictionary with report rows, written paths, comparison rows and
            acceptance rows
        """
        for path in (out_path, profile_path):
            if path and not self.security.validate_path(path):
                raise ValueError(f"Refusing to write report output to {path}")
        if fixture:
            matrices = fixture_matrices(fixture)
        elif scores_dir:
            refs = self._resolve_refs(scores_dir, refs_path)
            matrices = load_score_dir(scores_dir, refs)
        else:
            raise ValueError("report needs --scores or --fixture")
        if not matrices:
            return {'rows': [], 'written': {}, 'comparison': [], 'acceptance': []}

        reports = build_reports(matrices, resamples=resamples, seed=seed)
        written = write_report(reports, out_path, profile_path,
                               self.security.validate_formats(formats or ['csv']))
        comparison = compare_with_reported(reports, compare) if compare else []
        checks = []
        if acceptance:
            if fixture:
                raise ValueError("the acceptance check needs run-level scores (--scores)")
            checks = acceptance_check(matrices, *acceptance)
        return {'rows': [r.summary() for r in reports], 'written': written, 'comparison': comparison,
                'acceptance': checks}

    def _resolve_refs(self, scores_dir: str, refs_path: Optional[str]) -> Dict[str, Tuple[float, float]]:
        candidates = [refs_path] if refs_path else [os.path.join(scores_dir, REFS)]
        for path in candidates:
            refs = load_refs(path)
            if refs is not None:
                return refs
        logger.info("No refs file found; measuring reference scores of the built-in games")
        return {name: (scores.random, scores.expert) for name, scores in reference_table(list_envs()).items()}

    def list_runs(self) -> List[Dict[str, Any]]:
        return self.storage.list_runs()

    def delete_run(self, run_name: str) -> bool:
        return self.storage.delete_run(run_name)


def parse_set_arguments(items: List[str]) -> List[Tuple[str, Any]]:
    """Turn repeated `--set key=value` flags into typed override pairs."""
    pairs = []
    for item in items or []:
        if '=' not in item:
            raise ConfigError(item, "expected key=value")
        key, value = item.split('=', 1)
        pairs.append((key.strip(), parse_value(value)))
    return pairs


def config_from_args(args: argparse.Namespace) -> AgentConfig:
    """Defaults or --preset, then --config file, then flags, then --set entries."""
    pairs: List[Tuple[str, Any]] = []
    if getattr(args, 'preset', None):
        pairs.append(('preset', args.preset))
    if getattr(args, 'config', None):
        pairs.extend(read_key_value_file(args.config))
    overrides: List[Tuple[str, Any]] = []
    for flag, key in (('env', 'env'), ('seed', 'seed'), ('rr', 'rr'), ('width_scale', 'arch.width_scale'),
                      ('env_steps', 'total_env_steps'), ('name', 'name')):
        value = getattr(args, flag, None)
        if value is not None:
            overrides.append((key, value))
    overrides.extend(parse_set_arguments(getattr(args, 'set', None)))
    return load_config(overrides=pairs + overrides)


def add_config_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument('--config', help='key=value configuration file')
    parser.add_argument('--preset', help='Start from a named preset')
    parser.add_argument('--env', help=f"Environment ({', '.join(list_envs())})")
    parser.add_argument('--seed', type=int, help='Run seed')
    parser.add_argument('--rr', type=float, help='Replay ratio (gradient steps per env step)')
    parser.add_argument('--width-scale', dest='width_scale', type=int, help='Encoder width multiplier')
    parser.add_argument('--env-steps', dest='env_steps', type=int, help='Environment-step budget')
    parser.add_argument('--name', help='Config name used in run and score identifiers')
    parser.add_argument('--set', action='append', default=[], metavar='KEY=VALUE',
                        help='Override any configuration key (repeatable)')


def success(message: str) -> None:
    print(f"{Fore.GREEN}{message}{Style.RESET_ALL}")


def failure(message: str) -> None:
    print(f"{Fore.RED}{message}{Style.RESET_ALL}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description='DeskBBF - sample-efficient value-based RL at desk scale')
    parser.add_argument('--runs-dir', default=None, help='Directory of run directories (default: ./runs)')

    # Create subparsers for different commands
    subparsers = parser.add_subparsers(dest='command', help='Command to execute')

    train_parser = subparsers.add_parser('train', help='Train one run')
    add_config_arguments(train_parser)
    train_parser.add_argument('--resume', action='store_true', help='Resume from the run checkpoint')

    eval_parser = subparsers.add_parser('eval', help='Evaluate a checkpoint')
    eval_parser.add_argument('--checkpoint', required=True, help='Path to checkpoint.bin')
    eval_parser.add_argument('--episodes', type=int, help='Evaluation episodes (default: from config)')
    eval_parser.add_argument('--seed', type=int, default=0, help='Evaluation seed')

    suite_parser = subparsers.add_parser('suite', help='Run a configs x envs x seeds matrix')
    suite_parser.add_argument('--matrix', required=True, help='Suite key=value file')
    suite_parser.add_argument('--out', required=True, help='Output directory')
    suite_parser.add_argument('--resume', action='store_true', help='Resume unfinished runs, skip finished ones')

    report_parser = subparsers.add_parser('report', help='Aggregate scores into a report')
    source = report_parser.add_mutually_exclusive_group(required=True)
    source.add_argument('--scores', help='Directory searched for score CSVs')
    source.add_argument('--fixture', help='Per-game fixture CSV (game, random, human, methods...)')
    report_parser.add_argument('--refs', help='Reference scores CSV (game, random, human)')
    report_parser.add_argument('--out', default='report.csv', help='Aggregate table CSV path')
    report_parser.add_argument('--profile', help='Performance profile CSV path')
    report_parser.add_argument('--compare', help='Published aggregates CSV to compare against')
    report_parser.add_argument('--formats', nargs='+', default=['csv'], choices=list(SUPPORTED_FORMATS),
                               help='Output formats (default: csv)')
    report_parser.add_argument('--resamples', type=int, default=2000, help='Bootstrap resamples')
    report_parser.add_argument('--seed', type=int, default=0, help='Bootstrap seed')
    report_parser.add_argument('--acceptance', nargs=2, metavar=('CONFIG', 'BASELINE'),
                               help='Check CONFIG reaches 3x the random return and beats BASELINE')

    schedule_parser = subparsers.add_parser('schedule', help='Dump the (k, n, gamma) schedule as CSV')
    add_config_arguments(schedule_parser)
    schedule_parser.add_argument('--steps', type=int, help='Gradient steps since reset (default: anneal length)')
    schedule_parser.add_argument('--stride', type=int, default=1, help='Row stride')
    schedule_parser.add_argument('--out', default='schedule.csv', help='Output CSV path')

    reference_parser = subparsers.add_parser('reference', help='Measure reference scores of built-in games')
    reference_parser.add_argument('--envs', nargs='+', default=list_envs(), choices=list_envs())
    reference_parser.add_argument('--out', default='refs.csv', help='Output CSV path')

    trajectory_parser = subparsers.add_parser('trajectory', help='Record a random-policy trajectory')
    trajectory_parser.add_argument('--env', required=True, choices=list_envs())
    trajectory_parser.add_argument('--seed', type=int, default=0, help='Episode seed')
    trajectory_parser.add_argument('--steps', type=int, default=200, help='Steps to record')
    trajectory_parser.add_argument('--sticky', type=float, default=0.0, help='Sticky-action probability')
    trajectory_parser.add_argument('--out', default='trajectory.csv', help='Output CSV path')

    describe_parser = subparsers.add_parser('describe', help='Print the network parameter table')
    add_config_arguments(describe_parser)
    describe_parser.add_argument('--dump-config', action='store_true', help='Also print the resolved config')

    subparsers.add_parser('runs', help='List run directories')

    delete_parser = subparsers.add_parser('delete', help='Delete a run directory')
    delete_parser.add_argument('run', help='Run name (<env>__<config>__seed<N>)')

    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """
    Main function for command-line interface.
    """
    colorama_init()
    parser = build_parser()
    args = parser.parse_args(argv)
    if not args.command:
        parser.print_help()
        return 1

    app = DeskBBF(args.runs_dir)
    try:
        if args.command == 'train':
            result = app.train(config_from_args(args), resume=args.resume)
            success(f"Run finished: {result['run']} final score {result['final_score']}")
            print(f"Gradient steps: {result['gradient_steps']}, resets: {result['resets']}")
            print(f"Run directory: {result['run_dir']}")
        elif args.command == 'eval':
            result = app.evaluate_checkpoint(args.checkpoint, args.episodes, args.seed)
            success(f"{result['run']} at {result['env_steps']} env steps: mean return {result['mean_return']}")
            print(json.dumps(result['returns']))
        elif args.command == 'suite':
            spec = load_suite(args.matrix)
            result = run_suite(spec, args.out, resume=args.resume,
                               base_dir=os.path.dirname(os.path.abspath(args.matrix)))
            success(f"Suite finished: {len(result['completed'])} of {result['jobs']} jobs")
            print(f"Merged scores: {result['merged_scores']}")
            if result['failures']:
                failure(f"{len(result['failures'])} job(s) failed:")
                for name, error in result['failures'].items():
                    failure(f"- {name}: {error}")
        elif args.command == 'report':
            result = app.report(args.scores, args.fixture, args.refs, args.out, args.profile,
                                args.compare, args.formats, args.resamples, args.seed, args.acceptance)
            if not result['rows']:
                failure("No scores found")
                return 1
            print(render_table(result['rows']))
            for kind, path in result['written'].items():
                print(f"{kind}: {path}")
            if result['comparison']:
                print(render_table(result['comparison']))
                mismatches = [row for row in result['comparison'] if row['match'] is False]
                if mismatches:
                    failure(f"{len(mismatches)} aggregate(s) differ from the published values")
                    return 1
                success("All comparable aggregates match the published values")
            if result['acceptance']:
                print(render_table(result['acceptance']))
                if not all(row['passed'] for row in result['acceptance']):
                    failure("Acceptance check failed")
                    return 1
                success("Acceptance check passed")
        elif args.command == 'schedule':
            config = config_from_args(args)
            steps = args.steps if args.steps is not None else config.schedule.anneal_steps
            rows = schedule_table(config.schedule, steps, args.stride)
            path = FormatConverter(os.path.dirname(args.out) or '.').write_csv(rows, args.out, ['k', 'n', 'gamma'])
            success(f"Schedule written to {path}")
        elif args.command == 'reference':
            path = write_reference_csv(args.out, args.envs)
            success(f"Reference scores written to {path}")
        elif args.command == 'trajectory':
            env = make_env(args.env, args.sticky, args.seed)
            rows = record_trajectory(env, args.seed, args.steps, policy_seed=args.seed)
            path = write_trajectory_csv(rows, args.out)
            success(f"Trajectory of {len(rows)} steps written to {path}")
        elif args.command == 'describe':
            config = config_from_args(args)
            spec = make_env(config.env).spec
            table = describe(config.architecture(spec.channels, spec.height, spec.width, spec.num_actions))
            print(table['text'])
            if args.dump_config:
                print(dump_key_values(config))
        elif args.command == 'runs':
            runs = app.list_runs()
            print(f"Found {len(runs)} runs:")
            for run in runs:
                state = 'complete' if run['completed'] else f"{run['env_steps']} env steps"
                print(f"- {run['run']} ({state}, saved at {run['saved_at']})")
        elif args.command == 'delete':
            if app.delete_run(args.run):
                success(f"Run deleted: {args.run}")
            else:
                failure(f"Failed to delete run: {args.run}")
                return 1
    except (ConfigError, ValueError) as e:
        failure(f"Error: {e}")
        return 2
    return 0


if __name__ == '__main__':
    sys.exit(main())

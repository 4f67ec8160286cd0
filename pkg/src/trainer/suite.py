"""
Suite Runner Module for DeskBBF

Runs the configs x envs x seeds matrix described by a key=value suite file.
Each job is an independent training run in its own run directory; jobs share
nothing mutable and may run in a process pool. Finished scores are merged
into one score matrix file next to the run directories.

Suite file keys:
    envs      comma list of registered games
    seeds     comma list of integers
    configs   comma list of preset names or config file paths
    workers   process count (1 runs jobs in-process)
    write_refs  whether to measure reference scores into refs.csv
    override.<key>  applied to every job after its config
"""

import os
import json
import logging
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple

from tqdm import tqdm

from src.envs.reference import write_reference_csv
from src.formatters.converter import FormatConverter
from src.metrics.scores import SCORE_COLUMNS
from src.storage.handler import SCORES, StorageHandler
from src.trainer.config import (
    PRESETS, AgentConfig, ConfigError, apply_overrides, from_flat_dict, load_config, preset,
    read_key_value_file, to_flat_dict,
)
from src.trainer.loop import train

logger = logging.getLogger('deskbbf.trainer.suite')

MERGED_SCORES = 'suite_scores.csv'
FAILURES = 'failures.json'
REFS = 'refs.csv'
RUNS_DIR = 'runs'


@dataclass
class SuiteSpec:
    """Parsed suite matrix."""

    envs: List[str]
    seeds: List[int]
    configs: List[str]
    overrides: List[Tuple[str, Any]] = field(default_factory=list)
    workers: int = 1
    write_refs: bool = True

    @property
    def size(self) -> int:
        return len(self.envs) * len(self.seeds) * len(self.configs)


def _as_list(value: Any) -> List[Any]:
    if value is None:
        return []
    return list(value) if isinstance(value, (list, tuple)) else [value]


def parse_suite(pairs: List[Tuple[str, Any]], source: str = '<suite>') -> SuiteSpec:
    """
    Build a SuiteSpec from parsed key=value pairs.

    Raises:
        ConfigError: On unknown keys or an empty matrix axis
    """
    values: Dict[str, Any] = {'workers': 1, 'write_refs': True}
    overrides = []
    for key, value in pairs:
        if key.startswith('override.'):
            overrides.append((key[len('override.'):], value))
        elif key in ('envs', 'seeds', 'configs', 'workers', 'write_refs'):
            values[key] = value
        else:
            raise ConfigError(key, f"unknown suite key in {source}")

    for axis in ('envs', 'seeds', 'configs'):
        values[axis] = _as_list(values.get(axis))
        if not values[axis]:
            raise ConfigError(axis, f"suite needs at least one entry in {source}")
    try:
        seeds = [int(s) for s in values['seeds']]
    except (TypeError, ValueError):
        raise ConfigError('seeds', f"expected integers, got {values['seeds']!r}") from None
    workers = int(values['workers'] or 1)
    if workers < 1:
        raise ConfigError('workers', f"must be >= 1, got {workers}")

    return SuiteSpec(envs=[str(e).lower() for e in values['envs']], seeds=seeds,
                     configs=[str(c) for c in values['configs']], overrides=overrides,
                     workers=workers, write_refs=bool(values['write_refs']))


def load_suite(path: str) -> SuiteSpec:
    return parse_suite(read_key_value_file(path), source=path)


def base_config(entry: str, base_dir: str = '.') -> AgentConfig:
    """A preset by name, otherwise a config file (relative to the suite file)."""
    if entry in PRESETS:
        return preset(entry)
    path = entry if os.path.isabs(entry) else os.path.join(base_dir, entry)
    if not os.path.exists(path):
        raise ConfigError('configs', f"'{entry}' is neither a preset nor a config file")
    return load_config(path)


def expand_jobs(spec: SuiteSpec, base_dir: str = '.') -> List[AgentConfig]:
    """One validated AgentConfig per (config, env, seed), config-major."""
    jobs = []
    for entry in spec.configs:
        config = base_config(entry, base_dir)
        for env in spec.envs:
            for seed in spec.seeds:
                jobs.append(apply_overrides(config, [('env', env), ('seed', seed)] + spec.overrides))
    return jobs


def run_job(flat_config: Dict[str, Any], runs_dir: str, resume: bool) -> Dict[str, Any]:
    """
    Train one job. Module-level so process pools can pickle it.

    Returns:
        Summary with run name, final score and gradient steps
    """
    config = from_flat_dict(flat_config)
    record = train(config, StorageHandler(runs_dir), resume=resume)
    return {
        'run': config.run_name,
        'final_score': record.final_score(),
        'gradient_steps': record.gradient_steps,
        'resumed': record.resumed,
    }


def merge_scores(storage: StorageHandler, run_names: List[str], out_path: str) -> str:
    """Concatenate the per-run score files into one matrix CSV."""
    rows = []
    for name in run_names:
        rows.extend(storage.read_rows(name, SCORES))
    return FormatConverter(os.path.dirname(out_path)).write_csv(rows, out_path, columns=SCORE_COLUMNS)


def run_suite(spec: SuiteSpec, out_dir: str, resume: bool = False, base_dir: str = '.',
              show_progress: bool = True) -> Dict[str, Any]:
    """
    Execute every job of the suite.

    Args:
        spec: Parsed suite
        out_dir: Output directory (run directories live under out_dir/runs)
        resume: Resume unfinished runs and skip completed ones
        base_dir: Directory against which relative config paths resolve
        show_progress: Display a tqdm bar over jobs

    Returns:
        Dictionary with completed job summaries, failures and output paths
    """
    jobs = expand_jobs(spec, base_dir)
    runs_dir = os.path.join(out_dir, RUNS_DIR)
    storage = StorageHandler(runs_dir)
    logger.info(f"Suite of {len(jobs)} jobs ({len(spec.configs)} configs x {len(spec.envs)} envs x "
                f"{len(spec.seeds)} seeds) with {spec.workers} worker(s)")

    completed: List[Dict[str, Any]] = []
    failures: Dict[str, str] = {}
    progress = tqdm(total=len(jobs), desc='suite', disable=not show_progress)

    if spec.workers == 1:
        for config in jobs:
            try:
                completed.append(run_job(to_flat_dict(config), runs_dir, resume))
            except Exception as e:
                failures[config.run_name] = f"{type(e).__name__}: {e}"
                logger.warning(f"Job {config.run_name} failed: {e}")
            progress.update(1)
    else:
        with ProcessPoolExecutor(max_workers=spec.workers) as pool:
            futures = {pool.submit(run_job, to_flat_dict(config), runs_dir, resume): config.run_name
                       for config in jobs}
            for future in as_completed(futures):
                name = futures[future]
                try:
                    completed.append(future.result())
                except Exception as e:
                    failures[name] = f"{type(e).__name__}: {e}"
                    logger.warning(f"Job {name} failed: {e}")
                progress.update(1)
    progress.close()

    finished = sorted(summary['run'] for summary in completed)
    merged = merge_scores(storage, finished, os.path.join(out_dir, MERGED_SCORES))

    failures_path = os.path.join(out_dir, FAILURES)
    if failures:
        with open(failures_path, 'w', encoding='utf-8') as f:
            json.dump(failures, f, indent=2)
        logger.warning(f"{len(failures)} of {len(jobs)} jobs failed; see {failures_path}")
    elif os.path.exists(failures_path):
        os.remove(failures_path)

    refs_path: Optional[str] = None
    if spec.write_refs:
        refs_path = write_reference_csv(os.path.join(out_dir, REFS), spec.envs)

    return {
        'jobs': len(jobs),
        'completed': sorted(completed, key=lambda s: s['run']),
        'failures': failures,
        'merged_scores': merged,
        'refs': refs_path,
    }

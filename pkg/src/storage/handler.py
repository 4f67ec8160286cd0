"""
Storage Handler Module for DeskBBF

This module handles the on-disk layout of training runs: one directory per
run holding its metadata, checkpoint and CSV streams.

    <base_dir>/<env>__<config>__seed<N>/
        run.json        metadata, saved_at timestamp, completion flag
        checkpoint.bin  resumable agent state
        scores.csv      evaluation returns
        metrics.csv     one row per gradient step
        episodes.csv    training episode returns
"""

import os
import csv
import json
import shutil
import logging
from typing import Any, Dict, List, Optional
from datetime import datetime

from src.utils.security import SecurityManager

logger = logging.getLogger('deskbbf.storage')

RUN_INFO = 'run.json'
CHECKPOINT = 'checkpoint.bin'
SCORES = 'scores.csv'
METRICS = 'metrics.csv'
EPISODES = 'episodes.csv'
FAILURE_DUMP = 'numeric_fault.json'


class StorageHandler:
    """
    Handler for storing and retrieving run artifacts.
    """

    def __init__(self, base_dir: str):
        """
        Initialize the storage handler.

        Args:
            base_dir: Directory that holds one subdirectory per run
        """
        self.base_dir = base_dir
        self.security = SecurityManager()
        os.makedirs(base_dir, exist_ok=True)
        logger.debug(f"Initialized storage handler with base directory: {base_dir}")

    def run_dir(self, run_name: str, create: bool = True) -> str:
        """
        Get the directory of a run.

        Args:
            run_name: Run identifier (sanitised before use)
            create: Create the directory if it is missing

        Returns:
            Path to the run directory
        """
        path = os.path.join(self.base_dir, self.security.secure_name(run_name))
        if create:
            os.makedirs(path, exist_ok=True)
        return path

    def path(self, run_name: str, filename: str) -> str:
        return os.path.join(self.run_dir(run_name), filename)

    def checkpoint_path(self, run_name: str) -> str:
        return self.path(run_name, CHECKPOINT)

    def save_run_info(self, run_name: str, info: Dict[str, Any]) -> str:
        """
        Save run metadata.

        Args:
            run_name: Run identifier
            info: JSON-serialisable metadata

        Returns:
            Path to the saved metadata
        """
        info = dict(info)
        info['saved_at'] = datetime.now().isoformat()
        info_path = self.path(run_name, RUN_INFO)
        with open(info_path, 'w', encoding='utf-8') as f:
            json.dump(info, f, ensure_ascii=False, indent=2)
        logger.debug(f"Run info saved to {info_path}")
        return info_path

    def load_run_info(self, run_name: str) -> Optional[Dict[str, Any]]:
        """
        Load run metadata.

        Returns:
            Metadata or None if not found
        """
        info_path = os.path.join(self.run_dir(run_name, create=False), RUN_INFO)
        if not os.path.exists(info_path):
            logger.warning(f"Run info not found at {info_path}")
            return None
        try:
            with open(info_path, 'r', encoding='utf-8') as f:
                return json.load(f)
        except Exception as e:
            logger.error(f"Error loading run info from {info_path}: {str(e)}")
            return None

    def is_complete(self, run_name: str) -> bool:
        info_path = os.path.join(self.run_dir(run_name, create=False), RUN_INFO)
        if not os.path.exists(info_path):
            return False
        info = self.load_run_info(run_name)
        return bool(info and info.get('completed'))

    def write_rows(self, run_name: str, filename: str, rows: List[Dict[str, Any]],
                   columns: List[str]) -> str:
        """Rewrite a CSV stream with exactly `rows`."""
        target = self.path(run_name, filename)
        with open(target, 'w', encoding='utf-8', newline='') as f:
            writer = csv.DictWriter(f, fieldnames=columns, extrasaction='ignore')
            writer.writeheader()
            writer.writerows(rows)
        return target

    def append_rows(self, run_name: str, filename: str, rows: List[Dict[str, Any]],
                    columns: List[str]) -> str:
        """Append rows to a CSV stream, writing the header on first use."""
        target = self.path(run_name, filename)
        new_file = not os.path.exists(target)
        with open(target, 'a', encoding='utf-8', newline='') as f:
            writer = csv.DictWriter(f, fieldnames=columns, extrasaction='ignore')
            if new_file:
                writer.writeheader()
            writer.writerows(rows)
        return target

    def read_rows(self, run_name: str, filename: str) -> List[Dict[str, str]]:
        """Rows of a CSV stream; empty when the file does not exist."""
        target = os.path.join(self.run_dir(run_name, create=False), filename)
        if not os.path.exists(target):
            return []
        with open(target, 'r', encoding='utf-8', newline='') as f:
            return list(csv.DictReader(f))

    def list_runs(self) -> List[Dict[str, Any]]:
        """
        List all runs under the base directory.

        Returns:
            One summary dictionary per run directory with a run.json
        """
        result = []
        for name in sorted(os.listdir(self.base_dir)):
            info_path = os.path.join(self.base_dir, name, RUN_INFO)
            if not os.path.exists(info_path):
                continue
            try:
                with open(info_path, 'r', encoding='utf-8') as f:
                    info = json.load(f)
                result.append({
                    'run': name,
                    'env': info.get('env', 'unknown'),
                    'config_name': info.get('config_name', 'unknown'),
                    'seed': info.get('seed'),
                    'env_steps': info.get('env_steps', 0),
                    'completed': bool(info.get('completed')),
                    'saved_at': info.get('saved_at', 'unknown'),
                })
            except Exception as e:
                logger.error(f"Error reading run info from {info_path}: {str(e)}")
        return result

    def delete_run(self, run_name: str) -> bool:
        """
        Delete a run directory.

        Returns:
            True if deletion was successful, False otherwise
        """
        target = self.run_dir(run_name, create=False)
        if not os.path.exists(target):
            logger.warning(f"Run not found at {target}")
            return False
        try:
            shutil.rmtree(target)
            logger.info(f"Run deleted from {target}")
            return True
        except Exception as e:
            logger.error(f"Error deleting run {target}: {str(e)}")
            return False

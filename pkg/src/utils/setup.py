"""
Setup and Dependency Management Module for DeskBBF

This module checks the interpreter and the required packages, installs
missing packages with pip and verifies that the shipped score fixtures are
present.
"""

import os
import sys
import logging
import importlib
import subprocess
from typing import Dict, List

logger = logging.getLogger('deskbbf.setup')

REQUIRED_PYTHON = (3, 8)

# pip name -> import name
REQUIRED_PACKAGES: Dict[str, str] = {
    'numpy': 'numpy',
    'scipy': 'scipy',
    'pyyaml': 'yaml',
    'tqdm': 'tqdm',
    'colorama': 'colorama',
}
TEST_PACKAGES: Dict[str, str] = {
    'pytest': 'pytest',
    'pytest-mock': 'pytest_mock',
}
DATA_FILES = ('atari100k_scores.csv', 'atari100k_reported.csv')


class SetupManager:
    """Manages setup and dependencies for DeskBBF."""

    def __init__(self, root_dir: str = None, include_tests: bool = False):
        """
        Initialize the setup manager.

        Args:
            root_dir: Repository root (default: two levels above this file)
            include_tests: Also require the test tooling
        """
        self.python_version = sys.version_info
        self.root_dir = root_dir or os.path.dirname(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))
        self.required_packages = dict(REQUIRED_PACKAGES)
        if include_tests:
            self.required_packages.update(TEST_PACKAGES)

    def check_python_version(self) -> bool:
        """Check if Python version is compatible."""
        if tuple(self.python_version[:2]) < REQUIRED_PYTHON:
            print(f"Error: DeskBBF requires Python {REQUIRED_PYTHON[0]}.{REQUIRED_PYTHON[1]} or higher.")
            print(f"Current Python version: {self.python_version[0]}.{self.python_version[1]}.{self.python_version[2]}")
            return False
        return True

    def check_dependencies(self) -> List[str]:
        """Pip names of required packages that cannot be imported."""
        missing_packages = []
        for package, module in self.required_packages.items():
            try:
                importlib.import_module(module)
            except ImportError:
                missing_packages.append(package)
        return missing_packages

    def install_dependencies(self, packages: List[str]) -> bool:
        """Install required dependencies."""
        if not packages:
            return True

        print(f"Installing missing packages: {', '.join(packages)}")
        try:
            subprocess.check_call([sys.executable, "-m", "pip", "install"] + packages)
            print("Dependencies installed successfully.")
            return True
        except subprocess.CalledProcessError as e:
            print(f"Error installing dependencies: {str(e)}")
            return False

    def check_data_files(self) -> List[str]:
        """Shipped fixture files missing from data/."""
        data_dir = os.path.join(self.root_dir, 'data')
        return [name for name in DATA_FILES if not os.path.exists(os.path.join(data_dir, name))]

    def setup(self, install: bool = True) -> bool:
        """Run the setup process."""
        if not self.check_python_version():
            return False

        missing_packages = self.check_dependencies()
        if missing_packages:
            if not install:
                print(f"Missing packages: {', '.join(missing_packages)}")
                return False
            if not self.install_dependencies(missing_packages):
                return False

        missing_data = self.check_data_files()
        if missing_data:
            # the report command still works on run-suite scores
            logger.warning(f"Score fixtures missing from data/: {', '.join(missing_data)}")

        return True


# For command-line setup
if __name__ == "__main__":
    setup_manager = SetupManager(include_tests='--tests' in sys.argv)
    if setup_manager.setup(install='--check' not in sys.argv):
        print("Setup completed successfully!")
    else:
        print("Setup failed. Please resolve the issues and try again.")
        sys.exit(1)

"""
Setup script for DeskBBF
"""

import sys


def main():
    """Main setup function."""
    from src.utils.setup import SetupManager

    print("DeskBBF Setup")
    print("=============")

    manager = SetupManager(include_tests='--tests' in sys.argv)
    if not manager.setup(install='--check' not in sys.argv):
        print("Setup failed. Please install the dependencies from requirements.txt manually.")
        sys.exit(1)

    print("\nSetup completed successfully!")
    print("You can now run DeskBBF using:")
    print(f"  {sys.executable} main.py train --env chase --seed 0")
    print(f"  {sys.executable} main.py report --fixture data/atari100k_scores.csv "
          f"--compare data/atari100k_reported.csv")


if __name__ == "__main__":
    if len(sys.argv) > 1 and not sys.argv[1].startswith('--'):
        # invoked by a build backend (egg_info, editable_wheel, ...);
        # packaging metadata lives in pyproject.toml
        from setuptools import setup
        setup()
    else:
        main()

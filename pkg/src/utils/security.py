"""
Security Module for DeskBBF

This module validates the names and paths that reach the filesystem from
the command line and from suite matrix files: run directory names, output
paths and report formats.
"""

import os
import re
from typing import List


class SecurityManager:
    """
    Input validation for filesystem-facing values.
    """

    def __init__(self):
        """Initialize the security manager."""
        self.allowed_extensions = ['csv', 'json', 'yaml', 'yml', 'txt']

        # System locations never written to
        self.dangerous_paths = ['/etc', '/proc', '/sys', '/dev',
                                '/boot', '/bin', '/sbin', '/usr/bin', '/usr/sbin']

    def secure_name(self, name: str, fallback: str = 'unnamed') -> str:
        """
        Make a value safe to use as a single path component.

        Args:
            name: Original name (env, config name, run name)
            fallback: Returned when nothing usable remains

        Returns:
            Name containing only word characters, dots and dashes
        """
        if not name:
            return fallback
        name = os.path.basename(str(name).strip())
        name = name.replace(' ', '_')
        name = re.sub(r'[^\w.-]', '', name)
        name = name.lstrip('.')
        return name or fallback

    def run_name(self, env: str, config_name: str, seed: int) -> str:
        """Directory name of one run: <env>__<config>__seed<N>."""
        return f"{self.secure_name(env)}__{self.secure_name(config_name)}__seed{int(seed)}"

    def validate_output_format(self, format_name: str) -> bool:
        if not format_name:
            return False
        return format_name.lower() in self.allowed_extensions

    def validate_formats(self, formats: List[str]) -> List[str]:
        """Lower-cased formats; raises ValueError naming the first unsupported one."""
        result = []
        for fmt in formats:
            if not self.validate_output_format(fmt):
                raise ValueError(f"Unsupported output format '{fmt}'. Allowed: {', '.join(self.allowed_extensions)}")
            result.append(fmt.lower())
        return result

    def validate_path(self, path: str) -> bool:
        """
        Validate an output path.

        Args:
            path: File or directory path

        Returns:
            True if safe, False otherwise
        """
        if not path:
            return False

        abs_path = os.path.abspath(path)
        for dangerous in self.dangerous_paths:
            if abs_path == dangerous or abs_path.startswith(dangerous + os.sep):
                return False

        if '..' in path.replace('\\', '/').split('/'):
            return False

        return True

"""
Format Converter Module for DeskBBF

This module writes result tables (aggregate reports, performance profiles,
schedule dumps) in the supported output formats.
"""

import os
import csv
import json
import math
import logging
import yaml
from typing import Any, Dict, List, Optional

logger = logging.getLogger('deskbbf.formatters')

SUPPORTED_FORMATS = ('csv', 'json', 'yaml', 'txt')


class FormatConverter:
    """
    Converter for writing tables of result rows to disk.
    """

    def __init__(self, output_dir: str):
        """
        Initialize the format converter.

        Args:
            output_dir: Directory to save converted output
        """
        self.output_dir = output_dir or '.'
        os.makedirs(self.output_dir, exist_ok=True)
        logger.debug(f"Initialized format converter with output directory: {self.output_dir}")

    def convert(self, rows: List[Dict[str, Any]], formats: List[str], base_filename: str,
                metadata: Optional[Dict[str, Any]] = None) -> Dict[str, str]:
        """
        Write a table in each requested format.

        Args:
            rows: Table rows; the first row's keys fix the column order
            formats: Output formats ('csv', 'json', 'yaml', 'txt')
            base_filename: Base filename for output files (without extension)
            metadata: Extra fields stored alongside the rows (not in csv)

        Returns:
            Dictionary mapping format to output file path
        """
        results = {}
        document = {'metadata': metadata or {}, 'rows': [self._clean_row(row) for row in rows]}

        for fmt in formats:
            fmt = fmt.lower()
            if fmt == 'csv':
                results['csv'] = self._convert_to_csv(rows, base_filename)
            elif fmt == 'json':
                results['json'] = self._convert_to_json(document, base_filename)
            elif fmt == 'yaml':
                results['yaml'] = self._convert_to_yaml(document, base_filename)
            elif fmt == 'txt':
                results['txt'] = self._convert_to_txt(document, base_filename)
            else:
                logger.warning(f"Unsupported format: {fmt}")

        return results

    def write_csv(self, rows: List[Dict[str, Any]], path: str, columns: Optional[List[str]] = None) -> str:
        """Write rows to an explicit CSV path (directories are created)."""
        directory = os.path.dirname(path)
        if directory:
            os.makedirs(directory, exist_ok=True)
        if columns is None:
            columns = list(rows[0].keys()) if rows else []
        with open(path, 'w', encoding='utf-8', newline='') as f:
            writer = csv.DictWriter(f, fieldnames=columns)
            writer.writeheader()
            writer.writerows(rows)
        logger.info(f"Table written to {path}")
        return path

    def _convert_to_csv(self, rows: List[Dict[str, Any]], base_filename: str) -> str:
        output_path = os.path.join(self.output_dir, f"{base_filename}.csv")
        return self.write_csv(rows, output_path)

    def _convert_to_json(self, document: Dict[str, Any], base_filename: str) -> str:
        output_path = os.path.join(self.output_dir, f"{base_filename}.json")
        with open(output_path, 'w', encoding='utf-8') as f:
            json.dump(document, f, ensure_ascii=False, indent=2)
        logger.info(f"Table converted to JSON: {output_path}")
        return output_path

    def _convert_to_yaml(self, document: Dict[str, Any], base_filename: str) -> str:
        output_path = os.path.join(self.output_dir, f"{base_filename}.yaml")
        with open(output_path, 'w', encoding='utf-8') as f:
            yaml.safe_dump(document, f, default_flow_style=False, sort_keys=False)
        logger.info(f"Table converted to YAML: {output_path}")
        return output_path

    def _convert_to_txt(self, document: Dict[str, Any], base_filename: str) -> str:
        """
        Write an aligned plain-text table preceded by the metadata lines.

        Args:
            document: {'metadata': ..., 'rows': [...]}
            base_filename: Base filename for output file

        Returns:
            Path to the output file
        """
        output_path = os.path.join(self.output_dir, f"{base_filename}.txt")
        with open(output_path, 'w', encoding='utf-8') as f:
            for key, value in document['metadata'].items():
                f.write(f"{key}: {value}\n")
            f.write(render_table(document['rows']))
            f.write('\n')
        logger.info(f"Table converted to TXT: {output_path}")
        return output_path

    def _clean_row(self, row: Dict[str, Any]) -> Dict[str, Any]:
        """Plain Python scalars only; NaN becomes None."""
        clean = {}
        for key, value in row.items():
            if hasattr(value, 'item'):
                value = value.item()
            if isinstance(value, float) and math.isnan(value):
                value = None
            clean[str(key)] = value
        return clean


def format_cell(value: Any) -> str:
    if isinstance(value, float):
        return f"{value:.4f}"
    if value is None:
        return '-'
    return str(value)


def render_table(rows: List[Dict[str, Any]]) -> str:
    """Left-aligned text table with a header row."""
    if not rows:
        return ''
    columns = list(rows[0].keys())
    cells = [[format_cell(row.get(column)) for column in columns] for row in rows]
    widths = [max(len(column), *(len(line[i]) for line in cells)) for i, column in enumerate(columns)]
    lines = ['  '.join(column.ljust(widths[i]) for i, column in enumerate(columns))]
    lines.append('  '.join('-' * width for width in widths))
    for line in cells:
        lines.append('  '.join(cell.ljust(widths[i]) for i, cell in enumerate(line)))
    return '\n'.join(lines)

"""
Checkpoint Container Module for DeskBBF

Reads and writes named arrays in the container documented in
docs/checkpoint_format.md:

    DESKBBF-CHECKPOINT 1
    meta {"json": "metadata"}
    <name> <dtype> <comma-separated shape or ->
    ...
    end
    <row-major little-endian values of every entry, in manifest order>
"""

import os
import json
import logging
from collections import OrderedDict
from typing import Any, Dict, Optional, Tuple

import numpy as np

logger = logging.getLogger('deskbbf.autodiff.checkpoint')

MAGIC = 'DESKBBF-CHECKPOINT'
VERSION = 1
SUPPORTED_DTYPES = ('float32', 'float64', 'int64', 'int32', 'uint8', 'bool')


class CheckpointError(ValueError):
    """Raised for malformed or unsupported checkpoint files."""


def _format_shape(shape: Tuple[int, ...]) -> str:
    return ','.join(str(d) for d in shape) if shape else '-'


def _parse_shape(text: str) -> Tuple[int, ...]:
    if text == '-':
        return ()
    return tuple(int(d) for d in text.split(','))


def save_arrays(path: str, arrays: Dict[str, np.ndarray], meta: Optional[Dict[str, Any]] = None) -> str:
    """
    Write named arrays and JSON metadata to `path`.

    The file is written to a temporary name first and moved into place, so a
    killed process never leaves a truncated checkpoint behind.

    Args:
        path: Destination file
        arrays: Ordered mapping of name to array
        meta: JSON-serialisable metadata

    Returns:
        The path written
    """
    manifest = []
    for name, values in arrays.items():
        values = np.asarray(values)
        if not name or any(ch.isspace() for ch in name):
            raise CheckpointError(f"Entry names may not be empty or contain whitespace: {name!r}")
        if values.dtype.name not in SUPPORTED_DTYPES:
            raise CheckpointError(f"Unsupported dtype {values.dtype} for entry {name}")
        manifest.append((name, values.dtype.name, values.shape))

    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    tmp_path = f"{path}.tmp"
    with open(tmp_path, 'wb') as f:
        f.write(f"{MAGIC} {VERSION}\n".encode('utf-8'))
        f.write(f"meta {json.dumps(meta or {}, sort_keys=True)}\n".encode('utf-8'))
        for name, dtype, shape in manifest:
            f.write(f"{name} {dtype} {_format_shape(shape)}\n".encode('utf-8'))
        f.write(b"end\n")
        for name, values in arrays.items():
            values = np.asarray(values)
            little = values.astype(values.dtype.newbyteorder('<'), copy=False)
            f.write(np.ascontiguousarray(little).tobytes(order='C'))
    os.replace(tmp_path, path)
    logger.debug(f"Checkpoint written to {path} ({len(manifest)} entries)")
    return path


def load_arrays(path: str) -> Tuple['OrderedDict[str, np.ndarray]', Dict[str, Any]]:
    """
    Read a container written by `save_arrays`.

    Returns:
        Tuple of (ordered arrays, metadata)
    """
    with open(path, 'rb') as f:
        header = f.readline().decode('utf-8').split()
        if len(header) != 2 or header[0] != MAGIC:
            raise CheckpointError(f"{path} is not a DeskBBF checkpoint")
        if int(header[1]) > VERSION:
            raise CheckpointError(f"{path} uses format version {header[1]}, newer than {VERSION}")

        meta_line = f.readline().decode('utf-8')
        if not meta_line.startswith('meta '):
            raise CheckpointError(f"{path}: missing metadata line")
        meta = json.loads(meta_line[5:])

        manifest = []
        while True:
            line = f.readline().decode('utf-8').strip()
            if not line:
                raise CheckpointError(f"{path}: manifest not terminated")
            if line == 'end':
                break
            name, dtype, shape = line.split()
            if dtype not in SUPPORTED_DTYPES:
                raise CheckpointError(f"{path}: unsupported dtype {dtype}")
            manifest.append((name, dtype, _parse_shape(shape)))

        arrays: 'OrderedDict[str, np.ndarray]' = OrderedDict()
        for name, dtype, shape in manifest:
            little = np.dtype(dtype).newbyteorder('<')
            count = int(np.prod(shape)) if shape else 1
            raw = f.read(count * little.itemsize)
            if len(raw) != count * little.itemsize:
                raise CheckpointError(f"{path}: truncated data for entry {name}")
            values = np.frombuffer(raw, dtype=little).astype(np.dtype(dtype)).reshape(shape)
            arrays[name] = values.copy()
    return arrays, meta


def save_parameters(path: str, params, meta: Optional[Dict[str, Any]] = None) -> str:
    """Write a ParameterSet (its rng_seed is stored in the metadata)."""
    info = dict(meta or {})
    info['rng_seed'] = params.rng_seed
    return save_arrays(path, params.to_arrays(), info)


def load_parameters(path: str, trainable: bool = True):
    from src.autodiff.parameters import ParameterSet
    arrays, meta = load_arrays(path)
    return ParameterSet.from_arrays(arrays, meta.get('rng_seed'), trainable), meta

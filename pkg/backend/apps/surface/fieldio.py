"""
KWF1 field files: an ASCII header line "KWF1 <n> <n>" followed by n*n
little-endian float64 values in row-major order.
"""

import logging
from pathlib import Path

import numpy as np

from apps.core.exceptions import InvalidFieldError

from .models import Grid, ScalarField

logger = logging.getLogger(__name__)

MAGIC = 'KWF1'
_DTYPE = np.dtype('<f8')


def write_field(path, field: ScalarField) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    n = field.grid.n
    with path.open('wb') as handle:
        handle.write(f"{MAGIC} {n} {n}\n".encode('ascii'))
        handle.write(np.ascontiguousarray(field.values, dtype=_DTYPE).tobytes())
    logger.debug(f"Wrote KWF1 field n={n} to {path}")
    return path


def read_field(path) -> ScalarField:
    path = Path(path)
    with path.open('rb') as handle:
        header = handle.readline().decode('ascii', errors='replace').split()
        payload = handle.read()

    if len(header) != 3 or header[0] != MAGIC:
        raise InvalidFieldError(f"{path} is not a KWF1 field file")
    try:
        n1, n2 = int(header[1]), int(header[2])
    except ValueError:
        raise InvalidFieldError(f"{path} has a malformed KWF1 header")
    if n1 != n2:
        raise InvalidFieldError(f"{path} holds a non-square {n1}x{n2} field")
    if len(payload) != n1 * n2 * _DTYPE.itemsize:
        raise InvalidFieldError(f"{path} payload has {len(payload)} bytes, expected {n1 * n2 * _DTYPE.itemsize}")

    values = np.frombuffer(payload, dtype=_DTYPE).reshape(n1, n2)
    return ScalarField(Grid(n1), values.astype(np.float64))

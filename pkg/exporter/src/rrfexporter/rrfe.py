"""Writer for the binary patch-embedding format.

Layout: magic "RRFE" | u32 version=1 | u32 K | u32 D | u64 layout
fingerprint, all little-endian, followed by K*D float32 little-endian
values row-major (row i = patch position i). Independent of the consumer
package by design; byte compatibility is covered by cross-component tests.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import PluginError

MAGIC = b"RRFE"
VERSION = 1
HEADER = struct.Struct("<4sIIIQ")


def write_embedding_file(path, matrix: np.ndarray, fingerprint: int):
    """Write one image's (K, D) float matrix; validates the value contract."""
    m = np.asarray(matrix, dtype=np.float64)
    if m.ndim != 2:
        raise PluginError(f"embedding matrix must be 2-D, got {m.shape}")
    if not np.all(np.isfinite(m)):
        raise PluginError("non-finite embedding values")
    zero_rows = np.flatnonzero(~m.any(axis=1))
    if zero_rows.size:
        raise PluginError(
            f"all-zero embedding row(s) {zero_rows.tolist()}; the consumer "
            f"rejects zero vectors"
        )
    k, d = m.shape
    blob = HEADER.pack(MAGIC, VERSION, k, d, fingerprint) + m.astype("<f4").tobytes()
    Path(path).write_bytes(blob)


def file_size(k: int, d: int) -> int:
    return HEADER.size + k * d * 4

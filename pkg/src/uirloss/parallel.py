"""Deterministic data-parallel map over fixed-size row blocks.

Block boundaries depend only on ``CHUNK_ROWS``, never on the worker count,
and results are concatenated in block order, so the output is bit-identical
for any number of workers.
"""

import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np

CHUNK_ROWS = 1024


def default_workers():
    return os.cpu_count() or 1


def map_chunks(fn, rows, workers=1, chunk_rows=CHUNK_ROWS):
    """Apply ``fn`` to consecutive row blocks of ``rows``; concatenate results."""
    rows = np.asarray(rows)
    blocks = [rows[i:i + chunk_rows] for i in range(0, rows.shape[0], chunk_rows)]
    if not blocks:
        return fn(rows)
    if workers is None or workers <= 1 or len(blocks) == 1:
        results = [fn(b) for b in blocks]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(fn, blocks))
    return np.concatenate(results, axis=0)

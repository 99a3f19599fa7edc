"""Counter-keyed normal streams.

Samples are produced in fixed-size blocks, each block drawn from its own
Philox generator keyed by ``(seed, stream, block)``. Any sample range can
therefore be regenerated without replaying earlier draws, and the output
does not depend on the order in which blocks are requested.
"""

import numpy as np

BLOCK = 4096


def _block(seed, stream, index, dim):
    key = np.random.SeedSequence([int(seed), int(stream), int(index)])
    gen = np.random.Generator(np.random.Philox(key))
    return gen.standard_normal((BLOCK, dim))


def standard_normals(seed, stream, start, count, dim):
    """Rows ``start .. start + count - 1`` of the stream, shape ``(count, dim)``."""
    if count <= 0:
        return np.empty((0, dim))
    first, last = start // BLOCK, (start + count - 1) // BLOCK
    rows = np.vstack([_block(seed, stream, b, dim) for b in range(first, last + 1)])
    offset = start - first * BLOCK
    return rows[offset:offset + count]

"""Counter-based Gaussian draws.

Every normal variate is addressed by ``(seed, stream, index)``: the Philox
block holding word ``index`` is generated directly and mapped through the
inverse normal CDF.  Any slice of a stream can therefore be produced on its
own, which keeps results independent of how work is split between threads.
"""

import hashlib

import numpy as np
from scipy.special import ndtri

_WORDS_PER_BLOCK = 4
_MASK64 = (1 << 64) - 1


def stream_id(*labels) -> int:
    """Stable 64-bit stream id from arbitrary labels (hash of their repr)."""
    digest = hashlib.sha256(repr(labels).encode()).digest()
    return int.from_bytes(digest[:8], "little")


def raw_words(seed: int, stream: int, start: int, count: int) -> np.ndarray:
    """Philox words ``start .. start+count-1`` of the given stream."""
    if count <= 0:
        return np.empty(0, dtype=np.uint64)
    block, skip = divmod(int(start), _WORDS_PER_BLOCK)
    bg = np.random.Philox(key=[int(seed) & _MASK64, int(stream) & _MASK64],
                          counter=[block, 0, 0, 0])
    return bg.random_raw(skip + count)[skip:]


def normals(seed: int, stream: int, count: int, start: int = 0) -> np.ndarray:
    """Standard normal variates at positions ``start .. start+count-1``."""
    words = raw_words(seed, stream, start, count)
    # 53 high bits -> open interval (0, 1)
    u = ((words >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0**-53
    return ndtri(u)

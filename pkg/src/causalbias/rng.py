"""Counter-based uniform streams (SplitMix64 finaliser).

Stream-splitting rule: the key for ``(seed, stream)`` is
``mix(mix(seed + G) ^ (stream * G))`` and the ``i``-th draw of that stream is
``mix(key + (i + 1) * G) >> 11`` scaled by ``2**-53``, where ``G`` is the
64-bit golden-ratio increment and all arithmetic is modulo ``2**64``.  Draw
``i`` depends only on ``(seed, stream, i)``, so any partition of the sample
indices reproduces the same values on every platform.
"""

import numpy as np

_MASK = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def _mix_int(z: int) -> int:
    z &= _MASK
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return z ^ (z >> 31)


def _mix_array(z: np.ndarray) -> np.ndarray:
    z = z ^ (z >> np.uint64(30))
    z = z * np.uint64(0xBF58476D1CE4E5B9)
    z = z ^ (z >> np.uint64(27))
    z = z * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


def stream_key(seed: int, stream: int) -> int:
    return _mix_int(_mix_int(int(seed) + _GOLDEN) ^ ((int(stream) * _GOLDEN) & _MASK))


def uniforms(seed: int, stream: int, indices) -> np.ndarray:
    """Uniform draws in [0, 1) for the given sample indices of one stream."""
    idx = np.asarray(indices, dtype=np.uint64)
    key = np.uint64(stream_key(seed, stream))
    with np.errstate(over="ignore"):
        z = key + (idx + np.uint64(1)) * np.uint64(_GOLDEN)
        z = _mix_array(z)
    return (z >> np.uint64(11)).astype(np.float64) * (1.0 / (1 << 53))

"""Counter-based SplitMix64 streams.

Every random draw in the package comes from here so that results depend only
on ``(seed, stream, position)``. The generator is plain SplitMix64 (64-bit
state, increment 0x9E3779B97F4A7C15, Stafford "mix13" finalizer), which is
easy to reproduce in any language:

    base   = mix(seed + (stream + 1) * 0xD1B54A32D192ED69)      (mod 2**64)
    x_i    = mix(base + (i + 1) * 0x9E3779B97F4A7C15)           (mod 2**64)
    u_i    = (x_i >> 11) * 2**-53                               in [0, 1)

Gaussians use Box-Muller on consecutive uniform pairs ``(u_2i, u_2i+1)``:
``r = sqrt(-2 ln(1 - u_2i))``, ``n_2i = r cos(2 pi u_2i+1)``,
``n_2i+1 = r sin(2 pi u_2i+1)``.
"""

from __future__ import annotations

import numpy as np

GOLDEN_GAMMA = 0x9E3779B97F4A7C15
STREAM_GAMMA = 0xD1B54A32D192ED69
_MASK = (1 << 64) - 1


def _mix(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


def stream_base(seed: int, stream: int = 0) -> int:
    start = (int(seed) + (int(stream) + 1) * STREAM_GAMMA) & _MASK
    return int(_mix(np.array([start], dtype=np.uint64))[0])


def raw64(seed: int, stream: int, n: int, offset: int = 0) -> np.ndarray:
    """Return ``n`` raw 64-bit outputs of a stream starting at ``offset``."""
    base = np.uint64(stream_base(seed, stream))
    counter = np.arange(offset + 1, offset + n + 1, dtype=np.uint64)
    with np.errstate(over="ignore"):
        state = base + counter * np.uint64(GOLDEN_GAMMA)
        return _mix(state)


def uniforms(seed: int, stream: int, n: int, offset: int = 0) -> np.ndarray:
    """Uniform doubles in [0, 1) with 53 bits of resolution."""
    with np.errstate(over="ignore"):
        bits = raw64(seed, stream, n, offset) >> np.uint64(11)
    return bits.astype(np.float64) * 2.0**-53


def normals(seed: int, stream: int, n: int) -> np.ndarray:
    """Standard normal draws via Box-Muller."""
    pairs = (n + 1) // 2
    u = uniforms(seed, stream, 2 * pairs)
    radius = np.sqrt(-2.0 * np.log1p(-u[0::2]))
    angle = 2.0 * np.pi * u[1::2]
    out = np.empty(2 * pairs)
    out[0::2] = radius * np.cos(angle)
    out[1::2] = radius * np.sin(angle)
    return out[:n]


def permutation(seed: int, stream: int, n: int) -> np.ndarray:
    """Random permutation of ``range(n)``: stable argsort of ``n`` uniforms."""
    return np.argsort(uniforms(seed, stream, n), kind="stable")

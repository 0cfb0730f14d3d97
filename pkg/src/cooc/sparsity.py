"""Significance maps, the no-prior baseline cost, and textured digits."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from cooc import rng
from cooc.domain import Image, IndexDomain, SignificanceMap
from cooc.model import binom_bits


def significance_map(values, threshold: float,
                     domain: Optional[IndexDomain] = None) -> SignificanceMap:
    """``{p : |values[p]| > threshold}``; ties at the threshold are dropped."""
    values = np.asarray(values, dtype=np.float64).reshape(-1)
    if threshold < 0:
        raise ValueError("threshold must be non-negative")
    if not np.all(np.isfinite(values)):
        raise ValueError("values must be finite")
    if domain is None:
        domain = IndexDomain.flat(values.size)
    elif domain.size != values.size:
        raise ValueError(f"{values.size} values for a domain of size {domain.size}")
    return SignificanceMap(domain, np.abs(values) > threshold)


def threshold_for_density(values, density: float) -> float:
    """Threshold keeping the ``floor(density * n)`` largest magnitudes.

    The threshold is the next magnitude below the kept ones, so with the
    strict inequality of :func:`significance_map` entries tied at the cut are
    all dropped and the map may hold fewer than the target count.
    """
    if not 0 < density < 1:
        raise ValueError("density must lie in (0, 1)")
    mags = np.sort(np.abs(np.asarray(values, dtype=np.float64).reshape(-1)))[::-1]
    keep = int(np.floor(density * mags.size))
    return float(mags[keep])


def baseline_bits_r0(domain_size: int, n_significant: int) -> float:
    """Bits to code which ``n_significant`` of ``domain_size`` indices are set."""
    if not 0 <= n_significant <= domain_size:
        raise ValueError("need 0 <= |y| <= |domain|")
    return binom_bits(domain_size, n_significant)


@dataclass(frozen=True)
class TexturizeParams:
    offset: float = 1.0
    threshold: float = 2.0
    seed: int = 0

    def __post_init__(self):
        if not self.offset > 0 or not self.threshold > 0:
            raise ValueError("offset and threshold must be positive")


def texturize_digit(image: Image, params: TexturizeParams,
                    stream: int = 0) -> tuple[Image, SignificanceMap]:
    """Random digit ``(f + C) * W`` with white Gaussian ``W`` and its map.

    ``stream`` separates the noise of different images drawn with one seed;
    datasets use the image index.
    """
    noise = rng.normals(params.seed, stream, image.samples.size)
    textured = (image.samples + params.offset) * noise
    domain = IndexDomain(image.width, image.height)
    return Image(image.width, image.height, textured), significance_map(textured, params.threshold, domain)


def texturize_batch(pixels: np.ndarray, params: TexturizeParams,
                    first_stream: int = 0) -> np.ndarray:
    """Maps of many ``(rows, cols)`` images at once, shape ``(n, rows * cols)``.

    Equivalent to calling :func:`texturize_digit` on image ``i`` with stream
    ``first_stream + i``.
    """
    pixels = np.asarray(pixels, dtype=np.float64).reshape(len(pixels), -1)
    out = np.empty(pixels.shape, dtype=bool)
    for i, row in enumerate(pixels):
        noise = rng.normals(params.seed, first_stream + i, row.size)
        out[i] = np.abs((row + params.offset) * noise) > params.threshold
    return out

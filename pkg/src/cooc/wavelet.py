"""Separable orthonormal 2-D wavelet transform with periodic boundaries.

Coefficients are linearized as: approximation band, then for each scale from
coarse to fine the horizontal, vertical and diagonal bands, each row-major.
Scale ``j = 1`` is the finest. For Haar on a 2x2 block ``[[a, b], [c, d]]``:
approx ``(a+b+c+d)/2``, horiz ``(a-b+c-d)/2`` (high-pass along rows),
vert ``(a+b-c-d)/2`` (high-pass along columns), diag ``(a-b-c+d)/2``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from cooc.domain import Image, IndexDomain, SignificanceMap

_SQ3 = np.sqrt(3.0)
FILTERS = {
    "haar": np.array([1.0, 1.0]) / np.sqrt(2.0),
    "db2": np.array([1 + _SQ3, 3 + _SQ3, 3 - _SQ3, 1 - _SQ3]) / (4 * np.sqrt(2.0)),
}
BANDS = ("horiz", "vert", "diag")


@dataclass(frozen=True)
class WaveletSpec:
    family: str = "haar"
    levels: int = 1

    def __post_init__(self):
        if self.family not in FILTERS:
            raise ValueError(f"unknown wavelet family {self.family!r}")
        if self.levels < 1:
            raise ValueError("need at least one decomposition level")

    def check_shape(self, height: int, width: int) -> None:
        step = 2 ** self.levels
        if height % step or width % step:
            raise ValueError(f"{width}x{height} image is not divisible by 2^{self.levels}")


def _filters(family: str) -> tuple[np.ndarray, np.ndarray]:
    lo = FILTERS[family]
    hi = lo[::-1] * (-1.0) ** np.arange(lo.size)
    return lo, hi


def _analyze(x: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Periodic filter-and-downsample along the last axis."""
    n = x.shape[-1]
    base = 2 * np.arange(n // 2)
    a = np.zeros(x.shape[:-1] + (n // 2,))
    d = np.zeros_like(a)
    for k in range(lo.size):
        taps = x[..., (base + k) % n]
        a += lo[k] * taps
        d += hi[k] * taps
    return a, d


def _synthesize(a: np.ndarray, d: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    """Adjoint (= inverse) of :func:`_analyze`."""
    half = a.shape[-1]
    n = 2 * half
    base = 2 * np.arange(half)
    x = np.zeros(a.shape[:-1] + (n,))
    for k in range(lo.size):
        x[..., (base + k) % n] += lo[k] * a + hi[k] * d
    return x


@dataclass(eq=False)
class CoeffPyramid:
    """Wavelet coefficients: the coarsest approximation plus detail bands.

    ``details[j - 1]`` holds the ``(horiz, vert, diag)`` bands at scale ``j``.
    """

    spec: WaveletSpec
    approx: np.ndarray
    details: list = field(default_factory=list)

    @property
    def shape(self) -> tuple[int, int]:
        h, w = self.approx.shape
        return h * 2 ** self.spec.levels, w * 2 ** self.spec.levels

    @property
    def size(self) -> int:
        return self.approx.size + sum(b.size for bands in self.details for b in bands)

    def to_flat(self) -> np.ndarray:
        parts = [self.approx.ravel()]
        for bands in reversed(self.details):
            parts.extend(b.ravel() for b in bands)
        return np.concatenate(parts)

    @classmethod
    def from_flat(cls, flat, spec: WaveletSpec, height: int, width: int) -> "CoeffPyramid":
        spec.check_shape(height, width)
        flat = np.asarray(flat, dtype=np.float64).reshape(-1)
        if flat.size != height * width:
            raise ValueError("coefficient count differs from the image size")
        J = spec.levels
        ah, aw = height >> J, width >> J
        pos = ah * aw
        approx = flat[:pos].reshape(ah, aw)
        details = [None] * J
        for j in range(J, 0, -1):
            bh, bw = height >> j, width >> j
            bands = []
            for _ in BANDS:
                bands.append(flat[pos:pos + bh * bw].reshape(bh, bw))
                pos += bh * bw
            details[j - 1] = tuple(bands)
        return cls(spec, approx.copy(), [tuple(b.copy() for b in bands) for bands in details])

    def domain(self) -> IndexDomain:
        h, w = self.shape
        return IndexDomain(w, h, kind="wavelet", wavelet=self.spec.family, levels=self.spec.levels)


def dwt2_forward(image: Image, spec: WaveletSpec) -> CoeffPyramid:
    spec.check_shape(image.height, image.width)
    lo, hi = _filters(spec.family)
    current = image.to_array()
    details = []
    for _ in range(spec.levels):
        row_lo, row_hi = _analyze(current, lo, hi)
        ll, lh = _analyze(row_lo.T, lo, hi)
        hl, hh = _analyze(row_hi.T, lo, hi)
        # horiz: high-pass along rows, low-pass along columns
        details.append((hl.T, lh.T, hh.T))
        current = ll.T
    return CoeffPyramid(spec, current, details)


def dwt2_inverse(pyr: CoeffPyramid) -> Image:
    lo, hi = _filters(pyr.spec.family)
    current = pyr.approx
    if len(pyr.details) != pyr.spec.levels:
        raise ValueError("pyramid depth differs from its spec")
    for horiz, vert, diag in reversed(pyr.details):
        if not (horiz.shape == vert.shape == diag.shape == current.shape):
            raise ValueError("inconsistent band shapes")
        row_lo = _synthesize(current.T, vert.T, lo, hi).T
        row_hi = _synthesize(horiz.T, diag.T, lo, hi).T
        current = _synthesize(row_lo, row_hi, lo, hi)
    return Image.from_array(current)


def reconstruct_sparse(pyr: CoeffPyramid, y: SignificanceMap) -> Image:
    """Inverse transform keeping only the coefficients in ``y``."""
    h, w = pyr.shape
    if y.domain.size != h * w or y.domain.width != w or y.domain.height != h:
        raise ValueError("map domain does not match the pyramid")
    kept = np.where(y.members, pyr.to_flat(), 0.0)
    return dwt2_inverse(CoeffPyramid.from_flat(kept, pyr.spec, h, w))


def wavelet_significance(image: Image, spec: WaveletSpec, threshold: float) -> SignificanceMap:
    """Significance map of the wavelet coefficients of an image."""
    pyr = dwt2_forward(image, spec)
    return SignificanceMap(pyr.domain(), np.abs(pyr.to_flat()) > threshold)

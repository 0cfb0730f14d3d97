"""Core data types shared by every module: images, index domains, maps."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np


@dataclass(frozen=True, eq=False)
class Image:
    """A 2-D grid of real samples stored row-major, nominal range [0, 1]."""

    width: int
    height: int
    samples: np.ndarray

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64).reshape(-1)
        if samples.size != self.width * self.height:
            raise ValueError(
                f"expected {self.width * self.height} samples, got {samples.size}")
        if not np.all(np.isfinite(samples)):
            raise ValueError("image samples must be finite")
        object.__setattr__(self, "samples", samples)

    @classmethod
    def from_array(cls, array) -> "Image":
        array = np.asarray(array, dtype=np.float64)
        if array.ndim != 2:
            raise ValueError("image array must be 2-D")
        height, width = array.shape
        return cls(width, height, array.reshape(-1))

    def to_array(self) -> np.ndarray:
        return self.samples.reshape(self.height, self.width)

    def __eq__(self, other):
        if not isinstance(other, Image):
            return NotImplemented
        return (self.width, self.height) == (other.width, other.height) and \
            np.array_equal(self.samples, other.samples)


@dataclass(frozen=True)
class IndexDomain:
    """The index set over which significance maps are defined.

    ``kind`` is ``"pixel"`` or ``"wavelet"``; for wavelet domains ``wavelet``
    names the filter family and ``levels`` the decomposition depth. The size is
    always ``width * height`` since the separable transform is critically
    sampled.
    """

    width: int
    height: int
    kind: str = "pixel"
    wavelet: Optional[str] = None
    levels: Optional[int] = None

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ValueError("domain dimensions must be positive")
        if self.kind not in ("pixel", "wavelet"):
            raise ValueError(f"unknown domain kind {self.kind!r}")
        if self.kind == "wavelet" and (self.wavelet is None or self.levels is None):
            raise ValueError("wavelet domains need a filter family and a depth")

    @property
    def size(self) -> int:
        return self.width * self.height

    @classmethod
    def flat(cls, size: int) -> "IndexDomain":
        """A 1 x ``size`` pixel domain, for data without 2-D structure."""
        return cls(width=size, height=1)

    def to_dict(self) -> dict:
        out = {"kind": self.kind, "width": self.width, "height": self.height}
        if self.kind == "wavelet":
            out["wavelet"] = self.wavelet
            out["levels"] = self.levels
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "IndexDomain":
        return cls(width=int(data["width"]), height=int(data["height"]),
                   kind=data.get("kind", "pixel"), wavelet=data.get("wavelet"),
                   levels=data.get("levels"))


@dataclass(frozen=True, eq=False)
class SignificanceMap:
    """A subset ``y`` of an index domain, stored as a boolean vector."""

    domain: IndexDomain
    members: np.ndarray = field(repr=False)

    def __post_init__(self):
        members = np.asarray(self.members)
        if members.dtype != np.bool_:
            members = members.astype(bool)
        members = members.reshape(-1)
        if members.size != self.domain.size:
            raise ValueError(
                f"map has {members.size} entries, domain has {self.domain.size}")
        members.setflags(write=False)
        object.__setattr__(self, "members", members)

    @classmethod
    def from_indices(cls, domain: IndexDomain, indices: Iterable[int]) -> "SignificanceMap":
        members = np.zeros(domain.size, dtype=bool)
        idx = np.fromiter(indices, dtype=np.int64)
        if idx.size and (idx.min() < 0 or idx.max() >= domain.size):
            raise ValueError("index outside domain")
        members[idx] = True
        return cls(domain, members)

    @property
    def cardinality(self) -> int:
        return int(self.members.sum())

    def indices(self) -> np.ndarray:
        return np.flatnonzero(self.members)

    def __len__(self):
        return self.cardinality

    def __eq__(self, other):
        if not isinstance(other, SignificanceMap):
            return NotImplemented
        return self.domain == other.domain and np.array_equal(self.members, other.members)


def stack_maps(maps: Sequence[SignificanceMap],
               domain: Optional[IndexDomain] = None) -> np.ndarray:
    """Stack maps into an ``(L, |domain|)`` boolean matrix, checking domains."""
    if len(maps) == 0:
        raise ValueError("need at least one significance map")
    domain = domain or maps[0].domain
    for i, y in enumerate(maps):
        if y.domain != domain:
            raise ValueError(f"map {i} has domain {y.domain}, expected {domain}")
    return np.stack([y.members for y in maps])

"""Balanced groupings, quantized count histograms and code lengths.

A model assigns every index ``p`` of a domain to a group ``k(p)``. Inside a
group of size ``s`` a map is described by its count ``z = |y & group|``; the
count has a piecewise-constant distribution over a few bins and, given the
count, every subset of that size is equally likely. The code length of a map
is therefore

    bits(y) = sum_k  log2 C(s_k, z_k) - log2 q_k(z_k)

All code lengths are in bits.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional, Sequence

import numpy as np
from scipy.special import gammaln, xlogy

from cooc.domain import IndexDomain, SignificanceMap, stack_maps

_LN2 = np.log(2.0)


# ---------------------------------------------------------------------------
# Scalar code-length primitives
# ---------------------------------------------------------------------------

def binom_bits(n, m):
    """``log2 C(n, m)`` through log-gamma; vectorized over array inputs."""
    n = np.asarray(n, dtype=np.float64)
    m = np.asarray(m, dtype=np.float64)
    if np.any(m < 0) or np.any(m > n):
        raise ValueError("binom_bits needs 0 <= m <= n")
    out = (gammaln(n + 1) - gammaln(m + 1) - gammaln(n - m + 1)) / _LN2
    return float(out) if out.ndim == 0 else out


def binary_entropy(p):
    """Binary entropy in bits with ``0 log 0 = 0``."""
    p = np.asarray(p, dtype=np.float64)
    out = -(xlogy(p, p) + xlogy(1.0 - p, 1.0 - p)) / _LN2
    return float(out) if out.ndim == 0 else out


def stirling_bits(s, z):
    """Entropy approximation ``s * H(z / s)`` of ``log2 C(s, z)``.

    ``z`` may be fractional (quantized Bernoulli parameters live on bin
    centers).
    """
    s = np.asarray(s, dtype=np.float64)
    z = np.asarray(z, dtype=np.float64)
    if np.any(z < 0) or np.any(z > s):
        raise ValueError("stirling_bits needs 0 <= z <= s")
    out = s * binary_entropy(z / s)
    return float(out) if np.ndim(out) == 0 else out


def bernoulli_data_bits(m, s, pi):
    """Bits to code ``m`` significant out of ``s`` i.i.d. Bernoulli(pi) indices."""
    m = np.asarray(m, dtype=np.float64)
    s = np.asarray(s, dtype=np.float64)
    pi = np.asarray(pi, dtype=np.float64)
    if np.any(pi <= 0) or np.any(pi >= 1):
        raise ValueError("Bernoulli parameter must lie in (0, 1)")
    if np.any(m < 0) or np.any(m > s):
        raise ValueError("need 0 <= m <= s")
    out = -(m * np.log2(pi) + (s - m) * np.log2(1.0 - pi))
    return float(out) if out.ndim == 0 else out


def clamp_pi(z, s):
    """Bernoulli parameter ``z / s`` clamped to ``[1/(2s), 1 - 1/(2s)]``."""
    s = np.asarray(s, dtype=np.float64)
    lo = 0.5 / s
    return np.clip(np.asarray(z, dtype=np.float64) / s, lo, 1.0 - lo)


# ---------------------------------------------------------------------------
# Groupings
# ---------------------------------------------------------------------------

def expected_group_sizes(n: int, s: int) -> np.ndarray:
    n_groups = -(-n // s)
    sizes = np.full(n_groups, s, dtype=np.int64)
    if n % s:
        sizes[-1] = n % s
    return sizes


@dataclass(frozen=True, eq=False)
class Grouping:
    """Balanced partition of a domain, stored as the map ``p -> k(p)``.

    All groups hold exactly ``size`` indices, except that when ``size`` does
    not divide the domain the last group holds the remainder.
    """

    domain: IndexDomain
    size: int
    assignment: np.ndarray = field(repr=False)

    def __post_init__(self):
        assignment = np.asarray(self.assignment, dtype=np.int64).reshape(-1)
        if assignment.size != self.domain.size:
            raise ValueError("assignment length differs from domain size")
        if self.size < 1:
            raise ValueError("group size must be positive")
        expected = expected_group_sizes(self.domain.size, self.size)
        if assignment.min() < 0 or assignment.max() >= expected.size:
            raise ValueError("group id out of range")
        actual = np.bincount(assignment, minlength=expected.size)
        if not np.array_equal(actual, expected):
            raise ValueError(f"unbalanced grouping: sizes {actual.tolist()}")
        assignment.setflags(write=False)
        object.__setattr__(self, "assignment", assignment)

    @property
    def n_groups(self) -> int:
        return -(-self.domain.size // self.size)

    @property
    def group_sizes(self) -> np.ndarray:
        return expected_group_sizes(self.domain.size, self.size)

    def members(self, k: int) -> np.ndarray:
        return np.flatnonzero(self.assignment == k)

    @cached_property
    def indicator(self) -> np.ndarray:
        """``(|domain|, K)`` one-hot membership matrix (float32, exact counts)."""
        onehot = np.zeros((self.domain.size, self.n_groups), dtype=np.float32)
        onehot[np.arange(self.domain.size), self.assignment] = 1.0
        return onehot

    def counts(self, Y: np.ndarray) -> np.ndarray:
        """Per-map, per-group counts for a boolean ``(L, |domain|)`` matrix."""
        Y = np.atleast_2d(Y)
        if Y.shape[1] != self.domain.size:
            raise ValueError("map matrix does not match the grouping domain")
        return np.rint(Y.astype(np.float32) @ self.indicator).astype(np.int64)

    def relabel(self, perm: Sequence[int]) -> "Grouping":
        """Grouping with group ``k`` renamed ``perm[k]``."""
        return Grouping(self.domain, self.size, np.asarray(perm)[self.assignment])

    def __eq__(self, other):
        if not isinstance(other, Grouping):
            return NotImplemented
        return (self.domain == other.domain and self.size == other.size
                and np.array_equal(self.assignment, other.assignment))


def group_counts(y: SignificanceMap, g: Grouping) -> np.ndarray:
    """``z(k) = |y & theta(k)|`` for every group."""
    if y.domain != g.domain:
        raise ValueError("map and grouping live on different domains")
    return np.bincount(g.assignment, weights=y.members, minlength=g.n_groups).astype(np.int64)


# ---------------------------------------------------------------------------
# Histograms
# ---------------------------------------------------------------------------

def equal_width_edges(s: int, n_bins: int) -> np.ndarray:
    """Integer bin edges splitting the counts ``0..s`` into equal-width bins.

    Bin ``b`` holds counts ``edges[b] <= z < edges[b + 1]``. The number of bins
    is capped at ``s + 1`` so that no bin is empty of counts.
    """
    n_bins = min(int(n_bins), s + 1)
    return (np.arange(n_bins + 1) * (s + 1)) // n_bins


@dataclass(frozen=True, eq=False)
class GroupHistogram:
    """Piecewise-constant distribution over the counts ``0..s`` of one group.

    ``probs[b]`` is the mass of bin ``b``; it is spread evenly over the integer
    counts the bin contains.
    """

    edges: np.ndarray
    probs: np.ndarray

    def __post_init__(self):
        edges = np.asarray(self.edges, dtype=np.int64)
        probs = np.asarray(self.probs, dtype=np.float64)
        if edges.ndim != 1 or edges.size < 3:
            raise ValueError("need at least two bins")
        if edges[0] != 0 or np.any(np.diff(edges) <= 0):
            raise ValueError("bin edges must start at 0 and increase strictly")
        if probs.shape != (edges.size - 1,):
            raise ValueError("one probability per bin is required")
        if np.any(probs <= 0) or abs(probs.sum() - 1.0) > 1e-12:
            raise ValueError("bin probabilities must be positive and sum to 1")
        edges.setflags(write=False)
        probs.setflags(write=False)
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "probs", probs)

    @classmethod
    def uniform(cls, s: int, n_bins: int) -> "GroupHistogram":
        """Uniform over counts (bin mass proportional to bin width)."""
        edges = equal_width_edges(s, n_bins)
        return cls(edges, np.diff(edges) / (s + 1.0))

    @classmethod
    def from_bin_counts(cls, edges, bin_counts) -> "GroupHistogram":
        """Add-one smoothed, normalized histogram."""
        smoothed = np.asarray(bin_counts, dtype=np.float64) + 1.0
        return cls(edges, smoothed / smoothed.sum())

    @property
    def group_size(self) -> int:
        return int(self.edges[-1]) - 1

    @property
    def n_bins(self) -> int:
        return self.edges.size - 1

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.edges)

    @property
    def centers(self) -> np.ndarray:
        """Midpoint of the integer counts held by each bin."""
        return (self.edges[:-1] + self.edges[1:] - 1) / 2.0

    def bin_of(self, z) -> np.ndarray:
        return np.searchsorted(self.edges, z, side="right") - 1

    def count_bits(self) -> np.ndarray:
        """``-log2 q(z)`` for ``z = 0..s``."""
        per_count = np.repeat(np.log2(self.probs / self.widths), self.widths)
        return -per_count

    def __eq__(self, other):
        if not isinstance(other, GroupHistogram):
            return NotImplemented
        return np.array_equal(self.edges, other.edges) and np.array_equal(self.probs, other.probs)


# ---------------------------------------------------------------------------
# Models and code lengths
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class CoocModel:
    grouping: Grouping
    histograms: tuple
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        hists = tuple(self.histograms)
        if len(hists) != self.grouping.n_groups:
            raise ValueError("one histogram per group is required")
        for k, (h, s_k) in enumerate(zip(hists, self.grouping.group_sizes)):
            if h.group_size != s_k:
                raise ValueError(f"histogram {k} covers counts 0..{h.group_size}, group has {s_k}")
        object.__setattr__(self, "histograms", hists)

    @property
    def domain(self) -> IndexDomain:
        return self.grouping.domain

    @cached_property
    def cost_table(self) -> np.ndarray:
        """``(K, s+1)`` table of ``log2 C(s_k, z) - log2 q_k(z)``; inf past ``s_k``."""
        s = self.grouping.size
        table = np.full((self.grouping.n_groups, s + 1), np.inf)
        for k, h in enumerate(self.histograms):
            s_k = h.group_size
            z = np.arange(s_k + 1)
            table[k, : s_k + 1] = binom_bits(s_k, z) + h.count_bits()
        return table

    def group_bits(self, Y: np.ndarray) -> np.ndarray:
        """Per-map, per-group code lengths, shape ``(L, K)``."""
        counts = self.grouping.counts(Y)
        return self.cost_table[np.arange(counts.shape[1]), counts]

    def map_bits(self, Y: np.ndarray) -> np.ndarray:
        return self.group_bits(Y).sum(axis=1)

    def __eq__(self, other):
        if not isinstance(other, CoocModel):
            return NotImplemented
        return (self.grouping == other.grouping and self.histograms == other.histograms
                and self.meta == other.meta)


def exact_map_bits(y: SignificanceMap, g: Grouping,
                   hists: Sequence[GroupHistogram]) -> float:
    """``-log2 q(y | theta)`` under the exact mixture (no Stirling relaxation)."""
    if y.domain != g.domain:
        raise ValueError("map and grouping live on different domains")
    z = group_counts(y, g)
    bits = 0.0
    for k, h in enumerate(hists):
        bits += binom_bits(h.group_size, z[k]) + h.count_bits()[z[k]]
    return float(bits)


def total_bits(maps: Sequence[SignificanceMap], model: CoocModel,
               Y: Optional[np.ndarray] = None) -> tuple[float, float]:
    """Total bits over a set of maps, and bits per index (bits per pixel)."""
    if Y is None:
        Y = stack_maps(maps, model.domain)
    bits = float(model.map_bits(Y).sum())
    return bits, bits / (Y.shape[0] * model.domain.size)

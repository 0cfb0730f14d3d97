"""Alternating minimization of the relaxed Bernoulli-mixture code length.

The quantity being minimized over the grouping ``k(p)``, the per-map group
parameters ``z_l(k)`` and the count histograms ``q_k`` is

    J = sum_{l,k} [ D(m_l(k), s_k, z_l(k)/s_k) - log2 q_k(z_l(k)) ]
        - sum_{k,b} log2 P_k(b)

where ``m_l(k)`` is the observed count of map ``l`` in group ``k``, ``D`` is
``bernoulli_data_bits`` and ``P_k(b)`` is the mass of bin ``b``. The last sum
is the log-density of a flat Dirichlet prior; it makes the add-one smoothed
histogram the exact minimizer of step 2, so that every step is a descent step.

Each iteration runs

1. ``z`` update: per (map, group), the bin center minimizing the prior plus
   data cost given the observed count (``quantized``), or ``z = m``
   (``empirical``);
2. histogram update: smoothed normalized histogram of the chosen bins;
3. grouping update: best-improvement pairwise swaps, which keep every group
   size fixed.
"""

from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numba
import numpy as np

from cooc import rng
from cooc.domain import IndexDomain, SignificanceMap, stack_maps
from cooc.model import (
    CoocModel,
    GroupHistogram,
    Grouping,
    clamp_pi,
    equal_width_edges,
    expected_group_sizes,
)

logger = logging.getLogger(__name__)

INIT_STREAM = 16
_SWAP_EPS = 1e-9


@dataclass(frozen=True)
class FitConfig:
    size: int
    bins: int = 8
    max_iter: int = 50
    tol: float = 1e-6
    init: str = "random"
    seed: int = 0
    z_mode: str = "empirical"
    swap_passes: int = 4

    def __post_init__(self):
        if self.size < 2:
            raise ValueError("group size must be at least 2")
        if self.bins < 2:
            raise ValueError("need at least 2 bins")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")
        if not self.tol > 0:
            raise ValueError("tolerance must be positive")
        if self.init not in ("random", "square-blocks"):
            raise ValueError(f"unknown init {self.init!r}")
        if self.z_mode not in ("quantized", "empirical"):
            raise ValueError(f"unknown z mode {self.z_mode!r}")
        if self.swap_passes < 1:
            raise ValueError("swap_passes must be at least 1")


@dataclass
class FitTrace:
    """Objective after every iteration and the change produced by each step.

    ``objective[0]`` is the value at initialization; ``objective[i]`` follows
    iteration ``i``.
    """

    objective: list = field(default_factory=list)
    step_deltas: list = field(default_factory=list)

    def is_monotone(self, rtol: float = 1e-9) -> bool:
        slack = rtol * max(1.0, abs(self.objective[0])) if self.objective else 0.0
        steps_ok = all(d <= slack for row in self.step_deltas for d in row)
        totals_ok = all(b - a <= slack for a, b in zip(self.objective, self.objective[1:]))
        return steps_ok and totals_ok

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["iteration", "bits", "step1_delta", "step2_delta", "step3_delta"])
        writer.writerow([0, repr(self.objective[0]), "", "", ""])
        for i, (bits, deltas) in enumerate(zip(self.objective[1:], self.step_deltas), start=1):
            writer.writerow([i, repr(bits)] + [repr(d) for d in deltas])
        return buf.getvalue()


# ---------------------------------------------------------------------------
# Initialization
# ---------------------------------------------------------------------------

def init_grouping(domain: IndexDomain, size: int, mode: str = "random",
                  seed: int = 0) -> Grouping:
    """Random balanced partition, or contiguous square blocks in raster order."""
    n = domain.size
    if mode == "random":
        perm = rng.permutation(seed, INIT_STREAM, n)
        assignment = np.empty(n, dtype=np.int64)
        assignment[perm] = np.arange(n) // size
        return Grouping(domain, size, assignment)
    if mode == "square-blocks":
        side = math.isqrt(size)
        if side * side != size:
            raise ValueError(f"square blocks need a square group size, got {size}")
        if domain.kind != "pixel":
            raise ValueError("square blocks are defined on pixel domains only")
        if domain.width % side or domain.height % side:
            raise ValueError(
                f"{side}x{side} blocks do not tile a {domain.width}x{domain.height} grid")
        rows, cols = np.divmod(np.arange(n), domain.width)
        assignment = (rows // side) * (domain.width // side) + cols // side
        return Grouping(domain, size, assignment)
    raise ValueError(f"unknown init mode {mode!r}")


# ---------------------------------------------------------------------------
# Bin layout shared by all groups
# ---------------------------------------------------------------------------

class _Bins:
    """Per-group bin geometry, padded to a common bin count."""

    def __init__(self, edges_per_group: Sequence[np.ndarray]):
        self.edges = [np.asarray(e, dtype=np.int64) for e in edges_per_group]
        self.sizes = np.array([e[-1] - 1 for e in self.edges], dtype=np.int64)
        self.n_groups = len(self.edges)
        self.n_bins = np.array([e.size - 1 for e in self.edges])
        bmax = int(self.n_bins.max())
        smax = int(self.sizes.max())
        self.valid = np.arange(bmax)[None, :] < self.n_bins[:, None]
        self.centers = np.zeros((self.n_groups, bmax))
        self.log_widths = np.zeros((self.n_groups, bmax))
        self.bin_of = np.zeros((self.n_groups, smax + 1), dtype=np.int64)
        for k, e in enumerate(self.edges):
            nb = e.size - 1
            self.centers[k, :nb] = (e[:-1] + e[1:] - 1) / 2.0
            self.log_widths[k, :nb] = np.log2(np.diff(e))
            self.bin_of[k, : e[-1]] = np.repeat(np.arange(nb), np.diff(e))
        sizes = self.sizes[:, None].astype(np.float64)
        pi = clamp_pi(self.centers, sizes)
        self.neg_log_pi = -np.log2(pi)
        self.neg_log_1mpi = -np.log2(1.0 - pi)

    @classmethod
    def for_sizes(cls, sizes, n_bins: int) -> "_Bins":
        return cls([equal_width_edges(int(s), n_bins) for s in sizes])

    @classmethod
    def from_hists(cls, hists: Sequence[GroupHistogram]) -> "_Bins":
        return cls([h.edges for h in hists])

    def log_probs(self, hists: Sequence[GroupHistogram]) -> np.ndarray:
        out = np.full(self.valid.shape, -np.inf)
        for k, h in enumerate(hists):
            out[k, : h.n_bins] = np.log2(h.probs)
        return out

    def hists(self, log_p: np.ndarray) -> list:
        return [GroupHistogram(e, 2.0 ** log_p[k, : e.size - 1]) for k, e in enumerate(self.edges)]

    def data_bits(self, counts: np.ndarray, zbin: np.ndarray) -> np.ndarray:
        """Data bits with ``z`` on the center of bin ``zbin``, or ``z = m`` when ``zbin`` is None."""
        if zbin is None:
            s = self.sizes[None, :].astype(np.float64)
            pi = clamp_pi(counts, s)
            return -(counts * np.log2(pi) + (s - counts) * np.log2(1.0 - pi))
        k = np.arange(self.n_groups)[None, :]
        return counts * self.neg_log_pi[k, zbin] + (self.sizes - counts) * self.neg_log_1mpi[k, zbin]


def _objective(bins: _Bins, counts, zbin, log_p, z_mode: str) -> float:
    k = np.arange(bins.n_groups)[None, :]
    prior = -(log_p[k, zbin] - bins.log_widths[k, zbin])
    penalty = -log_p[bins.valid].sum()
    data = bins.data_bits(counts, None if z_mode == "empirical" else zbin)
    return float(data.sum() + prior.sum() + penalty)


# ---------------------------------------------------------------------------
# Step 1: Bernoulli parameters
# ---------------------------------------------------------------------------

def _step1(bins: _Bins, counts: np.ndarray, log_p: np.ndarray, z_mode: str) -> np.ndarray:
    k = np.arange(bins.n_groups)[None, :]
    if z_mode == "empirical":
        return bins.bin_of[k, counts]
    m = counts[:, :, None].astype(np.float64)
    s = bins.sizes[None, :, None].astype(np.float64)
    cost = (m * bins.neg_log_pi[None] + (s - m) * bins.neg_log_1mpi[None]
            - (log_p - bins.log_widths)[None])
    cost = np.where(bins.valid[None], cost, np.inf)
    best = cost.min(axis=2, keepdims=True)
    # ties: nearest center to the observed count, then the smaller center
    distance = np.where(cost == best, np.abs(bins.centers[None] - m), np.inf)
    return np.argmin(distance, axis=2)


def step1_update_z(counts: np.ndarray, hists: Sequence[GroupHistogram],
                   z_mode: str = "empirical") -> np.ndarray:
    """Choose ``z_l(k)`` for every (map, group) given observed counts ``m_l(k)``.

    In quantized mode ``z`` is the bin center minimizing
    ``-log2 q_k(z) + bernoulli_data_bits(m, s_k, z / s_k)``; in empirical mode
    ``z = m``. Returns a float ``(L, K)`` array.
    """
    counts = np.atleast_2d(np.asarray(counts, dtype=np.int64))
    if z_mode == "empirical":
        return counts.astype(np.float64)
    bins = _Bins.from_hists(hists)
    zbin = _step1(bins, counts, bins.log_probs(hists), z_mode)
    return bins.centers[np.arange(bins.n_groups)[None, :], zbin]


# ---------------------------------------------------------------------------
# Step 2: histograms
# ---------------------------------------------------------------------------

def _step2(bins: _Bins, zbin: np.ndarray) -> np.ndarray:
    n_maps = zbin.shape[0]
    bmax = bins.valid.shape[1]
    flat = (np.arange(bins.n_groups)[None, :] * bmax + zbin).ravel()
    tally = np.bincount(flat, minlength=bins.n_groups * bmax).reshape(bins.n_groups, bmax)
    probs = (tally + 1.0) / (n_maps + bins.n_bins[:, None])
    return np.where(bins.valid, np.log2(np.where(bins.valid, probs, 1.0)), -np.inf)


def step2_update_hists(z: np.ndarray, group_sizes: Sequence[int], n_bins: int) -> list:
    """Add-one smoothed histogram of ``z_l(k)`` over each group's bins."""
    z = np.atleast_2d(np.asarray(z, dtype=np.float64))
    if z.shape[0] < 1:
        raise ValueError("need at least one map")
    bins = _Bins.for_sizes(group_sizes, n_bins)
    k = np.arange(bins.n_groups)
    zbin = np.stack([np.searchsorted(bins.edges[j], z[:, j], side="right") - 1 for j in k], axis=1)
    return bins.hists(_step2(bins, zbin))


# ---------------------------------------------------------------------------
# Step 3: grouping
# ---------------------------------------------------------------------------

def assignment_costs(Y: np.ndarray, pi: np.ndarray) -> np.ndarray:
    """``c(p, k) = sum_l -log2 [pi_lk if p in y_l else 1 - pi_lk]``, shape ``(P, K)``."""
    a1 = -np.log2(pi)
    a0 = -np.log2(1.0 - pi)
    return Y.T.astype(np.float64) @ (a1 - a0) + a0.sum(axis=0)[None, :]


def _swap_pass_linear(cost: np.ndarray, assign: np.ndarray) -> int:
    """One pass of best-improvement swaps for a separable cost; in place."""
    rows = np.arange(assign.size)
    own = cost[rows, assign]
    n_swaps = 0
    for p in range(assign.size):
        a = assign[p]
        delta = cost[p, assign] - own[p] + cost[:, a] - own
        q = int(np.argmin(delta))
        if delta[q] < -_SWAP_EPS:
            b = assign[q]
            assign[p], assign[q] = b, a
            own[p] = cost[p, b]
            own[q] = cost[q, a]
            n_swaps += 1
    return n_swaps


def step3_update_groups(Y: np.ndarray, pi: np.ndarray, grouping: Grouping,
                        max_passes: Optional[int] = 4) -> Grouping:
    """Reassign indices to groups with fixed Bernoulli parameters ``pi``.

    ``pi`` has shape ``(L, K)``; the total cost ``sum_p c(p, k(p))`` never
    increases. ``max_passes=None`` runs until no swap improves.
    """
    cost = assignment_costs(np.asarray(Y, dtype=bool), np.asarray(pi, dtype=np.float64))
    assign = grouping.assignment.copy()
    passes = 0
    while max_passes is None or passes < max_passes:
        passes += 1
        if _swap_pass_linear(cost, assign) == 0:
            break
    return Grouping(grouping.domain, grouping.size, assign)


@numba.njit(cache=True)
def _swap_pass_empirical(Yt, counts, assign, table, sizes):  # pragma: no cover - jitted
    """Best-improvement swaps for the tied ``z = m`` objective; in place.

    ``Yt`` is the ``(P, L)`` uint8 transpose of the maps and ``table[k, m]``
    the per-(map, group) cost at count ``m``. A swap moves each affected count
    by at most one, so exact deltas come from one-step table differences.
    """
    n_idx, n_maps = Yt.shape
    n_groups = table.shape[0]
    up = np.zeros((n_maps, n_groups))
    down = np.zeros((n_maps, n_groups))
    for l in range(n_maps):
        for g in range(n_groups):
            c = counts[l, g]
            if c < sizes[g]:
                up[l, g] = table[g, c + 1] - table[g, c]
            if c > 0:
                down[l, g] = table[g, c - 1] - table[g, c]
    n_swaps = 0
    for p in range(n_idx):
        a = assign[p]
        best = -1e-9
        best_q = -1
        for q in range(n_idx):
            b = assign[q]
            if b == a:
                continue
            delta = 0.0
            for l in range(n_maps):
                yq = Yt[q, l]
                yp = Yt[p, l]
                if yq > yp:
                    delta += up[l, a] + down[l, b]
                elif yq < yp:
                    delta += down[l, a] + up[l, b]
            if delta < best:
                best = delta
                best_q = q
        if best_q >= 0:
            q = best_q
            b = assign[q]
            for l in range(n_maps):
                d = np.int64(Yt[q, l]) - np.int64(Yt[p, l])
                if d != 0:
                    counts[l, a] += d
                    counts[l, b] -= d
                    for g in (a, b):
                        c = counts[l, g]
                        up[l, g] = table[g, c + 1] - table[g, c] if c < sizes[g] else 0.0
                        down[l, g] = table[g, c - 1] - table[g, c] if c > 0 else 0.0
            assign[p] = b
            assign[q] = a
            n_swaps += 1
    return n_swaps


# ---------------------------------------------------------------------------
# Driver
# ---------------------------------------------------------------------------

def fit(maps: Sequence[SignificanceMap], config: FitConfig,
        Y: Optional[np.ndarray] = None,
        grouping: Optional[Grouping] = None) -> tuple[CoocModel, FitTrace]:
    """Fit groups and histograms to training maps.

    ``Y`` may be passed instead of ``maps`` as a precomputed boolean matrix
    (its domain is then taken from ``grouping`` or ``maps[0]``). ``grouping``
    overrides the configured initialization.
    """
    if Y is None:
        Y = stack_maps(maps)
        domain = maps[0].domain
    else:
        Y = np.asarray(Y, dtype=bool)
        domain = grouping.domain if grouping is not None else maps[0].domain
    n_maps, n_idx = Y.shape
    if n_idx != domain.size:
        raise ValueError("maps do not match the domain")
    if config.size > n_idx:
        raise ValueError(f"group size {config.size} exceeds domain size {n_idx}")
    if grouping is None:
        grouping = init_grouping(domain, config.size, config.init, config.seed)
    elif grouping.size != config.size:
        raise ValueError("initial grouping has the wrong group size")

    sizes = expected_group_sizes(n_idx, config.size)
    bins = _Bins.for_sizes(sizes, config.bins)
    log_p = bins.log_probs([GroupHistogram.uniform(int(s), config.bins) for s in sizes])
    assign = grouping.assignment.copy()
    Yf = Y.astype(np.float64)
    Yt = np.ascontiguousarray(Y.T, dtype=np.uint8)
    onehot = np.zeros((n_idx, sizes.size))

    def counts_of(assign):
        onehot[:] = 0.0
        onehot[np.arange(n_idx), assign] = 1.0
        return np.rint(Yf @ onehot).astype(np.int64)

    counts = counts_of(assign)
    kk = np.arange(sizes.size)[None, :]
    zbin = bins.bin_of[kk, counts]
    current = _objective(bins, counts, zbin, log_p, config.z_mode)
    trace = FitTrace(objective=[current])
    slack = 1e-9 * max(1.0, abs(current))

    def record(deltas):
        for i, d in enumerate(deltas, start=1):
            if d > slack:
                raise RuntimeError(f"step {i} increased the objective by {d:.3e} bits")
        trace.step_deltas.append(tuple(deltas))
        trace.objective.append(current)

    iterations = 0
    for iterations in range(1, config.max_iter + 1):
        start = current
        zbin = _step1(bins, counts, log_p, config.z_mode)
        j1 = _objective(bins, counts, zbin, log_p, config.z_mode)
        log_p = _step2(bins, zbin)
        j2 = _objective(bins, counts, zbin, log_p, config.z_mode)
        if config.z_mode == "quantized":
            pi = clamp_pi(bins.centers[kk, zbin], sizes[None, :].astype(np.float64))
            cost = assignment_costs(Y, pi)
            for _ in range(config.swap_passes):
                if _swap_pass_linear(cost, assign) == 0:
                    break
            counts = counts_of(assign)
        else:
            table = _empirical_table(bins, log_p)
            for _ in range(config.swap_passes):
                if _swap_pass_empirical(Yt, counts, assign, table, sizes) == 0:
                    break
            counts = counts_of(assign)
            zbin = bins.bin_of[kk, counts]
        j3 = _objective(bins, counts, zbin, log_p, config.z_mode)
        current = j3
        record((j1 - start, j2 - j1, j3 - j2))
        logger.debug("iteration %d: %.6f bits", iterations, current)
        if (start - current) < config.tol * n_maps * n_idx:
            break

    # the exact likelihood needs the distribution of observed counts, not of
    # the relaxed parameters: re-estimate the histograms from the final counts
    log_p = _step2(bins, bins.bin_of[kk, counts])

    final = Grouping(domain, config.size, assign)
    model = CoocModel(final, tuple(bins.hists(log_p)))
    train_bits = float(model.map_bits(Y).sum())
    meta = dict(asdict(config), iterations=iterations, objective=current,
                train_bits=train_bits, train_bpp=train_bits / (n_maps * n_idx),
                n_maps=n_maps)
    return CoocModel(final, model.histograms, meta), trace


def _empirical_table(bins: _Bins, log_p: np.ndarray) -> np.ndarray:
    """Per-(map, group) cost at count ``m`` when ``z`` is tied to ``m``."""
    smax = bins.bin_of.shape[1] - 1
    m = np.arange(smax + 1)[None, :].astype(np.float64)
    s = bins.sizes[:, None].astype(np.float64)
    pi = clamp_pi(np.minimum(m, s), s)
    mm = np.minimum(m, s)
    data = -(mm * np.log2(pi) + (s - mm) * np.log2(1.0 - pi))
    k = np.arange(bins.n_groups)[:, None]
    b = bins.bin_of
    table = data - (log_p[k, b] - bins.log_widths[k, b])
    return np.where(m <= s, table, np.inf)

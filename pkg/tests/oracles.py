"""Brute-force reference implementations used by the tests."""

import itertools
import math

import numpy as np
from scipy.optimize import linear_sum_assignment

from cooc.domain import IndexDomain
from cooc.model import CoocModel, GroupHistogram, Grouping, equal_width_edges


def all_subsets(n: int) -> np.ndarray:
    """Every subset of ``range(n)`` as a ``(2**n, n)`` boolean matrix."""
    codes = np.arange(2 ** n)[:, None]
    return ((codes >> np.arange(n)[None, :]) & 1).astype(bool)


def random_grouping(rng, domain: IndexDomain, size: int) -> Grouping:
    assignment = np.empty(domain.size, dtype=np.int64)
    assignment[rng.permutation(domain.size)] = np.arange(domain.size) // size
    return Grouping(domain, size, assignment)


def random_model(rng, n: int, size: int, bins: int) -> CoocModel:
    grouping = random_grouping(rng, IndexDomain.flat(n), size)
    hists = []
    for s_k in grouping.group_sizes:
        edges = equal_width_edges(int(s_k), bins)
        probs = rng.dirichlet(np.ones(edges.size - 1)) + 1e-3
        hists.append(GroupHistogram(edges, probs / probs.sum()))
    return CoocModel(grouping, tuple(hists))


def brute_force_counts(members: np.ndarray, grouping: Grouping) -> np.ndarray:
    z = np.zeros(grouping.n_groups, dtype=np.int64)
    for p in range(members.size):
        for k in range(grouping.n_groups):
            if members[p] and grouping.assignment[p] == k:
                z[k] += 1
    return z


def likelihood_product(members: np.ndarray, model: CoocModel) -> float:
    """``q(y) = prod_k q_k(z_k) / C(s_k, z_k)`` evaluated in plain floats."""
    z = brute_force_counts(members, model.grouping)
    q = 1.0
    for k, h in enumerate(model.histograms):
        b = int(np.searchsorted(h.edges, z[k], side="right") - 1)
        q *= h.probs[b] / h.widths[b] / math.comb(h.group_size, int(z[k]))
    return q


def assignment_cost(cost: np.ndarray, assign: np.ndarray) -> float:
    return float(cost[np.arange(assign.size), assign].sum())


def optimal_balanced_cost(cost: np.ndarray, sizes) -> float:
    """Exact minimum of ``sum_p cost[p, k(p)]`` with group ``k`` holding ``sizes[k]`` indices."""
    slots = np.repeat(np.arange(len(sizes)), sizes)
    rows, cols = linear_sum_assignment(cost[:, slots])
    return float(cost[rows, slots[cols]].sum())


def exhaustive_balanced_cost(cost: np.ndarray, sizes) -> float:
    """Same optimum by enumerating every balanced assignment."""
    n = cost.shape[0]
    best = math.inf

    def rec(remaining, k, acc):
        nonlocal best
        if k == len(sizes) - 1:
            best = min(best, acc + cost[list(remaining), k].sum())
            return
        for combo in itertools.combinations(remaining, sizes[k]):
            rest = tuple(p for p in remaining if p not in combo)
            rec(rest, k + 1, acc + cost[list(combo), k].sum())

    rec(tuple(range(n)), 0, 0.0)
    return float(best)


def balanced_instance(seed: int, n_maps: int = 6):
    """Small step-3 instance: at most 12 indices in 2 or 3 groups."""
    from cooc.domain import IndexDomain

    r = np.random.default_rng([3, seed])
    n = int(r.integers(6, 13))
    n_groups = int(r.integers(2, 4))
    size = math.ceil(n / n_groups)
    if math.ceil(n / size) != n_groups:
        size = n // n_groups
    grouping = random_grouping(r, IndexDomain.flat(n), size)
    Y = r.random((n_maps, n)) < r.random((1, n))
    pi = np.clip(r.random((n_maps, grouping.n_groups)), 0.02, 0.98)
    return Y, pi, grouping

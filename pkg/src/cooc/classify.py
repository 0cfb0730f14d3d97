"""Bit-rate sweeps, per-class models, MAP classification and features."""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np

from cooc.domain import IndexDomain, SignificanceMap, stack_maps
from cooc.model import CoocModel, GroupHistogram, Grouping, equal_width_edges
from cooc.optimizer import FitConfig, FitTrace, fit, init_grouping


def fixed_grouping_model(Y: np.ndarray, grouping: Grouping, bins: int,
                         meta: Optional[dict] = None) -> CoocModel:
    """Model on a fixed grouping: smoothed histograms of the observed counts."""
    counts = grouping.counts(Y)
    hists = []
    for k, s_k in enumerate(grouping.group_sizes):
        edges = equal_width_edges(int(s_k), bins)
        tally = np.bincount(np.searchsorted(edges, counts[:, k], side="right") - 1,
                            minlength=edges.size - 1)
        hists.append(GroupHistogram.from_bin_counts(edges, tally))
    return CoocModel(grouping, tuple(hists), dict(meta or {}))


def single_group_model(Y: np.ndarray, domain: IndexDomain, bins: int) -> CoocModel:
    grouping = Grouping(domain, domain.size, np.zeros(domain.size, dtype=np.int64))
    return fixed_grouping_model(Y, grouping, bins, {"size": domain.size, "bins": bins})


# ---------------------------------------------------------------------------
# Group-size sweeps
# ---------------------------------------------------------------------------

SWEEP_COLUMNS = ("size", "log2_size", "opt_train_bpp", "opt_test_bpp", "square_train_bpp",
                 "square_test_bpp", "single_train_bpp", "single_test_bpp")


@dataclass
class SweepResult:
    rows: list

    def column(self, name: str) -> np.ndarray:
        i = SWEEP_COLUMNS.index(name)
        return np.array([row[i] for row in self.rows], dtype=np.float64)

    def best_size(self, column: str = "opt_test_bpp") -> int:
        values = self.column(column)
        return int(self.rows[int(np.nanargmin(values))][0])

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(SWEEP_COLUMNS)
        for row in self.rows:
            writer.writerow([row[0]] + ["" if isinstance(v, float) and math.isnan(v) else repr(v)
                                        for v in row[1:]])
        return buf.getvalue()


def _bpp(model: CoocModel, Y: np.ndarray) -> float:
    return float(model.map_bits(Y).sum()) / Y.size


def sweep_group_sizes(train: Sequence[SignificanceMap], test: Sequence[SignificanceMap],
                      sizes: Sequence[int], config: FitConfig) -> SweepResult:
    """Bits per index against group size for optimized, square and single groups.

    The square-block column is only filled for square sizes whose blocks tile
    a pixel domain; elsewhere it is NaN.
    """
    domain = train[0].domain
    Ytr = stack_maps(train, domain)
    Yte = stack_maps(test, domain)
    single = single_group_model(Ytr, domain, config.bins)
    single_row = (_bpp(single, Ytr), _bpp(single, Yte))
    rows = []
    for s in sizes:
        if not 2 <= s <= domain.size:
            raise ValueError(f"invalid group size {s} for a domain of {domain.size}")
        cfg = replace(config, size=int(s))
        if s == domain.size:
            opt = single
        else:
            opt, _ = fit(None, cfg, Y=Ytr, grouping=init_grouping(domain, s, cfg.init, cfg.seed))
        try:
            square = fixed_grouping_model(Ytr, init_grouping(domain, s, "square-blocks"), config.bins)
            sq = (_bpp(square, Ytr), _bpp(square, Yte))
        except ValueError:
            sq = (math.nan, math.nan)
        rows.append((int(s), math.log2(s), _bpp(opt, Ytr), _bpp(opt, Yte)) + sq + single_row)
    return SweepResult(rows)


# ---------------------------------------------------------------------------
# Per-class models
# ---------------------------------------------------------------------------

@dataclass
class ClassModelSet:
    """One model per class ``d = 0 .. n_classes - 1`` on a shared domain."""

    models: list

    def __post_init__(self):
        if not self.models:
            raise ValueError("need at least one class model")
        first = self.models[0].grouping
        for d, m in enumerate(self.models):
            if m.domain != first.domain or m.grouping.size != first.size:
                raise ValueError(f"class model {d} has a different domain or group size")

    @property
    def n_classes(self) -> int:
        return len(self.models)

    @property
    def domain(self) -> IndexDomain:
        return self.models[0].domain

    @property
    def n_groups(self) -> int:
        return self.models[0].grouping.n_groups


def train_class_models(Y: np.ndarray, labels: Sequence[int], config: FitConfig,
                       domain: IndexDomain, n_classes: Optional[int] = None,
                       threads: int = 1) -> tuple[ClassModelSet, list]:
    """Fit one model per class; class ``d`` uses seed ``config.seed + d``."""
    labels = np.asarray(labels)
    n_classes = n_classes or int(labels.max()) + 1

    def one(d):
        rows = np.flatnonzero(labels == d)
        if rows.size == 0:
            raise ValueError(f"class {d} has no training maps")
        cfg = replace(config, seed=config.seed + d)
        start = init_grouping(domain, cfg.size, cfg.init, cfg.seed)
        model, trace = fit(None, cfg, Y=Y[rows], grouping=start)
        return replace_meta(model, label=d), trace

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            results = list(pool.map(one, range(n_classes)))
    else:
        results = [one(d) for d in range(n_classes)]
    return ClassModelSet([m for m, _ in results]), [t for _, t in results]


def replace_meta(model: CoocModel, **extra) -> CoocModel:
    return CoocModel(model.grouping, model.histograms, {**model.meta, **extra})


# ---------------------------------------------------------------------------
# Classification and features
# ---------------------------------------------------------------------------

def class_scores(Y: np.ndarray, models: ClassModelSet) -> np.ndarray:
    """Exact code length of every map under every class model, ``(N, D)``."""
    Y = np.atleast_2d(Y)
    if Y.shape[1] != models.domain.size:
        raise ValueError("maps do not match the model domain")
    return np.stack([m.map_bits(Y) for m in models.models], axis=1)


def map_classify_batch(Y: np.ndarray, models: ClassModelSet) -> np.ndarray:
    return np.argmin(class_scores(Y, models), axis=1)


def map_classify(y: SignificanceMap, models: ClassModelSet) -> int:
    """Class of shortest code length (largest likelihood); ties go to the smaller id."""
    if y.domain != models.domain:
        raise ValueError("map domain does not match the models")
    return int(map_classify_batch(y.members[None, :], models)[0])


def features_batch(Y: np.ndarray, models: ClassModelSet) -> np.ndarray:
    """Per-(class, group) code lengths, ``(N, D * K)`` in class-major order."""
    Y = np.atleast_2d(Y)
    if Y.shape[1] != models.domain.size:
        raise ValueError("maps do not match the model domain")
    return np.concatenate([m.group_bits(Y) for m in models.models], axis=1)


def extract_features(y: SignificanceMap, models: ClassModelSet) -> np.ndarray:
    if y.domain != models.domain:
        raise ValueError("map domain does not match the models")
    return features_batch(y.members[None, :], models)[0]


def evaluate_error(predictions: Sequence[int], labels: Sequence[int]) -> float:
    predictions = np.asarray(predictions)
    labels = np.asarray(labels)
    if predictions.shape != labels.shape:
        raise ValueError("predictions and labels differ in length")
    if predictions.size == 0:
        raise ValueError("nothing to evaluate")
    return float(np.mean(predictions != labels))

"""Co-occurrence group models of sparse significance maps."""

from cooc.domain import Image, IndexDomain, SignificanceMap, stack_maps
from cooc.model import (
    CoocModel,
    GroupHistogram,
    Grouping,
    bernoulli_data_bits,
    binom_bits,
    exact_map_bits,
    group_counts,
    stirling_bits,
    total_bits,
)
from cooc.optimizer import FitConfig, FitTrace, fit, init_grouping

__version__ = "0.1.0"

__all__ = [
    "Image",
    "IndexDomain",
    "SignificanceMap",
    "stack_maps",
    "CoocModel",
    "GroupHistogram",
    "Grouping",
    "bernoulli_data_bits",
    "binom_bits",
    "exact_map_bits",
    "group_counts",
    "stirling_bits",
    "total_bits",
    "FitConfig",
    "FitTrace",
    "fit",
    "init_grouping",
]

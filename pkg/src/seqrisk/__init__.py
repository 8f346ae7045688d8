"""seqrisk: subsequent-risk forecasting over user post timelines.

Sliding-window sequence model with temporal-decay attention, dual
risk/protective factor heads, dynamic factor-influence alignment, soft
ordinal risk targets, and uncertainty-weighted multi-task training, plus
annotation analytics and graded ordinal evaluation.
"""
from .corpus import (DEFAULT_CATALOG, FactorCatalog, LabeledWindow, Post,
                     RiskLevel, SyntheticConfig, UserTimeline, build_windows,
                     generate_synthetic, load_corpus, split_users,
                     write_corpus)
from .kernels import BACKEND as KERNEL_BACKEND
from .metrics import GradedCounts, GradedScores, graded_counts, graded_scores
from .trainer import TrainConfig, cross_validate, grid_search, sweep, train

__version__ = "0.1.0"

__all__ = [
    "DEFAULT_CATALOG", "FactorCatalog", "LabeledWindow", "Post", "RiskLevel",
    "SyntheticConfig", "UserTimeline", "build_windows", "generate_synthetic",
    "load_corpus", "split_users", "write_corpus", "KERNEL_BACKEND",
    "GradedCounts", "GradedScores", "graded_counts", "graded_scores",
    "TrainConfig", "cross_validate", "grid_search", "sweep", "train",
    "__version__",
]

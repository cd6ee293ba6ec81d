"""Distributed multi-task supervised PCA for two-class Gaussian-like tasks."""

from .core import (
    ClassifierBundle,
    LabelVector,
    SimilarityMatrix,
    build_similarity,
    classify,
    fit_bundle,
    naive_labels,
    optimal_labels,
    projection,
    score,
    threshold,
)
from .errors import (
    DataError,
    DegenerateModelError,
    InsufficientDataError,
    MTLSPCAError,
    StructuralError,
    TransportError,
)
from .layout import ProblemLayout
from .stats import ClassStats, GramEstimate, TaskStats, class_stats, gram_estimate, layout_from_stats, task_stats
from .theory import TheoryModel, gaussian_tail, predicted_error, score_means

__version__ = "0.1.0"

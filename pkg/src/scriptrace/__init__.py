"""Writer identification and verification for handwriting that varies in
speed, built on handcrafted stroke and contour features."""

from .evaluation import Corpus, Pipeline, borda_rank, merge_corpora, nine_tuple, run_setup
from .exceptions import (
    DimensionMismatchError,
    EmptyInkError,
    FeatureFileError,
    IncompleteSetError,
    NoInkError,
    ScriptraceError,
    TooShortError,
)
from .features import FeatureVector, HandcraftedFeatures
from .identify import KNN, LinearOneVsAll, NearestCentroid
from .page import PageAnalysis

__version__ = "0.1.0"

__all__ = [
    "Corpus",
    "DimensionMismatchError",
    "EmptyInkError",
    "FeatureFileError",
    "FeatureVector",
    "HandcraftedFeatures",
    "IncompleteSetError",
    "KNN",
    "LinearOneVsAll",
    "NearestCentroid",
    "NoInkError",
    "PageAnalysis",
    "Pipeline",
    "ScriptraceError",
    "TooShortError",
    "borda_rank",
    "merge_corpora",
    "nine_tuple",
    "run_setup",
]

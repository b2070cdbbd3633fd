"""Automatic die studies for coin corpora.

Pairwise keypoint matching and robust filtering turn a corpus of coin images
into a similarity matrix of match counts; a threshold-swept graph clustering,
selected by the silhouette coefficient, recovers the partition of coins by
striking die.
"""

__version__ = "0.1.0"

from .accel import NUMBA_ENABLED, backend_name
from .corpus import Corpus, GroundTruth, load_ground_truth, load_manifest
from .pipeline import PipelineConfig, run_pipeline

__all__ = [
    "NUMBA_ENABLED",
    "backend_name",
    "Corpus",
    "GroundTruth",
    "load_ground_truth",
    "load_manifest",
    "PipelineConfig",
    "run_pipeline",
    "__version__",
]

"""Decompose in-domain vs out-of-domain detection gaps into hardness and difference."""

__version__ = "0.1.0"

from .decomposition import GapDecomposition, TrialAggregate, aggregate_trials, decompose, scatter_table
from .errors import AudioError, GapError, ManifestError, MetricsError, ScoreFileError, TrainingDivergence
from .manifest import Manifest, Partition, ScoreSet, UtteranceRecord, bind_scores, load_manifest, split
from .metrics import EerResult, RocPoint, eer, roc_points

__all__ = [
    "AudioError",
    "EerResult",
    "GapDecomposition",
    "GapError",
    "Manifest",
    "ManifestError",
    "MetricsError",
    "Partition",
    "RocPoint",
    "ScoreFileError",
    "ScoreSet",
    "TrainingDivergence",
    "TrialAggregate",
    "UtteranceRecord",
    "aggregate_trials",
    "bind_scores",
    "decompose",
    "eer",
    "load_manifest",
    "roc_points",
    "scatter_table",
    "split",
]

"""Feature-based data inferability (FDI) quantification.

Measures how reliably users in a target dataset can be matched to users in
a training dataset from their features alone, under binary, distance-based
and cosine-based inference models.
"""

from __future__ import annotations

__version__ = "0.1.0"

from .dataset import Dataset, FeatureSpace, OverlapView, Role, SparseProfile, build_dataset, overlap
from .distance import Combiner, DistanceConfig
from .estimators import BinaryTopK, CosineTopK, DistanceTopK, NewUserDetector
from .exceptions import FDIError
from .harness import SweepConfig, run_cell, sample_replica, sweep
from .reports import CandidateSet, QuantReport

__all__ = [
    "BinaryTopK",
    "CandidateSet",
    "Combiner",
    "CosineTopK",
    "Dataset",
    "DistanceConfig",
    "DistanceTopK",
    "FDIError",
    "FeatureSpace",
    "NewUserDetector",
    "OverlapView",
    "QuantReport",
    "Role",
    "SparseProfile",
    "SweepConfig",
    "build_dataset",
    "overlap",
    "run_cell",
    "sample_replica",
    "sweep",
]

"""Scikit-learn style wrappers around the Top-K inference models and the detector.

``fit`` takes the training data, ``transform`` returns each target's ranked
candidate ids, ``predict`` returns the best candidate, and ``score`` is the
Top-K hit rate when target and training rows share user ids.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import check_dataset, check_k
from .binary import BinaryParams, topk_infer
from .dataset import Dataset, Role, check_same_space
from .distance import DistanceConfig, topk_infer_distance
from .distribution import topk_infer_cosine
from .exceptions import EmptyTrainingError, SpaceMismatchError
from .newuser import NewUserScanner, estimate_thresholds
from .reports import CandidateSet

__all__ = ["BinaryTopK", "DistanceTopK", "CosineTopK", "NewUserDetector"]


def _check_target(est, X) -> Dataset:
    V = check_dataset(X, Role.TARGET)
    if V.space != est.training_.space:
        if V.N != est.training_.N:
            raise SpaceMismatchError(
                f"target has {V.N} features, training has {est.training_.N}"
            )
        check_same_space(V, est.training_)
    return V


class _TopKBase(BaseEstimator):
    def fit(self, X, y=None):
        U = check_dataset(X, Role.TRAINING)
        if U.n == 0:
            raise EmptyTrainingError("training dataset has no users")
        check_k(self.K, U.n)
        self.training_ = U
        self.n_features_in_ = U.N
        return self

    def _infer(self, v) -> CandidateSet:
        raise NotImplementedError

    def candidates(self, X) -> list[CandidateSet]:
        check_is_fitted(self, "training_")
        V = _check_target(self, X)
        return [self._infer(v) for v in V]

    def transform(self, X) -> np.ndarray:
        """Candidate ids, one row per target, best first."""
        sets = self.candidates(X)
        width = max((len(c) for c in sets), default=0)
        out = np.full((len(sets), width), "", dtype=object)
        for a, c in enumerate(sets):
            out[a, : len(c)] = c.candidates
        return out

    def predict(self, X) -> np.ndarray:
        return np.array([c.candidates[0] for c in self.candidates(X)], dtype=object)

    def score(self, X, y=None) -> float:
        """Fraction of targets whose own id appears among their candidates.

        ``y`` optionally gives the true training id of each target row.
        """
        sets = self.candidates(X)
        truth = [c.user for c in sets] if y is None else [str(t) for t in y]
        return float(np.mean([t in c for t, c in zip(truth, sets)])) if sets else float("nan")


class BinaryTopK(_TopKBase):
    """Hamming-distance Top-K inference over binarised data."""

    def __init__(self, K: int = 1, p: float = 0.9):
        self.K = K
        self.p = p

    def fit(self, X, y=None):
        super().fit(X, y)
        from .dataset import binary_view

        self.training_ = binary_view(self.training_)
        self.params_ = BinaryParams(p=self.p, N=self.training_.N, K=self.K)
        return self

    def _infer(self, v):
        return topk_infer(v.binary(), self.training_, self.params_)


class DistanceTopK(_TopKBase):
    """Smallest l-p distance Top-K inference."""

    def __init__(self, K: int = 1, combiner: str = "product", norm_p: float = 2.0, feature_weights=None):
        self.K = K
        self.combiner = combiner
        self.norm_p = norm_p
        self.feature_weights = feature_weights

    def fit(self, X, y=None):
        super().fit(X, y)
        self.cfg_ = DistanceConfig(self.combiner, self.norm_p, self.feature_weights)
        return self

    def _infer(self, v):
        return topk_infer_distance(v, self.training_, self.K, self.cfg_)


class CosineTopK(_TopKBase):
    """Largest cosine similarity Top-K inference."""

    def __init__(self, K: int = 1, combiner: str = "product", feature_weights=None):
        self.K = K
        self.combiner = combiner
        self.feature_weights = feature_weights

    def fit(self, X, y=None):
        super().fit(X, y)
        self.cfg_ = DistanceConfig(self.combiner, 2.0, self.feature_weights)
        return self

    def _infer(self, v):
        return topk_infer_cosine(v, self.training_, self.K, self.cfg_)


class NewUserDetector(BaseEstimator):
    """Flag target users that have no counterpart in the training data.

    ``fit`` estimates the expected matched-pair statistics by resampling the
    training data at rate ``p``; ``predict`` returns True for new users.
    """

    def __init__(
        self,
        mode: str = "distance",
        xi: float = 0.5,
        p: float = 0.8,
        trials: int = 30,
        seed: int = 0,
        combiner: str = "product",
        norm_p: float = 2.0,
    ):
        self.mode = mode
        self.xi = xi
        self.p = p
        self.trials = trials
        self.seed = seed
        self.combiner = combiner
        self.norm_p = norm_p

    def fit(self, X, y=None):
        U = check_dataset(X, Role.TRAINING)
        self.cfg_ = DistanceConfig(self.combiner, self.norm_p)
        self.thresholds_ = estimate_thresholds(
            U, self.p, self.trials, self.seed, self.cfg_, self.mode, self.xi
        )
        self.training_ = U
        self.n_features_in_ = U.N
        return self

    def detections(self, X):
        check_is_fitted(self, "thresholds_")
        V = _check_target(self, X)
        scanner = NewUserScanner(self.training_, self.thresholds_, self.cfg_)
        return [scanner.detect(v) for v in V]

    def predict(self, X) -> np.ndarray:
        return np.array([d.is_new for d in self.detections(X)], dtype=bool)

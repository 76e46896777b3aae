"""New-user detection from matched-pair distance and cosine thresholds."""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from ._validation import check_xi
from .dataset import Dataset, SparseProfile
from .distance import DistanceConfig, _CombinedTraining, _distance_to_all
from .distribution import _CosineTraining, _cosine_scores
from .exceptions import EmptyTrainingError, FDIError
from .sampling import derive_seed, sample_replica

__all__ = [
    "DetectionMode",
    "NewUserThresholds",
    "estimate_thresholds",
    "Evidence",
    "Detection",
    "detect_new_user",
    "NewUserScanner",
]

CONFIDENT = "confident"
LOW_CONFIDENCE = "low-confidence"


class DetectionMode(str, Enum):
    DISTANCE = "distance"
    DISTRIBUTION = "distribution"


@dataclass(frozen=True)
class NewUserThresholds:
    """Expected matched-pair statistics used as detection thresholds.

    ``zeta`` is the mean bound on a matched-pair distance and ``N`` the
    feature count; together they decide whether a distance verdict is
    labelled confident.
    """

    mu_star_d: float
    mu_star_s: float
    xi: float = 0.5
    mode: DetectionMode = DetectionMode.DISTANCE
    zeta: float = math.nan
    N: int = 0

    def __post_init__(self):
        object.__setattr__(self, "mode", DetectionMode(self.mode))
        object.__setattr__(self, "xi", check_xi(self.xi))
        if not self.mu_star_d >= 0:
            raise FDIError("mu_star_d must be non-negative")
        if not 0.0 <= self.mu_star_s <= 1.0 + 1e-12:
            raise FDIError("mu_star_s must lie in [0, 1]")

    def with_xi(self, xi: float) -> NewUserThresholds:
        return NewUserThresholds(self.mu_star_d, self.mu_star_s, xi, self.mode, self.zeta, self.N)

    def precondition_met(self) -> bool:
        """Whether ``mu_star_d >= zeta * sqrt(2 ln N) / xi`` holds."""
        if self.N < 2 or math.isnan(self.zeta):
            return False
        return self.mu_star_d >= self.zeta * math.sqrt(2.0 * math.log(self.N)) / self.xi


def _row_norms(G) -> np.ndarray:
    return np.sqrt(np.asarray(G.multiply(G).sum(axis=1)).ravel())


def _matched_stats(A: Dataset, B: Dataset, cfg: DistanceConfig):
    """Per-user distance, cosine (NaN if undefined) and distance bound between replicas."""
    GA, GB = cfg.combine_matrix(A.matrix), cfg.combine_matrix(B.matrix)
    diff = (GA - GB).tocsr()
    d = np.array([cfg.norm(diff.data[diff.indptr[i] : diff.indptr[i + 1]]) for i in range(A.n)])
    dots = np.asarray(GA.multiply(GB).sum(axis=1)).ravel()
    na, nb = _row_norms(GA), _row_norms(GB)
    with np.errstate(invalid="ignore", divide="ignore"):
        cos = dots / np.sqrt(na**2 * nb**2)
    cos[(na == 0) | (nb == 0)] = np.nan
    zeta = np.array(
        [
            cfg.norm(GA.data[GA.indptr[i] : GA.indptr[i + 1]])
            + cfg.norm(GB.data[GB.indptr[i] : GB.indptr[i + 1]])
            for i in range(A.n)
        ]
    )
    return d, cos, zeta


def estimate_thresholds(
    U_raw: Dataset,
    p: float,
    trials: int = 30,
    seed: int = 0,
    cfg: DistanceConfig | None = None,
    mode: DetectionMode | str = DetectionMode.DISTANCE,
    xi: float = 0.5,
) -> NewUserThresholds:
    """Average matched-pair distance and cosine over pairs of independent replicas.

    Each trial samples every user twice at rate ``p``. Pairs where either
    replica has zero magnitude are left out of the cosine mean.
    """
    cfg = cfg or DistanceConfig()
    if trials < 30:
        raise FDIError("trials must be at least 30")
    if U_raw.n == 0:
        raise EmptyTrainingError("training dataset has no users")
    d_sum = zeta_sum = cos_sum = 0.0
    cos_count = 0
    for t in range(trials):
        A = sample_replica(U_raw, p, derive_seed(seed, t, 0))
        B = sample_replica(U_raw, p, derive_seed(seed, t, 1))
        d, cos, zeta = _matched_stats(A, B, cfg)
        d_sum += math.fsum(d.tolist())
        zeta_sum += math.fsum(zeta.tolist())
        ok = ~np.isnan(cos)
        cos_sum += math.fsum(cos[ok].tolist())
        cos_count += int(ok.sum())
    total = trials * U_raw.n
    mu_s = cos_sum / cos_count if cos_count else 0.0
    return NewUserThresholds(
        mu_star_d=d_sum / total,
        mu_star_s=min(max(mu_s, 0.0), 1.0),
        xi=xi,
        mode=mode,
        zeta=zeta_sum / total,
        N=U_raw.N,
    )


@dataclass(frozen=True)
class Evidence:
    """Why a verdict was reached.

    ``clause`` names the rule that fired (``d_min``, ``d_max``, ``c_max``) or
    ``none``; ``statistic`` and ``threshold`` are the binding pair.
    """

    user: str
    mode: DetectionMode
    clause: str
    statistic: float
    threshold: float
    confidence: str
    d_min: float = math.nan
    d_max: float = math.nan
    c_max: float = math.nan


@dataclass(frozen=True)
class Detection:
    is_new: bool
    evidence: Evidence

    def as_row(self) -> dict:
        e = self.evidence
        return {
            "user": e.user,
            "mode": e.mode.value,
            "statistic": e.statistic,
            "threshold": e.threshold,
            "verdict": "new" if self.is_new else "known",
            "confidence": e.confidence,
        }


def _decide_distance(user, dists, th: NewUserThresholds) -> Detection:
    d_min, d_max = float(dists.min()), float(dists.max())
    hi = (1.0 + th.xi) * th.mu_star_d
    lo = (1.0 - th.xi) * th.mu_star_d
    conf = CONFIDENT if th.precondition_met() else LOW_CONFIDENCE
    if d_min >= hi:
        clause, stat, thr = "d_min", d_min, hi
    elif d_max <= lo:
        clause, stat, thr = "d_max", d_max, lo
    else:
        clause, stat, thr = "none", d_min, hi
    ev = Evidence(user, DetectionMode.DISTANCE, clause, stat, thr, conf, d_min=d_min, d_max=d_max)
    return Detection(clause != "none", ev)


def _decide_cosine(user, scores, th: NewUserThresholds) -> Detection:
    defined = scores[~np.isnan(scores)]
    # a zero-magnitude target has no similarity evidence at all
    c_max = float(defined.max()) if defined.size else 0.0
    conf = CONFIDENT if defined.size else LOW_CONFIDENCE
    thr = (1.0 - th.xi) * th.mu_star_s
    is_new = c_max <= thr
    ev = Evidence(
        user, DetectionMode.DISTRIBUTION, "c_max" if is_new else "none", c_max, thr, conf, c_max=c_max
    )
    return Detection(is_new, ev)


class NewUserScanner:
    """Classify many target profiles against one training set, reusing its preprocessing."""

    def __init__(self, U: Dataset, thresholds: NewUserThresholds, cfg: DistanceConfig | None = None):
        if U.n == 0:
            raise EmptyTrainingError("training dataset has no users")
        self.U = U
        self.thresholds = thresholds
        self.cfg = cfg or DistanceConfig()
        if thresholds.mode is DetectionMode.DISTANCE:
            self._T = _CombinedTraining(U, self.cfg)
        else:
            self._T = _CosineTraining(U, self.cfg)

    def detect(self, v_prime: SparseProfile) -> Detection:
        xi, xg = self.cfg.combine_profile(v_prime)
        if self.thresholds.mode is DetectionMode.DISTANCE:
            return _decide_distance(v_prime.user, _distance_to_all(xi, xg, self._T), self.thresholds)
        if float(np.dot(xg, xg)) == 0:
            scores = np.full(self.U.n, np.nan)
        else:
            scores = _cosine_scores(xi, xg, self._T)
        return _decide_cosine(v_prime.user, scores, self.thresholds)


def detect_new_user(
    v_prime: SparseProfile,
    U: Dataset,
    thresholds: NewUserThresholds,
    cfg: DistanceConfig | None = None,
) -> Detection:
    """Decide whether ``v_prime`` has no counterpart in ``U``.

    Distance mode flags a user whose nearest training user is far beyond
    the expected matched distance, or whose farthest one is well inside it.
    Distribution mode flags a user whose best cosine falls well below the
    expected matched cosine.
    """
    return NewUserScanner(U, thresholds, cfg).detect(v_prime)

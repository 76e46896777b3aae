"""Naive binary-feature quantification.

Features are 0/1, users are compared by the Hamming (XOR) distance of their
feature vectors, and ``p`` is the probability that a target replica keeps
each feature value of its training counterpart.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._scoring import gather_columns, topk_positions
from ._validation import (
    check_delta,
    check_k,
    check_preservation_p,
    log_or_neg_inf,
    required_count,
)
from .dataset import Dataset, SparseProfile, check_same_space, overlap
from .exceptions import EmptyOverlapError, FDIError, NotBinaryError
from .reports import CandidateSet, QuantReport

__all__ = [
    "BinaryParams",
    "gamma",
    "gamma_xor",
    "pairwise_infer",
    "lemma1_threshold",
    "lemma1_check",
    "corollary1_bound",
    "corollary1_bound_value",
    "gamma_to_all",
    "topk_infer",
    "Lemma2Result",
    "lemma2_check",
    "corollary2_bound",
    "corollary2_bound_value",
    "theorem1_threshold",
    "theorem1_check",
]


@dataclass(frozen=True)
class BinaryParams:
    """Model parameters; ``p`` may not be 1/2."""

    p: float
    N: int
    K: int = 1
    delta: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "p", check_preservation_p(self.p))
        object.__setattr__(self, "delta", check_delta(self.delta))
        if self.N < 1:
            raise FDIError("N must be positive")
        if self.K < 1:
            raise FDIError("K must be at least 1")

    @property
    def separation(self) -> float:
        """``(1 - 2p)^2``."""
        return (1.0 - 2.0 * self.p) ** 2

    @property
    def prefers_small(self) -> bool:
        return self.p > 0.5

    def theta(self, n: int) -> float:
        return (n - self.K) / n


def _require_binary(*profiles: SparseProfile) -> None:
    for x in profiles:
        if not x.is_binary:
            raise NotBinaryError(f"profile {x.user!r} has non-binary weights")


def gamma(x: SparseProfile) -> int:
    """Number of features ``x`` holds."""
    _require_binary(x)
    return len(x)


def gamma_xor(x: SparseProfile, y: SparseProfile) -> int:
    """Hamming distance between two binary profiles."""
    _require_binary(x, y)
    common = np.intersect1d(x.indices, y.indices, assume_unique=True).size
    return len(x) + len(y) - 2 * common


def pairwise_infer(v: SparseProfile, u: SparseProfile, w: SparseProfile, params: BinaryParams) -> str:
    """Attribute ``v`` to whichever of ``u``, ``w`` its XOR distance favours.

    With ``p > 1/2`` the closer user wins, with ``p < 1/2`` the farther one.
    Ties go to the smaller user id. Returns the winner's user id.
    """
    du, dw = gamma_xor(v, u), gamma_xor(v, w)
    if du == dw:
        return min(u.user, w.user)
    if params.prefers_small:
        return u.user if du < dw else w.user
    return u.user if du > dw else w.user


def lemma1_threshold(params: BinaryParams) -> float:
    if params.N < 2:
        raise FDIError("N must be at least 2")
    return (16.0 * math.log(params.N) + 8.0) / params.separation


def lemma1_check(u: SparseProfile, w: SparseProfile, params: BinaryParams) -> bool:
    """True when ``u`` and ``w`` differ in enough features to separate them."""
    return gamma_xor(u, w) >= lemma1_threshold(params)


def corollary1_bound_value(gamma_uw: float, p: float) -> float:
    """Lower bound on ``Pr(v attributed to u)`` for XOR distance ``gamma_uw``."""
    sep = (1.0 - 2.0 * check_preservation_p(p)) ** 2
    return max(0.0, 1.0 - 2.0 * math.exp(-sep * gamma_uw / 8.0))


def corollary1_bound(u: SparseProfile, w: SparseProfile, params: BinaryParams) -> float:
    return corollary1_bound_value(gamma_xor(u, w), params.p)


def gamma_to_all(x: SparseProfile, U: Dataset) -> np.ndarray:
    """XOR distance from ``x`` to every training user, in ``U.users`` order."""
    _require_binary(x)
    if not U.is_binary:
        raise NotBinaryError("training dataset has non-binary weights")
    if x.indices.size and x.indices[-1] >= U.N:
        raise FDIError("profile index outside the feature space")
    rows, _, _ = gather_columns(U.csc, x.indices)
    common = np.bincount(rows, minlength=U.n)
    return len(x) + U.degrees() - 2 * common


def topk_infer(v: SparseProfile, U: Dataset, params: BinaryParams) -> CandidateSet:
    """Top-K candidates by XOR distance (smallest for ``p > 1/2``, largest otherwise)."""
    K = check_k(params.K, U.n)
    scores = gamma_to_all(v, U)
    top = topk_positions(scores, K, largest=not params.prefers_small)
    return CandidateSet(
        v.user, tuple(U.users[i] for i in top), tuple(float(scores[i]) for i in top)
    )


@dataclass(frozen=True)
class Lemma2Result:
    inferable_guaranteed: bool
    min_gamma: float
    threshold: float


def _min_gamma_excluding(u_user: str, U: Dataset, K: int) -> float:
    """Largest achievable ``min Γ(u, w)`` over size ``n-K`` sets of non-matches.

    The best set drops the ``K-1`` non-matches closest to ``u``; for ``K = n``
    the set is empty and the minimum is ``+inf``.
    """
    i = U.user_index(u_user)
    g = np.delete(gamma_to_all(U.row(i), U), i)
    if U.n - K == 0:
        return math.inf
    g.sort()
    return float(g[K - 1])


def _user_of(u) -> str:
    return u.user if isinstance(u, SparseProfile) else str(u)


def lemma2_check(v: SparseProfile, u, U: Dataset, params: BinaryParams) -> Lemma2Result:
    """Check the Top-K sufficient condition for target ``v`` whose true match is ``u``.

    ``u`` is the matching training user (id or profile). The check is exact
    for the existential statement since it uses the optimal excluded set.
    """
    K = check_k(params.K, U.n)
    min_g = _min_gamma_excluding(_user_of(u), U, K)
    theta_n = U.n - K
    threshold = (
        16.0 * math.log(params.N) + 8.0 * log_or_neg_inf(2.0 * theta_n)
    ) / params.separation
    return Lemma2Result(min_g >= threshold, min_g, threshold)


def corollary2_bound_value(gamma_min: float, n: int, K: int, p: float) -> float:
    sep = (1.0 - 2.0 * check_preservation_p(p)) ** 2
    theta_n = n - K
    if theta_n == 0:
        return 1.0
    return max(0.0, 1.0 - 2.0 * theta_n * math.exp(-sep * gamma_min / 8.0))


def corollary2_bound(v: SparseProfile, u, U: Dataset, params: BinaryParams) -> float:
    """Lower bound on ``Pr(u lands in v's Top-K set)`` using the best excluded set."""
    K = check_k(params.K, U.n)
    return corollary2_bound_value(_min_gamma_excluding(_user_of(u), U, K), U.n, K, params.p)


def theorem1_threshold(params: BinaryParams, n: int, m_tilde: int) -> float:
    K = params.K
    arg = 2.0 * params.delta * ((n - K) / n) * m_tilde * n
    return (16.0 * math.log(params.N) + 8.0 * log_or_neg_inf(arg)) / params.separation


def theorem1_check(U: Dataset, V: Dataset, params: BinaryParams) -> QuantReport:
    """Check the (delta, K) condition for every overlap user and aggregate.

    Each overlap user passes when its best achievable minimum XOR distance
    clears the strengthened threshold; the dataset is inferable when at least
    ``floor(delta * m_tilde)`` users pass.
    """
    check_same_space(U, V)
    if not U.is_binary:
        raise NotBinaryError("training dataset has non-binary weights")
    K = check_k(params.K, U.n)
    ov = overlap(U, V)
    if ov.m_tilde == 0:
        raise EmptyOverlapError("no user has features in both datasets")
    threshold = theorem1_threshold(params, U.n, ov.m_tilde)
    rows = []
    for user in ov.users:
        g = _min_gamma_excluding(user, U, K)
        rows.append({"user": user, "gamma_min": g, "threshold": threshold, "pass": g >= threshold})
    return QuantReport(
        model="binary",
        columns=("user", "gamma_min", "threshold", "pass"),
        rows=rows,
        m_tilde=ov.m_tilde,
        required=required_count(params.delta, ov.m_tilde),
        params={"p": params.p, "N": params.N, "K": K, "delta": params.delta, "n": U.n},
    )

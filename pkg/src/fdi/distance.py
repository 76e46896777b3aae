"""Weighted feature-distance quantification.

Each raw weight ``f`` of feature ``i`` is first combined with a model weight
``w_i`` into one coordinate ``g(f, w_i)``; users are then compared by the
l-p distance of their combined vectors.
"""

from __future__ import annotations

import heapq
import math
from collections.abc import Mapping
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
import scipy.sparse as sp

from ._scoring import gather_columns, topk_positions
from ._validation import check_delta, check_k, log_or_neg_inf, required_count
from .dataset import Dataset, SparseProfile, check_same_space, overlap
from .exceptions import BadNormError, EmptyOverlapError, EqualMeansError, FDIError
from .reports import CandidateSet, QuantReport
from .sampling import derive_seed, sample_profile, sample_replica

__all__ = [
    "Combiner",
    "DistanceConfig",
    "idf_weights",
    "distance",
    "distance_to_all",
    "PairStats",
    "StatsTable",
    "estimate_pair_stats",
    "estimate_stats_table",
    "lemma3_check",
    "topk_infer_distance",
    "Lemma4Verdict",
    "lemma4_check",
    "theorem2_check",
]


class Combiner(str, Enum):
    PRODUCT = "product"  # g = w * f
    RAW = "raw"  # g = f
    LOGPRODUCT = "logproduct"  # g = w * ln(1 + f)


@dataclass(frozen=True, eq=False)
class DistanceConfig:
    """How raw weights become coordinates and which l-p norm compares them.

    ``feature_weights`` holds one model weight per feature; ``None`` means 1
    for every feature.
    """

    combiner: Combiner = Combiner.PRODUCT
    norm_p: float = 2.0
    feature_weights: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "combiner", Combiner(self.combiner))
        norm_p = float(self.norm_p)
        if not norm_p >= 1.0:
            raise BadNormError(f"norm_p must be >= 1, got {self.norm_p}")
        object.__setattr__(self, "norm_p", norm_p)
        if self.feature_weights is not None:
            w = np.asarray(self.feature_weights, dtype=np.float64)
            if w.ndim != 1 or np.any(w < 0) or not np.all(np.isfinite(w)):
                raise FDIError("feature_weights must be a 1-d array of finite non-negative values")
            w.flags.writeable = False
            object.__setattr__(self, "feature_weights", w)

    def combine(self, indices: np.ndarray, values: np.ndarray) -> np.ndarray:
        if self.combiner is Combiner.RAW:
            return np.asarray(values, dtype=np.float64)
        f = values if self.combiner is Combiner.PRODUCT else np.log1p(values)
        if self.feature_weights is None:
            return np.asarray(f, dtype=np.float64)
        return self.feature_weights[indices] * f

    def combine_profile(self, x: SparseProfile) -> tuple[np.ndarray, np.ndarray]:
        """Combined coordinates of ``x`` as ``(indices, values)`` with zeros dropped."""
        g = self.combine(x.indices, x.weights)
        nz = g != 0
        return x.indices[nz], g[nz]

    def combine_matrix(self, X: sp.csr_matrix) -> sp.csr_matrix:
        G = X.copy()
        G.data = self.combine(G.indices, G.data)
        G.eliminate_zeros()
        return G

    def norm(self, values: np.ndarray) -> float:
        a = np.abs(values)
        if math.isinf(self.norm_p):
            return float(a.max()) if a.size else 0.0
        return float(np.sum(a ** self.norm_p) ** (1.0 / self.norm_p))


def idf_weights(U: Dataset) -> np.ndarray:
    """Inverse feature frequency ``ln(n / degree)``; unused features get 0."""
    deg = np.bincount(U.matrix.indices, minlength=U.N).astype(np.float64)
    w = np.zeros(U.N)
    used = deg > 0
    w[used] = np.log(U.n / deg[used])
    return w


def distance(x: SparseProfile, y: SparseProfile, cfg: DistanceConfig | None = None) -> float:
    """l-p distance between the combined vectors of ``x`` and ``y``."""
    cfg = cfg or DistanceConfig()
    xi, xg = cfg.combine_profile(x)
    yi, yg = cfg.combine_profile(y)
    union = np.union1d(xi, yi)
    dx = np.zeros(union.size)
    dy = np.zeros(union.size)
    dx[np.searchsorted(union, xi)] = xg
    dy[np.searchsorted(union, yi)] = yg
    return cfg.norm(dx - dy)


class _CombinedTraining:
    """Combined training matrix plus the per-entry data reused across targets."""

    def __init__(self, U: Dataset, cfg: DistanceConfig):
        self.n = U.n
        self.N = U.N
        G = cfg.combine_matrix(U.matrix)
        self.csc = G.tocsc()
        self.indices = G.indices
        self.entry_row = np.repeat(np.arange(U.n), np.diff(G.indptr))
        self.p = cfg.norm_p
        self.abs_data = np.abs(G.data)
        self.pow_data = self.abs_data if math.isinf(self.p) else self.abs_data ** self.p
        self._mask = np.zeros(U.N, dtype=bool)


_CHUNK = 512


def _distance_to_all(xi, xg, T: _CombinedTraining) -> np.ndarray:
    p = T.p
    inf_norm = math.isinf(p)
    mask = T._mask
    mask[xi] = True
    try:
        outside = ~mask[T.indices]
        if inf_norm:
            acc = np.zeros(T.n)
            np.maximum.at(acc, T.entry_row[outside], T.abs_data[outside])
        else:
            acc = np.bincount(
                T.entry_row[outside], weights=T.pow_data[outside], minlength=T.n
            ).astype(np.float64)
    finally:
        mask[xi] = False

    for lo in range(0, xi.size, _CHUNK):
        cols, vals = xi[lo : lo + _CHUNK], xg[lo : lo + _CHUNK]
        rows, which, data = gather_columns(T.csc, cols)
        touched, local = np.unique(rows, return_inverse=True)
        block = np.zeros((touched.size, cols.size))
        block[local, which] = data
        diff = np.abs(vals[None, :] - block)
        untouched = np.ones(T.n, dtype=bool)
        untouched[touched] = False
        if inf_norm:
            acc[touched] = np.maximum(acc[touched], diff.max(axis=1, initial=0.0))
            acc[untouched] = np.maximum(acc[untouched], np.abs(vals).max(initial=0.0))
        else:
            acc[touched] += (diff ** p).sum(axis=1)
            acc[untouched] += np.sum(np.abs(vals) ** p)
    if inf_norm:
        return acc
    return acc ** (1.0 / p)


def distance_to_all(x: SparseProfile, U: Dataset, cfg: DistanceConfig | None = None) -> np.ndarray:
    """Distance from ``x`` to every training user, in ``U.users`` order."""
    cfg = cfg or DistanceConfig()
    xi, xg = cfg.combine_profile(x)
    return _distance_to_all(xi, xg, _CombinedTraining(U, cfg))


@dataclass(frozen=True)
class PairStats:
    """Expected distance ``mu`` and a sure upper bound ``zeta`` for one pair."""

    mu: float
    zeta: float
    samples: int = 1

    def __post_init__(self):
        if self.mu < 0 or self.zeta < 0:
            raise FDIError("mu and zeta must be non-negative")


def estimate_pair_stats(
    x_raw: SparseProfile,
    y_raw: SparseProfile,
    p: float,
    trials: int = 100,
    seed=0,
    cfg: DistanceConfig | None = None,
) -> PairStats:
    """Monte-Carlo mean distance between independent Bernoulli(``p``) thinnings.

    ``zeta`` is ``||g(x)|| + ||g(y)||``, which bounds every replica distance by
    the triangle inequality since thinning never grows a norm.
    """
    cfg = cfg or DistanceConfig()
    if trials < 30:
        raise FDIError("trials must be at least 30")
    if not 0.0 <= p <= 1.0:
        raise FDIError("p must lie in [0, 1]")
    rng = np.random.default_rng(seed)
    total = 0.0
    for _ in range(trials):
        total += distance(sample_profile(x_raw, p, rng), sample_profile(y_raw, p, rng), cfg)
    mu = total / trials
    zeta = cfg.norm(cfg.combine_profile(x_raw)[1]) + cfg.norm(cfg.combine_profile(y_raw)[1])
    return PairStats(mu=mu, zeta=max(zeta, mu), samples=trials)


@dataclass(frozen=True)
class StatsTable:
    """Pair statistics for a block of targets against every training user.

    ``mu[a, b]`` and ``zeta[a, b]`` describe target ``targets[a]`` against
    training user ``users[b]``.
    """

    targets: tuple[str, ...]
    users: tuple[str, ...]
    mu: np.ndarray
    zeta: np.ndarray
    samples: int

    def row(self, target: str) -> tuple[np.ndarray, np.ndarray]:
        a = self.targets.index(target)
        return self.mu[a], self.zeta[a]

    def as_mapping(self, target: str) -> dict[str, PairStats]:
        mu, zeta = self.row(target)
        return {
            u: PairStats(float(m), float(z), self.samples)
            for u, m, z in zip(self.users, mu, zeta)
        }


def estimate_stats_table(
    raw: Dataset,
    p: float,
    trials: int = 30,
    seed: int = 0,
    cfg: DistanceConfig | None = None,
    targets=None,
) -> StatsTable:
    """Estimate pair statistics under the replica-sampling model.

    Each trial draws an independent training replica and target replica of
    ``raw``; target ``v`` is compared with every training replica row, so
    ``mu[v, v]`` is the expected matched-pair distance.
    """
    cfg = cfg or DistanceConfig()
    if trials < 1:
        raise FDIError("trials must be positive")
    targets = tuple(sorted(targets)) if targets is not None else raw.users
    rows = np.array([raw.user_index(t) for t in targets], dtype=np.int64)
    norms = np.array([cfg.norm(cfg.combine_profile(x)[1]) for x in raw])
    mu = np.zeros((rows.size, raw.n))
    for t in range(trials):
        U = sample_replica(raw, p, derive_seed(seed, t, 0))
        V = sample_replica(raw, p, derive_seed(seed, t, 1))
        T = _CombinedTraining(U, cfg)
        for a, r in enumerate(rows):
            xi, xg = cfg.combine_profile(V.row(int(r)))
            mu[a] += _distance_to_all(xi, xg, T)
    mu /= trials
    zeta = np.maximum(norms[rows][:, None] + norms[None, :], mu)
    return StatsTable(targets, raw.users, mu, zeta, trials)


def _inv_sq(z: float) -> float:
    zz = z * z
    return math.inf if zz == 0 else 1.0 / zz


def lemma3_check(stats_vu: PairStats, stats_vw: PairStats, N: int) -> bool:
    """Pairwise distance-separation condition for target ``v``, match ``u``, other ``w``."""
    gap = stats_vw.mu - stats_vu.mu
    if gap == 0:
        raise EqualMeansError("mu(v,u) equals mu(v,w); the condition does not apply")
    if gap > 0:
        lhs = min(_inv_sq(stats_vu.zeta), 0.5 * _inv_sq(stats_vw.zeta))
    else:
        lhs = min(0.5 * _inv_sq(stats_vu.zeta), _inv_sq(stats_vw.zeta))
    return lhs >= 2.0 * (2.0 * math.log(N) + 1.0) / (gap * gap)


def topk_infer_distance(
    v: SparseProfile, U: Dataset, K: int, cfg: DistanceConfig | None = None
) -> CandidateSet:
    """The ``K`` training users closest to ``v``; ties go to the smaller user id."""
    K = check_k(K, U.n)
    d = distance_to_all(v, U, cfg)
    top = topk_positions(d, K, largest=False)
    return CandidateSet(v.user, tuple(U.users[i] for i in top), tuple(float(d[i]) for i in top))


@dataclass(frozen=True)
class Lemma4Verdict:
    """Outcome of a Top-K distance condition for one target.

    ``applicable`` is False when every admissible excluded set must contain a
    user whose mean distance equals the match's; ``passed`` is then False.
    ``threshold`` is the right-hand side ``log_term / mu_min`` and ``lhs`` is
    ``1 / zeta_max**2`` for the reported set.
    """

    user: str
    passed: bool
    applicable: bool
    mu_min: float
    zeta_max: float
    lhs: float
    threshold: float
    equal_mean_users: tuple[str, ...] = ()


def _topk_distance_condition(
    user: str,
    mu_u: float,
    zeta_u: float,
    others: list[str],
    mu_x: np.ndarray,
    zeta_x: np.ndarray,
    keep: int,
    log_term: float,
) -> Lemma4Verdict:
    """Search every size-``keep`` excluded set for one meeting the condition.

    With candidates sorted by squared mean gap (largest first), a set whose
    smallest gap is ``g`` is best completed by the ``keep`` smallest-zeta
    users among those with gap at least ``g``. Scanning ``g`` downwards with
    a heap makes the existential check exact in O(n log n).
    """
    equal = tuple(o for o, m in zip(others, mu_x) if m == mu_u)
    if keep == 0:
        lhs = _inv_sq(zeta_u)
        return Lemma4Verdict(user, True, True, math.inf, zeta_u, lhs, 0.0, equal)
    gaps = (mu_u - mu_x) ** 2
    order = np.argsort(-gaps, kind="stable")
    if gaps[order[keep - 1]] == 0:
        return Lemma4Verdict(user, False, False, 0.0, math.nan, math.nan, math.inf, equal)

    def verdict(g: float, zmax: float, ok: bool) -> Lemma4Verdict:
        zeta_max = max(zeta_u, zmax)
        lhs = _inv_sq(zeta_max)
        return Lemma4Verdict(user, ok, True, g, zeta_max, lhs, log_term / g, equal)

    heap: list[float] = []  # negated zetas, holds the `keep` smallest seen
    reported = None
    j = 0
    while j < order.size:
        g = gaps[order[j]]
        if g == 0:
            break
        # admit the whole group sharing this gap value
        while j < order.size and gaps[order[j]] == g:
            z = zeta_x[order[j]]
            if len(heap) < keep:
                heapq.heappush(heap, -z)
            elif z < -heap[0]:
                heapq.heapreplace(heap, -z)
            j += 1
        if len(heap) < keep:
            continue
        zmax = -heap[0]
        cand = verdict(g, zmax, False)
        if reported is None:
            reported = cand
        if cand.lhs >= cand.threshold:
            return verdict(g, zmax, True)
    return reported


def _as_arrays(stats, v_user: str, U: Dataset):
    if isinstance(stats, StatsTable):
        mu, zeta = stats.row(v_user)
        if stats.users != U.users:
            pos = [stats.users.index(u) for u in U.users]
            mu, zeta = mu[pos], zeta[pos]
        return np.asarray(mu, dtype=float), np.asarray(zeta, dtype=float)
    if v_user in stats and isinstance(stats[v_user], Mapping):
        stats = stats[v_user]
    mu = np.array([stats[u].mu for u in U.users], dtype=float)
    zeta = np.array([stats[u].zeta for u in U.users], dtype=float)
    return mu, zeta


def _verdict_for(v_user, u_user, U, K, stats, log_term) -> Lemma4Verdict:
    mu, zeta = _as_arrays(stats, v_user, U)
    i = U.user_index(u_user)
    others = [x for k, x in enumerate(U.users) if k != i]
    return _topk_distance_condition(
        v_user,
        float(mu[i]),
        float(zeta[i]),
        others,
        np.delete(mu, i),
        np.delete(zeta, i),
        U.n - K,
        log_term,
    )


def lemma4_check(v: SparseProfile, u, U: Dataset, K: int, stats, N: int) -> Lemma4Verdict:
    """Top-K distance condition for target ``v`` whose true match is ``u``.

    ``stats`` maps each training user id to the :class:`PairStats` of its pair
    with ``v`` (or is a :class:`StatsTable` containing ``v``).
    """
    K = check_k(K, U.n)
    u_user = u.user if isinstance(u, SparseProfile) else str(u)
    log_term = 8.0 * math.log(N) + 4.0 * log_or_neg_inf(2.0 * (U.n - K))
    return _verdict_for(v.user, u_user, U, K, stats, log_term)


def theorem2_check(U: Dataset, V: Dataset, K: int, delta: float, stats, N: int) -> QuantReport:
    """(delta, K) distance condition over all overlap users.

    ``stats`` is a :class:`StatsTable` or a mapping ``target -> {user -> PairStats}``.
    """
    check_same_space(U, V)
    K = check_k(K, U.n)
    delta = check_delta(delta)
    ov = overlap(U, V)
    if ov.m_tilde == 0:
        raise EmptyOverlapError("no user has features in both datasets")
    theta = (U.n - K) / U.n
    log_term = 8.0 * math.log(N) + 4.0 * log_or_neg_inf(2.0 * delta * theta * ov.m_tilde * U.n)
    rows = []
    for user in ov.users:
        vd = _verdict_for(user, user, U, K, stats, log_term)
        rows.append(
            {
                "user": user,
                "mu_min": vd.mu_min,
                "zeta_max": vd.zeta_max,
                "threshold": vd.threshold,
                "pass": vd.passed,
                "applicable": vd.applicable,
            }
        )
    return QuantReport(
        model="distance",
        columns=("user", "mu_min", "zeta_max", "threshold", "pass", "applicable"),
        rows=rows,
        m_tilde=ov.m_tilde,
        required=required_count(delta, ov.m_tilde),
        params={"K": K, "delta": delta, "N": N, "n": U.n},
    )

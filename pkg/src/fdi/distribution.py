"""Cosine feature-distribution quantification.

For a target ``v`` with true match ``u`` and competitor ``w`` the comparison
statistic is ``X = sum_i g_v[i] * (|w| g_u[i] - |u| g_w[i])``, where ``|z|``
is the magnitude of a combined vector. ``X / (|v| |u| |w|)`` equals
``cos(v, u) - cos(v, w)`` exactly, so ``X > 0`` means ``u`` wins.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from ._scoring import cosine_rank_key, gather_columns, topk_positions
from ._validation import check_delta, check_k, check_xi, required_count
from .dataset import Dataset, SparseProfile, check_same_space, overlap
from .distance import DistanceConfig
from .exceptions import EmptyOverlapError, FDIError, ZeroVectorError
from .reports import CandidateSet, QuantReport
from .sampling import derive_seed, sample_profile, sample_replica

logger = logging.getLogger(__name__)

__all__ = [
    "cosine",
    "cosine_to_all",
    "CosineTriple",
    "build_cosine_triple",
    "lemma5_threshold",
    "lemma5_check",
    "topk_infer_cosine",
    "Lemma6Verdict",
    "cosine_topk_threshold",
    "lemma6_check",
    "theorem3_check",
]


def cosine(x: SparseProfile, y: SparseProfile, cfg: DistanceConfig | None = None) -> float:
    """Cosine similarity of the combined vectors of ``x`` and ``y``."""
    cfg = cfg or DistanceConfig()
    xi, xg = cfg.combine_profile(x)
    yi, yg = cfg.combine_profile(y)
    nx, ny = float(np.dot(xg, xg)), float(np.dot(yg, yg))
    if nx == 0 or ny == 0:
        raise ZeroVectorError("cosine is undefined for a zero-magnitude vector")
    common, ix, iy = np.intersect1d(xi, yi, assume_unique=True, return_indices=True)
    dot = float(np.dot(xg[ix], yg[iy]))
    return dot / math.sqrt(nx * ny)


class _CosineTraining:
    def __init__(self, U: Dataset, cfg: DistanceConfig):
        G = cfg.combine_matrix(U.matrix)
        self.n = U.n
        self.csc = G.tocsc()
        self.sq_norms = np.asarray(G.multiply(G).sum(axis=1)).ravel()
        self.norms = np.sqrt(self.sq_norms)
        self.G = G


def _cosine_scores(xi, xg, T: _CosineTraining) -> np.ndarray:
    """Cosine against every training row; NaN where the training row is zero."""
    nx = float(np.dot(xg, xg))
    if nx == 0:
        raise ZeroVectorError("target has a zero-magnitude combined vector")
    rows, which, data = gather_columns(T.csc, xi)
    dots = np.bincount(rows, weights=data * xg[which], minlength=T.n)
    with np.errstate(invalid="ignore", divide="ignore"):
        out = dots / np.sqrt(nx * T.sq_norms)
    out[T.sq_norms == 0] = np.nan
    return out


def cosine_to_all(x: SparseProfile, U: Dataset, cfg: DistanceConfig | None = None) -> np.ndarray:
    cfg = cfg or DistanceConfig()
    xi, xg = cfg.combine_profile(x)
    return _cosine_scores(xi, xg, _CosineTraining(U, cfg))


def _ranked_candidates(scores: np.ndarray, K: int) -> np.ndarray:
    """Top-K by descending cosine among rows with a defined score.

    Cosines equal to 12 decimals are ties and go to the smaller user id.
    """
    eligible = np.flatnonzero(~np.isnan(scores))
    if eligible.size == 0:
        raise ZeroVectorError("every training user has a zero-magnitude vector")
    if eligible.size < scores.size:
        logger.warning("%d zero-magnitude training user(s) excluded", scores.size - eligible.size)
    if K > eligible.size:
        logger.warning("K=%d exceeds the %d eligible training users", K, eligible.size)
    return eligible[topk_positions(cosine_rank_key(scores[eligible]), K, largest=True)]


def topk_infer_cosine(
    v: SparseProfile, U: Dataset, K: int, cfg: DistanceConfig | None = None
) -> CandidateSet:
    """The ``K`` training users most cosine-similar to ``v``; ties go to the smaller id."""
    K = check_k(K, U.n)
    scores = cosine_to_all(v, U, cfg)
    top = _ranked_candidates(scores, K)
    return CandidateSet(v.user, tuple(U.users[i] for i in top), tuple(float(scores[i]) for i in top))


@dataclass(frozen=True, eq=False)
class CosineTriple:
    """Comparison statistic for one (target, match, competitor) triple.

    ``x_terms`` are the non-trivial per-feature terms, aligned with
    ``indices`` (the target's support); every other feature contributes 0.
    """

    indices: np.ndarray
    x_terms: np.ndarray
    x_sum: float
    l: float
    h: float
    mu: float
    magnitudes: tuple[float, float, float]


def _terms(vg, u_dense, w_dense, mu_, mw_):
    return vg * (mw_ * u_dense - mu_ * w_dense)


def _values_at(x_idx, x_val, at):
    """Values of a sparse vector at the sorted positions ``at`` (0 when absent)."""
    out = np.zeros(at.size)
    if x_idx.size == 0:
        return out
    pos = np.minimum(np.searchsorted(x_idx, at), x_idx.size - 1)
    hit = x_idx[pos] == at
    out[hit] = x_val[pos[hit]]
    return out


def _x_sum(v, u, w, cfg):
    vi, vg = cfg.combine_profile(v)
    ui, ug = cfg.combine_profile(u)
    wi, wg = cfg.combine_profile(w)
    mu_, mw_ = math.sqrt(float(np.dot(ug, ug))), math.sqrt(float(np.dot(wg, wg)))
    terms = _terms(vg, _values_at(ui, ug, vi), _values_at(wi, wg, vi), mu_, mw_)
    return vi, vg, terms, mu_, mw_


def build_cosine_triple(
    v: SparseProfile,
    u: SparseProfile,
    w: SparseProfile,
    cfg: DistanceConfig | None = None,
    sampling: tuple[float, int, int] | None = None,
    N: int | None = None,
    slack: float = 1.0,
) -> CosineTriple:
    """Build the comparison statistic for ``v`` against ``u`` (match) and ``w``.

    ``l`` and ``h`` are the observed extreme terms (0 included whenever some
    feature lies outside the target's support), scaled by ``slack``. ``mu``
    is the exact ``x_sum`` or, with ``sampling=(p, trials, seed)``, the mean
    of ``x_sum`` over independent Bernoulli(p) thinnings of all three users.
    """
    cfg = cfg or DistanceConfig()
    vi, vg, terms, mu_, mw_ = _x_sum(v, u, w, cfg)
    if mu_ == 0 or mw_ == 0:
        raise ZeroVectorError("training users must have non-zero magnitude")
    mv = math.sqrt(float(np.dot(vg, vg)))
    x_sum = math.fsum(terms.tolist())
    pad = [0.0] if N is None or vi.size < N else []
    vals = terms.tolist() + pad
    l, h = min(vals), max(vals)
    if slack != 1.0:
        if slack < 1.0:
            raise FDIError("slack must be >= 1")
        l, h = l * slack, h * slack
    if sampling is None:
        mu = x_sum
    else:
        p, trials, seed = sampling
        rng = np.random.default_rng(seed)
        acc = 0.0
        for _ in range(int(trials)):
            v2, u2, w2 = (sample_profile(x, p, rng) for x in (v, u, w))
            acc += math.fsum(_x_sum(v2, u2, w2, cfg)[2].tolist())
        mu = acc / int(trials)
    return CosineTriple(vi, terms, x_sum, l, h, mu, (mv, mu_, mw_))


def lemma5_threshold(t: CosineTriple, N: int, xi: float) -> float:
    xi = check_xi(xi)
    return (t.h - t.l) * math.sqrt(2.0 * N * math.log(N)) / xi


def lemma5_check(t: CosineTriple, N: int, xi: float = 0.5) -> bool:
    """Pairwise cosine condition. Point-mass bounds (``h == l``) reduce to ``mu > 0``."""
    threshold = lemma5_threshold(t, N, xi)
    if t.h == t.l:
        return t.mu > 0
    return t.mu >= threshold


def cosine_topk_threshold(h_minus_l, N: int, log_arg: float, xi: float):
    """``(h - l) * sqrt(N * ln(log_arg)) / xi``; a non-positive log clamps to 0."""
    rad = N * math.log(log_arg) if log_arg > 0 else -math.inf
    return np.asarray(h_minus_l) * math.sqrt(max(rad, 0.0)) / xi


@dataclass(frozen=True)
class Lemma6Verdict:
    """Top-K cosine condition for one target.

    ``mu``, ``h_minus_l`` and ``threshold`` describe the binding competitor:
    the weakest member of the best admissible excluded set.
    """

    user: str
    passed: bool
    assessable: bool
    mu: float
    h_minus_l: float
    threshold: float
    n_clearing: int
    needed: int


def _competitor_stats(v_row: SparseProfile, u_row: SparseProfile, U: Dataset, cfg, G_csc, norms):
    """x_sum, l and h for target ``v`` against its match and every training row."""
    vi, vg = cfg.combine_profile(v_row)
    if vg.size == 0:
        zero = np.zeros(U.n)
        return zero, zero.copy(), zero.copy()
    ui, ug = cfg.combine_profile(u_row)
    m_u = math.sqrt(float(np.dot(ug, ug)))
    base = vg * _values_at(ui, ug, vi)  # g_v * g_u on the target's support
    rows, which, data = gather_columns(G_csc, vi)
    touched, local = np.unique(rows, return_inverse=True)
    block = np.zeros((touched.size, vi.size))
    block[local, which] = data
    # untouched rows have g_w = 0 on the support, so their terms are m_w * base
    x_sum = norms * base.sum()
    lo = norms * base.min()
    hi = norms * base.max()
    if touched.size:
        terms = norms[touched, None] * base[None, :] - m_u * vg[None, :] * block
        x_sum[touched] = terms.sum(axis=1)
        lo[touched] = terms.min(axis=1)
        hi[touched] = terms.max(axis=1)
    if vi.size < U.N:
        lo, hi = np.minimum(lo, 0.0), np.maximum(hi, 0.0)
    return x_sum, lo, hi


def _cosine_condition(
    v: SparseProfile,
    u_user: str,
    U: Dataset,
    K: int,
    cfg: DistanceConfig,
    xi: float,
    log_arg: float,
    sampling=None,
    slack: float = 1.0,
    _cache=None,
) -> Lemma6Verdict:
    i = U.user_index(u_user)
    keep = U.n - K
    T = _cache or _CosineTraining(U, cfg)
    vi, vg = cfg.combine_profile(v)
    if vg.size == 0 or T.norms[i] == 0:
        return Lemma6Verdict(v.user, False, False, math.nan, math.nan, math.nan, 0, keep)
    if keep == 0:
        return Lemma6Verdict(v.user, True, True, math.inf, 0.0, 0.0, 0, 0)

    x_sum, lo, hi = _competitor_stats(v, U.row(i), U, cfg, T.csc, T.norms)
    lo, hi = lo * slack, hi * slack
    if sampling is None:
        mu = x_sum
    else:
        p, trials, seed = sampling
        mu = np.zeros(U.n)
        for t in range(int(trials)):
            Ur = sample_replica(U, p, derive_seed(seed, t, 0))
            vr = sample_profile(v, p, np.random.default_rng(derive_seed(seed, t, 1)))
            Tr = _CosineTraining(Ur, cfg)
            mu += _competitor_stats(vr, Ur.row(i), Ur, cfg, Tr.csc, Tr.norms)[0]
        mu /= int(trials)

    width = hi - lo
    thr = cosine_topk_threshold(width, U.N, log_arg, xi)
    clears = np.where(width == 0, mu > 0, mu >= thr)
    # zero-magnitude training users are never ranked, so they never beat u
    clears = clears | (T.norms == 0)
    competitors = np.delete(np.arange(U.n), i)
    c_clear = clears[competitors]
    slack_w = np.where(T.norms[competitors] == 0, np.inf, mu[competitors] - thr[competitors])
    order = np.lexsort((-slack_w, ~c_clear))
    b = competitors[order[keep - 1]]
    n_clearing = int(c_clear.sum())
    return Lemma6Verdict(
        v.user,
        n_clearing >= keep,
        True,
        float(mu[b]),
        float(width[b]),
        float(thr[b]),
        n_clearing,
        keep,
    )


def lemma6_check(
    v: SparseProfile,
    u,
    U: Dataset,
    K: int,
    cfg: DistanceConfig | None = None,
    xi: float = 0.5,
    sampling=None,
    slack: float = 1.0,
) -> Lemma6Verdict:
    """Top-K cosine condition for target ``v`` whose true match is ``u``.

    The target passes when at least ``n - K`` competitors clear their
    threshold, which is exactly the existence of an admissible excluded set.
    """
    cfg = cfg or DistanceConfig()
    xi = check_xi(xi)
    K = check_k(K, U.n)
    u_user = u.user if isinstance(u, SparseProfile) else str(u)
    log_arg = U.N**2 * (U.n - K)
    return _cosine_condition(v, u_user, U, K, cfg, xi, log_arg, sampling, slack)


def theorem3_check(
    U: Dataset,
    V: Dataset,
    K: int,
    delta: float,
    cfg: DistanceConfig | None = None,
    xi: float = 0.5,
    sampling=None,
    slack: float = 1.0,
) -> QuantReport:
    """(delta, K) cosine condition over all overlap users."""
    cfg = cfg or DistanceConfig()
    check_same_space(U, V)
    xi = check_xi(xi)
    K = check_k(K, U.n)
    delta = check_delta(delta)
    ov = overlap(U, V)
    if ov.m_tilde == 0:
        raise EmptyOverlapError("no user has features in both datasets")
    theta = (U.n - K) / U.n
    log_arg = delta * theta * ov.m_tilde * U.n * U.N**2
    T = _CosineTraining(U, cfg)
    rows = []
    for user in ov.users:
        vd = _cosine_condition(V.profile(user), user, U, K, cfg, xi, log_arg, sampling, slack, T)
        rows.append(
            {
                "user": user,
                "mu": vd.mu,
                "h_minus_l": vd.h_minus_l,
                "threshold": vd.threshold,
                "pass": vd.passed,
                "assessable": vd.assessable,
            }
        )
    return QuantReport(
        model="distribution",
        columns=("user", "mu", "h_minus_l", "threshold", "pass", "assessable"),
        rows=rows,
        m_tilde=ov.m_tilde,
        required=required_count(delta, ov.m_tilde),
        params={"K": K, "delta": delta, "xi": xi, "N": U.N, "n": U.n, "slack": slack},
    )

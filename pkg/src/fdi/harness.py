"""Replica-sampling evaluation: Top-K hit rates over (p, K) grids."""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field
from enum import Enum

import numpy as np
from joblib import Parallel, delayed

from ._scoring import cosine_rank_key, rank_of
from ._validation import check_k, check_sampling_p, check_preservation_p
from .binary import gamma_to_all
from .dataset import Dataset, binary_view, overlap
from .distance import DistanceConfig, _CombinedTraining, _distance_to_all
from .distribution import _CosineTraining, _cosine_scores
from .exceptions import DegenerateBoundsError, FDIError
from .reports import dumps_json, rows_to_csv
from .sampling import derive_seed, sample_replica

logger = logging.getLogger(__name__)

__all__ = [
    "Model",
    "sample_replica",
    "overlap_ranks",
    "CellResult",
    "run_cell",
    "SweepConfig",
    "CellStats",
    "SweepResult",
    "sweep",
    "resolve_k",
    "chernoff_upper",
    "degree_stratified_subsample",
]

SWEEP_COLUMNS = ("p", "K", "delta_mean", "delta_stddev", "m_tilde_mean", "reps_used")


class Model(str, Enum):
    BINARY = "binary"
    DISTANCE = "distance"
    DISTRIBUTION = "distribution"


def overlap_ranks(
    U: Dataset,
    V: Dataset,
    model: Model | str,
    cfg: DistanceConfig | None = None,
    binary_p: float = 0.9,
) -> tuple[tuple[str, ...], np.ndarray]:
    """0-based rank of each overlap user's true match among the model's candidates.

    A user whose match can never be a candidate (undefined cosine) gets rank
    ``n``, so it is a miss for every K. Being in the size-K candidate set is
    exactly ``rank < K``.
    """
    model = Model(model)
    cfg = cfg or DistanceConfig()
    users = overlap(U, V).users
    ranks = np.full(len(users), U.n, dtype=np.int64)
    if model is Model.BINARY:
        largest = check_preservation_p(binary_p) < 0.5
        Ub, Vb = binary_view(U), binary_view(V)
        for a, user in enumerate(users):
            scores = gamma_to_all(Vb.profile(user), Ub)
            ranks[a] = rank_of(scores, Ub.user_index(user), largest)
    elif model is Model.DISTANCE:
        T = _CombinedTraining(U, cfg)
        for a, user in enumerate(users):
            xi, xg = cfg.combine_profile(V.profile(user))
            ranks[a] = rank_of(_distance_to_all(xi, xg, T), U.user_index(user), False)
    else:
        T = _CosineTraining(U, cfg)
        for a, user in enumerate(users):
            xi, xg = cfg.combine_profile(V.profile(user))
            i = U.user_index(user)
            if xg.size == 0 or T.sq_norms[i] == 0:
                continue
            scores = _cosine_scores(xi, xg, T)
            scores[np.isnan(scores)] = -np.inf
            ranks[a] = rank_of(cosine_rank_key(scores), i, True)
    return users, ranks


def _replicas(raw: Dataset, p: float, rep_seed: int) -> tuple[Dataset, Dataset]:
    # one uniform per relationship per role, so replicas are nested across p
    U = sample_replica(raw, p, derive_seed(rep_seed, 0))
    V = sample_replica(raw, p, derive_seed(rep_seed, 1))
    return U, V


@dataclass(frozen=True)
class CellResult:
    """``delta`` is ``None`` when the replicas share no user."""

    delta: float | None
    m_tilde: int
    hits: int


def _cell_from_ranks(ranks: np.ndarray, K: int) -> CellResult:
    m = int(ranks.size)
    if m == 0:
        return CellResult(None, 0, 0)
    hits = int(np.count_nonzero(ranks < K))
    return CellResult(hits / m, m, hits)


def run_cell(
    raw: Dataset,
    p: float,
    K: int,
    model: Model | str,
    rep_seed: int,
    cfg: DistanceConfig | None = None,
    binary_p: float = 0.9,
) -> CellResult:
    """Sample a training and a target replica, then measure the Top-K hit rate."""
    p = check_sampling_p(p)
    K = check_k(K, raw.n)
    U, V = _replicas(raw, p, rep_seed)
    _, ranks = overlap_ranks(U, V, model, cfg, binary_p)
    return _cell_from_ranks(ranks, K)


def resolve_k(k, n: int) -> int:
    """Absolute K, or a fraction of ``n`` rounded to the nearest integer >= 1."""
    if isinstance(k, float) and 0.0 < k < 1.0:
        return check_k(max(1, int(round(k * n))), n)
    return check_k(k, n)


@dataclass(frozen=True)
class SweepConfig:
    p_grid: tuple[float, ...]
    k_grid: tuple = (10,)
    model: Model = Model.DISTANCE
    reps: int = 10
    seed: int = 0
    cfg: DistanceConfig = field(default_factory=DistanceConfig)
    binary_p: float = 0.9
    n_jobs: int = 1

    def __post_init__(self):
        object.__setattr__(self, "p_grid", tuple(check_sampling_p(p) for p in self.p_grid))
        object.__setattr__(self, "k_grid", tuple(self.k_grid))
        object.__setattr__(self, "model", Model(self.model))
        if not self.p_grid or not self.k_grid:
            raise FDIError("p_grid and k_grid must be nonempty")
        if int(self.reps) < 1:
            raise FDIError("reps must be at least 1")
        if self.model is Model.BINARY:
            check_preservation_p(self.binary_p)

    def rep_seeds(self) -> list[int]:
        return [int(derive_seed(self.seed, r).generate_state(1, np.uint64)[0]) for r in range(self.reps)]

    def to_dict(self) -> dict:
        cfg = self.cfg
        return {
            "p_grid": list(self.p_grid),
            "k_grid": list(self.k_grid),
            "model": self.model.value,
            "reps": self.reps,
            "seed": self.seed,
            "rep_seeds": self.rep_seeds(),
            "combiner": cfg.combiner.value,
            "norm": cfg.norm_p,
            "feature_weights": None if cfg.feature_weights is None else "custom",
            "binary_p": self.binary_p,
        }


@dataclass
class CellStats:
    delta_mean: float
    delta_stddev: float
    m_tilde_mean: float
    per_rep: list
    reps_used: int


@dataclass
class SweepResult:
    cells: dict
    config: SweepConfig

    def rows(self) -> list[dict]:
        return [
            {"p": p, "K": K, **{k: v for k, v in asdict(c).items() if k != "per_rep"}}
            for (p, K), c in sorted(self.cells.items())
        ]

    def to_csv(self) -> str:
        return rows_to_csv(SWEEP_COLUMNS, self.rows())

    def manifest(self) -> dict:
        return {
            "config": self.config.to_dict(),
            "cells": [
                {"p": p, "K": K, "per_rep": c.per_rep} for (p, K), c in sorted(self.cells.items())
            ],
        }

    def manifest_json(self) -> str:
        return dumps_json(self.manifest())


def _rep_task(raw, p, rep_seed, model, cfg, binary_p):
    U, V = _replicas(raw, p, rep_seed)
    return overlap_ranks(U, V, model, cfg, binary_p)[1]


def sweep(raw: Dataset, config: SweepConfig) -> SweepResult:
    """Run every (p, K) cell ``reps`` times and aggregate.

    Replicas depend only on the base seed and the repetition, so every K
    reuses them (hit rates are exactly non-decreasing in K) and replicas at
    larger p contain those at smaller p.
    """
    ks = [resolve_k(k, raw.n) for k in config.k_grid]
    seeds = config.rep_seeds()
    tasks = [(p, r) for p in config.p_grid for r in range(config.reps)]
    results = Parallel(n_jobs=config.n_jobs)(
        delayed(_rep_task)(raw, p, seeds[r], config.model, config.cfg, config.binary_p)
        for p, r in tasks
    )
    ranks = dict(zip(tasks, results))
    cells = {}
    for p in config.p_grid:
        for K in ks:
            per_rep = [_cell_from_ranks(ranks[(p, r)], K) for r in range(config.reps)]
            used = [c for c in per_rep if c.delta is not None]
            if len(used) < len(per_rep):
                logger.warning(
                    "p=%s K=%s: %d rep(s) with empty overlap excluded",
                    p, K, len(per_rep) - len(used),
                )
            deltas = np.array([c.delta for c in used])
            cells[(p, K)] = CellStats(
                delta_mean=float(deltas.mean()) if used else math.nan,
                delta_stddev=float(deltas.std(ddof=1)) if len(used) > 1 else 0.0,
                m_tilde_mean=float(np.mean([c.m_tilde for c in per_rep])),
                per_rep=[c.delta for c in per_rep],
                reps_used=len(used),
            )
    return SweepResult(cells, config)


class Side(str, Enum):
    UPPER = "upper"
    LOWER = "lower"


def chernoff_upper(n_vars: int, a: float, b: float, mu: float, xi: float, side="upper") -> float:
    """Tail bound for a sum of ``n_vars`` independent variables in ``[a, b]`` with mean ``mu``.

    ``upper`` bounds ``Pr(S >= (1 + xi) mu)`` by ``exp(-2 xi^2 mu^2 / (n (b-a)^2))``;
    ``lower`` bounds ``Pr(S <= (1 - xi) mu)`` by ``exp(-xi^2 mu^2 / (n (b-a)^2))``.
    """
    side = Side(side)
    if not a < b:
        raise DegenerateBoundsError(f"need a < b, got a={a}, b={b}")
    if n_vars < 1:
        raise FDIError("n_vars must be positive")
    if mu < 0 or xi < 0:
        raise FDIError("mu and xi must be non-negative")
    c = 2.0 if side is Side.UPPER else 1.0
    return math.exp(-c * xi * xi * mu * mu / (n_vars * (b - a) ** 2))


def degree_stratified_subsample(raw: Dataset, frac: float, seed: int = 0, strata: int = 10) -> Dataset:
    """Keep about ``frac`` of the users, sampled separately within degree quantile bands."""
    if not 0.0 < frac <= 1.0:
        raise FDIError("frac must lie in (0, 1]")
    rng = np.random.default_rng(seed)
    deg = raw.degrees()
    order = np.argsort(deg, kind="stable")
    keep = []
    for band in np.array_split(order, min(strata, raw.n)):
        take = int(round(frac * band.size))
        if take:
            keep.extend(rng.choice(band, size=take, replace=False).tolist())
    return raw.subset(raw.users[i] for i in sorted(keep))

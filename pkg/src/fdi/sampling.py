"""Bernoulli relationship sampling and seed derivation."""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from ._validation import check_sampling_p
from .dataset import Dataset, SparseProfile


def derive_seed(*keys: int) -> np.random.SeedSequence:
    """Seed sequence for a tuple of integer coordinates (base seed first)."""
    return np.random.SeedSequence([int(k) & 0xFFFFFFFFFFFFFFFF for k in keys])


def _rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def sample_replica(raw: Dataset, p: float, seed) -> Dataset:
    """Keep each relationship of ``raw`` independently with probability ``p``.

    Users and features are all preserved; a user can end up with an empty
    profile. One uniform draw is made per relationship in storage order, so a
    fixed seed gives nested replicas across increasing ``p``.
    """
    p = check_sampling_p(p)
    if p == 1.0:
        return raw
    X = raw.matrix
    keep = _rng(seed).random(X.nnz) < p
    rows = np.repeat(np.arange(raw.n), np.diff(X.indptr))[keep]
    counts = np.bincount(rows, minlength=raw.n)
    indptr = np.r_[0, np.cumsum(counts)]
    Y = sp.csr_matrix((X.data[keep], X.indices[keep], indptr), shape=X.shape)
    return raw.with_matrix(Y)


def sample_profile(x: SparseProfile, p: float, rng: np.random.Generator) -> SparseProfile:
    """Bernoulli(``p``) thinning of a single profile; ``p`` may be 0."""
    if p >= 1.0:
        return x
    keep = rng.random(len(x)) < p
    return SparseProfile(x.user, x.indices[keep], x.weights[keep])

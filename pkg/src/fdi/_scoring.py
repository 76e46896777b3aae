"""Vectorised one-target-against-all-training scoring and tie-broken ranking.

All rankings break ties by row position, and rows are stored in ascending
user-identifier order, so "ties go to the smaller user id" everywhere.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp


def gather_columns(csc: sp.csc_matrix, cols: np.ndarray):
    """Entries of ``csc`` restricted to ``cols``.

    Returns ``(rows, which, data)`` where ``which[t]`` is the position in
    ``cols`` of the column entry ``t`` came from.
    """
    indptr = csc.indptr
    starts = indptr[cols]
    lens = indptr[cols + 1] - starts
    total = int(lens.sum())
    if total == 0:
        empty = np.zeros(0, dtype=np.int64)
        return empty, empty, np.zeros(0)
    offsets = np.repeat(starts - np.r_[0, np.cumsum(lens)[:-1]], lens)
    pos = offsets + np.arange(total)
    which = np.repeat(np.arange(cols.size), lens)
    return csc.indices[pos].astype(np.int64), which, csc.data[pos]


def topk_positions(scores: np.ndarray, K: int, largest: bool) -> np.ndarray:
    """Row positions of the best ``K`` scores, best first, ties by position."""
    key = -scores if largest else scores
    return np.argsort(key, kind="stable")[:K]


def rank_of(scores: np.ndarray, i: int, largest: bool) -> int:
    """0-based position of row ``i`` in the tie-broken order of ``scores``."""
    s = scores[i]
    better = np.count_nonzero(scores > s) if largest else np.count_nonzero(scores < s)
    return int(better + np.count_nonzero(scores[:i] == s))


def ranks_in(scores: np.ndarray, rows: np.ndarray, largest: bool) -> np.ndarray:
    return np.array([rank_of(scores, int(i), largest) for i in rows], dtype=np.int64)


COSINE_DECIMALS = 12


def cosine_rank_key(scores: np.ndarray) -> np.ndarray:
    """Cosines rounded so values equal up to float noise rank as ties."""
    return np.round(scores, COSINE_DECIMALS)

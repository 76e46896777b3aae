"""Sparse user-feature data model.

A :class:`Dataset` is an immutable ``n x N`` CSR matrix of non-negative
relationship weights plus the user and feature identifiers that label its rows
and columns. Users are always stored in ascending identifier order, so row
order doubles as the package-wide tie-break order.
"""

from __future__ import annotations

from collections import Counter
from collections.abc import Iterable, Iterator, Mapping
from dataclasses import dataclass
from enum import Enum
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .exceptions import EmptyDatasetError, FDIError, SpaceMismatchError

__all__ = [
    "Role",
    "FeatureSpace",
    "SparseProfile",
    "Dataset",
    "OverlapView",
    "build_dataset",
    "binary_view",
    "user_degree_histogram",
    "feature_degree_histogram",
    "overlap",
    "align",
]


class Role(str, Enum):
    TRAINING = "training"
    TARGET = "target"


class FeatureSpace:
    """Bijection between feature identifiers and dense indices ``0..N-1``."""

    __slots__ = ("_ids", "_index")

    def __init__(self, ids: Iterable[str]):
        self._ids = tuple(str(i) for i in ids)
        self._index = {fid: k for k, fid in enumerate(self._ids)}
        if len(self._index) != len(self._ids):
            raise FDIError("feature identifiers must be unique")

    @property
    def ids(self) -> tuple[str, ...]:
        return self._ids

    @property
    def N(self) -> int:
        return len(self._ids)

    def index(self, feature_id: str) -> int:
        return self._index[feature_id]

    def __contains__(self, feature_id) -> bool:
        return feature_id in self._index

    def __len__(self) -> int:
        return len(self._ids)

    def __eq__(self, other) -> bool:
        if self is other:
            return True
        if not isinstance(other, FeatureSpace):
            return NotImplemented
        return self._ids == other._ids

    def __hash__(self) -> int:
        return hash(self._ids)

    def __repr__(self) -> str:
        return f"FeatureSpace(N={self.N})"


class SparseProfile:
    """One user's feature vector as strictly increasing indices and positive weights."""

    __slots__ = ("user", "indices", "weights")

    def __init__(self, user: str, indices, weights):
        idx = np.asarray(indices, dtype=np.int64)
        w = np.asarray(weights, dtype=np.float64)
        if idx.ndim != 1 or idx.shape != w.shape:
            raise FDIError("indices and weights must be 1-d arrays of equal length")
        if idx.size:
            if np.any(np.diff(idx) <= 0):
                raise FDIError("profile indices must be strictly increasing")
            if idx[0] < 0:
                raise FDIError("profile indices must be non-negative")
            if not np.all(w > 0) or not np.all(np.isfinite(w)):
                raise FDIError("profile weights must be positive and finite")
        idx.flags.writeable = False
        w.flags.writeable = False
        self.user = str(user)
        self.indices = idx
        self.weights = w

    @classmethod
    def from_pairs(cls, user: str, pairs: Iterable[tuple[int, float]]) -> SparseProfile:
        """Build from unordered ``(index, weight)`` pairs; zero weights are dropped."""
        items = sorted((int(k), float(v)) for k, v in pairs if v != 0)
        keys = [k for k, _ in items]
        if len(set(keys)) != len(keys):
            raise FDIError("duplicate feature index in profile")
        return cls(user, keys, [v for _, v in items])

    @property
    def entries(self) -> list[tuple[int, float]]:
        return list(zip(self.indices.tolist(), self.weights.tolist()))

    @property
    def is_binary(self) -> bool:
        return bool(np.all(self.weights == 1.0))

    def binary(self) -> SparseProfile:
        return SparseProfile(self.user, self.indices, np.ones_like(self.weights))

    def scaled(self, alpha: float) -> SparseProfile:
        return SparseProfile(self.user, self.indices, self.weights * alpha)

    def __len__(self) -> int:
        return int(self.indices.size)

    def __eq__(self, other) -> bool:
        if not isinstance(other, SparseProfile):
            return NotImplemented
        return (
            self.user == other.user
            and np.array_equal(self.indices, other.indices)
            and np.array_equal(self.weights, other.weights)
        )

    def __repr__(self) -> str:
        body = ", ".join(f"{k}:{v:g}" for k, v in self.entries[:8])
        more = ", ..." if len(self) > 8 else ""
        return f"SparseProfile({self.user!r}, {{{body}{more}}})"


class _ProfileMap(Mapping):
    def __init__(self, dataset: Dataset):
        self._d = dataset

    def __getitem__(self, user: str) -> SparseProfile:
        return self._d.profile(user)

    def __iter__(self) -> Iterator[str]:
        return iter(self._d.users)

    def __len__(self) -> int:
        return self._d.n


class Dataset:
    """Immutable collection of user profiles over one :class:`FeatureSpace`.

    Parameters
    ----------
    space : FeatureSpace
    users : sequence of str
        Row labels. Must be unique; they are re-sorted ascending together with
        the matrix rows if needed.
    matrix : scipy sparse matrix of shape (len(users), space.N)
        Non-negative weights. Explicit zeros are removed.
    role : Role
    """

    def __init__(self, space: FeatureSpace, users, matrix, role: Role = Role.TRAINING):
        users = [str(u) for u in users]
        X = sp.csr_matrix(matrix, dtype=np.float64, copy=True)
        if X.shape != (len(users), space.N):
            raise FDIError(
                f"matrix shape {X.shape} does not match ({len(users)}, {space.N})"
            )
        if len(set(users)) != len(users):
            raise FDIError("user identifiers must be unique")
        X.sum_duplicates()
        X.eliminate_zeros()
        if X.nnz and (X.data.min() < 0 or not np.all(np.isfinite(X.data))):
            raise FDIError("weights must be non-negative and finite")
        order = sorted(range(len(users)), key=users.__getitem__)
        if order != list(range(len(users))):
            X = X[order]
            users = [users[i] for i in order]
        X.sort_indices()
        X.data.flags.writeable = False
        self._space = space
        self._users = tuple(users)
        self._pos = {u: i for i, u in enumerate(self._users)}
        self._X = X
        self._role = Role(role)

    # -- basic shape -----------------------------------------------------
    @property
    def space(self) -> FeatureSpace:
        return self._space

    @property
    def users(self) -> tuple[str, ...]:
        return self._users

    @property
    def matrix(self) -> sp.csr_matrix:
        """The underlying CSR matrix (rows in ``users`` order). Treat as read-only."""
        return self._X

    @cached_property
    def csc(self) -> sp.csc_matrix:
        """Column-major copy of :attr:`matrix`, built once on first use."""
        return self._X.tocsc()

    @property
    def role(self) -> Role:
        return self._role

    @property
    def n(self) -> int:
        return len(self._users)

    @property
    def N(self) -> int:
        return self._space.N

    @property
    def n_relationships(self) -> int:
        return int(self._X.nnz)

    @property
    def profiles(self) -> Mapping[str, SparseProfile]:
        return _ProfileMap(self)

    @property
    def is_binary(self) -> bool:
        return bool(np.all(self._X.data == 1.0))

    def degrees(self) -> np.ndarray:
        return np.diff(self._X.indptr)

    def user_index(self, user: str) -> int:
        return self._pos[user]

    def __contains__(self, user) -> bool:
        return user in self._pos

    def profile(self, user: str) -> SparseProfile:
        return self.row(self._pos[user])

    def row(self, i: int) -> SparseProfile:
        lo, hi = self._X.indptr[i], self._X.indptr[i + 1]
        return SparseProfile(self._users[i], self._X.indices[lo:hi], self._X.data[lo:hi])

    __getitem__ = profile

    def __iter__(self) -> Iterator[SparseProfile]:
        return (self.row(i) for i in range(self.n))

    def __len__(self) -> int:
        return self.n

    # -- derived datasets ------------------------------------------------
    def with_matrix(self, matrix, role: Role | None = None) -> Dataset:
        """Same users and space, new weights (rows must already be in ``users`` order)."""
        return Dataset(self._space, self._users, matrix, role or self._role)

    def with_role(self, role: Role) -> Dataset:
        return self.with_matrix(self._X, role)

    def subset(self, users: Iterable[str]) -> Dataset:
        rows = sorted(self._pos[u] for u in set(users))
        return Dataset(self._space, [self._users[i] for i in rows], self._X[rows], self._role)

    def reindex(self, space: FeatureSpace) -> Dataset:
        """Express this dataset over ``space``, which must contain every feature used."""
        if space == self._space:
            return self
        try:
            mapping = np.array([space.index(f) for f in self._space.ids], dtype=np.int64)
        except KeyError as exc:
            raise SpaceMismatchError(f"feature {exc.args[0]!r} missing from target space")
        coo = self._X.tocoo()
        X = sp.csr_matrix(
            (coo.data, (coo.row, mapping[coo.col])), shape=(self.n, space.N)
        )
        return Dataset(space, self._users, X, self._role)

    def to_dict(self) -> dict[str, dict[str, float]]:
        ids = self._space.ids
        return {
            p.user: {ids[k]: w for k, w in p.entries} for p in self
        }

    @classmethod
    def from_matrix(cls, X, users=None, feature_ids=None, role: Role = Role.TRAINING) -> Dataset:
        """Wrap an array-like or sparse matrix. Default labels are zero-padded row/column numbers."""
        X = sp.csr_matrix(X, dtype=np.float64)
        n, N = X.shape
        if users is None:
            width = len(str(max(n - 1, 0)))
            users = [str(i).zfill(width) for i in range(n)]
        if feature_ids is None:
            width = len(str(max(N - 1, 0)))
            feature_ids = [str(j).zfill(width) for j in range(N)]
        return cls(FeatureSpace(feature_ids), users, X, role)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Dataset):
            return NotImplemented
        if self._users != other._users or self._space != other._space:
            return False
        a, b = self._X, other._X
        return (
            self._role == other._role
            and np.array_equal(a.indptr, b.indptr)
            and np.array_equal(a.indices, b.indices)
            and np.array_equal(a.data, b.data)
        )

    def __repr__(self) -> str:
        return (
            f"Dataset(role={self._role.value}, n={self.n}, N={self.N}, "
            f"relationships={self.n_relationships})"
        )


@dataclass(frozen=True)
class OverlapView:
    users: tuple[str, ...]

    @property
    def m_tilde(self) -> int:
        return len(self.users)


def build_dataset(edges: Iterable[tuple], role: Role = Role.TRAINING) -> Dataset:
    """Build a dataset from ``(user, feature_id, weight)`` triples.

    Duplicate ``(user, feature)`` pairs are summed. Zero-weight edges are
    dropped but still register their user and feature, so a user seen only
    with zero weights ends up with an empty profile. Feature indices follow
    ascending identifier order, which makes the result independent of the
    order of ``edges``.
    """
    edges = list(edges)
    if not edges:
        raise EmptyDatasetError("edge list is empty")
    users = np.array([str(e[0]) for e in edges], dtype=object)
    feats = np.array([str(e[1]) for e in edges], dtype=object)
    weights = np.array([float(e[2]) if len(e) > 2 else 1.0 for e in edges])
    if np.any(weights < 0) or not np.all(np.isfinite(weights)):
        raise FDIError("edge weights must be non-negative and finite")

    user_ids, ucode = np.unique(users, return_inverse=True)
    feat_ids, fcode = np.unique(feats, return_inverse=True)
    keep = weights > 0
    ucode, fcode, weights = ucode[keep], fcode[keep], weights[keep]

    # sort fully so duplicate sums are accumulated in a canonical order
    order = np.lexsort((weights, fcode, ucode))
    ucode, fcode, weights = ucode[order], fcode[order], weights[order]
    if ucode.size:
        key = ucode.astype(np.int64) * len(feat_ids) + fcode
        starts = np.flatnonzero(np.r_[True, key[1:] != key[:-1]])
        data = np.add.reduceat(weights, starts)
        rows, cols = ucode[starts], fcode[starts]
    else:
        data = weights
        rows = cols = np.zeros(0, dtype=np.int64)
    X = sp.csr_matrix((data, (rows, cols)), shape=(len(user_ids), len(feat_ids)))
    return Dataset(FeatureSpace(feat_ids.tolist()), user_ids.tolist(), X, role)


def binary_view(d: Dataset) -> Dataset:
    """Replace every positive weight with 1."""
    if d.is_binary:
        return d
    X = d.matrix.copy()
    X.data = np.ones_like(X.data)
    return d.with_matrix(X)


def _histogram(degrees: np.ndarray) -> dict[int, int]:
    return dict(sorted(Counter(degrees.tolist()).items()))


def user_degree_histogram(d: Dataset) -> dict[int, int]:
    """Map degree -> number of users with that many features."""
    return _histogram(d.degrees())


def feature_degree_histogram(d: Dataset) -> dict[int, int]:
    """Map degree -> number of features held by that many users."""
    return _histogram(np.bincount(d.matrix.indices, minlength=d.N))


def check_same_space(a: Dataset, b: Dataset) -> None:
    if a.space != b.space:
        raise SpaceMismatchError("datasets are defined over different feature spaces")


def overlap(U: Dataset, V: Dataset) -> OverlapView:
    """Users holding at least one feature in both ``U`` and ``V``."""
    check_same_space(U, V)
    du, dv = U.degrees(), V.degrees()
    in_u = {u for u, k in zip(U.users, du) if k > 0}
    both = sorted(v for v, k in zip(V.users, dv) if k > 0 and v in in_u)
    return OverlapView(tuple(both))


def align(*datasets: Dataset) -> tuple[Dataset, ...]:
    """Re-express datasets over the union of their feature spaces (ids sorted)."""
    if all(d.space == datasets[0].space for d in datasets):
        return datasets
    ids = sorted(set().union(*(d.space.ids for d in datasets)))
    space = FeatureSpace(ids)
    return tuple(d.reindex(space) for d in datasets)

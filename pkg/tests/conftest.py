from __future__ import annotations

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st

from fdi.dataset import Dataset, FeatureSpace, Role, SparseProfile

settings.register_profile(
    "default", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


def from_dict(rows: dict, role: Role = Role.TRAINING, features=None) -> Dataset:
    """Dataset from ``{user: {feature: weight}}``; feature ids sorted unless given."""
    features = features or sorted({f for prof in rows.values() for f in prof})
    space = FeatureSpace(features)
    users = sorted(rows)
    X = sp.lil_matrix((len(users), space.N))
    for i, u in enumerate(users):
        for f, w in rows[u].items():
            X[i, space.index(f)] = w
    return Dataset(space, users, X.tocsr(), role)


def profile(user: str, dense) -> SparseProfile:
    dense = np.asarray(dense, dtype=float)
    idx = np.flatnonzero(dense)
    return SparseProfile(user, idx, dense[idx])


@st.composite
def dense_matrices(draw, max_n=10, max_N=16, binary=None, min_n=1):
    n = draw(st.integers(min_n, max_n))
    N = draw(st.integers(1, max_N))
    is_binary = draw(st.booleans()) if binary is None else binary
    values = st.integers(0, 1) if is_binary else st.integers(0, 5)
    cells = draw(st.lists(values, min_size=n * N, max_size=n * N))
    return np.array(cells, dtype=float).reshape(n, N)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)

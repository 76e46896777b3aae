from __future__ import annotations


import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fdi.dataset import (
    Dataset,
    FeatureSpace,
    Role,
    SparseProfile,
    align,
    binary_view,
    build_dataset,
    feature_degree_histogram,
    overlap,
    user_degree_histogram,
)
from fdi.exceptions import EmptyDatasetError, FDIError, SpaceMismatchError

from conftest import dense_matrices, from_dict

edge_lists = st.lists(
    st.tuples(st.sampled_from("abcde"), st.sampled_from("vwxyz"), st.integers(0, 4)),
    min_size=1,
    max_size=25,
)


class TestFeatureSpace:
    def test_bijection(self):
        fs = FeatureSpace(["x", "y", "z"])
        assert fs.N == 3
        assert [fs.index(f) for f in fs.ids] == [0, 1, 2]
        assert "y" in fs and "q" not in fs

    def test_duplicate_ids_rejected(self):
        with pytest.raises(FDIError):
            FeatureSpace(["x", "x"])


class TestSparseProfile:
    def test_requires_sorted_unique_indices(self):
        with pytest.raises(FDIError):
            SparseProfile("a", [2, 1], [1.0, 1.0])
        with pytest.raises(FDIError):
            SparseProfile("a", [1, 1], [1.0, 1.0])

    def test_requires_positive_weights(self):
        with pytest.raises(FDIError):
            SparseProfile("a", [0], [0.0])

    def test_from_pairs_sorts(self):
        p = SparseProfile.from_pairs("a", [(3, 2.0), (1, 5.0)])
        assert p.entries == [(1, 5.0), (3, 2.0)]


class TestBuildDataset:
    def test_duplicates_are_summed(self):
        d = build_dataset([("a", "x", 1), ("a", "x", 2), ("b", "y", 5)])
        assert d.to_dict() == {"a": {"x": 3.0}, "b": {"y": 5.0}}
        assert d.N == 2

    def test_empty_input(self):
        with pytest.raises(EmptyDatasetError):
            build_dataset([])

    def test_negative_weight_rejected(self):
        with pytest.raises(FDIError):
            build_dataset([("a", "x", -1)])

    def test_zero_weight_user_kept_with_empty_profile(self):
        d = build_dataset([("a", "x", 1), ("b", "y", 0)])
        assert d.users == ("a", "b")
        assert len(d.profile("b")) == 0
        assert "y" in d.space

    @given(edge_lists, st.randoms())
    def test_order_insensitive(self, edges, rnd):
        shuffled = list(edges)
        rnd.shuffle(shuffled)
        assert build_dataset(edges) == build_dataset(shuffled)

    @given(edge_lists)
    def test_degree_sums_agree(self, edges):
        d = build_dataset(edges)
        n_rel = d.n_relationships
        assert int(d.degrees().sum()) == n_rel
        feat = feature_degree_histogram(d)
        assert sum(k * c for k, c in feat.items()) == n_rel
        assert sum(user_degree_histogram(d).values()) == d.n
        assert sum(feat.values()) == d.N


class TestBinaryView:
    def test_collapses_weights(self):
        d = from_dict({"a": {"x": 3, "y": 7}})
        assert binary_view(d).to_dict() == {"a": {"x": 1.0, "y": 1.0}}

    def test_idempotent(self):
        d = from_dict({"a": {"x": 1}, "b": {"y": 1}})
        assert binary_view(d) is d

    @given(dense_matrices())
    def test_composition(self, X):
        d = Dataset.from_matrix(X)
        assert binary_view(binary_view(d)) == binary_view(d)


class TestHistograms:
    def test_hand_counted(self):
        d = from_dict({"a": {"x": 1, "y": 1}, "b": {"x": 1}})
        assert user_degree_histogram(d) == {1: 1, 2: 1}
        assert feature_degree_histogram(d) == {1: 1, 2: 1}

    def test_zero_degree_bucket(self):
        d = build_dataset([("a", "x", 1), ("b", "x", 0)])
        assert user_degree_histogram(d)[0] == 1


class TestOverlap:
    def test_intersection(self):
        space = ["x", "y"]
        U = from_dict({"a": {"x": 1}, "b": {"y": 1}}, features=space)
        V = from_dict({"b": {"x": 1}, "c": {"y": 1}}, Role.TARGET, features=space)
        ov = overlap(U, V)
        assert ov.users == ("b",) and ov.m_tilde == 1

    def test_subset(self):
        space = ["x", "y"]
        U = from_dict({"a": {"x": 1}, "b": {"y": 1}, "c": {"x": 2}}, features=space)
        V = from_dict({"a": {"y": 1}, "c": {"x": 1}}, Role.TARGET, features=space)
        assert overlap(U, V).m_tilde == 2

    def test_space_mismatch(self):
        U = from_dict({"a": {"x": 1}})
        V = from_dict({"a": {"y": 1}})
        with pytest.raises(SpaceMismatchError):
            overlap(U, V)

    def test_empty_profiles_excluded(self):
        U = from_dict({"a": {"x": 1}, "b": {"x": 1}})
        V = U.with_matrix(U.matrix.multiply(np.array([[1.0], [0.0]])).tocsr())
        assert overlap(U, V).users == ("a",)

    @given(dense_matrices(), st.integers(0, 2**32 - 1))
    def test_symmetric_and_matches_set_oracle(self, X, seed):
        mask = np.random.default_rng(seed).random(X.shape) < 0.5
        U = Dataset.from_matrix(X)
        V = Dataset.from_matrix(X * mask)
        expected = {
            u for u, a, b in zip(U.users, X.sum(axis=1), (X * mask).sum(axis=1)) if a > 0 and b > 0
        }
        assert set(overlap(U, V).users) == expected
        assert overlap(U, V).users == overlap(V, U).users


def test_align_unions_spaces():
    U = from_dict({"a": {"x": 1}})
    V = from_dict({"b": {"y": 2}})
    U2, V2 = align(U, V)
    assert U2.space == V2.space and U2.space.ids == ("x", "y")
    assert V2.to_dict() == {"b": {"y": 2.0}}


def test_users_sorted_regardless_of_input_order():
    d = Dataset(FeatureSpace(["x"]), ["b", "a"], np.array([[1.0], [2.0]]))
    assert d.users == ("a", "b")
    assert d.profile("a").weights.tolist() == [2.0]

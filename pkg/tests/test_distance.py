from __future__ import annotations

import itertools
import math

import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from fdi.dataset import Dataset, SparseProfile
from fdi.distance import (
    Combiner,
    DistanceConfig,
    PairStats,
    distance,
    distance_to_all,
    estimate_pair_stats,
    estimate_stats_table,
    idf_weights,
    lemma3_check,
    lemma4_check,
    theorem2_check,
    topk_infer_distance,
)
from fdi.exceptions import BadKError, BadNormError, EmptyOverlapError, EqualMeansError
from fdi.ingestion import SynthSpec, synth_generate

from conftest import dense_matrices, profile

vectors = st.lists(st.integers(0, 4), min_size=5, max_size=5)
configs = st.builds(
    DistanceConfig,
    combiner=st.sampled_from(list(Combiner)),
    norm_p=st.sampled_from([1.0, 1.5, 2.0, 3.0, math.inf]),
    feature_weights=st.one_of(
        st.none(), st.lists(st.floats(0.1, 3.0), min_size=5, max_size=5).map(np.array)
    ),
)


def dense_distance(a, b, cfg: DistanceConfig) -> float:
    a, b = np.asarray(a, float), np.asarray(b, float)
    w = np.ones(a.size) if cfg.feature_weights is None else cfg.feature_weights
    g = {
        Combiner.PRODUCT: lambda f: w * f,
        Combiner.RAW: lambda f: f,
        Combiner.LOGPRODUCT: lambda f: w * np.log1p(f),
    }[cfg.combiner]
    d = np.abs(g(a) - g(b))
    return float(d.max()) if math.isinf(cfg.norm_p) else float(np.sum(d**cfg.norm_p) ** (1 / cfg.norm_p))


class TestDistance:
    def test_examples(self):
        cfg = DistanceConfig()
        x = SparseProfile("x", [0], [3.0])
        assert distance(x, x, cfg) == 0
        assert distance(x, SparseProfile("y", [0], [1.0]), cfg) == 2.0
        one = DistanceConfig(norm_p=1)
        assert distance(SparseProfile("x", [0], [1.0]), SparseProfile("y", [1], [1.0]), one) == 2.0

    def test_bad_norm(self):
        with pytest.raises(BadNormError):
            DistanceConfig(norm_p=0.5)

    @given(vectors, vectors, configs)
    def test_matches_dense(self, a, b, cfg):
        got = distance(profile("x", a), profile("y", b), cfg)
        assert got == pytest.approx(dense_distance(a, b, cfg), rel=1e-12, abs=1e-12)

    @given(vectors, vectors, vectors, configs)
    def test_metric(self, a, b, c, cfg):
        x, y, z = profile("x", a), profile("y", b), profile("z", c)
        assert distance(x, y, cfg) == pytest.approx(distance(y, x, cfg))
        assert distance(x, x, cfg) == 0
        assert distance(x, z, cfg) <= distance(x, y, cfg) + distance(y, z, cfg) + 1e-9

    @given(dense_matrices(), st.data())
    def test_to_all_matches_pairwise(self, X, data):
        cfg = data.draw(st.sampled_from([DistanceConfig(), DistanceConfig(norm_p=1), DistanceConfig(norm_p=math.inf)]))
        U = Dataset.from_matrix(X)
        v = U.row(data.draw(st.integers(0, U.n - 1)))
        got = distance_to_all(v, U, cfg)
        want = [distance(v, w, cfg) for w in U]
        np.testing.assert_allclose(got, want, rtol=1e-12, atol=1e-12)

    def test_idf_weights(self):
        U = Dataset.from_matrix(np.array([[1, 1, 0], [1, 0, 0]], dtype=float))
        np.testing.assert_allclose(idf_weights(U), [0.0, math.log(2), 0.0])


class TestTopKDistance:
    def test_duplicate_first_and_full(self):
        U = synth_generate(SynthSpec(6, 10, 0.4, seed=1))
        cs = topk_infer_distance(U.row(3), U, 6)
        assert cs.candidates[0] == U.users[3] and cs.scores[0] == 0.0
        assert set(cs.candidates) == set(U.users)

    def test_bad_k(self):
        U = synth_generate(SynthSpec(3, 10, 0.4, seed=1))
        with pytest.raises(BadKError):
            topk_infer_distance(U.row(0), U, 0)

    @given(dense_matrices(binary=False, min_n=2), st.data(), st.floats(0.1, 10))
    def test_nested_and_scale_invariant(self, X, data, alpha):
        U = Dataset.from_matrix(X)
        K = data.draw(st.integers(1, U.n - 1))
        v = U.row(0)
        a = topk_infer_distance(v, U, K).candidates
        b = topk_infer_distance(v, U, K + 1).candidates
        assert set(a) <= set(b)
        scaled = Dataset.from_matrix(X * 4.0)
        c = topk_infer_distance(scaled.row(0), scaled, K).candidates
        assert c == a


def _expected_distance(x, y, p, cfg):
    """Exact E[D] over independent Bernoulli(p) thinnings of x and y."""
    total = 0.0
    for kx in itertools.product([0, 1], repeat=len(x)):
        px = np.prod([p if k else 1 - p for k in kx])
        xs = SparseProfile("x", x.indices[np.array(kx, bool)], x.weights[np.array(kx, bool)])
        for ky in itertools.product([0, 1], repeat=len(y)):
            py = np.prod([p if k else 1 - p for k in ky])
            ys = SparseProfile("y", y.indices[np.array(ky, bool)], y.weights[np.array(ky, bool)])
            total += px * py * distance(xs, ys, cfg)
    return total


class TestPairStats:
    def test_full_rate_is_exact(self):
        x, y = profile("x", [1, 2, 0]), profile("y", [0, 2, 3])
        s = estimate_pair_stats(x, y, 1.0, trials=30)
        assert s.mu == pytest.approx(distance(x, y))
        assert s.zeta == pytest.approx(math.sqrt(5) + math.sqrt(13))

    def test_zero_rate(self):
        assert estimate_pair_stats(profile("x", [1, 2]), profile("y", [3, 0]), 0.0, 30).mu == 0.0

    def test_too_few_trials(self):
        with pytest.raises(Exception):
            estimate_pair_stats(profile("x", [1]), profile("y", [1]), 0.5, trials=10)

    def test_matches_enumeration(self):
        rng = np.random.default_rng(5)
        for _ in range(3):
            a = rng.integers(0, 3, size=10) * (rng.random(10) < 0.6)
            b = rng.integers(0, 3, size=10) * (rng.random(10) < 0.6)
            x, y = profile("x", a), profile("y", b)
            exact = _expected_distance(x, y, 0.5, DistanceConfig())
            trials = 1000
            s = estimate_pair_stats(x, y, 0.5, trials=trials, seed=1)
            # a distance in [0, zeta] has standard deviation at most zeta / 2
            sigma = s.zeta / 2 / math.sqrt(trials)
            assert abs(s.mu - exact) <= 4 * sigma
            assert 0 <= s.mu <= s.zeta

    def test_standard_error_halves(self):
        x, y = profile("x", [1, 2, 0, 4, 1, 0]), profile("y", [0, 2, 3, 1, 0, 2])
        sd = lambda t: np.std([estimate_pair_stats(x, y, 0.5, t, seed=s).mu for s in range(150)])
        ratio = sd(50) / sd(200)
        assert 1.6 < ratio < 2.5

    def test_table_diagonal_at_full_rate(self):
        U = synth_generate(SynthSpec(5, 12, 0.4, seed=2))
        t = estimate_stats_table(U, 1.0, trials=2)
        assert np.all(np.diag(t.mu) == 0)
        assert np.all(t.mu <= t.zeta)


class TestPairSeparation:
    def test_deterministic_distances_pass(self):
        assert lemma3_check(PairStats(1.0, 0.0), PairStats(2.0, 0.0), 100)
        assert lemma3_check(PairStats(2.0, 0.0), PairStats(1.0, 0.0), 100)

    def test_vanishing_gap_fails(self):
        assert not lemma3_check(PairStats(10.0, 12.0), PairStats(10.0 + 1e-6, 12.0), 100)

    def test_equal_means(self):
        with pytest.raises(EqualMeansError):
            lemma3_check(PairStats(1.0, 2.0), PairStats(1.0, 2.0), 10)

    def test_formula_value(self):
        N = 1283
        lhs = min(1 / 64, 1 / 128)
        rhs = 2 * (2 * math.log(N) + 1) / 400
        assert lemma3_check(PairStats(10, 8), PairStats(30, 8), N) == (lhs >= rhs)
        assert lhs < rhs  # 0.0078 vs 0.0768: the formula says not separated

    def test_branches_are_asymmetric(self):
        N = 10
        rhs = 2 * (2 * math.log(N) + 1) / 1.0
        z_small, z_big = 1 / math.sqrt(rhs), 1 / math.sqrt(2 * rhs) * 0.999
        # match closer: needs 1/zeta_vu^2 >= rhs and 1/(2 zeta_vw^2) >= rhs
        assert lemma3_check(PairStats(0.0, z_small), PairStats(1.0, z_big), N)
        assert not lemma3_check(PairStats(0.0, z_big * 1.5), PairStats(1.0, z_big), N)


def _stats_map(mu, zeta, users):
    return {u: PairStats(m, z) for u, m, z in zip(users, mu, zeta)}


def _exhaustive_topk_condition(mu, zeta, i, keep, log_term):
    others = [j for j in range(len(mu)) if j != i]
    if keep == 0:
        return True
    for S in itertools.combinations(others, keep):
        gaps = [(mu[i] - mu[j]) ** 2 for j in S]
        g = min(gaps)
        if g == 0:
            continue
        zmax = max(zeta[j] for j in list(S) + [i])
        lhs = math.inf if zmax == 0 else 1 / zmax**2
        if lhs >= log_term / g:
            return True
    return False


class TestTopKDistanceCondition:
    def _U(self, n):
        return Dataset.from_matrix(np.eye(n))

    def test_full_set_vacuous(self):
        U = self._U(3)
        st_ = _stats_map([0, 1, 2], [5, 5, 5], U.users)
        assert lemma4_check(U.row(0), U.users[0], U, 3, st_, 10).passed

    def test_zero_zeta_passes(self):
        U = self._U(4)
        st_ = _stats_map([0, 1, 2, 3], [0, 0, 0, 0], U.users)
        assert lemma4_check(U.row(0), U.users[0], U, 1, st_, 10).passed

    def test_equal_means_inapplicable(self):
        U = self._U(3)
        st_ = _stats_map([1.0, 1.0, 2.0], [0.1] * 3, U.users)
        vd = lemma4_check(U.row(0), U.users[0], U, 1, st_, 10)
        assert not vd.applicable and not vd.passed
        assert vd.equal_mean_users == (U.users[1],)
        # with K=2 the tied user can be left out of the excluded set
        vd2 = lemma4_check(U.row(0), U.users[0], U, 2, st_, 10)
        assert vd2.applicable and vd2.passed

    @given(
        st.integers(2, 7).flatmap(
            lambda n: st.tuples(
                st.just(n),
                st.lists(st.integers(0, 6).map(float), min_size=n, max_size=n),
                st.lists(st.sampled_from([0.0, 0.05, 0.1, 0.3, 1.0]), min_size=n, max_size=n),
                st.integers(1, n),
                st.integers(0, n - 1),
            )
        )
    )
    def test_matches_exhaustive_search(self, args):
        n, mu, zeta, K, i = args
        U = self._U(n)
        N = 20
        vd = lemma4_check(U.row(i), U.users[i], U, K, _stats_map(mu, zeta, U.users), N)
        log_term = 8 * math.log(N) + 4 * math.log(2 * (n - K)) if n > K else 0.0
        assert vd.passed == _exhaustive_topk_condition(mu, zeta, i, n - K, log_term)

    @given(st.lists(st.floats(0, 5), min_size=5, max_size=5), st.lists(st.floats(0, 0.5), min_size=5, max_size=5),
           st.floats(1.0, 3.0))
    def test_looser_zeta_never_helps(self, mu, zeta, factor):
        U = self._U(5)
        users = U.users
        base = {users[0]: _stats_map(mu, zeta, users)}
        loose = {users[0]: _stats_map(mu, [z * factor for z in zeta], users)}
        V = U.subset([users[0]])
        V = Dataset(U.space, V.users, V.matrix)
        a = theorem2_check(U, V, 2, 1.0, base, 20)
        b = theorem2_check(U, V, 2, 1.0, loose, 20)
        assert not (b.rows[0]["pass"] and not a.rows[0]["pass"])


class TestDatasetDistanceCondition:
    def test_delta_zero(self):
        U = synth_generate(SynthSpec(5, 10, 0.4, seed=3))
        stats = estimate_stats_table(U, 0.8, trials=5)
        assert theorem2_check(U, U, 1, 0.0, stats, U.N).inferable

    def test_single_user_full_k(self):
        U = Dataset.from_matrix(np.array([[1.0, 2.0]]))
        stats = estimate_stats_table(U, 0.8, trials=5)
        rep = theorem2_check(U, U, 1, 1.0, stats, U.N)
        assert rep.inferable and rep.m_tilde == 1

    def test_planted_pass_and_fail(self):
        # far-apart, exactly reproduced users pass; noisy near-duplicates fail
        X = np.eye(4) * 100.0
        U = Dataset.from_matrix(X)
        stats = estimate_stats_table(U, 1.0, trials=1)
        exact = {u: {w: PairStats(float(stats.mu[a, b]), 0.0) for b, w in enumerate(U.users)}
                 for a, u in enumerate(U.users)}
        assert theorem2_check(U, U, 1, 1.0, exact, U.N).inferable
        Y = np.ones((4, 4)) + np.eye(4) * 0.01
        W = Dataset.from_matrix(Y)
        noisy = estimate_stats_table(W, 0.5, trials=30)
        assert not theorem2_check(W, W, 1, 1.0, noisy, W.N).inferable

    def test_columns(self):
        U = synth_generate(SynthSpec(4, 10, 0.4, seed=3))
        rep = theorem2_check(U, U, 1, 1.0, estimate_stats_table(U, 0.8, trials=3), U.N)
        assert rep.columns[:5] == ("user", "mu_min", "zeta_max", "threshold", "pass")

    def test_empty_overlap(self):
        U = Dataset.from_matrix(np.array([[1.0, 0.0], [0.0, 0.0]]))
        V = Dataset.from_matrix(np.array([[0.0, 0.0], [1.0, 0.0]]))
        with pytest.raises(EmptyOverlapError):
            theorem2_check(U, V, 1, 1.0, estimate_stats_table(U, 1.0, 1), 2)

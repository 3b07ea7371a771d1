import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from selfenc.data import X1, X1_QUERY, X2, X2_QUERY
from selfenc.encoder import SelfEncoderConfig, fit, predict_proba, with_overrides
from selfenc.neighbors import (
    euclidean_knn_predict,
    euclidean_knn_predict_batch,
    nearest_sets,
    se_knn_predict,
    se_knn_predict_batch,
    se_neighbors,
    squared_distances,
    vote,
)


def brute_knn(x_train, labels, q, k):
    """Sort by (distance, index), count, break count ties by distance sum then class."""
    dist = [(sum((a - b) ** 2 for a, b in zip(row, q)), i) for i, row in enumerate(x_train)]
    dist.sort()
    counts, sums = {}, {}
    for dd, i in dist[:k]:
        c = int(labels[i])
        counts[c] = counts.get(c, 0) + 1
        sums[c] = sums.get(c, 0.0) + dd
    return min(counts, key=lambda c: (-counts[c], sums[c], c))


def brute_se(probs_row, anchor_indices, labels, k):
    order = sorted(range(len(probs_row)), key=lambda j: (-probs_row[j], anchor_indices[j]))[:k]
    counts, sums = {}, {}
    for j in order:
        c = int(labels[anchor_indices[j]])
        counts[c] = counts.get(c, 0) + 1
        sums[c] = sums.get(c, 0.0) + probs_row[j]
    return min(counts, key=lambda c: (-counts[c], -sums[c], c))


@pytest.fixture(scope="module")
def small_problem():
    rng = np.random.default_rng(31)
    x = np.vstack([rng.normal(loc=c, size=(8, 2)) for c in ([0, 0], [3, 0], [0, 3])])
    y = np.repeat([0, 1, 2], 8)
    cfg = with_overrides(SelfEncoderConfig(output_normalization="softmax"), initial_lr=0.05, max_epochs=300)
    return x, y, fit(x, cfg)


class TestVote:
    def test_majority(self):
        assert vote([1, 0, 1], [0.1, 0.9, 0.1]) == 1

    def test_tie_by_affinity(self):
        assert vote([0, 1, 0, 1], [0.1, 0.3, 0.1, 0.3]) == 1

    def test_full_tie_smaller_class(self):
        assert vote([2, 1], [0.5, 0.5]) == 1


class TestEuclidean:
    def test_x1_nearest(self):
        np.testing.assert_array_equal(nearest_sets(X1, X1_QUERY), [2])

    def test_x2_nearest_ties(self):
        np.testing.assert_array_equal(nearest_sets(X2, X2_QUERY), [2, 3, 4])
        d2 = squared_distances(X2, X2_QUERY)[0]
        np.testing.assert_array_equal(d2, [4, 4, 2, 2, 2])

    def test_x2_exhaustive(self):
        # every row of the minimum distance, and only those
        d = [sum((a - b) ** 2 for a, b in zip(row, X2_QUERY)) for row in X2]
        assert [i for i, v in enumerate(d) if v == min(d)] == nearest_sets(X2, X2_QUERY).tolist()

    def test_k1_returns_own_label(self):
        x = np.array([[0.0], [1.0], [5.0]])
        assert euclidean_knn_predict(x, [7, 8, 9], [1.1], 1) == 8

    def test_brute_force_oracle(self):
        rng = np.random.default_rng(0)
        for _ in range(100):
            n, d = int(rng.integers(3, 15)), int(rng.integers(1, 4))
            # small integer grid so exact distance ties occur often
            x = rng.integers(-2, 3, size=(n, d)).astype(float)
            y = rng.integers(0, 3, size=n)
            q = rng.integers(-2, 3, size=(4, d)).astype(float)
            k = int(rng.integers(1, n + 1))
            got = euclidean_knn_predict_batch(x, y, q, k)
            assert got.tolist() == [brute_knn(x, y, row, k) for row in q]

    @pytest.mark.parametrize("k", [0, 4])
    def test_k_range(self, k):
        with pytest.raises(ValueError):
            euclidean_knn_predict([[0.0], [1.0], [2.0]], [0, 1, 1], [0.5], k)

    @settings(max_examples=40, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1))
    def test_row_permutation_invariant(self, seed):
        rng = np.random.default_rng(seed)
        x = rng.normal(size=(12, 3))
        y = rng.integers(0, 3, size=12)
        q = rng.normal(size=(5, 3))
        perm = rng.permutation(12)
        a = euclidean_knn_predict_batch(x, y, q, 5)
        b = euclidean_knn_predict_batch(x[perm], y[perm], q, 5)
        np.testing.assert_array_equal(a, b)


class TestSelfEncoderKNN:
    def test_brute_force_oracle(self, small_problem):
        x, y, m = small_problem
        q = np.random.default_rng(1).normal(loc=1.5, scale=2.0, size=(100, 2))
        probs = predict_proba(m, q)
        for k in (1, 3, 5, 24):
            got = se_knn_predict_batch(m, y, q, k)
            assert got.tolist() == [brute_se(p, m.anchor_indices, y, k) for p in probs]

    def test_single_matches_batch(self, small_problem):
        x, y, m = small_problem
        q = np.array([[0.2, 0.1], [2.9, 0.3]])
        batch = se_knn_predict_batch(m, y, q, 5)
        assert [se_knn_predict(m, y, row, 5) for row in q] == batch.tolist()

    def test_neighbors_tally(self, small_problem):
        x, y, m = small_problem
        nb = se_neighbors(m, y, x[0], 5)
        assert nb.indices[0] == 0
        assert sum(nb.tally.values()) == 5
        np.testing.assert_array_equal(nb.labels, y[nb.indices])

    def test_training_points_classified(self, small_problem):
        x, y, m = small_problem
        np.testing.assert_array_equal(se_knn_predict_batch(m, y, x, 1), y)

    def test_k_range(self, small_problem):
        x, y, m = small_problem
        with pytest.raises(ValueError):
            se_knn_predict(m, y, x[0], 25)

    def test_sampled_anchors_use_training_labels(self):
        rng = np.random.default_rng(4)
        x = rng.normal(size=(20, 2))
        y = (x[:, 0] > 0).astype(int)
        cfg = with_overrides(SelfEncoderConfig(sample_size=6), max_epochs=50)
        m = fit(x, cfg)
        nb = se_neighbors(m, y, x[0], 3)
        assert set(nb.indices.tolist()) <= set(m.anchor_indices.tolist())
        np.testing.assert_array_equal(nb.labels, y[nb.indices])

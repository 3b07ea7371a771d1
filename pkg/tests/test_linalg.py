import numpy as np
import pytest

from selfenc.linalg import Rng, ShapeError, SingularMatrixError, as_matrix, invert, matmul


def triple_loop(a, b):
    out = np.zeros((a.shape[0], b.shape[1]))
    for i in range(a.shape[0]):
        for j in range(b.shape[1]):
            s = 0.0
            for k in range(a.shape[1]):
                s += a[i, k] * b[k, j]
            out[i, j] = s
    return out


def random_well_conditioned(rng, n, max_cond=1e3):
    while True:
        m = rng.normal(size=(n, n))
        if np.linalg.cond(m) < max_cond:
            return m


class TestMatmul:
    def test_identity(self):
        b = np.array([[1.0, 2.0], [3.0, 4.0]])
        np.testing.assert_array_equal(matmul(np.eye(2), b), b)

    def test_projector(self):
        out = matmul([[1, 0], [0, 0]], [[5], [7]])
        np.testing.assert_array_equal(out, [[5], [0]])

    def test_against_triple_loop(self, nprng):
        a, b = nprng.normal(size=(3, 4)), nprng.normal(size=(4, 2))
        np.testing.assert_allclose(matmul(a, b), triple_loop(a, b), atol=1e-12, rtol=0)

    def test_shape_error_names_both_shapes(self):
        with pytest.raises(ShapeError, match=r"2x3.*2x3"):
            matmul(np.ones((2, 3)), np.ones((2, 3)))

    def test_associativity(self, nprng):
        for _ in range(20):
            p, q, r, s = nprng.integers(1, 8, size=4)
            a, b, c = nprng.normal(size=(p, q)), nprng.normal(size=(q, r)), nprng.normal(size=(r, s))
            left, right = matmul(matmul(a, b), c), matmul(a, matmul(b, c))
            assert np.linalg.norm(left - right) <= 1e-9 * max(np.linalg.norm(left), 1.0)

    def test_rejects_empty_and_1d(self):
        with pytest.raises(ShapeError):
            as_matrix(np.zeros((0, 3)))
        with pytest.raises(ShapeError):
            as_matrix(np.zeros(3))


class TestInvert:
    def test_identity(self):
        np.testing.assert_array_equal(invert(np.eye(3)), np.eye(3))

    def test_diagonal(self):
        np.testing.assert_array_equal(invert(np.diag([2.0, 4.0])), np.diag([0.5, 0.25]))

    def test_shear_multiplies_back(self):
        m = np.array([[1.0, 1.0], [0.0, 1.0]])
        inv = invert(m)
        np.testing.assert_array_equal(inv, [[1.0, -1.0], [0.0, 1.0]])
        np.testing.assert_allclose(m @ inv, np.eye(2), atol=1e-15)

    def test_needs_pivoting(self):
        m = np.array([[0.0, 1.0], [1.0, 0.0]])
        np.testing.assert_array_equal(invert(m), m)

    @pytest.mark.parametrize("n", [1, 2, 5, 13, 64])
    def test_multiply_back(self, nprng, n):
        m = random_well_conditioned(nprng, n)
        assert np.linalg.norm(m @ invert(m) - np.eye(n)) < 1e-9

    def test_double_inverse(self, nprng):
        for _ in range(20):
            m = random_well_conditioned(nprng, int(nprng.integers(1, 9)))
            np.testing.assert_allclose(invert(invert(m)), m, atol=1e-6)

    def test_singular(self):
        with pytest.raises(SingularMatrixError):
            invert([[1.0, 2.0], [2.0, 4.0]])
        with pytest.raises(SingularMatrixError):
            invert(np.zeros((3, 3)))

    def test_non_square(self):
        with pytest.raises(ShapeError):
            invert(np.ones((2, 3)))


class TestRng:
    def test_full_choice(self):
        np.testing.assert_array_equal(Rng(3).choice_without_replacement(5, 5), [0, 1, 2, 3, 4])

    @pytest.mark.parametrize("seed", [0, 1, 2**63 + 5])
    def test_choice_is_permutation(self, seed):
        np.testing.assert_array_equal(Rng(seed).choice_without_replacement(100, 100), np.arange(100))

    def test_choice_sorted_and_distinct(self):
        idx = Rng(9).choice_without_replacement(50, 10)
        assert len(set(idx.tolist())) == 10
        assert list(idx) == sorted(idx)

    def test_choice_too_many(self):
        with pytest.raises(ValueError):
            Rng(0).choice_without_replacement(3, 4)

    def test_uniform_mean(self):
        draws = Rng(42).uniform(0.0, 1.0, size=100_000)
        assert 0.49 <= draws.mean() <= 0.51
        assert draws.min() >= 0.0 and draws.max() < 1.0

    def test_uniform_bounds_checked(self):
        with pytest.raises(ValueError):
            Rng(0).uniform(1.0, 1.0)

    def test_shuffle_is_permutation_and_pure(self):
        items = list(range(20))
        out = Rng(5).shuffle(items)
        assert sorted(out) == items
        assert items == list(range(20))
        assert out != items

    def test_shuffle_uniform_over_permutations(self):
        counts = {}
        rng = Rng(11)
        for _ in range(6000):
            key = tuple(rng.shuffle([0, 1, 2]))
            counts[key] = counts.get(key, 0) + 1
        assert len(counts) == 6
        assert all(abs(c / 6000 - 1 / 6) < 0.02 for c in counts.values())

    def test_determinism(self):
        a, b = Rng(77), Rng(77)
        assert a.uniform(0, 1, size=50).tobytes() == b.uniform(0, 1, size=50).tobytes()
        assert a.shuffle(range(30)) == b.shuffle(range(30))
        assert a.derive(3, 4).uniform(0, 1) == b.derive(3, 4).uniform(0, 1)

    def test_derived_streams_differ(self):
        r = Rng(1)
        assert r.derive(0).uniform(0, 1) != r.derive(1).uniform(0, 1)

    def test_known_first_draw(self):
        # PCG64 stream for seed 0 is fixed across platforms
        assert Rng(0).uniform(0.0, 1.0) == np.random.Generator(np.random.PCG64(0)).uniform(0.0, 1.0)

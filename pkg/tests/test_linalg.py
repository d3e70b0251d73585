import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from near.errors import InvalidDistribution, NonFiniteInput, ZeroMatrix
from near.linalg import (
    RANK_FLOOR,
    effective_rank,
    effective_rank_from_singular_values,
    shannon_entropy,
    singular_values,
)


def random_orthogonal(rng, n):
    q, r = np.linalg.qr(rng.standard_normal((n, n)))
    return q * np.sign(np.diag(r))


class TestSingularValues:
    def test_identity(self):
        np.testing.assert_allclose(singular_values(np.eye(3)), [1, 1, 1], rtol=1e-15)

    def test_diagonal_with_zero(self):
        np.testing.assert_array_equal(singular_values(np.diag([3.0, 0.0])), [3.0, 0.0])

    def test_two_by_two_closed_form(self):
        # A^T A = [[10, 14], [14, 20]]: lambda^2 - 30 lambda + 4 = 0
        lam = np.array([15 + math.sqrt(221), 15 - math.sqrt(221)])
        expected = np.sqrt(lam)
        got = singular_values([[1, 2], [3, 4]])
        np.testing.assert_allclose(got, expected, rtol=1e-12)
        np.testing.assert_allclose(got, [5.4650, 0.3660], atol=5e-5)

    @pytest.mark.parametrize("method", ["jacobi", "lapack"])
    @pytest.mark.parametrize("shape", [(1, 1), (1, 7), (7, 1), (5, 5), (40, 13), (13, 40), (64, 64)])
    def test_matches_reference_decomposition(self, method, shape):
        rng = np.random.default_rng(sum(shape))
        a = rng.standard_normal(shape)
        ref = np.linalg.svd(a, compute_uv=False)
        got = singular_values(a, method)
        assert got.shape == (min(shape),)
        np.testing.assert_allclose(got, ref, rtol=1e-9)
        assert math.isclose(np.sum(got**2), np.sum(a**2), rel_tol=1e-8)

    def test_graded_spectrum_small_values_accurate(self):
        rng = np.random.default_rng(3)
        d = np.logspace(0, -10, 30)
        a = random_orthogonal(rng, 30) @ np.diag(d) @ random_orthogonal(rng, 30).T
        np.testing.assert_allclose(singular_values(a, "jacobi"), d, rtol=1e-5)

    def test_jacobi_on_large_matrix(self):
        rng = np.random.default_rng(11)
        a = rng.standard_normal((300, 260))
        np.testing.assert_allclose(singular_values(a, "jacobi"), singular_values(a, "lapack"), rtol=1e-9)

    def test_zero_matrix(self):
        np.testing.assert_array_equal(singular_values(np.zeros((3, 2))), [0.0, 0.0])

    @pytest.mark.parametrize("bad", [np.nan, np.inf, -np.inf])
    def test_non_finite_rejected(self, bad):
        a = np.ones((3, 3))
        a[1, 2] = bad
        with pytest.raises(NonFiniteInput):
            singular_values(a)

    def test_unknown_method(self):
        with pytest.raises(ValueError):
            singular_values(np.eye(2), "qr")

    def test_row_permutation_invariance(self):
        rng = np.random.default_rng(5)
        a = rng.standard_normal((9, 6))
        perm = rng.permutation(9)
        np.testing.assert_allclose(singular_values(a[perm]), singular_values(a), rtol=1e-12)

    @settings(max_examples=60, deadline=None)
    @given(arrays(np.float64, st.tuples(st.integers(1, 8), st.integers(1, 8)),
                  elements=st.floats(-1e3, 1e3, allow_nan=False)))
    def test_sorted_non_negative(self, a):
        sv = singular_values(a)
        assert np.all(sv >= 0)
        assert np.all(np.diff(sv) <= 0)


class TestShannonEntropy:
    def test_point_mass(self):
        assert shannon_entropy([1, 0, 0]) == 0.0

    def test_uniform(self):
        assert math.isclose(shannon_entropy([0.25] * 4), math.log(4), rel_tol=1e-15)

    def test_three_point(self):
        oracle = -(0.5 * math.log(0.5) + 2 * 0.25 * math.log(0.25))
        assert math.isclose(shannon_entropy([0.5, 0.25, 0.25]), oracle, rel_tol=1e-15)
        assert round(oracle, 4) == 1.0397

    @pytest.mark.parametrize("p", [[0.5, 0.6], [1.2, -0.2], [0.5, 0.5 + 1e-9], []])
    def test_invalid(self, p):
        with pytest.raises(InvalidDistribution):
            shannon_entropy(p)

    @settings(max_examples=100, deadline=None)
    @given(st.lists(st.floats(0, 1e6, allow_nan=False), min_size=1, max_size=30).filter(lambda v: sum(v) > 0))
    def test_bounds(self, w):
        p = np.array(w) / math.fsum(w)
        p = p / math.fsum(p)
        h = shannon_entropy(p)
        assert 0 <= h <= math.log(len(p)) + 1e-12


class TestEffectiveRank:
    @pytest.mark.parametrize("n", [1, 2, 5, 17])
    def test_identity(self, n):
        assert effective_rank(np.eye(n)) == pytest.approx(n, rel=1e-15)

    def test_rank_one(self):
        rng = np.random.default_rng(0)
        u, v = rng.standard_normal(7), rng.standard_normal(5)
        assert effective_rank(np.outer(u, v)) == pytest.approx(1.0, abs=1e-12)

    def test_spectrum_two_one_one(self):
        oracle = math.exp(-(0.5 * math.log(0.5) + 0.5 * math.log(0.25)))
        assert effective_rank(np.diag([2.0, 1.0, 1.0])) == pytest.approx(oracle, rel=1e-13)
        assert oracle == pytest.approx(2.8284, abs=1e-4)

    def test_zero_matrix(self):
        with pytest.raises(ZeroMatrix):
            effective_rank(np.zeros((4, 4)))

    def test_floor_clamps_round_off_tail(self):
        sv = np.array([1.0, 1.0, RANK_FLOOR * 0.5])
        assert effective_rank_from_singular_values(sv) == pytest.approx(2.0, rel=1e-15)

    def test_floor_sensitivity(self):
        # values just above the floor still count
        sv = np.array([1.0, 1.0, RANK_FLOOR * 10])
        assert effective_rank_from_singular_values(sv) > 2.0

    def test_duplicate_row_vs_orthogonal_row(self):
        base = np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 0.0]])
        dup = base.copy()
        dup[2] = base[0]
        orth = base.copy()
        orth[2] = [0.0, 0.0, 1.0]
        assert effective_rank(dup) < effective_rank(orth)
        skew = np.array([[2.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 0.0]])
        dup, orth = skew.copy(), skew.copy()
        dup[2] = skew[1]
        orth[2] = [0.0, 0.0, 1.0]
        assert effective_rank(dup) <= effective_rank(orth)

    @settings(max_examples=80, deadline=None)
    @given(arrays(np.float64, st.tuples(st.integers(1, 10), st.integers(1, 10)),
                  elements=st.floats(-100, 100, allow_nan=False)).filter(lambda a: np.abs(a).max() > 1e-3),
           st.sampled_from([-3.0, 0.01, 1e6]))
    def test_bounds_and_scale_invariance(self, a, c):
        r = effective_rank(a)
        assert 1.0 <= r <= min(a.shape)
        assert effective_rank(c * a) == pytest.approx(r, abs=1e-9)

    def test_orthogonal_invariance(self):
        rng = np.random.default_rng(8)
        for n in (2, 6, 15):
            a = rng.standard_normal((n, n))
            u, v = random_orthogonal(rng, n), random_orthogonal(rng, n)
            assert effective_rank(u @ a @ v) == pytest.approx(effective_rank(a), abs=1e-8)

    def test_equal_singular_values_attain_upper_bound(self):
        rng = np.random.default_rng(1)
        q = random_orthogonal(rng, 6)
        assert effective_rank(3.5 * q) == pytest.approx(6.0, rel=1e-12)
        assert effective_rank(np.diag([1, 1, 1, 1, 1, 0.9])) < 6.0

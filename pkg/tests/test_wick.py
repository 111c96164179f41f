"""
Tests for numerics.wick - multi-indices, chaos expansions and Wick calculus
"""

import math
import unittest

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from shefk.errors import DomainError
from shefk.numerics.wick import (
    ZERO,
    ChaosExpansion,
    MultiIndex,
    NoiseRealization,
    chaos_eval,
    chaos_eval_many,
    conditional_expectation_mc,
    exponential_tail,
    multi_indices,
    random_sparse_expansion,
    sample_noise,
    second_quantization,
    wick_exponential,
    wick_polynomial,
    wick_product,
)


def _max_gap(a, b):
    keys = set(a.terms) | set(b.terms)
    return max((abs(a.coefficient(k) - b.coefficient(k)) for k in keys), default=0.0)


class TestMultiIndex(unittest.TestCase):
    """Multi-index arithmetic and ordering"""

    def test_trailing_zeros(self):
        self.assertEqual(MultiIndex.of(1, 0, 0), MultiIndex.of(1))
        self.assertEqual(hash(MultiIndex.of(2, 0)), hash(MultiIndex.of(2)))
        self.assertEqual(MultiIndex.of(0, 0), ZERO)

    def test_properties(self):
        alpha = MultiIndex.of(2, 0, 1)
        self.assertEqual(alpha.order, 3)
        self.assertEqual(alpha.support, 3)
        self.assertEqual(alpha.factorial(), 2)
        self.assertEqual(alpha[1], 2)
        self.assertEqual(alpha[2], 0)
        self.assertEqual(alpha[7], 0)

    def test_addition(self):
        self.assertEqual(MultiIndex.of(1, 2) + MultiIndex.of(0, 0, 1), MultiIndex.of(1, 2, 1))

    def test_unit(self):
        self.assertEqual(MultiIndex.unit(3, 2), MultiIndex.of(0, 0, 2))
        with self.assertRaises(DomainError):
            MultiIndex.unit(0)

    def test_negative_entry(self):
        with self.assertRaises(DomainError):
            MultiIndex.of(1, -1)

    def test_orderings(self):
        self.assertEqual(MultiIndex.of(2, 1).orderings(), [(1, 1, 2), (1, 2, 1), (2, 1, 1)])
        self.assertEqual(ZERO.orderings(), [()])

    def test_text(self):
        self.assertEqual(ZERO.to_text(), '0')
        self.assertEqual(MultiIndex.from_text('0,2,1'), MultiIndex.of(0, 2, 1))
        self.assertEqual(MultiIndex.from_text('0'), ZERO)


class TestEnumeration(unittest.TestCase):
    """Graded-lexicographic enumeration"""

    def test_small_set(self):
        expected = [ZERO, MultiIndex.of(0, 1), MultiIndex.of(1), MultiIndex.of(0, 2),
                    MultiIndex.of(1, 1), MultiIndex.of(2)]
        self.assertEqual(multi_indices(2, 2), expected)

    def test_count(self):
        self.assertEqual(len(multi_indices(4, 3)), math.comb(7, 3))

    def test_mask(self):
        indices = multi_indices(3, 2, active=[True, False, True])
        self.assertTrue(all(alpha[2] == 0 for alpha in indices))
        self.assertEqual(len(indices), math.comb(4, 2))

    def test_limit(self):
        with self.assertRaises(DomainError):
            multi_indices(100, 10)


class TestChaosExpansion(unittest.TestCase):
    """Sparse expansions"""

    def test_bounds_enforced(self):
        with self.assertRaises(DomainError):
            ChaosExpansion({MultiIndex.of(0, 1): 1.0}, basis_bound=1, degree_bound=3)
        with self.assertRaises(DomainError):
            ChaosExpansion({MultiIndex.of(3): 1.0}, basis_bound=1, degree_bound=2)
        with self.assertRaises(DomainError):
            ChaosExpansion({ZERO: float('nan')}, basis_bound=0, degree_bound=0)

    def test_terms_sorted(self):
        X = ChaosExpansion.from_pairs([((2,), 1.0), ((), 3.0), ((0, 1), 2.0)])
        self.assertEqual([a for a, _ in X.items()], [ZERO, MultiIndex.of(0, 1), MultiIndex.of(2)])
        self.assertEqual(X.mean, 3.0)
        self.assertEqual((X.basis_bound, X.degree_bound), (2, 2))

    def test_norm(self):
        X = ChaosExpansion.from_pairs([((), 1.0), ((2,), 0.5), ((1, 1), 2.0)])
        self.assertAlmostEqual(X.norm_squared(), 1.0 + 0.25 * 2 + 4.0)
        self.assertAlmostEqual(X.partial_norm_squared(1, 2), 1.5)

    def test_text_format(self):
        X = ChaosExpansion.from_pairs([((), 1.0), ((0, 1), -0.25), ((3,), 1e-17)])
        text = X.to_text()
        self.assertTrue(text.startswith('# K=2 N=3\n'))
        self.assertIn('0,1 : -0.25', text)
        self.assertEqual(ChaosExpansion.from_text(text).terms, X.terms)
        with self.assertRaises(DomainError):
            ChaosExpansion.from_text('1 : 2.0\n')


class TestWickCalculus(unittest.TestCase):
    """Evaluation, Wick product and Wick exponential"""

    def test_wick_polynomial(self):
        z = NoiseRealization(np.array([1.5, -0.5]))
        self.assertAlmostEqual(wick_polynomial(MultiIndex.of(2, 1), z), 1.25 * -0.5)
        with self.assertRaises(DomainError):
            wick_polynomial(MultiIndex.of(0, 0, 1), z)

    def test_eval_many_matches_single(self):
        rng = np.random.default_rng(3)
        X = random_sparse_expansion(3, 3, 10, rng)
        rows = rng.normal(size=(5, 4))
        batch = chaos_eval_many(X, rows)
        for i in range(5):
            self.assertAlmostEqual(batch[i], chaos_eval(X, NoiseRealization(rows[i])), places=12)

    def test_product_of_units(self):
        X = ChaosExpansion.from_pairs([((1,), 1.0)])
        self.assertEqual(wick_product(X, X).terms, {MultiIndex.of(2): 1.0})

    def test_product_mean(self):
        rng = np.random.default_rng(5)
        X = random_sparse_expansion(2, 2, 4, rng)
        Y = random_sparse_expansion(2, 2, 4, rng)
        self.assertAlmostEqual(wick_product(X, Y).mean, X.mean * Y.mean)

    def test_exponential_norm_and_tail(self):
        c = np.array([0.8, -0.4, 0.3])
        X = wick_exponential(c, 6)
        self.assertEqual(X.mean, 1.0)
        self.assertAlmostEqual(X.norm_squared() + X.tail_mass, math.exp(c @ c), places=10)

    def test_exponential_pointwise(self):
        c = np.array([0.5, 0.2])
        X = wick_exponential(c, 14)
        z = np.array([[0.3, -1.2], [1.0, 0.4]])
        np.testing.assert_allclose(chaos_eval_many(X, z), np.exp(z @ c - 0.5 * c @ c), rtol=1e-9)

    def test_exponential_skips_zero_coordinates(self):
        X = wick_exponential([0.5, 0.0, 0.2], 3)
        self.assertTrue(all(alpha[2] == 0 for alpha in X.terms))
        self.assertEqual(exponential_tail(np.zeros(3), 2), 0.0)

    def test_second_quantization(self):
        X = ChaosExpansion.from_pairs([((), 1.0), ((1,), 2.0), ((0, 1), 3.0), ((1, 0, 2), 4.0)])
        projected = second_quantization(X, 1)
        self.assertEqual(set(projected.terms), {ZERO, MultiIndex.of(1)})
        self.assertEqual(second_quantization(projected, 1).terms, projected.terms)
        with self.assertRaises(DomainError):
            second_quantization(X, -1)


class TestNoise(unittest.TestCase):
    """Noise draws and conditional expectations"""

    def test_prefix_nested(self):
        long = sample_noise(6, 21, 2)
        short = sample_noise(3, 21, 2)
        np.testing.assert_array_equal(long.prefix(3).z, short.z)
        with self.assertRaises(DomainError):
            long.prefix(7)

    def test_head_only_expansion_is_exact(self):
        X = ChaosExpansion.from_pairs([((), 0.5), ((2,), 1.0)])
        estimate = conditional_expectation_mc(lambda rows: chaos_eval_many(X, rows), [0.4], 3,
                                              n_samples=100, seed=1)
        self.assertAlmostEqual(estimate.value, 0.5 + 0.4 ** 2 - 1.0, places=12)
        self.assertAlmostEqual(estimate.std_error, 0.0, places=12)

    def test_tail_terms_average_out(self):
        X = ChaosExpansion.from_pairs([((1,), 1.0), ((1, 1), 1.0)])
        estimate = conditional_expectation_mc(lambda rows: chaos_eval_many(X, rows), [0.7], 2,
                                              n_samples=20000, seed=1)
        self.assertTrue(estimate.agrees_with(0.7))

    def test_head_must_be_shorter(self):
        with self.assertRaises(DomainError):
            conditional_expectation_mc(lambda rows: rows[:, 0], [0.1, 0.2], 2)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_wick_product_commutes_and_associates(seed):
    rng = np.random.default_rng(seed)
    X, Y, W = (random_sparse_expansion(3, 2, 5, rng) for _ in range(3))
    assert _max_gap(wick_product(X, Y), wick_product(Y, X)) < 1e-12
    left = wick_product(wick_product(X, Y), W)
    right = wick_product(X, wick_product(Y, W))
    assert _max_gap(left, right) < 1e-12


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.integers(0, 3))
def test_second_quantization_is_a_projection(seed, Kp):
    X = random_sparse_expansion(4, 3, 12, np.random.default_rng(seed))
    once = second_quantization(X, Kp)
    assert once.terms == second_quantization(once, Kp).terms
    assert once.norm_squared() <= X.norm_squared() + 1e-12


def test_wick_exponential_is_mean_one():
    X = wick_exponential([0.3, 0.1], 5)
    z = np.vstack([sample_noise(2, 4, i).z for i in range(4000)])
    values = chaos_eval_many(X, z)
    assert abs(values.mean() - 1.0) <= 3 * values.std(ddof=1) / np.sqrt(values.size)


def test_second_moment_matches_norm():
    rng = np.random.default_rng(8)
    X = random_sparse_expansion(3, 3, 6, rng)
    squares = chaos_eval_many(X, rng.standard_normal((1_000_000, 3))) ** 2
    error = squares.std(ddof=1) / np.sqrt(squares.size)
    assert abs(squares.mean() - X.norm_squared()) <= 3 * error


def test_random_expansion_respects_bounds():
    X = random_sparse_expansion(3, 2, 50, np.random.default_rng(0))
    assert len(X) == math.comb(5, 2)
    assert all(a.support <= 3 and a.order <= 2 for a in X.terms)


@pytest.mark.parametrize('K,N', [(1, 0), (3, 1), (2, 4)])
def test_enumeration_is_graded(K, N):
    keys = [a.sort_key() for a in multi_indices(K, N)]
    assert keys == sorted(keys)

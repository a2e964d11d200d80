"""Seeded randomness, vector primitives, and the finite-difference oracle."""

import math

import mpmath
import numpy as np
import pytest
from scipy import stats

from conftest import ks_distance_uniform
from ps_lab.errors import DegenerateInputError, InvalidParameterError
from ps_lab.numeric import (
    beta_sample,
    cosine_similarity,
    finite_diff_grad,
    l2_normalize,
    make_rng,
    split_rng,
)


class TestRng:
    def test_equal_seeds_equal_streams(self):
        a = make_rng(1234).random(1_000_000)
        b = make_rng(1234).random(1_000_000)
        assert np.array_equal(a, b)

    def test_distinct_seeds_differ(self):
        assert not np.array_equal(make_rng(1).random(100), make_rng(2).random(100))

    def test_split_streams_independent_and_stable(self):
        streams = split_rng(7, ["init", "shuffle", "synthesis"])
        init_draws = streams["init"].random(50)
        # Same split again reproduces each stream bit-exactly.
        again = split_rng(7, ["init", "shuffle", "synthesis"])
        assert np.array_equal(init_draws, again["init"].random(50))
        # Appending a stream name must not perturb the existing ones.
        extended = split_rng(7, ["init", "shuffle", "synthesis", "eval"])
        assert np.array_equal(init_draws, extended["init"].random(50))
        assert not np.array_equal(init_draws, again["shuffle"].random(50))


class TestBetaSample:
    def test_support(self):
        rng = make_rng(0)
        draws = [beta_sample(0.4, rng) for _ in range(500)]
        assert all(0.0 <= x <= 1.0 for x in draws)

    def test_alpha_one_is_uniform(self):
        # Beta(1,1) = Uniform(0,1); Monte Carlo oracle on 1e5 draws.
        rng = make_rng(42)
        draws = np.array([beta_sample(1.0, rng) for _ in range(100_000)])
        assert abs(draws.mean() - 0.5) < 0.02
        assert ks_distance_uniform(draws) < 0.01

    def test_small_alpha_has_heavier_tails(self):
        rng = make_rng(43)
        d04 = np.array([beta_sample(0.4, rng) for _ in range(100_000)])
        d10 = np.array([beta_sample(1.0, rng) for _ in range(100_000)])
        assert abs(d04.mean() - 0.5) < 0.02
        tail = lambda d: np.mean((d < 0.1) | (d > 0.9))
        assert tail(d04) > tail(d10)

    @pytest.mark.parametrize("alpha", [0.4, 1.0, 1.5])
    def test_symmetry(self, alpha):
        # Beta(a, a) is symmetric about 1/2: lambda and 1 - lambda agree.
        rng = make_rng(44)
        draws = np.array([beta_sample(alpha, rng) for _ in range(100_000)])
        d = stats.ks_2samp(draws, 1.0 - draws).statistic
        assert d < 0.02

    def test_deterministic_stream_consumption(self):
        a = [beta_sample(0.4, make_rng(9)) for _ in range(1)]
        b = [beta_sample(0.4, make_rng(9)) for _ in range(1)]
        assert a == b

    @pytest.mark.parametrize("alpha", [0.0, -1.0, float("nan"), float("inf")])
    def test_invalid_alpha(self, alpha):
        with pytest.raises(InvalidParameterError):
            beta_sample(alpha, make_rng(0))


class TestL2Normalize:
    def test_three_four_five(self):
        np.testing.assert_allclose(l2_normalize([3.0, 4.0]), [0.6, 0.8], rtol=1e-12)

    def test_unit_vector_unchanged(self):
        u = l2_normalize(make_rng(5).normal(size=8))
        np.testing.assert_allclose(l2_normalize(u), u, atol=1e-15)
        assert abs(np.linalg.norm(l2_normalize(u)) - 1.0) < 1e-12

    def test_zero_vector_rejected(self):
        with pytest.raises(DegenerateInputError):
            l2_normalize([0.0, 0.0])

    def test_scale_invariance(self):
        rng = make_rng(6)
        for _ in range(20):
            v = rng.normal(size=5)
            c = float(rng.uniform(1e-6, 1e6))
            np.testing.assert_allclose(l2_normalize(c * v), l2_normalize(v), atol=1e-12)


class TestCosineSimilarity:
    def test_identical(self):
        v = [1.0, 2.0, -3.0]
        assert cosine_similarity(v, v) == pytest.approx(1.0, abs=1e-15)

    def test_orthogonal(self):
        assert cosine_similarity([1.0, 0.0], [0.0, 2.0]) == 0.0

    def test_symmetry_exact(self):
        rng = make_rng(7)
        for _ in range(50):
            a, b = rng.normal(size=16), rng.normal(size=16)
            assert cosine_similarity(a, b) == cosine_similarity(b, a)

    def test_matches_extended_precision_oracle(self):
        # 128-bit recomputation with mpmath.
        rng = make_rng(8)
        with mpmath.workprec(128):
            for _ in range(25):
                a, b = rng.normal(size=16), rng.normal(size=16)
                am = [mpmath.mpf(float(x)) for x in a]
                bm = [mpmath.mpf(float(x)) for x in b]
                dot = mpmath.fsum(x * y for x, y in zip(am, bm))
                na = mpmath.sqrt(mpmath.fsum(x * x for x in am))
                nb = mpmath.sqrt(mpmath.fsum(x * x for x in bm))
                expected = float(dot / (na * nb))
                assert abs(cosine_similarity(a, b) - expected) < 1e-12

    def test_zero_vector_rejected(self):
        with pytest.raises(DegenerateInputError):
            cosine_similarity([0.0, 0.0], [1.0, 0.0])

    def test_clamped_range(self):
        v = [1.0, 1e-200]
        assert -1.0 <= cosine_similarity(v, v) <= 1.0


class TestFiniteDiffGrad:
    def test_quadratic(self):
        f = lambda x: float(np.sum(x ** 2))
        grad = finite_diff_grad(f, np.array([1.0, 2.0]))
        np.testing.assert_allclose(grad, [2.0, 4.0], atol=1e-6)

    def test_constant(self):
        grad = finite_diff_grad(lambda x: 3.5, np.zeros((2, 3)))
        assert np.array_equal(grad, np.zeros((2, 3)))

    def test_matrix_shape_preserved(self):
        f = lambda x: float(np.sum(x * np.arange(6).reshape(2, 3)))
        grad = finite_diff_grad(f, np.ones((2, 3)))
        np.testing.assert_allclose(grad, np.arange(6).reshape(2, 3), atol=1e-8)

    def test_invalid_step(self):
        with pytest.raises(InvalidParameterError):
            finite_diff_grad(lambda x: 0.0, np.zeros(2), h=0.0)

    def test_nonfinite_propagates(self):
        with pytest.raises(FloatingPointError):
            finite_diff_grad(lambda x: math.inf, np.zeros(2))

    def test_does_not_mutate_input(self):
        x = np.array([1.0, 2.0, 3.0])
        before = x.copy()
        finite_diff_grad(lambda v: float(np.sum(v ** 3)), x)
        assert np.array_equal(x, before)

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from inferno.errors import DomainError, InvalidDistributionError, NumericError, ShapeError
from inferno.prob import (
    SIMPLEX_TOL,
    dirichlet_expected_log,
    dirichlet_kl,
    entropy,
    is_prob_vector,
    kl_divergence,
    log_multivariate_beta,
    log_softmax,
    normalize,
    sample_categorical,
    softmax,
    xlogy,
)
from oracles import digamma_series, entropy_sum, kl_sum, lgamma_stirling, log_beta

simplex = st.lists(st.floats(0.0, 1.0), min_size=1, max_size=6).filter(lambda x: sum(x) > 1e-3).map(normalize)
counts = st.lists(st.floats(0.1, 100.0), min_size=1, max_size=6).map(np.array)


class TestOracles:
    def test_stirling_matches_stdlib(self):
        for x in [0.1, 0.5, 1.0, 2.5, 7.0, 33.3, 100.0]:
            assert lgamma_stirling(x) == pytest.approx(math.lgamma(x), abs=1e-12)

    def test_digamma_known_values(self):
        euler = 0.57721566490153286
        assert digamma_series(1.0) == pytest.approx(-euler, abs=1e-13)
        assert digamma_series(0.5) == pytest.approx(-euler - 2 * math.log(2), abs=1e-13)


class TestNormalize:
    def test_examples(self):
        np.testing.assert_array_equal(normalize([2, 2]), [0.5, 0.5])
        np.testing.assert_array_equal(normalize([1, 0, 0]), [1, 0, 0])
        np.testing.assert_allclose(normalize([1, 3]), [0.25, 0.75], rtol=0, atol=1e-15)

    @pytest.mark.parametrize("bad", [[0, 0], [1, -1], [], [np.nan, 1]])
    def test_invalid(self, bad):
        with pytest.raises(InvalidDistributionError):
            normalize(bad)

    @given(st.lists(st.floats(0.0, 1e6), min_size=1, max_size=8).filter(lambda x: sum(x) > 0))
    def test_idempotent_and_valid(self, raw):
        p = normalize(raw)
        assert is_prob_vector(p)
        np.testing.assert_array_equal(normalize(p), p)
        np.testing.assert_allclose(p * np.sum(raw), raw, rtol=1e-12, atol=1e-9)


class TestKL:
    def test_examples(self):
        assert kl_divergence([0.3, 0.7], [0.3, 0.7]) == 0.0
        assert kl_divergence([1, 0], [0.5, 0.5]) == pytest.approx(math.log(2), abs=1e-15)
        p, q = [0.25, 0.75], [0.75, 0.25]
        assert kl_divergence(p, q) == pytest.approx(kl_sum(p, q), abs=1e-15)
        assert kl_divergence(p, q) == pytest.approx(0.5 * math.log(3), abs=1e-15)

    def test_support_and_shape(self):
        assert kl_divergence([0.5, 0.5], [1.0, 0.0]) == math.inf
        assert kl_divergence([1.0, 0.0], [1.0, 0.0]) == 0.0
        with pytest.raises(ShapeError):
            kl_divergence([1.0], [0.5, 0.5])

    @given(simplex, st.data())
    def test_nonnegative_zero_iff_equal(self, p, data):
        raw = data.draw(st.lists(st.floats(0.01, 1.0), min_size=p.size, max_size=p.size))
        q = normalize(raw)
        d = kl_divergence(p, q)
        assert d >= 0
        assert d == pytest.approx(kl_sum(p, q), abs=1e-12)
        if np.max(np.abs(p - q)) >= 1e-6:
            assert d > 0
        assert kl_divergence(p, p) == 0.0


class TestEntropy:
    def test_examples(self):
        assert entropy([1, 0, 0]) == 0.0
        assert entropy([0.25] * 4) == pytest.approx(math.log(4), abs=1e-15)
        assert entropy([0.1, 0.9]) == pytest.approx(entropy_sum([0.1, 0.9]), abs=1e-15)
        assert entropy([0.1, 0.9]) == pytest.approx(0.3250829733914482, abs=1e-15)

    @given(simplex)
    def test_bounds(self, p):
        h = entropy(p)
        assert 0 <= h <= math.log(p.size) + 1e-12

    def test_xlogy_convention(self):
        np.testing.assert_array_equal(xlogy([0.0, 0.0], [0.0, 1.0]), [0.0, 0.0])


class TestSoftmax:
    def test_examples(self):
        np.testing.assert_allclose(softmax([3.0, 3.0, 3.0], 0.2), [1 / 3] * 3, rtol=0, atol=1e-15)
        np.testing.assert_array_equal(softmax([0.0, 2.0, 1.0], 0.0), [0, 1, 0])
        np.testing.assert_allclose(softmax([0.0, math.log(3)], 1.0), [0.25, 0.75], rtol=0, atol=1e-15)

    def test_floor_ties_lowest_index(self):
        np.testing.assert_array_equal(softmax([1.0, 5.0, 5.0], 1e-12), [0, 1, 0])

    @pytest.mark.parametrize("bad", [[np.inf, 0.0], [np.nan]])
    def test_nonfinite(self, bad):
        with pytest.raises(NumericError):
            softmax(bad)

    @given(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=8), st.floats(1e-3, 10.0))
    def test_stable(self, logits, temp):
        p = softmax(logits, temp)
        assert is_prob_vector(p, tol=SIMPLEX_TOL)

    @given(st.lists(st.floats(-50, 50), min_size=1, max_size=8))
    def test_log_softmax_consistent(self, logits):
        np.testing.assert_allclose(np.exp(log_softmax(logits)), softmax(logits), rtol=1e-12, atol=1e-15)


class TestDirichlet:
    def test_log_beta_examples(self):
        assert log_multivariate_beta([1.0, 1.0]) == pytest.approx(0.0, abs=1e-15)
        assert log_multivariate_beta([2.0, 1.0]) == pytest.approx(-math.log(2), abs=1e-15)
        assert log_multivariate_beta([1.0, 1.0, 1.0]) == pytest.approx(-math.log(2), abs=1e-15)

    @given(counts)
    def test_log_beta_oracle(self, c):
        assert log_multivariate_beta(c) == pytest.approx(log_beta(c), abs=1e-10)

    def test_expected_log_examples(self):
        e = dirichlet_expected_log([1.0, 1.0])
        assert e[0] == e[1]
        np.testing.assert_allclose(dirichlet_expected_log([1e6, 1e6]), [math.log(0.5)] * 2, rtol=0, atol=1e-5)
        e = dirichlet_expected_log([3.0, 1.0])
        oracle = [digamma_series(3.0) - digamma_series(4.0), digamma_series(1.0) - digamma_series(4.0)]
        np.testing.assert_allclose(e, oracle, rtol=0, atol=1e-13)
        # closed forms: psi(3) - psi(4) = -1/3, psi(1) - psi(4) = -(1 + 1/2 + 1/3)
        np.testing.assert_allclose(e, [-1 / 3, -11 / 6], rtol=0, atol=1e-13)

    def test_expected_log_single_category(self):
        np.testing.assert_array_equal(dirichlet_expected_log([2.5]), [0.0])

    @given(st.lists(st.floats(0.1, 100.0), min_size=2, max_size=6).map(np.array))
    def test_expected_log_valid(self, c):
        e = dirichlet_expected_log(c)
        assert np.all(e < 0)
        assert is_prob_vector(normalize(np.exp(e)))

    @pytest.mark.parametrize("bad", [[0.0, 1.0], [-1.0, 2.0], [np.inf, 1.0]])
    def test_domain(self, bad):
        with pytest.raises(DomainError):
            log_multivariate_beta(bad)
        with pytest.raises(DomainError):
            dirichlet_expected_log(bad)

    def test_dirichlet_kl_zero_and_positive(self):
        c = np.array([[2.0, 1.0], [3.0, 4.0]])
        assert dirichlet_kl(c, c) == pytest.approx(0.0, abs=1e-14)
        assert dirichlet_kl(c + 1.0, c) > 0


class TestSampling:
    def test_frequencies(self):
        rng = np.random.default_rng(3)
        p = np.array([0.2, 0.5, 0.3])
        n = 20000
        draws = np.bincount([sample_categorical(p, rng) for _ in range(n)], minlength=3) / n
        np.testing.assert_allclose(draws, p, atol=4 * np.sqrt(0.25 / n))

    def test_zero_mass_never_drawn(self):
        rng = np.random.default_rng(0)
        assert {sample_categorical([0.0, 1.0, 0.0], rng) for _ in range(200)} == {1}

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dpparse.scoring import (
    DPParams,
    arc_score,
    arc_scores_batch,
    base_probability,
    length_penalty,
    sentence_log_probability,
    word_probability,
)

from oracles import direct_length_penalty, direct_word_probability


class TestBaseProbability:
    def test_direct_value(self):
        assert base_probability(10.0, 10**6) == pytest.approx(1e-5, rel=1e-12)

    def test_never_seen(self):
        assert base_probability(0.0, 123) == 0.0

    def test_upper_bound(self):
        assert base_probability(50.0, 50) == 1.0

    def test_empty_pool_rejected(self):
        with pytest.raises(ValueError):
            base_probability(1.0, 0)


class TestWordProbability:
    def test_empty_lexicon_reduces_to_prior(self):
        params = DPParams(alpha0=100.0, n_lexicon=0.0)
        assert word_probability(0.0, 0.37, params) == pytest.approx(0.37, rel=1e-12)

    def test_hand_value(self):
        params = DPParams(alpha0=100.0, n_lexicon=1000.0)
        got = word_probability(5.0, 0.001, params)
        assert got == pytest.approx(5.1 / 1100, rel=1e-12)

    def test_small_alpha_limit_is_relative_frequency(self):
        params = DPParams(alpha0=1e-9, n_lexicon=200.0)
        got = word_probability(50.0, 0.9, params)
        assert got == pytest.approx(50.0 / 200.0, rel=1e-6)

    @given(
        st.floats(0, 1000),
        st.floats(0, 1),
        st.floats(1e-3, 1e4),
        st.floats(0, 1e6),
    )
    @settings(max_examples=200, deadline=None)
    def test_monotone_in_freq_and_prior(self, freq, prior, alpha0, mass):
        params = DPParams(alpha0=alpha0, n_lexicon=mass)
        base = word_probability(freq, prior, params)
        assert word_probability(freq + 1.0, prior, params) >= base
        if prior <= 0.999:
            assert word_probability(freq, prior + 0.001, params) >= base


class TestLengthPenalty:
    def test_len_one_is_zero_for_any_exponent(self):
        for gamma in (0.0, 1.0, 1.8, 3.5):
            assert length_penalty(1, gamma, 4.0) == 0.0
            assert length_penalty(1, gamma, 2.0) == 0.0

    def test_unit_base(self):
        assert length_penalty(5, 1.8, 4.0) == pytest.approx(1.0, rel=1e-12)

    def test_hand_value(self):
        expected = direct_length_penalty(3, 1.8, 4.0)
        assert expected == pytest.approx(0.5**1.8, rel=1e-12)
        assert length_penalty(3, 1.8, 4.0) == pytest.approx(expected, rel=1e-12)

    def test_monotone_in_length(self):
        values = [length_penalty(n, 1.8, 4.0) for n in range(1, 21)]
        assert all(a <= b for a, b in zip(values, values[1:]))


class TestArcScore:
    def test_zero_probability_guarded_and_finite(self):
        params = DPParams()
        s = arc_score(0.0, 4, params)
        assert math.isfinite(s)
        assert s == pytest.approx(
            math.log(1e-10) + params.penalty_sign * length_penalty(4, 1.8, 4.0)
        )

    def test_probability_one_length_one(self):
        assert arc_score(1.0, 1, DPParams()) == pytest.approx(0.0, abs=1e-9)

    def test_hand_value_literal_form(self):
        # additive length term: log(e^-2) + ((5-1)/4)^1.8 = -2 + 1
        params = DPParams(penalty_sign=1.0)
        got = arc_score(math.exp(-2.0), 5, params)
        assert got == pytest.approx(-1.0, rel=1e-9)

    def test_default_sign_penalizes_length(self):
        params = DPParams()
        assert params.penalty_sign == -1.0
        assert arc_score(0.5, 10, params) < arc_score(0.5, 1, params)

    def test_finite_over_full_domain(self):
        params = DPParams()
        for p in (0.0, 1e-12, 0.5, 1.0):
            for n in (1, 7, 20):
                assert math.isfinite(arc_score(p, n, params))

    def test_batch_matches_scalar(self):
        params = DPParams(gamma=0.0, n_lexicon=10.0)
        probs = np.array([0.0, 0.3, 1.0])
        lens = np.array([1, 5, 20])
        batch = arc_scores_batch(probs, lens, params)
        for b, p, n in zip(batch, probs, lens):
            assert b == pytest.approx(arc_score(float(p), int(n), params), rel=1e-12)

    def test_gamma_zero_still_zero_at_len_one(self):
        # 0^0 is pinned to 0 for the length term
        assert length_penalty(1, 0.0, 4.0) == 0.0
        assert length_penalty(2, 0.0, 4.0) == 1.0


def test_sentence_log_probability_matches_product():
    rng = np.random.default_rng(0)
    probs = rng.uniform(0.05, 1.0, size=6)
    direct = math.log(float(np.prod(probs)))
    assert sentence_log_probability(probs) == pytest.approx(direct, rel=1e-9)


def test_formula_oracle_agreement():
    rng = np.random.default_rng(42)
    for _ in range(300):
        n_lex = float(rng.integers(0, 10**6))
        freq = float(rng.uniform(0, max(n_lex, 1)))
        prior = float(rng.uniform(0, 1))
        alpha0 = float(rng.uniform(1e-3, 1e4))
        params = DPParams(alpha0=alpha0, n_lexicon=n_lex)
        mine = word_probability(freq, prior, params)
        oracle = direct_word_probability(freq, prior, alpha0, n_lex)
        assert mine == pytest.approx(oracle, rel=1e-12)

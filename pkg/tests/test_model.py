import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from volleybayes.match_data import SeasonData, TeamIndex
from volleybayes.model import (
    BasicHyper,
    IntensityOverflowError,
    ParameterState,
    ScoringIntensities,
    apply_sum_to_zero,
    centered_effects,
    joint_log_posterior,
    log_intensities,
    log_likelihood,
    loglik_points,
    match_log_likelihood,
    prob_five_sets,
    prob_home_win,
    scoring_intensity,
    with_hyper,
)
from volleybayes.priors import PriorSpec, log_prior

import oracles
from conftest import make_match, random_state, small_season


def zero_state(K=2, **kw):
    s = ParameterState(0.0, 0.0, np.zeros((K, 3)), np.zeros((K, 3)),
                       BasicHyper(np.zeros(3), np.zeros(3), np.ones(3), np.ones(3)))
    for k, v in kw.items():
        setattr(s, k, v)
    return s


class TestSumToZero:
    def test_examples(self):
        assert apply_sum_to_zero([1.0, 2.0, 3.0]) == pytest.approx([-1, 0, 1])
        assert np.all(apply_sum_to_zero([0.7] * 5) == 0.0)
        assert apply_sum_to_zero([-1.0, 1.0]) == pytest.approx([-1, 1])

    def test_needs_two_teams(self):
        with pytest.raises(ValueError):
            apply_sum_to_zero(np.zeros((1, 3)))

    @settings(max_examples=50)
    @given(st.integers(2, 20), st.integers(0, 2**32 - 1))
    def test_columns_sum_to_zero(self, K, seed):
        stars = np.random.default_rng(seed).normal(0, 1, (K, 3))
        assert np.all(np.abs(apply_sum_to_zero(stars).sum(axis=0)) < 1e-12)


class TestScoringIntensity:
    def test_reference_constant_and_home(self):
        s = zero_state(mu=4.443, lam=0.0343)
        th = scoring_intensity(s, make_match())
        assert th.theta_h == pytest.approx(math.exp(4.4773), rel=1e-14)
        assert th.theta_a == pytest.approx(math.exp(4.443), rel=1e-14)
        assert th.theta_h == pytest.approx(88.00, abs=0.005)
        assert th.theta_a == pytest.approx(85.03, abs=0.005)

    def test_all_zero(self):
        th = scoring_intensity(zero_state(), make_match())
        assert (th.theta_h, th.theta_a) == (1.0, 1.0)

    def test_attack_slope(self):
        # alpha_{1,h}=2 for the home team; the mirror -2 on the other team keeps the column centered
        s = zero_state(alpha_star=np.array([[0, 2.0, 0], [0, -2.0, 0]]))
        th = scoring_intensity(s, make_match(eff_home=(0, 0.5, 0, 0)))
        assert th.theta_h == pytest.approx(math.e, rel=1e-14)

    def test_overflow_reports_log_intensity(self):
        with pytest.raises(IntensityOverflowError) as err:
            scoring_intensity(zero_state(mu=800.0), make_match())
        assert err.value.log_intensity == pytest.approx(800.0)

    def test_translation_invariance(self, synthetic_season):
        rng = np.random.default_rng(3)
        s = random_state(12, "basic", rng)
        before = log_intensities(s, synthetic_season)
        shifted = s.copy()
        shifted.alpha_star[:, 1] += 3.7
        shifted.beta_star[:, 0] -= 1.1
        after = log_intensities(shifted, synthetic_season)
        np.testing.assert_allclose(after[0], before[0], atol=1e-12)
        np.testing.assert_allclose(after[1], before[1], atol=1e-12)

    def test_vectorised_matches_scalar(self, synthetic_season):
        s = random_state(12, "basic", np.random.default_rng(4))
        lh, la = log_intensities(s, synthetic_season)
        eff = centered_effects(s)
        for i in (0, 17, 131):
            th = scoring_intensity(s, synthetic_season.matches[i], eff)
            assert math.log(th.theta_h) == pytest.approx(lh[i], abs=1e-12)
            assert math.log(th.theta_a) == pytest.approx(la[i], abs=1e-12)

    @given(st.floats(0.01, 1.0), st.floats(0.0, 2.0))
    def test_monotone_in_attack_term(self, x, slope):
        base = zero_state(alpha_star=np.array([[0, slope, 0], [0, -slope, 0]]))
        more = zero_state(alpha_star=np.array([[0, slope + 0.1, 0], [0, -slope - 0.1, 0]]))
        m = make_match(eff_home=(0, x, 0, 0))
        assert scoring_intensity(more, m).theta_h > scoring_intensity(base, m).theta_h


class TestPointsLikelihood:
    def test_zero_counts(self):
        assert loglik_points(ScoringIntensities(1.0, 1.0), 0, 0) == pytest.approx(-2.0, abs=1e-15)

    def test_unit_count(self):
        assert loglik_points(ScoringIntensities(1.0, 1.0), 1, 0) == pytest.approx(-2.0, abs=1e-15)

    def test_high_precision_oracle(self):
        expected = oracles.poisson(60, mp.mpf(85)) + oracles.poisson(75, mp.mpf(85))
        assert loglik_points(ScoringIntensities(85.0, 85.0), 60, 75) == pytest.approx(float(expected), abs=1e-10)

    def test_rejects_bad_input(self):
        with pytest.raises(ValueError):
            loglik_points(ScoringIntensities(0.0, 1.0), 1, 1)


class TestLogistic:
    def test_five_sets_examples(self):
        assert prob_five_sets((0, 0, 0), 80, 90) == 0.5
        p = prob_five_sets((-30, 0, 0), 0, 0)
        assert 0 < p < 1e-13
        assert prob_five_sets((0, 0.01, -0.01), 113, 108) == pytest.approx(1 / (1 + math.exp(-0.05)), abs=1e-15)
        assert prob_five_sets((0, 0.01, -0.01), 113, 108) == pytest.approx(0.51250, abs=5e-6)

    def test_home_win_examples(self):
        assert prob_home_win((0, 0, 0, 0), 90, 80, 1) == 0.5
        assert prob_home_win((0, 1, -1, 0), 77, 77, 0) == 0.5
        assert prob_home_win((0, 0, 0, 5), 0, 0, 1) == pytest.approx(1 / (1 + math.exp(-5)), abs=1e-15)
        assert prob_home_win((0, 0, 0, 5), 0, 0, 1) == pytest.approx(0.99331, abs=5e-6)

    def test_home_win_rejects_nonbinary(self):
        with pytest.raises(ValueError):
            prob_home_win((0, 0, 0, 0), 1, 1, 0.5)

    @given(st.floats(-700, 700))
    def test_strictly_inside_unit_interval(self, x):
        # 1 - p is only representable down to ~1e-16, so check the lower tail and the symmetric complement
        p = prob_five_sets((x, 0, 0), 0, 0)
        q = prob_five_sets((-x, 0, 0), 0, 0)
        assert 0 < min(p, q) <= 0.5
        assert p + q == pytest.approx(1.0)


class TestJointLogPosterior:
    def test_empty_season_is_prior(self):
        season = SeasonData(TeamIndex(("A", "B")), ())
        spec = PriorSpec()
        s = zero_state()
        assert joint_log_posterior(s, season, spec) == log_prior(s, spec)

    @pytest.mark.parametrize("variant", ["basic", "scaled-iw"])
    def test_single_match_oracle(self, variant):
        rng = np.random.default_rng(11)
        season = small_season(1, rng)
        s = random_state(4, variant, rng)
        spec = PriorSpec(variant=variant)
        got = joint_log_posterior(s, season, spec)
        want = oracles.log_posterior(s, season.matches, spec)
        assert abs(got - float(want)) < 1e-10

    def test_negative_precision_gives_minus_infinity(self):
        s = with_hyper(zero_state(), tau_alpha=np.array([-1.0, 1.0, 1.0]))
        season = SeasonData(TeamIndex(("A", "B")), (make_match(),))
        assert joint_log_posterior(s, season, PriorSpec()) == -math.inf

    def test_additivity_over_matches(self, synthetic_season):
        from dataclasses import replace

        s = random_state(12, "basic", np.random.default_rng(5))
        spec = PriorSpec()
        full = joint_log_posterior(s, synthetic_season, spec)
        per = match_log_likelihood(s, synthetic_season)
        dropped = replace(synthetic_season, matches=synthetic_season.matches[1:])
        assert full - joint_log_posterior(s, dropped, spec) == pytest.approx(per[0], abs=1e-8)
        assert log_likelihood(s, synthetic_season) == pytest.approx(per.sum(), abs=1e-9)

    def test_variant_mismatch(self):
        with pytest.raises(ValueError):
            log_prior(zero_state(), PriorSpec(variant="scaled-iw"))

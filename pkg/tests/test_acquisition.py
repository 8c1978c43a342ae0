"""Acquisition value functions and the confidence-width schedules."""

import math

import numpy as np
import pytest
from scipy.special import ndtr

from gpbo import acquisition as acq
from gpbo.engine import TheoryParams


class TestNormalHelpers:
    def test_cdf_at_zero(self):
        assert acq.std_normal_cdf(0.0) == 0.5

    def test_pdf_at_zero(self):
        assert acq.std_normal_pdf(0.0) == pytest.approx(1.0 / math.sqrt(2 * math.pi), abs=1e-15)

    def test_cdf_quantile(self):
        assert acq.std_normal_cdf(1.6448536) == pytest.approx(0.95, abs=1e-6)

    def test_cdf_against_reference(self):
        grid = np.linspace(-8, 8, 2001)
        ours = np.array([acq.std_normal_cdf(z) for z in grid])
        np.testing.assert_allclose(ours, ndtr(grid), atol=1e-12)
        assert np.all(ours >= 0.0) and np.all(ours <= 1.0)

    def test_pdf_against_reference(self):
        grid = np.linspace(-8, 8, 1001)
        ref = np.exp(-0.5 * grid**2) / math.sqrt(2 * math.pi)
        ours = np.array([acq.std_normal_pdf(z) for z in grid])
        np.testing.assert_allclose(ours, ref, atol=1e-12)


class TestProbabilityOfImprovement:
    def test_at_incumbent(self):
        assert acq.pi_value(1.0, 1.0, 1.0) == 0.5

    def test_zero_std_indicator(self):
        assert acq.pi_value(2.0, 0.0, 1.0) == 1.0
        assert acq.pi_value(1.0, 0.0, 1.0) == 0.0
        assert acq.pi_value(0.5, 0.0, 1.0) == 0.0

    def test_unit_gap(self):
        assert acq.pi_value(2.0, 1.0, 1.0) == pytest.approx(ndtr(1.0), abs=1e-12)

    def test_range(self):
        rng = np.random.default_rng(0)
        for _ in range(200):
            v = acq.pi_value(rng.normal(), rng.uniform(0, 3), rng.normal())
            assert 0.0 <= v <= 1.0

    def test_non_finite_rejected(self):
        with pytest.raises(ValueError):
            acq.pi_value(math.nan, 1.0, 0.0)
        with pytest.raises(ValueError):
            acq.pi_value(0.0, math.inf, 0.0)


class TestExpectedImprovement:
    def test_zero_std_branch(self):
        assert acq.ei_value(5.0, 0.0, 1.0) == 0.0

    def test_at_incumbent(self):
        assert acq.ei_value(1.0, 1.0, 1.0) == pytest.approx(
            1.0 / math.sqrt(2 * math.pi), abs=1e-12
        )

    def test_dominant_improvement_limit(self):
        assert acq.ei_value(4.0, 1e-9, 1.0) == pytest.approx(3.0, rel=1e-9)

    def test_nonnegative_and_above_mean_gap(self):
        rng = np.random.default_rng(1)
        for _ in range(300):
            mean, std, inc = rng.normal(), rng.uniform(0, 2), rng.normal()
            v = acq.ei_value(mean, std, inc)
            assert v >= 0.0
            assert v >= max(0.0, mean - inc) - 1e-12

    def test_matches_monte_carlo(self):
        rng = np.random.default_rng(2)
        mean, std, inc = 0.3, 0.8, 0.5
        draws = rng.normal(mean, std, size=1_000_000)
        improvement = np.maximum(draws - inc, 0.0)
        mc = improvement.mean()
        se = improvement.std(ddof=1) / math.sqrt(draws.size)
        assert abs(acq.ei_value(mean, std, inc) - mc) < 3 * se

    def test_continuity_near_zero_std(self):
        v_small = acq.ei_value(0.2, 1e-12, 0.5)
        assert v_small == pytest.approx(0.0, abs=1e-9)


class TestUpperConfidenceBound:
    def test_zero_beta_is_mean(self):
        assert acq.ucb_value(0.7, 2.0, 0.0) == 0.7

    def test_simple_substitution(self):
        assert acq.ucb_value(0.0, 1.0, 4.0) == 2.0

    def test_monotone_in_std(self):
        rng = np.random.default_rng(3)
        for _ in range(100):
            mean, beta = rng.normal(), rng.uniform(0, 10)
            s1, s2 = sorted(rng.uniform(0, 3, size=2))
            assert acq.ucb_value(mean, s2, beta) >= acq.ucb_value(mean, s1, beta)

    def test_ordering_invariant_under_mean_shift(self):
        rng = np.random.default_rng(4)
        for _ in range(100):
            m1, m2 = rng.normal(size=2)
            s1, s2 = rng.uniform(0, 2, size=2)
            beta, c = rng.uniform(0, 9), rng.normal() * 10
            base = acq.ucb_value(m1, s1, beta) - acq.ucb_value(m2, s2, beta)
            shifted = acq.ucb_value(m1 + c, s1, beta) - acq.ucb_value(m2 + c, s2, beta)
            assert math.copysign(1, base) == math.copysign(1, shifted) or abs(base) < 1e-12


class TestBetaSchedule:
    def test_experiment_mode_value(self):
        expected = 2.0 * math.log(math.pi**2 / 0.3)
        assert acq.beta_schedule(1, 2, 0.1) == pytest.approx(expected, rel=1e-12)
        assert acq.beta_schedule(1, 2, 0.1) == pytest.approx(6.9868, abs=2e-4)

    def test_experiment_mode_increases_with_t(self):
        values = [acq.beta_schedule(t, 3, 0.1) for t in range(1, 50)]
        assert all(b2 > b1 for b1, b2 in zip(values, values[1:]))

    def test_theorem_mode_direct_evaluation(self):
        theory = TheoryParams(tail_a=1.0, tail_b=1.0, domain_width=1.0, delta=0.1)
        got = acq.beta_schedule(1, 1, 0.1, mode="theorem", theory=theory)
        inner = 1.0 * math.sqrt(math.log(4.0 / 0.1))
        expected = 2.0 * math.log(2.0 * math.pi**2 / 0.3) + 2.0 * math.log(inner)
        assert got == pytest.approx(expected, rel=1e-12)
        assert got > 0.0 and math.isfinite(got)

    def test_delta_domain_errors(self):
        with pytest.raises(ValueError):
            acq.beta_schedule(1, 2, 0.0)
        with pytest.raises(ValueError):
            acq.beta_schedule(1, 2, 1.0)
        with pytest.raises(ValueError):
            acq.beta_schedule(0, 2, 0.5)


class TestContinuity:
    def test_all_three_continuous_for_positive_std(self):
        rng = np.random.default_rng(5)
        eps = 1e-9
        for _ in range(100):
            mean, std, inc, beta = rng.normal(), rng.uniform(0.1, 2), rng.normal(), 2.0
            for fn in (
                lambda m, s: acq.pi_value(m, s, inc),
                lambda m, s: acq.ei_value(m, s, inc),
                lambda m, s: acq.ucb_value(m, s, beta),
            ):
                base = fn(mean, std)
                assert abs(fn(mean + eps, std) - base) < 1e-6
                assert abs(fn(mean, std + eps) - base) < 1e-6


class TestAcquisitionSpec:
    def test_dispatch(self):
        assert acq.AcquisitionSpec("ucb", beta=4.0).value(0.0, 1.0) == 2.0
        assert acq.AcquisitionSpec("pi", incumbent=0.0).value(0.0, 1.0) == 0.5
        assert acq.AcquisitionSpec("ei", incumbent=0.0).value(0.0, 1.0) == pytest.approx(
            1.0 / math.sqrt(2 * math.pi)
        )

    def test_validation(self):
        with pytest.raises(ValueError):
            acq.AcquisitionSpec("entropy")
        with pytest.raises(ValueError):
            acq.AcquisitionSpec("pi", incumbent=math.inf)
        with pytest.raises(ValueError):
            acq.AcquisitionSpec("ucb", beta=-1.0)

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from rvclt.errors import ConfigurationError, DomainError, SamplingError
from rvclt.tails import (
    AsymptoticTail,
    EmpiricalTail,
    OscillatingDensity,
    Pareto2,
    log_grid,
    sample_oscillating,
    sample_pareto2,
    tail_from_dict,
    tail_probability,
    truncated_second_moment,
)

BIG = 10**7


@pytest.fixture
def rng():
    return np.random.default_rng(20261016)


class TestPareto2:
    def test_median_of_abs(self):
        # |X| = r / sqrt(1 - U) at U = 1/2
        spec = Pareto2(r=1.0)
        assert spec.r / math.sqrt(0.5) == pytest.approx(math.sqrt(2.0), rel=1e-15)
        assert float(spec.abs_tail_probability(math.sqrt(2.0))) == pytest.approx(0.5, rel=1e-15)

    def test_empirical_tail_at_10(self, rng):
        x = sample_pareto2(rng, Pareto2(1.0, 0.5), BIG)
        assert np.mean(np.abs(x) > 10) == pytest.approx(0.01, abs=3e-4)

    def test_one_sided_mean(self, rng):
        spec = Pareto2(r=2.0, p_plus=1.0)
        assert spec.mean == 4.0
        x = sample_pareto2(rng, spec, BIG)
        assert np.all(x > 2.0)
        assert x.mean() == pytest.approx(4.0, rel=0.01)

    def test_symmetric_sign_balance(self, rng):
        x = Pareto2().sample(rng, 10**6)
        assert abs(np.mean(x > 0) - 0.5) < 5 * 0.5 / 1000

    def test_tail_at_boundary(self):
        assert tail_probability(Pareto2(1.0, 0.5), 1.0) == 0.5

    def test_K_at_e(self):
        assert truncated_second_moment(Pareto2(1.0), math.e) == pytest.approx(2.0, rel=1e-15)

    def test_domain_errors(self):
        with pytest.raises(DomainError):
            Pareto2(2.0).tail_probability(1.0)
        with pytest.raises(DomainError):
            Pareto2(2.0).truncated_second_moment(1.5)

    def test_invalid_spec(self):
        with pytest.raises(ConfigurationError):
            Pareto2(r=0.0)
        with pytest.raises(ConfigurationError):
            Pareto2(p_plus=1.2)

    def test_sampler_matches_tail_at_grid(self, rng):
        spec = Pareto2(1.5, 0.7)
        x = spec.sample(rng, BIG)
        for y in (2.0, 5.0, 10.0, 30.0, 100.0):
            p = float(spec.tail_probability(y))
            se = math.sqrt(p * (1 - p) / BIG)
            assert abs(np.mean(x > y) - p) < 3 * se


class TestOscillating:
    def test_derived_constants(self):
        d = OscillatingDensity(0.5, 0.0, 2.0, 1.0)
        C, D, c_r, _ = oracles.osc_constants(0.5, 0.0, 2.0, 1.0)
        assert (d.C, d.D) == pytest.approx((C, D), rel=1e-15)
        assert (d.C, d.D, d.c_r) == pytest.approx((0.25, -0.25, 0.8), rel=1e-15)
        assert d.c_r == pytest.approx(c_r, rel=1e-15)

    def test_density_integrates_to_one(self):
        d = OscillatingDensity(0.4, -0.6, 3.0, 2.0)
        # c_r = r^2/N(r) is the value that makes total mass one
        for y in (2.0, 7.0, 50.0):
            assert float(d.tail_probability(y)) == pytest.approx(oracles.osc_right_tail(y, 0.4, -0.6, 3.0, 2.0), rel=1e-9)

    def test_zero_modulation_is_pareto(self, rng):
        d = OscillatingDensity(0.0, 0.0, 2.0, 1.5)
        p = Pareto2(1.5)
        y = log_grid(1.5, 1e4, 9)
        np.testing.assert_allclose(d.tail_probability(y), p.tail_probability(y), rtol=1e-15)
        np.testing.assert_allclose(d.truncated_second_moment(y), p.truncated_second_moment(y), rtol=1e-12, atol=1e-15)
        assert d.acceptance_rate == 0.5
        # without modulation half the proposals are accepted and the law is Pareto2
        x = d.sample(rng, 10**6)
        assert np.mean(np.abs(x) > 15.0) == pytest.approx(0.01, abs=5e-4)

    def test_tail_at_10_matches_sampler(self, rng):
        d = OscillatingDensity(0.5, 0.0, 2.0, 1.0)
        target = d.c_r / 2 * 1e-2 * float(d.N(10.0))
        assert float(d.tail_probability(10.0)) == pytest.approx(target, rel=1e-15)
        x = sample_oscillating(rng, d, BIG)
        assert np.mean(x > 10.0) == pytest.approx(target, rel=0.05)

    def test_tail_at_exp_half_pi(self):
        d = OscillatingDensity(0.5, 0.0, 2.0, 1.0)
        y = math.exp(math.pi / 2)
        expected = d.c_r / 2 * math.exp(-math.pi) * (1 + d.C * math.cos(math.pi) + d.D * math.sin(math.pi))
        assert float(d.tail_probability(y)) == pytest.approx(expected, rel=1e-14)
        assert float(d.tail_probability(y)) == pytest.approx(oracles.osc_right_tail(y, 0.5, 0.0, 2.0, 1.0), rel=1e-9)

    def test_K_zero_modulation(self):
        d = OscillatingDensity(0.0, 0.0, 2.0, 1.0)
        assert float(d.truncated_second_moment(10.0)) == pytest.approx(2 * math.log(10), rel=1e-14)
        assert 2 * math.log(10) == pytest.approx(4.60517, abs=1e-5)

    def test_K_at_100_quadrature(self):
        d = OscillatingDensity(0.5, 0.0, 2.0, 1.0)
        k = float(d.truncated_second_moment(100.0))
        assert k == pytest.approx(oracles.osc_K_by_parts(100.0, 0.5, 0.0, 2.0, 1.0), rel=1e-8)
        assert k == pytest.approx(oracles.osc_K(100.0, 0.5, 0.0, 2.0, 1.0), rel=1e-8)
        # frozen from the two quadratures above
        assert k == pytest.approx(7.453391470427063, rel=1e-12)

    def test_K_anchored_at_r(self):
        d = OscillatingDensity(0.3, 0.2, 1.5, 3.0)
        assert float(d.truncated_second_moment(3.0)) == pytest.approx(0.0, abs=1e-14)

    def test_acceptance_rate_against_quadrature(self, rng):
        d = OscillatingDensity(0.5, 0.3, 1.0, 1.0)
        q = oracles.acceptance_by_quadrature(0.5, 0.3, 1.0, 1.0)
        assert d.acceptance_rate == pytest.approx(q, rel=1e-10)
        assert q == pytest.approx(0.76, rel=1e-10)
        # Monte Carlo over an envelope drawn with scipy's Pareto
        from scipy import stats

        prop = stats.pareto.rvs(2.0, scale=1.0, size=10**6, random_state=rng)
        acc = np.mean((1 + 0.5 * np.cos(np.log(prop)) + 0.3 * np.sin(np.log(prop))) / 2)
        assert acc == pytest.approx(q, rel=0.01)

    def test_sampler_symmetric_and_beyond_r(self, rng):
        x = OscillatingDensity(0.5, 0.3, 1.0, 2.0).sample(rng, 10**6)
        assert np.all(np.abs(x) > 2.0)
        assert abs(np.mean(x > 0) - 0.5) < 0.003

    def test_sampler_tail_at_grid(self, rng):
        d = OscillatingDensity(0.7, -0.4, 2.5, 1.0)
        x = d.sample(rng, BIG)
        for y in (1.5, 3.0, 7.0, 20.0, 60.0):
            p = float(d.tail_probability(y))
            se = math.sqrt(p * (1 - p) / BIG)
            assert abs(np.mean(x > y) - p) < 3 * se

    def test_slow_variation_of_K(self):
        d = OscillatingDensity(0.5, 0.0, 2.0, 1.0)
        ratio = float(d.truncated_second_moment(2e6) / d.truncated_second_moment(1e6))
        assert 1.0 <= ratio <= 1.05

    def test_tail_not_regularly_varying(self):
        d = OscillatingDensity(0.5, 0.0, 2.0, 1.0)
        x = log_grid(10.0, 1e6, 400)
        lam = 2.0
        ratio = d.N(lam * x) / d.N(x)
        np.testing.assert_allclose(ratio, d.tail_probability(lam * x) / d.tail_probability(x) * lam**2, rtol=1e-12)
        assert ratio.max() - ratio.min() > 0.01

    def test_invariants_rejected(self):
        with pytest.raises(ConfigurationError):
            OscillatingDensity(0.9, 0.9)
        with pytest.raises(ConfigurationError):
            OscillatingDensity(theta0=0.0)

    def test_boundary_modulation_accepted(self, rng):
        d = OscillatingDensity(1.0, 0.0, 2.0, 1.0)
        x = d.sample(rng, 1000)
        assert np.all(np.isfinite(x))

    def test_safeguard(self, rng):
        with pytest.raises(SamplingError):
            # acceptance 1/4 per proposal: 1000 draws cannot finish in two rounds
            OscillatingDensity(-1.0, 0.0, 2.0, 1.0).sample(rng, 1000, max_proposals=2)

    @settings(max_examples=25, deadline=None)
    @given(
        a=st.floats(-0.7, 0.7),
        b=st.floats(-0.7, 0.7),
        theta0=st.floats(0.2, 5.0),
        r=st.floats(0.5, 3.0),
        x_mult=st.floats(1.0, 1e5),
    )
    def test_closed_form_K_matches_quadrature(self, a, b, theta0, r, x_mult):
        d = OscillatingDensity(a, b, theta0, r)
        x = r * x_mult
        k = float(d.truncated_second_moment(x))
        ref = oracles.osc_K_by_parts(x, a, b, theta0, r)
        assert k == pytest.approx(ref, rel=1e-6, abs=1e-12)


class TestEmpiricalAndHelpers:
    def test_empirical_tail_functions(self):
        t = EmpiricalTail([1.0, -2.0, 3.0, -4.0])
        assert float(t.abs_tail_probability(2.0)) == 0.5
        assert float(t.tail_probability(0.0)) == 0.5
        assert float(t.truncated_second_moment(3.0)) == pytest.approx((1 + 4 + 9) / 4)
        assert float(t.abs_tail_probability_stderr(2.0)) == pytest.approx(math.sqrt(0.25 / 4))

    def test_empirical_rejects_bad_input(self):
        with pytest.raises(ConfigurationError):
            EmpiricalTail([])
        with pytest.raises(ConfigurationError):
            EmpiricalTail([1.0, np.nan])

    def test_asymptotic_tail(self):
        t = AsymptoticTail(4.0)
        assert float(t.abs_tail_probability(10.0)) == pytest.approx(0.04)
        assert float(t.abs_tail_probability(1.0)) == 1.0
        s = AsymptoticTail(4 / 3, Pareto2(1.0))
        assert float(s.abs_tail_probability(10.0)) == pytest.approx(4 / 3 * 0.01)

    def test_round_trip(self):
        for spec in (Pareto2(2.0, 0.3), OscillatingDensity(0.1, 0.2, 3.0, 1.5)):
            again = tail_from_dict(spec.to_dict())
            assert again.to_dict() == spec.to_dict()
        with pytest.raises(ConfigurationError):
            tail_from_dict({"kind": "Cauchy"})

import math

import numpy as np
import pytest

from rvclt.diagnostics import (
    BlockScheme,
    choose_block_scheme,
    eq8a_ratio,
    ld_ratio_scan,
    mixing_cf_check,
    moment_growth,
    paper_region_lower,
    petrov_conditions,
    petrov_statistics,
)
from rvclt.errors import ConfigurationError
from rvclt.models import IID, ConstantLaw, FiniteMA, LogNormalLaw, NormalLaw, SREGrey, SREKestenGoldie, StochVol
from rvclt.normalizer import solve_a_n
from rvclt.streams import Streams
from rvclt.tails import Pareto2

SEED = Streams(20261016)


class TestBlockScheme:
    def test_log_power_at_1e6(self):
        s = choose_block_scheme("IID", 10**6, {"eps": 0.5})
        assert math.log(1e6) ** 1.5 == pytest.approx(51.35, abs=0.01)
        assert s.r_n == 52 and s.k_n == 10**6 // 52

    def test_clipping_keeps_m_plus_one(self):
        for rule in ("LogPower", "RemarkRem4x"):
            assert choose_block_scheme("FiniteMA", 100, {"rule": rule, "m": 30}).r_n == 31
        assert choose_block_scheme("IID", 100, {"eps": 2.0}).r_n == 10

    def test_remark_rule_is_log_n(self):
        for n in (10**3, 10**5, 10**7):
            s = choose_block_scheme("SREKestenGoldie", n, {"eps": 0.5, "delta": 0.5})
            assert s.rule == "RemarkRem4x"
            assert s.r_n == math.ceil(math.log(n))

    def test_manual_and_errors(self):
        assert choose_block_scheme("IID", 1000, {"rule": "Manual", "r_n": 7}).r_n == 7
        with pytest.raises(ConfigurationError):
            choose_block_scheme("IID", 99)
        with pytest.raises(ConfigurationError):
            BlockScheme(10, 11)
        with pytest.raises(ConfigurationError):
            choose_block_scheme("IID", 1000, {"rule": "Fibonacci"})


class TestPetrov:
    def test_statistics_by_hand(self):
        y = np.array([-2.0, -0.5, 0.1, 0.4, 3.0])
        a, b, c = petrov_statistics(y, 10, (1.0,))
        assert a == pytest.approx(10 * 2 / 5)
        assert b == pytest.approx(10 * np.var([0.0, -0.5, 0.1, 0.4, 0.0], ddof=1))
        assert c == pytest.approx(10 * 0.0 / 5)

    def test_gaussian_stub_cond_b_is_one(self):
        n, k = 10**4, 100
        scheme = BlockScheme(n, n // k)
        rep = petrov_conditions(IID(NormalLaw(0.0, 1.0)), scheme, math.sqrt(n), eps_grid=(0.5, 1.0, 2.0), replicates=4000, rng_stream=SEED.child("gauss"))
        for eps, val in rep.cond_b.items():
            assert abs(val - 1.0) < 3 * rep.cond_b_stderr[eps], eps
        assert rep.cond_a == 0.0
        assert abs(rep.cond_c) < 3 * rep.cond_c_stderr

    def test_pareto_cond_a_matches_large_deviation_heuristic(self):
        n = 10**4
        tail = Pareto2()
        a_n = solve_a_n(tail, n)
        scheme = choose_block_scheme("IID", n, {"eps": 0.5})
        rep = petrov_conditions(IID(tail), scheme, a_n, replicates=10**5, rng_stream=SEED.child("pareto-a"))
        # k P(|S_r| > a_n) ~ k r P(|X| > a_n)
        target = scheme.k_n * scheme.r_n * float(tail.abs_tail_probability(a_n))
        assert abs(rep.cond_a - target) < 3 * rep.cond_a_stderr + 0.1 * target
        # slow variation: cond_b(1) - cond_b(eps) ~ n (K(a_n) - K(eps a_n)) / a_n^2, visible at this precision
        for eps in (0.25, 0.5):
            gap = n * float(tail.truncated_second_moment(a_n) - tail.truncated_second_moment(eps * a_n)) / a_n**2
            se = math.hypot(rep.cond_b_stderr[1.0], rep.cond_b_stderr[eps])
            assert abs(rep.cond_b[1.0] - rep.cond_b[eps] - gap) < 3 * se + 0.1 * gap

    def test_symmetric_cond_c(self):
        n = 10**4
        sv = StochVol((1.0, 0.5), Pareto2())
        scheme = choose_block_scheme(sv.kind, n, {"m": sv.m})
        rep = petrov_conditions(sv, scheme, math.exp(1.25) * solve_a_n(Pareto2(), n), replicates=4000, rng_stream=SEED.child("sv-c"))
        assert abs(rep.cond_c) < 2 * rep.cond_c_stderr

    def test_rejects_small_replicates(self):
        with pytest.raises(ValueError):
            petrov_conditions(IID(Pareto2()), BlockScheme(1000, 10), 10.0, replicates=999)


class TestLDScan:
    def test_single_term_ratio_is_exactly_one(self):
        rep = ld_ratio_scan(IID(Pareto2()), 1, [1.5, 3.0, 10.0], None, 1.0, replicates=10**5, rng_stream=SEED.child("ld1"))
        np.testing.assert_array_equal(rep.ratio, 1.0)

    def test_single_term_against_closed_form_tail(self):
        rep = ld_ratio_scan(IID(Pareto2()), 1, [1.5, 3.0, 10.0], Pareto2(), 1.0, replicates=10**6, rng_stream=SEED.child("ld1b"))
        assert np.all(np.abs(rep.ratio - 1.0) < 3 * rep.stderr)

    def test_unreachable_grid_reports_needed_replicates(self):
        with pytest.raises(ValueError, match="need at least"):
            ld_ratio_scan(IID(Pareto2()), 10, [1e6], Pareto2(), 1.0, replicates=1000, rng_stream=SEED.child("ld-x"))

    def test_region_lower(self):
        kg = SREKestenGoldie(LogNormalLaw.kesten_goldie(0.5), ConstantLaw(1.0))
        gg = SREGrey(ConstantLaw(0.5), Pareto2())
        assert paper_region_lower(kg, 1000) == pytest.approx(math.sqrt(1000) * math.log(1000) ** 2.5)
        assert paper_region_lower(gg, 1000, delta=0.1) == pytest.approx(1000**0.6)
        assert paper_region_lower(IID(Pareto2()), 100, delta=0.1) == pytest.approx(100**0.55)


class TestMixing:
    def test_iid_factorizes(self):
        n = 10**4
        a_n = solve_a_n(Pareto2(), n)
        rep = mixing_cf_check(IID(Pareto2()), n, BlockScheme(n, 1000), a_n, [0.5, 1.0, 2.0], replicates=2000, block_replicates=20000, rng_stream=SEED.child("mix-iid"))
        assert np.all(rep.discrepancy < 3 * rep.stderr + 1e-3)

    @pytest.mark.slow
    def test_ma_long_blocks_vs_pathological(self):
        n = 10**5
        ma = FiniteMA((1.0, 1.0), Pareto2())
        a_n = math.sqrt(2) * solve_a_n(Pareto2(), n)
        u = [0.25, 0.5, 1.0, 1.5, 2.0]
        good = mixing_cf_check(ma, n, BlockScheme(n, 10**4), a_n, u, replicates=4000, block_replicates=40000, rng_stream=SEED.child("mix-ma"))
        assert good.max_discrepancy < 0.05
        bad = mixing_cf_check(ma, n, BlockScheme(n, 1), a_n, u, replicates=4000, block_replicates=10**6, rng_stream=SEED.child("mix-ma-bad"))
        assert bad.max_discrepancy > 3 * good.max_discrepancy


class TestMomentGrowth:
    def test_constant_stub_is_exact(self):
        rep = moment_growth(IID(ConstantLaw(1.0)), [10, 100, 1000], delta=0.1, replicates=1000, rng_stream=SEED.child("mg1"))
        assert rep.gamma == pytest.approx(1.9, abs=1e-12)
        np.testing.assert_allclose(rep.moments, np.array([10, 100, 1000.0]) ** 1.9, rtol=1e-12)

    def test_iid_pareto_linear_growth(self):
        rep = moment_growth(IID(Pareto2()), [100, 1000, 10000], delta=0.1, replicates=4000, rng_stream=SEED.child("mg2"))
        assert abs(rep.gamma - 1.0) < 0.15

    def test_sv_growth_bounded(self):
        rep = moment_growth(StochVol((1.0, 0.5), Pareto2()), [100, 1000, 10000], delta=0.1, replicates=4000, rng_stream=SEED.child("mg3"))
        assert rep.gamma <= 1.2

    def test_arguments(self):
        with pytest.raises(ValueError):
            moment_growth(IID(Pareto2()), [10, 100], replicates=10)
        with pytest.raises(ValueError):
            moment_growth(IID(Pareto2()), [10, 100, 1000], delta=1.5)

    def test_eq8a_ratio(self):
        assert eq8a_ratio(100, 10, 1.0, 2.0, 5.0, 0.0) == pytest.approx(10 / (2 * 5))


@pytest.mark.slow
class TestSreLargeDeviations:
    """Module examples at r_n = 10^3 with 10^6 block replicates; see the decisions ledger for KG."""

    def test_kesten_goldie_band(self):
        from rvclt.tails import AsymptoticTail
        from rvclt.variance import kg_constants

        kg = SREKestenGoldie(LogNormalLaw.kesten_goldie(0.5), ConstantLaw(1.0))
        c = kg_constants(kg.A, kg.B)
        rep = ld_ratio_scan(kg, 1000, None, AsymptoticTail(c.c_infinity), c.c0, replicates=10**6, rng_stream=SEED.child("kg-ld"), quantile_levels=(1e-3,))
        assert np.all((rep.ratio >= 0.5 * c.c0) & (rep.ratio <= 1.5 * c.c0))

    def test_grey_band(self):
        from rvclt.tails import AsymptoticTail
        from rvclt.variance import gg_constants

        gg = SREGrey(ConstantLaw(0.5), Pareto2())
        g = gg_constants(gg.A)
        rep = ld_ratio_scan(gg, 1000, None, AsymptoticTail(g.tail_equiv, gg.B), g.c0, replicates=10**6, rng_stream=SEED.child("gg-ld"))
        assert np.all((rep.ratio >= 0.5 * g.c0) & (rep.ratio <= 1.5 * g.c0))

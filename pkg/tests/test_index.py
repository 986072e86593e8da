"""Marginal sums, the index, closed forms, limit procedure, Q-values."""

import math

import numpy as np
import pytest

from obsched import costs
from obsched.dynamics import ArmParams, fixed_point, threshold_word, y0, y1
from obsched.index import (
    IndexQuery,
    UncertifiedPeriodError,
    _marginal_sums_batch,
    closed_form_noiseless,
    closed_form_noiseless_limit,
    index_beta1,
    index_table,
    marginal_cost,
    marginal_work,
    q_value,
    truncation_horizon,
    whittle_index,
    whittle_index_word,
)
from obsched.words import Word, central_palindrome, christoffel, farey


def random_params(rng, r_lo=0.3, r_hi=1.0, a1_max=3.0):
    r = float(rng.uniform(r_lo, r_hi))
    a0 = float(rng.uniform(0.0, 0.5))
    a1 = a0 + float(rng.uniform(0.05, a1_max))
    return ArmParams(r=r, a0=a0, a1=a1)


class TestTruncation:
    def test_rule(self):
        assert truncation_horizon(0.9, 1e-12) == math.ceil(
            math.log(1e-12) / math.log(0.9)
        )
        assert truncation_horizon(0.0, 1e-12) == 1

    def test_cap(self):
        assert truncation_horizon(0.9999999, 1e-300) == 5_000_000

    def test_query_resolution(self):
        q = IndexQuery(ArmParams(r=0.9, a0=0.0, a1=1.0), costs.linear(), 0.9, 1.0)
        assert q.horizon == truncation_horizon(0.9, 1e-12)
        q = IndexQuery(
            ArmParams(r=0.9, a0=0.0, a1=1.0), costs.linear(), 0.9, 1.0, T=17
        )
        assert q.horizon == 17


class TestMarginals:
    def test_work_beta0(self):
        p = ArmParams(r=0.9, a0=0.0, a1=1.0)
        q = IndexQuery(p, costs.linear(), 0.0, 2.0)
        assert marginal_work(q, 2.0) == pytest.approx(1.0)

    def test_work_always_active_threshold(self):
        p = ArmParams(r=0.9, a0=0.0, a1=1.0, c0=0.5, c1=2.0)
        q = IndexQuery(p, costs.linear(), 0.8, 2.0)
        assert marginal_work(q, -math.inf) == pytest.approx(1.5)

    def test_work_lower_bound_random(self):
        rng = np.random.default_rng(23)
        for _ in range(100):
            p = random_params(rng)
            beta = float(rng.uniform(0.0, 0.95))
            x = float(rng.uniform(0.05, 10.0))
            q = IndexQuery(p, costs.linear(), beta, x)
            slack = beta ** (q.horizon + 1) / (1.0 - beta) if beta > 0 else 0.0
            assert marginal_work(q, x) >= (1.0 - beta) - slack - 1e-12

    def test_cost_beta0_and_constant(self):
        p = ArmParams(r=0.9, a0=0.0, a1=1.0)
        q = IndexQuery(p, costs.linear(), 0.0, 2.0)
        assert marginal_cost(q, 2.0) == pytest.approx(0.0)
        q = IndexQuery(p, costs.constant(4.0), 0.9, 2.0)
        assert marginal_cost(q, 2.0) == pytest.approx(0.0, abs=1e-12)

    def test_batch_matches_scalar(self):
        rng = np.random.default_rng(24)
        for _ in range(30):
            p = random_params(rng)
            beta = float(rng.uniform(0.1, 0.95))
            x = float(rng.uniform(0.1, 8.0))
            s = float(rng.uniform(0.1, 8.0))
            T = truncation_horizon(beta, 1e-12)
            mc, mw, knife = _marginal_sums_batch(
                p.r, p.a0, p.a1, p.c0, p.c1, beta,
                costs.linear(), np.array([x]), np.array([s]), T,
            )
            if knife[0]:
                continue
            q = IndexQuery(p, costs.linear(), beta, x, T=T)
            assert mc[0] == pytest.approx(marginal_cost(q, s), rel=1e-12, abs=1e-12)
            assert mw[0] == pytest.approx(marginal_work(q, s), rel=1e-12, abs=1e-12)


class TestWhittleIndex:
    def test_constant_cost_zero(self):
        p = ArmParams(r=0.9, a0=0.0, a1=1.0)
        rec = whittle_index(IndexQuery(p, costs.constant(3.0), 0.9, 2.0))
        assert rec.lam == pytest.approx(0.0, abs=1e-12)

    def test_x_zero_noiseless_equals_beta(self):
        # Direct evaluation of the marginal ratio at x = 0: the passive
        # start pays one unit of variance one step later, so the index is
        # exactly beta (see the ledger on the closed form's beta factor).
        for beta in (0.3, 0.9, 0.99):
            p = ArmParams(r=0.9, a0=0.0, a1=math.inf)
            rec = whittle_index(IndexQuery(p, costs.linear(), beta, 0.0))
            assert rec.lam == pytest.approx(beta, rel=1e-9)

    def test_matches_closed_form(self):
        arm = ArmParams.from_var_decay(0.9, 0.0, 1e8)
        for x in (0.5, 2.1, 6.3, 9.2):
            rec = whittle_index(IndexQuery(arm, costs.linear(), 0.9, x))
            assert rec.lam == pytest.approx(
                closed_form_noiseless(0.9, 0.9, x), rel=1e-3
            )

    def test_scale_covariance(self):
        rng = np.random.default_rng(25)
        p = random_params(rng)
        beta = 0.9
        base = whittle_index(IndexQuery(p, costs.linear(), beta, 2.0)).lam
        scaled = whittle_index(
            IndexQuery(p, costs.linear().scale(7.0), beta, 2.0)
        ).lam
        shifted = whittle_index(
            IndexQuery(p, costs.linear().shift(11.0), beta, 2.0)
        ).lam
        assert scaled == pytest.approx(7.0 * base, rel=1e-12)
        assert shifted == pytest.approx(base, rel=1e-9, abs=1e-9)

    def test_truncation_consistency(self):
        # |lambda_T - lambda_2T| <= K beta^T with K taken from run quantities.
        rng = np.random.default_rng(26)
        for _ in range(20):
            p = random_params(rng)
            beta = float(rng.uniform(0.8, 0.99))
            x = float(rng.uniform(0.2, 8.0))
            T = max(200, truncation_horizon(beta, 1e-10))
            r1 = whittle_index(IndexQuery(p, costs.linear(), beta, x, T=T))
            r2 = whittle_index(IndexQuery(p, costs.linear(), beta, x, T=2 * T))
            cmax = max(abs(r1.numerator), 1.0) / (1.0 - beta)
            K = (cmax + abs(r1.lam)) / r2.denominator
            assert abs(r1.lam - r2.lam) <= K * beta**T + 1e-12

    def test_word_constrained_agreement(self):
        rng = np.random.default_rng(27)
        fracs = [f for f in farey(8) if f.denominator >= 2]
        done = 0
        while done < 25:
            f = fracs[rng.integers(len(fracs))]
            w = christoffel(f.numerator, f.denominator)
            pal = central_palindrome(w)
            p = random_params(rng, r_lo=0.6)
            y01p = fixed_point(p, Word("01") + pal)
            y10p = fixed_point(p, Word("10") + pal)
            if not y10p - y01p > 1e-8 * (1.0 + y10p):
                continue
            x = y01p + float(rng.uniform(0.3, 0.7)) * (y10p - y01p)
            beta = float(rng.uniform(0.5, 0.95))
            q = IndexQuery(p, costs.linear(), beta, x)
            rec = whittle_index(q)
            num, den = whittle_index_word(p, costs.linear(), beta, x, w, q.horizon)
            assert rec.lam == pytest.approx(num / den, rel=1e-8)
            done += 1

    def test_knife_edge_flagged_and_resolved(self):
        # Exactly at the active fixed point every iterate ties the threshold;
        # the balanced-continuation rule must reproduce the all-active word.
        p = ArmParams(r=0.8, a0=0.1, a1=1.0)
        x = y1(p)
        rec = whittle_index(IndexQuery(p, costs.linear(), 0.9, x))
        assert rec.knife_edge
        num, den = whittle_index_word(p, costs.linear(), 0.9, x, Word("1"), 2000)
        assert rec.lam == pytest.approx(num / den, rel=1e-9)

    def test_boundary_words_used_at_y1_y0(self):
        p = ArmParams(r=0.8, a0=0.1, a1=1.0)
        assert str(whittle_index(IndexQuery(p, costs.linear(), 0.9, y1(p))).word) == "1"
        assert str(whittle_index(IndexQuery(p, costs.linear(), 0.9, y0(p))).word) == "0"

    def test_zero_denominator_raises(self):
        p = ArmParams(r=0.9, a0=0.0, a1=1.0, c0=1.0, c1=1.0)
        with pytest.raises(ArithmeticError):
            whittle_index(IndexQuery(p, costs.linear(), 0.9, 2.0))

    def test_high_beta_warns(self):
        p = ArmParams(r=0.9, a0=0.0, a1=1.0)
        with pytest.warns(RuntimeWarning):
            whittle_index(IndexQuery(p, costs.linear(), 0.9995, 2.0, T=50))


class TestClosedForm:
    def test_limit_mode_examples(self):
        assert closed_form_noiseless_limit(0.0) == pytest.approx(1.0)
        assert closed_form_noiseless_limit(2.0) == pytest.approx(6.0)

    def test_limit_is_ceiling_integral(self):
        for x in (0.25, 1.5, 3.75, 6.2):
            grid = np.linspace(0.0, x + 1.0, 400001)
            quad = np.trapezoid(np.ceil(grid[1:]), grid[1:]) + grid[1]
            assert closed_form_noiseless_limit(x) == pytest.approx(quad, rel=1e-4)

    def test_finite_mode_against_direct_simulation(self):
        # Independent oracle: evaluate the defining marginal ratio on the
        # exactly-noiseless arm (a1 = inf) by direct orbit summation.
        rng = np.random.default_rng(28)
        for _ in range(40):
            rho = float(rng.uniform(0.05, 0.95))
            beta = float(rng.uniform(0.05, 0.95))
            x = float(rng.uniform(0.0, 0.999 / (1.0 - rho)))
            arm = ArmParams(r=math.sqrt(rho), a0=0.0, a1=math.inf)
            lam = whittle_index(
                IndexQuery(arm, costs.linear(), beta, x), word_max_len=1
            ).lam
            assert closed_form_noiseless(rho, beta, x) == pytest.approx(
                lam, rel=1e-9, abs=1e-12
            )

    def test_finite_mode_x_zero_equals_beta(self):
        for rho in (0.1, 0.5, 0.9):
            for beta in (0.2, 0.9):
                assert closed_form_noiseless(rho, beta, 0.0) == pytest.approx(beta)

    def test_rejects_domain(self):
        with pytest.raises(ValueError):
            closed_form_noiseless(0.9, 0.9, 10.5)
        with pytest.raises(ValueError):
            closed_form_noiseless(1.0, 0.9, 1.0)
        with pytest.raises(ValueError):
            closed_form_noiseless_limit(-0.5)


class TestIndexBeta1:
    def test_constant_cost_zero(self):
        p = ArmParams(r=1.0, a0=0.0, a1=1e6)
        assert index_beta1(p, costs.constant(2.0), 0.5, 100) == pytest.approx(
            0.0, abs=1e-9
        )

    def test_limit_example(self):
        p = ArmParams(r=1.0, a0=0.0, a1=1e6)
        got = index_beta1(p, costs.linear(), 0.5, 400)
        assert got == pytest.approx(2.0, rel=2e-2)

    def test_period_bookkeeping(self):
        p = ArmParams(r=1.0, a0=0.0, a1=1e6)
        tw = threshold_word(p, 0.5, 16)
        assert tw.periodic and len(tw.word) == 2  # denominator limit 1/2

    def test_uncertified_period_raises(self):
        p = ArmParams(r=1.0, a0=0.0, a1=1.0)
        from obsched.dynamics import sturmian_fixed_point

        lo, hi = sturmian_fixed_point(p, (3.0 - math.sqrt(5.0)) / 2.0, 30)
        with pytest.raises(UncertifiedPeriodError):
            index_beta1(p, costs.linear(), 0.5 * (lo + hi), 50, word_max_len=8)


class TestQValue:
    def test_constant_cost_geometric(self):
        p = ArmParams(r=0.9, a0=0.0, a1=1.0)
        beta, k, T = 0.9, 3.0, 400
        got = q_value(p, costs.constant(k), beta, 0.0, 2.0, 0, math.inf, T)
        assert got == pytest.approx(k / (1.0 - beta), rel=1e-10)

    def test_identity_with_marginals(self):
        rng = np.random.default_rng(29)
        for _ in range(50):
            p = random_params(rng)
            beta = float(rng.uniform(0.1, 0.95))
            nu = float(rng.uniform(-1.0, 3.0))
            x = float(rng.uniform(0.1, 8.0))
            s = float(rng.uniform(0.1, 8.0))
            q = IndexQuery(p, costs.linear(), beta, x)
            T = q.horizon
            lhs = q_value(p, costs.linear(), beta, nu, x, 1, s, T) - q_value(
                p, costs.linear(), beta, nu, x, 0, s, T
            )
            rhs = nu * marginal_work(q, s) - marginal_cost(q, s)
            assert lhs == pytest.approx(rhs, rel=1e-9, abs=1e-9)


class TestIndexTable:
    def test_monotone_for_admissible_cost(self):
        p = ArmParams(r=0.9, a0=0.0, a1=0.01)
        grid = np.geomspace(1e-2, 1e2, 300)
        table = index_table(p, costs.linear(), 0.99, grid, words=False)
        assert table.monotonicity_violations == 0

    def test_detects_non_monotone_power_cost(self):
        p = ArmParams(r=1.0, a0=0.0, a1=1.0)
        grid = np.geomspace(1e-2, 1e2, 300)
        table = index_table(p, costs.power(-1.5), 0.99, grid, words=False)
        assert table.monotonicity_violations > 0

    def test_constant_cost_all_zero(self):
        p = ArmParams(r=0.9, a0=0.0, a1=1.0)
        grid = np.geomspace(0.1, 10.0, 64)
        table = index_table(p, costs.constant(1.0), 0.9, grid, words=False)
        assert all(abs(rec.lam) < 1e-12 for rec in table.records)
        assert table.monotonicity_violations == 0

    def test_words_attached(self):
        p = ArmParams(r=0.9, a0=0.1, a1=1.0)
        grid = np.array([0.5 * y1(p), 1.5 * y0(p)])
        table = index_table(p, costs.linear(), 0.9, grid)
        assert str(table.records[0].word) == "1"
        assert str(table.records[1].word) == "0"

    def test_rejects_bad_grid(self):
        p = ArmParams(r=0.9, a0=0.0, a1=1.0)
        with pytest.raises(ValueError):
            index_table(p, costs.linear(), 0.9, np.array([2.0, 1.0]))

    def test_knife_edge_points_reevaluated(self):
        # A grid point at the active fixed point ties the threshold forever;
        # it must come back flagged, via the scalar branch-resolving path,
        # without breaking monotonicity.
        p = ArmParams(r=0.8, a0=0.1, a1=1.0)
        grid = np.sort(
            np.unique(np.concatenate([np.geomspace(0.5, 5.0, 20), [y1(p)]]))
        )
        table = index_table(p, costs.linear(), 0.9, grid)
        flagged = [rec for rec in table.records if rec.knife_edge]
        assert len(flagged) == 1
        assert flagged[0].x == pytest.approx(y1(p))
        assert table.monotonicity_violations == 0


class TestCrossRoutes:
    """Independent computational routes must agree with each other."""

    def test_beta1_limit_approached_by_high_beta(self):
        import warnings

        arm = ArmParams(r=1.0, a0=0.0, a1=1e6)
        for x in (0.5, 1.5, 2.5):
            lim = index_beta1(arm, costs.linear(), x, 400)
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", RuntimeWarning)
                hi = whittle_index(
                    IndexQuery(arm, costs.linear(), 0.999, x), word_max_len=1
                ).lam
            assert abs(hi - lim) / lim < 5e-3  # convergence is O(1 - beta)

    def test_denominator_constant_on_word_interval(self):
        p = ArmParams(r=0.9, a0=0.05, a1=0.9)
        y01 = fixed_point(p, Word("01"))
        y10 = fixed_point(p, Word("10"))
        dens = [
            whittle_index(
                IndexQuery(p, costs.linear(), 0.9, y01 + f * (y10 - y01)),
                word_max_len=4,
            ).denominator
            for f in (0.1, 0.3, 0.5, 0.7, 0.9)
        ]
        assert max(dens) - min(dens) <= 1e-12

    def test_high_precision_recomputation(self):
        # 50-digit re-evaluation of the defining sums.
        mp = pytest.importorskip("mpmath")
        mp.mp.dps = 50

        def lam_mp(p, beta, x, T):
            r2 = mp.mpf(p.r) ** 2
            num = mp.mpf(0)
            den = mp.mpf(0)
            for first in (0, 1):
                v = mp.mpf(x)
                disc = mp.mpf(1)
                sgn = 1 if first == 0 else -1
                for t in range(T + 1):
                    act = first if t == 0 else (1 if v >= x else 0)
                    num += sgn * disc * v
                    den -= sgn * disc * act
                    a = mp.mpf(p.a1 if act else p.a0)
                    v = (r2 * v + 1) / (a * r2 * v + a + 1)
                    disc *= mp.mpf(beta)
            return num / den

        for r, a0, a1, beta, x in [
            (0.9, 0.05, 0.9, 0.9, 2.0),
            (0.8, 0.0, 0.5, 0.95, 1.3),
            (1.0, 0.0, 0.1, 0.95, 1.1),
        ]:
            p = ArmParams(r=r, a0=a0, a1=a1)
            T = truncation_horizon(beta, 1e-12)
            ours = whittle_index(
                IndexQuery(p, costs.linear(), beta, x), word_max_len=1
            ).lam
            ref = float(lam_mp(p, beta, x, T))
            assert ours == pytest.approx(ref, rel=1e-12)


class TestFig2Regression:
    # Frozen after cross-validating lambda against the value-iteration
    # oracle at the interior points (see oracle tests); numerator is the
    # marginal cost at s = x.
    SNAPSHOT = {
        0.05: (0.04361785477658486, 1.0, 0.04361785477658486),
        0.2: (0.0541500491693796, 1.0, 0.0541500491693796),
        0.7: (0.09699401794341611, 1.0, 0.09699401794341611),
        1.5: (0.1892475946463037, 1.0, 0.1892475946463037),
        2.9: (0.4155437416421819, 1.0, 0.4155437416421819),
        4.2: (0.6925439089106931, 1.0, 0.6925439089106931),
        5.0: (0.2808037230968239, 0.2537814064004529, 1.1064787096881767),
        5.26: (0.0634345774059284, 0.04845296552754874, 1.3091990699694451),
    }

    def test_snapshot(self):
        p = ArmParams(r=0.9, a0=0.0, a1=0.01)
        for x, (num, den, lam) in self.SNAPSHOT.items():
            rec = whittle_index(
                IndexQuery(p, costs.linear(), 0.99, x), word_max_len=1
            )
            assert rec.numerator == pytest.approx(num, rel=1e-12)
            assert rec.denominator == pytest.approx(den, rel=1e-12)
            assert rec.lam == pytest.approx(lam, rel=1e-12)

"""Value-iteration oracle, threshold extraction, PCLI suite, majorisation."""

import math

import numpy as np
import pytest

from obsched import costs
from obsched.dynamics import ArmParams, moebius_matrix, phi_word, y0, y1
from obsched.index import IndexQuery, whittle_index
from obsched.oracle import (
    DPGrid,
    PcliConfig,
    cross_validate,
    default_grid,
    dp_threshold,
    majorisation_check,
    pcli_report,
    value_iteration,
)
from obsched.words import Word, central_palindrome, christoffel, farey


def random_params(rng, r_lo=0.4, r_hi=0.98, a1_max=2.0):
    r = float(rng.uniform(r_lo, r_hi))
    a0 = float(rng.uniform(0.0, 0.4))
    a1 = a0 + float(rng.uniform(0.1, a1_max))
    return ArmParams(r=r, a0=a0, a1=a1)


class TestGrid:
    def test_validation(self):
        with pytest.raises(ValueError):
            DPGrid(2.0, 1.0)
        with pytest.raises(ValueError):
            DPGrid(1.0, 2.0, n=8)
        with pytest.raises(ValueError):
            DPGrid(0.0, 2.0, spacing="log")
        with pytest.raises(ValueError):
            DPGrid(1.0, 2.0, spacing="cubic")

    def test_default_grid_brackets_fixed_points(self):
        p = ArmParams(r=0.9, a0=0.1, a1=1.0)
        g = default_grid(p)
        pts = g.points()
        assert pts[0] < y1(p) < y0(p) < pts[-1]

    def test_default_grid_rejects_infinite_y0(self):
        with pytest.raises(ValueError):
            default_grid(ArmParams(r=1.0, a0=0.0, a1=1.0))


class TestValueIteration:
    def test_extreme_prices_give_extreme_policies(self):
        p = ArmParams(r=0.9, a0=0.0, a1=1.0)
        g = default_grid(p, n=256)
        beta = 0.9
        lam_hi = whittle_index(IndexQuery(p, costs.linear(), beta, g.hi)).lam
        sol = value_iteration(p, costs.linear(), beta, lam_hi * 2.0 + 1.0, g)
        assert np.all(sol.actions == 0)
        assert dp_threshold(sol).threshold == math.inf
        sol = value_iteration(p, costs.linear(), beta, -0.5, g)
        assert np.all(sol.actions == 1)
        assert dp_threshold(sol).threshold == -math.inf

    def test_constant_cost_passive(self):
        p = ArmParams(r=0.9, a0=0.0, a1=1.0)
        sol = value_iteration(p, costs.constant(2.0), 0.9, 0.3, default_grid(p, n=128))
        assert np.all(sol.actions == 0)

    def test_beta0_one_step(self):
        p = ArmParams(r=0.9, a0=0.0, a1=1.0)
        sol = value_iteration(p, costs.linear(), 0.0, 0.5, default_grid(p, n=128))
        assert np.all(sol.actions == 0)
        np.testing.assert_allclose(sol.values, sol.grid.points(), rtol=1e-12)

    def test_value_sandwich(self):
        # V must lie between the all-active and all-passive policy values.
        p = ArmParams(r=0.8, a0=0.1, a1=1.0)
        beta, nu = 0.85, 0.4
        g = default_grid(p, n=512)
        sol = value_iteration(p, costs.linear(), beta, nu, g)
        from obsched.index import q_value

        T = 400
        for k in (10, 200, 400):
            x = float(g.points()[k])
            best_threshold = min(
                q_value(p, costs.linear(), beta, nu, x, a, s, T)
                for a in (0, 1)
                for s in (-math.inf, math.inf, 0.5 * (y1(p) + y0(p)))
            )
            assert sol.values[k] <= best_threshold + 1e-3


class TestDpThreshold:
    def test_interior_threshold_matches_index(self):
        rng = np.random.default_rng(31)
        for _ in range(3):
            p = random_params(rng)
            beta = float(rng.uniform(0.6, 0.9))
            lo, hi = y1(p), y0(p)
            x_star = float(rng.uniform(lo + 0.2 * (hi - lo), hi - 0.2 * (hi - lo)))
            lam = whittle_index(IndexQuery(p, costs.linear(), beta, x_star)).lam
            g = default_grid(p, n=2048)
            sol = value_iteration(p, costs.linear(), beta, lam, g)
            rep = dp_threshold(sol)
            assert rep.is_threshold
            pts = g.points()
            k = int(np.searchsorted(pts, x_star))
            cell = pts[min(k + 1, g.n - 1)] - pts[max(k - 1, 0)]
            assert abs(rep.threshold - x_star) <= 2.0 * cell

    def test_non_threshold_reported(self):
        p = ArmParams(r=0.9, a0=0.0, a1=1.0)
        g = DPGrid(0.1, 10.0, n=64)
        sol = value_iteration(p, costs.linear(), 0.5, 0.2, g)
        broken = sol.__class__(
            grid=sol.grid,
            nu=sol.nu,
            values=sol.values,
            actions=np.array([0, 1] * 32),
            iterations=sol.iterations,
            residual=sol.residual,
        )
        rep = dp_threshold(broken)
        assert not rep.is_threshold
        assert rep.switches > 1


class TestCrossValidation:
    def test_action_flip(self):
        rng = np.random.default_rng(32)
        for _ in range(5):
            p = random_params(rng)
            beta = float(rng.uniform(0.5, 0.95))
            lo, hi = y1(p), y0(p)
            x_star = float(rng.uniform(lo + 0.1 * (hi - lo), hi - 0.1 * (hi - lo)))
            cv = cross_validate(p, costs.linear(), beta, x_star)
            assert cv.action_above == 0
            assert cv.action_below == 1
            assert cv.threshold_ok


class TestPcli:
    def test_admissible_cost_passes(self):
        p = ArmParams(r=0.9, a0=0.0, a1=0.01)
        cfg = PcliConfig(work_samples=100, lambda_points=150, sweep_points=400)
        report = pcli_report(p, costs.linear(), 0.95, cfg)
        assert report["pcli1"]["ok"]
        assert report["pcli2"]["ok"]
        assert report["discontinuities"]["ok"]
        assert report["pcli3"]["ok"]
        assert report["ok"]

    def test_power_cost_fails_monotonicity(self):
        p = ArmParams(r=1.0, a0=0.0, a1=1.0)
        cfg = PcliConfig(
            work_samples=50, lambda_points=400, sweep_points=300,
            state_lo=0.05, state_hi=30.0,
        )
        report = pcli_report(p, costs.power(-1.5), 0.99, cfg)
        assert not report["pcli2"]["ok"]
        assert not report["ok"]

    def test_beta0_trivial(self):
        p = ArmParams(r=0.9, a0=0.0, a1=1.0)
        cfg = PcliConfig(work_samples=50, lambda_points=100, sweep_points=200)
        report = pcli_report(p, costs.linear(), 0.0, cfg)
        assert report["pcli1"]["ok"]
        assert report["ok"]

    def test_discontinuity_growth_polynomial(self):
        p = ArmParams(r=0.9, a0=0.05, a1=0.8)
        cfg = PcliConfig(sweep_points=3000, work_samples=20, lambda_points=60)
        report = pcli_report(p, costs.linear(), 0.9, cfg)
        assert report["discontinuities"]["fitted_exponent"] <= 4.5


class TestMajorisation:
    def test_equal_sequences(self):
        res = majorisation_check([1.0, 2.0], [1.0, 2.0], [lambda u: 1 / u] * 2)
        assert res.hypotheses_ok
        assert res.holds
        assert res.lhs == pytest.approx(res.rhs)

    def test_single_term_example(self):
        res = majorisation_check([1.0], [2.0], [lambda u: 1.0 / u])
        assert res.hypotheses_ok
        assert res.holds
        assert res.lhs == pytest.approx(1.0)
        assert res.rhs == pytest.approx(0.5)

    def test_hypothesis_violation_reported(self):
        res = majorisation_check([2.0, 1.0], [1.0, 2.0], [lambda u: 1 / u] * 2)
        assert not res.hypotheses_ok
        assert any("non-decreasing" in f for f in res.hypothesis_failures)

    def test_integrated_sequences(self):
        # The c, d sequences of the palindromic-orbit lemma with
        # f_i(u) = beta^i / u^2 are exactly the monotonicity-step inputs.
        rng = np.random.default_rng(33)
        fracs = [f for f in farey(8) if f.denominator >= 2]
        for _ in range(50):
            f = fracs[rng.integers(len(fracs))]
            pal = central_palindrome(christoffel(f.numerator, f.denominator))
            p = random_params(rng)
            n_rep = int(rng.integers(0, 3))
            lo_x = phi_word(p, pal, 0.0)
            hi_x = phi_word(p, pal, 1.0 / (1.0 - p.r2))
            x = float(rng.uniform(lo_x, hi_x)) if hi_x > lo_x else lo_x
            w01 = Word("01") + pal
            w10 = Word("10") + pal
            c = []
            d = []
            for k in range(1, len(w01) + 1):
                m01 = moebius_matrix(p, w01 * n_rep + w01.prefix(k))
                m10 = moebius_matrix(p, w10 * n_rep + w10.prefix(k))
                c.append(m01.m21 * x + m01.m22)
                d.append(m10.m21 * x + m10.m22)
            beta = float(rng.uniform(0.2, 0.99))
            fam = [
                (lambda i: (lambda u: beta ** (i + 1) / u**2))(i)
                for i in range(len(c))
            ]
            res = majorisation_check(c, d, fam)
            assert res.hypotheses_ok, res.hypothesis_failures
            assert res.holds

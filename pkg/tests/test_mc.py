import math

import numpy as np
import pytest

from roughasym.errors import DegenerateMinimizer
from roughasym.expansion import taylor_terms
from roughasym.fbm import Grid
from roughasym.mc import (
    decompose_shift,
    digital_is,
    estimate_A,
    j_estimators,
    noise_batches,
    price_call_is,
    price_call_plain,
    sample_g1_g2,
    sample_g1_values,
    simulate_noise,
)
from roughasym.models import ItoModel, lift_from_fine, lift_ito
from roughasym.rate import RateFunctionSolution, SolveOptions, g1_variance_analytic, solve_rate
from roughasym.asymptotics import bs_exact_call
from roughasym.volmodel import ConstantSigma, ExpSigma, VolModelSpec

CONST = VolModelSpec(ConstantSigma(0.2), 0.5, -0.7)
ROUGH = VolModelSpec(ExpSigma(0.2, 1.0), 0.3, -0.7)
FAST = SolveOptions(compute_margin=False)


class TestNoise:
    def test_reproducible_across_batch_sizes(self):
        g = Grid(32)
        runs = []
        for bs in (7, 64, 1000):
            chunks = [dw for _, dw, _, _ in noise_batches(100, g, 0.3, seed=5, batch_size=bs)]
            runs.append(np.vstack(chunks))
        assert np.array_equal(runs[0], runs[1])
        assert np.array_equal(runs[0], runs[2])

    def test_stream_matches_batches(self):
        g = Grid(16)
        spec = ROUGH
        stream = list(simulate_noise(5, g, spec, seed=9))
        _, dw, dwb, what = next(iter(noise_batches(5, g, spec.hurst, seed=9)))
        for i in range(5):
            assert np.array_equal(stream[i][0], dw[i])
            assert np.array_equal(stream[i][1], dwb[i])
            assert np.array_equal(stream[i][2].values, what[i])

    def test_terminal_mean_clt(self):
        g = Grid(64)
        tot, n = 0.0, 100000
        for _, dw, _, _ in noise_batches(n, g, 0.3, seed=11):
            tot += float(np.sum(dw))
        assert abs(tot / n) <= 4.0 / math.sqrt(n)

    def test_smoothed_terminal_variance(self):
        # Var What(1) = 2H int (1-s)^(2H-1) ds = 1, up to the documented
        # cell-average quadrature bias (0.23% at n=256)
        g = Grid(256)
        acc, n = 0.0, 100000
        for _, _, _, what in noise_batches(n, g, 0.3, seed=13):
            acc += float(np.sum(what[:, -1] ** 2))
        assert acc / n == pytest.approx(1.0, rel=0.05)


class TestPlainPricing:
    def test_flat_vol_matches_lognormal_closed_form(self):
        g = Grid(128)
        est = price_call_plain(CONST, 0.3, 0.1, 100000, g, seed=17)
        ref = math.exp(bs_exact_call(0.2, -0.02, 0.09, 0.1))
        assert abs(est.mean - ref) <= 3.0 * est.std_error

    def test_deep_otm_zero(self):
        g = Grid(32)
        est = price_call_plain(ROUGH, 0.1, 10.0, 2000, g, seed=19)
        assert est.mean == 0.0
        assert est.std_error == 0.0

    def test_determinism(self):
        g = Grid(32)
        a = price_call_plain(ROUGH, 0.3, 0.1, 4000, g, seed=23, batch_size=512)
        b = price_call_plain(ROUGH, 0.3, 0.1, 4000, g, seed=23, batch_size=4000)
        assert a.mean == b.mean and a.std_error == b.std_error

    def test_moment_diagnostic_present(self):
        g = Grid(32)
        est = price_call_plain(ROUGH, 0.3, 0.1, 2000, g, seed=29)
        assert est.diagnostics["moment_p125"] > 0


class TestImportanceSampling:
    def test_flat_vol_matches_closed_form_small_eps(self):
        # plain MC is hopeless here (price ~ 1e-142); the shifted estimator
        # stays accurate
        g = Grid(128)
        sol = solve_rate(0.1, CONST, g, FAST)
        est = price_call_is(CONST, 0.02, 0.1, sol, 100000, g, seed=31)
        ref = bs_exact_call(0.2, -0.02, 0.0004, 0.1)
        assert ref < -300.0
        assert abs(est.mean - ref) <= 3.0 * est.std_error

    def test_agrees_with_plain_at_moderate_eps(self):
        g = Grid(128)
        sol = solve_rate(0.1, ROUGH, g, FAST)
        plain = price_call_plain(ROUGH, 0.3, 0.1, 100000, g, seed=37)
        shifted = price_call_is(ROUGH, 0.3, 0.1, sol, 100000, g, seed=41)
        p = math.exp(shifted.mean)
        assert abs(plain.mean - p) <= 3.0 * (plain.std_error + p * shifted.std_error)

    def test_determinism(self):
        g = Grid(64)
        sol = solve_rate(0.05, ROUGH, g, FAST)
        a = price_call_is(ROUGH, 0.2, 0.05, sol, 4000, g, seed=43, batch_size=600)
        b = price_call_is(ROUGH, 0.2, 0.05, sol, 4000, g, seed=43, batch_size=4000)
        assert a.mean == b.mean

    def test_two_j_routes_agree(self):
        g = Grid(128)
        sol = solve_rate(0.05, ROUGH, g, FAST)
        (le, se_e), (lt, se_t) = j_estimators(ROUGH, 0.25, 0.05, sol, 100000, g, seed=47)
        assert abs(le - lt) <= 3.0 * (se_e + se_t) + 2e-2

    def test_digital_tail(self):
        # flat vol: exact Gaussian tail oracle
        g = Grid(128)
        sol = solve_rate(0.1, CONST, g, FAST)
        est = digital_is(CONST, 0.1, 0.1, sol, 100000, g, seed=53)
        from scipy.special import log_ndtr
        ref = float(log_ndtr(-(0.1 + 0.5 * 0.01 * 0.04) / (0.1 * 0.2)))
        assert abs(est.mean - ref) <= 4.0 * est.std_error


class TestSampleFunctionals:
    def test_zero_model_gives_zero_g1(self):
        g = Grid(32)
        sol = solve_rate(0.05, ROUGH, g, FAST)
        m = ItoModel.zero(ROUGH.params, g, substeps=1)
        g1, g2 = sample_g1_g2(ROUGH, sol, m)
        assert g1 == 0.0

    def test_variance_matches_analytic(self):
        g = Grid(256)
        sol = solve_rate(0.05, ROUGH, g, FAST)
        vals = sample_g1_values(ROUGH, sol, 100000, g, seed=59)
        sample_var = float(np.var(vals, ddof=1))
        ref = g1_variance_analytic(sol, ROUGH)
        se = ref * math.sqrt(2.0 / (len(vals) - 1))
        assert abs(sample_var - ref) <= 3.0 * se

    def test_mean_is_centered(self):
        g = Grid(128)
        sol = solve_rate(0.05, ROUGH, g, FAST)
        vals = sample_g1_values(ROUGH, sol, 100000, g, seed=61)
        sd = float(np.std(vals))
        assert abs(float(np.mean(vals))) <= 4.0 * sd / math.sqrt(len(vals))

    def test_batch_matches_per_model_evaluation(self):
        g = Grid(64)
        sol = solve_rate(0.05, ROUGH, g, FAST)
        vals = sample_g1_values(ROUGH, sol, 8, g, seed=67)
        for i, (dw, dwb, _) in enumerate(simulate_noise(8, g, ROUGH, seed=67)):
            m = lift_ito(dw, dwb, ROUGH.params, substeps=1)
            g1, _ = sample_g1_g2(ROUGH, sol, m)
            assert vals[i] == pytest.approx(g1, abs=1e-13)


class TestShiftDecomposition:
    def test_zero_model(self):
        g = Grid(32)
        sol = solve_rate(0.05, ROUGH, g, FAST)
        m = ItoModel.zero(ROUGH.params, g, substeps=1)
        dec = decompose_shift(ROUGH, sol, m)
        assert dec.g1_sample == 0.0
        assert np.all(dec.V_model.what_fine == 0.0)
        terms = taylor_terms(sol.h_star, m, ROUGH, 0.0)
        assert dec.delta2 == terms.k2
        assert math.isnan(dec.delta1)

    def test_direct_bilinear_identity(self):
        # delta1 evaluated directly as the symmetric cross term of the
        # quadratic functional; the split then reproduces g2 exactly
        g = Grid(64)
        sol = solve_rate(0.05, ROUGH, g, FAST)
        worst = 0.0
        for i, (dw, dwb, _) in enumerate(simulate_noise(50, g, ROUGH, seed=71)):
            m = lift_ito(dw, dwb, ROUGH.params, substeps=1)
            dec = decompose_shift(ROUGH, sol, m)
            g1, g2 = sample_g1_g2(ROUGH, sol, m)
            r = m.substeps
            fdt = g.refine(r).dt
            zw = np.repeat(dec.v_path.hdot, r) * fdt
            zwb = np.repeat(dec.v_path.hbardot, r) * fdt
            k2 = taylor_terms(sol.h_star, m, ROUGH, 0.0).k2
            plus = taylor_terms(sol.h_star, lift_from_fine(
                dec.V_model.dw_fine + zw, dec.V_model.dwbar_fine + zwb,
                ROUGH.params, g, r), ROUGH, 0.0).g2 - k2
            minus = taylor_terms(sol.h_star, lift_from_fine(
                dec.V_model.dw_fine - zw, dec.V_model.dwbar_fine - zwb,
                ROUGH.params, g, r), ROUGH, 0.0).g2 - k2
            delta1 = 0.5 * (plus - minus)
            worst = max(worst, abs(g2 - (dec.delta2 + g1 * delta1 + g1**2 * dec.delta0)))
        assert worst <= 1e-8

    def test_recovered_delta1_consistent(self):
        g = Grid(64)
        sol = solve_rate(0.05, ROUGH, g, FAST)
        dw, dwb, _ = next(iter(simulate_noise(1, g, ROUGH, seed=73)))
        m = lift_ito(dw, dwb, ROUGH.params, substeps=1)
        dec = decompose_shift(ROUGH, sol, m)
        g1, g2 = sample_g1_g2(ROUGH, sol, m)
        assert g2 == pytest.approx(dec.delta2 + g1 * dec.delta1 + g1**2 * dec.delta0,
                                   abs=1e-12)

    def test_delta2_uncorrelated_with_g1(self):
        g = Grid(64)
        sol = solve_rate(0.05, ROUGH, g, FAST)
        g1s, d2s = [], []
        for dw, dwb, _ in simulate_noise(2000, g, ROUGH, seed=79):
            m = lift_ito(dw, dwb, ROUGH.params, substeps=1)
            dec = decompose_shift(ROUGH, sol, m)
            g1s.append(dec.g1_sample)
            d2s.append(dec.delta2)
        corr = float(np.corrcoef(g1s, d2s)[0, 1])
        assert abs(corr) <= 4.0 / math.sqrt(len(g1s))


class TestPrefactorEstimate:
    def test_zero_strike_is_one_below_half(self):
        g = Grid(64)
        sol = solve_rate(0.0, ROUGH, g)
        est = estimate_A(ROUGH, sol, 0.0, 500, g, seed=83)
        assert est.mean == 1.0
        assert est.std_error == 0.0

    def test_flat_vol_deterministic_value(self):
        # drift constant is the only contribution: A = exp(x(1 + mu/sigma^2))
        # with mu = -sigma^2/2
        g = Grid(64)
        sol = solve_rate(0.1, CONST, g)
        est = estimate_A(CONST, sol, 0.1, 200, g, seed=89)
        assert est.mean == pytest.approx(math.exp(0.05), abs=1e-10)
        assert est.std_error <= 1e-12

    def test_rough_values_near_one_and_ordered(self):
        g = Grid(128)
        vals = {}
        for x in (0.005, 0.01):
            sol = solve_rate(x, ROUGH, g)
            est = estimate_A(ROUGH, sol, x, 50000, g, seed=97)
            vals[x] = est
            assert 0.9 <= est.mean <= 1.1
        assert abs(vals[0.01].mean - 1.0) >= abs(vals[0.005].mean - 1.0) - 2.0 * (
            vals[0.01].std_error + vals[0.005].std_error
        )

    def test_refuses_nonpositive_margin(self):
        g = Grid(32)
        sol = solve_rate(0.05, ROUGH, g)
        bad = RateFunctionSolution(
            x=sol.x, h_star=sol.h_star, energy=sol.energy, multiplier=sol.multiplier,
            lambda_prime=sol.lambda_prime, sigma_x=sol.sigma_x, nondeg_margin=-0.1,
            kkt_residual=sol.kkt_residual, constraint_residual=sol.constraint_residual,
            grid=sol.grid,
        )
        with pytest.raises(DegenerateMinimizer):
            estimate_A(ROUGH, bad, 0.05, 100, g, seed=101)

    def test_tail_diagnostic_reported(self):
        g = Grid(64)
        sol = solve_rate(0.02, ROUGH, g)
        est = estimate_A(ROUGH, sol, 0.02, 2000, g, seed=103)
        assert 0.0 < est.diagnostics["top1_mass_fraction"] < 1.0

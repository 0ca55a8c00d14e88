import math

import numpy as np
import pytest

from roughasym.errors import LevelMismatch
from roughasym.expansion import phi0, phi_eps, remainder_scaling_check, taylor_terms
from roughasym.fbm import CameronMartinPair, Grid
from roughasym.models import ItoModel, canonical_lift, choose_levels, dilate, lift_ito, translate
from roughasym.rate import phi1_cm
from roughasym.volmodel import ConstantSigma, ExpSigma, LinearSigma, VolModelSpec

CONST = VolModelSpec(ConstantSigma(0.2), 0.5, -0.7)
EXP03 = VolModelSpec(ExpSigma(1.0, 1.0), 0.3, -0.7)
EXP05 = VolModelSpec(ExpSigma(1.0, 1.0), 0.5, -0.7)


def brownian_model(spec, n=32, substeps=2, seed=0, scale=1.0):
    rng = np.random.default_rng(seed)
    sd = scale * math.sqrt(1.0 / n)
    return lift_ito(rng.standard_normal(n) * sd, rng.standard_normal(n) * sd,
                    spec.params, substeps=substeps)


def rand_h(n=32, seed=1, scale=0.4):
    rng = np.random.default_rng(seed)
    return CameronMartinPair(Grid(n), scale * rng.standard_normal(n),
                             scale * rng.standard_normal(n))


class TestPhi0:
    def test_zero_model(self):
        m = ItoModel.zero(EXP03.params, Grid(16))
        assert phi0(m, EXP03) == 0.0

    def test_constant_sigma_only_increments_survive(self):
        m = brownian_model(CONST, seed=2)
        ref = 0.2 * (CONST.rho * m.w.values[-1] + CONST.rho_bar * m.wbar.values[-1])
        assert phi0(m, CONST) == pytest.approx(ref, rel=1e-14)

    def test_canonical_lift_matches_terminal_functional(self):
        # cross-module oracle: midpoint quadrature of the control functional
        h = rand_h(64, seed=3)
        m = canonical_lift(h, EXP03.params, substeps=8)
        assert phi0(m, EXP03) == pytest.approx(phi1_cm(h, EXP03), abs=2e-4)

    def test_roughness_mismatch_rejected(self):
        m = brownian_model(EXP03)
        with pytest.raises(LevelMismatch):
            phi0(m, EXP05)


class TestPhiEps:
    def test_zero_amplitude_is_phi0(self):
        m = brownian_model(EXP03, seed=4)
        assert phi_eps(0.0, m, EXP03) == phi0(m, EXP03)

    def test_constant_sigma_zero_model_pure_drift(self):
        m = ItoModel.zero(CONST.params, Grid(16))
        eps = 0.3
        assert phi_eps(eps, m, CONST) == pytest.approx(-0.5 * eps * eps * 0.04, rel=1e-14)

    def test_recovers_lognormal_drift_convention(self):
        # H = 1/2, constant sigma, full amplitude: drift -sigma^2/2
        m = ItoModel.zero(CONST.params, Grid(16))
        assert phi_eps(1.0, m, CONST) == pytest.approx(-0.02, rel=1e-14)


class TestTaylorTerms:
    def test_zero_model_h_rough(self):
        # all noise terms vanish; remainder is exactly the negated drift
        spec = EXP03
        n = 16
        m = ItoModel.zero(spec.params, Grid(n), substeps=2)
        h = rand_h(n, seed=5)
        eps = 0.25
        t = taylor_terms(h, m, spec, eps)
        assert t.g1 == 0.0
        assert t.g2 == 0.0  # no drift constant below H = 1/2
        hhat = translate(dilate(m, t.eps_bar), h).what.values[:n]
        drift = -0.5 * eps * t.eps_hat * float(np.sum(spec.sigma_sq(hhat))) / n
        assert t.remainder == pytest.approx(drift, rel=1e-12)

    def test_zero_model_h_half(self):
        # at H = 1/2 the drift constant lands in g2 and cancels exactly
        spec = VolModelSpec(ExpSigma(1.0, 1.0), 0.5, -0.7)
        n = 16
        m = ItoModel.zero(spec.params, Grid(n), substeps=2)
        h = rand_h(n, seed=6)
        t = taylor_terms(h, m, spec, 0.25)
        assert t.g1 == 0.0
        assert t.g2 == t.k2
        assert abs(t.remainder) <= 1e-15

    def test_flat_vol_exact_decomposition(self):
        # g1 = s0 * terminal correlated noise, g2 = -s0^2/2, zero remainder
        m = brownian_model(CONST, seed=7)
        h = rand_h(seed=8)
        t = taylor_terms(h, m, CONST, 0.25)
        wt1 = CONST.rho * m.w.values[-1] + CONST.rho_bar * m.wbar.values[-1]
        assert t.g1 == pytest.approx(0.2 * wt1, rel=1e-13)
        assert t.g2 == pytest.approx(-0.02, rel=1e-13)
        assert abs(t.remainder) <= 1e-15

    def test_remainder_zero_at_zero_amplitude(self):
        m = brownian_model(EXP03, seed=9)
        t = taylor_terms(rand_h(seed=10), m, EXP03, 0.0)
        assert t.remainder == 0.0

    def test_remainder_cubic_stabilization(self):
        # remainder / eps_bar^3 approaches a constant as eps_bar halves
        spec = VolModelSpec(LinearSigma(1.0, 1.0), 0.5, -0.7)
        m = brownian_model(spec, seed=11, scale=0.5)
        h = rand_h(seed=12, scale=0.3)
        vals = []
        for eps in (2.0**-4, 2.0**-5, 2.0**-6, 2.0**-7):
            t = taylor_terms(h, m, spec, eps)
            vals.append(t.remainder / t.eps_bar**3)
        assert abs(vals[-1] - vals[-2]) < abs(vals[1] - vals[0])
        assert vals[-1] == pytest.approx(vals[-2], rel=0.1)

    def test_g1_linear_in_model(self):
        m = brownian_model(EXP03, seed=13)
        h = rand_h(seed=14)
        t1 = taylor_terms(h, m, EXP03, 0.0)
        t2 = taylor_terms(h, dilate(m, 0.37), EXP03, 0.0)
        assert t2.g1 == pytest.approx(0.37 * t1.g1, rel=1e-12)

    def test_g2_quadratic_in_model(self):
        m = brownian_model(EXP05, seed=15)
        h = rand_h(seed=16)
        t1 = taylor_terms(h, m, EXP05, 0.0)
        t2 = taylor_terms(h, dilate(m, 0.37), EXP05, 0.0)
        assert t2.g2 - t2.k2 == pytest.approx(0.37**2 * (t1.g2 - t1.k2), rel=1e-12)

    def test_translation_consistency(self):
        # shifting a control lift by h evaluates the functional at h + k
        spec = EXP03
        n = 64
        h = rand_h(n, seed=17, scale=0.3)
        k = rand_h(n, seed=18, scale=0.3)
        m = canonical_lift(k, spec.params, substeps=8)
        lhs = phi0(translate(m, h), spec)
        rhs = phi1_cm(h.added(k), spec)
        assert lhs == pytest.approx(rhs, abs=5e-4)


class TestRemainderScaling:
    def test_flat_vol_sentinel(self):
        m = brownian_model(CONST, seed=19)
        sweep = remainder_scaling_check(rand_h(seed=20), m, CONST,
                                        [2.0**-j for j in range(3, 9)])
        assert sweep.slope == math.inf

    @pytest.mark.parametrize("spec", [EXP05, EXP03], ids=["H=0.5", "H=0.3"])
    def test_cubic_slope(self, spec):
        eps_list = [(2.0**-j) ** (1.0 / (2 * spec.hurst)) for j in range(3, 9)]
        m = brownian_model(spec, seed=21, scale=0.5)
        h = rand_h(seed=22, scale=0.3)
        sweep = remainder_scaling_check(h, m, spec, eps_list)
        assert sweep.slope >= 2.7
        assert sweep.max_dilated_norm < 1.0

"""Closed-form price evaluators: exact lognormal calls, the small-noise
expansion prefactors, the moderate-strike variant, and the elementary
sandwich bound used to control the Laplace integrals.

All prices are handled in log space; the regime of interest underflows
doubles long before the formulas stop being finite.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad
from scipy.special import log_ndtr

from .errors import DegenerateMinimizer, QuadratureError
from .rate import RateFunctionSolution

__all__ = [
    "ScalingRegime",
    "RegimeViolationWarning",
    "bs_exact_call",
    "bs_asymptotic_call",
    "bsabs_sandwich",
    "precise_ldp_price",
    "precise_mdp_price",
    "ldp_digital_bound",
]

LOG_2PI = math.log(2.0 * math.pi)

# Constant in the quadratic lower-bound correction of the sandwich: the
# second-moment integrals int e^{-u} u (u + |alpha|/(1 -/+ gamma))^2 du are
# bounded by (1+gamma)(6 + 4b + b^2)/2 with b = |alpha|/(1-gamma) <= 2|alpha|
# for gamma <= 1/2, and 6(1 + alpha^2) dominates that on the tested range.
BSABS_C = 6.0


class RegimeViolationWarning(UserWarning):
    """Moderate-strike formula queried outside its validity window."""


@dataclass(frozen=True)
class ScalingRegime:
    """Speed scale of the deviation regime.

    kind "ldp": eps_bar = eps^(2H); kind "mdp": eps_bar = eps^(2H - 2 beta)
    with 0 <= beta < H. The effective log-strike is k_eps = x * eps / eps_bar.
    """

    kind: str
    hurst: float
    beta: float = 0.0

    def __post_init__(self):
        if self.kind not in ("ldp", "mdp"):
            raise ValueError("kind must be 'ldp' or 'mdp'")
        if not 0.0 < self.hurst <= 0.5:
            raise ValueError("hurst must lie in (0, 1/2]")
        if self.kind == "mdp" and not 0.0 <= self.beta < self.hurst:
            raise ValueError("mdp requires 0 <= beta < hurst")
        if self.kind == "ldp" and self.beta != 0.0:
            raise ValueError("ldp regime carries no beta")

    @property
    def speed_exponent(self) -> float:
        return 2.0 * self.hurst - 2.0 * self.beta

    def eps_bar(self, eps: float) -> float:
        return eps**self.speed_exponent

    def k_eps(self, x: float, eps: float) -> float:
        return x * eps / self.eps_bar(eps)

    def nu(self, eps: float) -> float:
        return self.eps_bar(eps) / eps


def _log_diff_exp(a: float, b: float) -> float:
    """log(e^a - e^b) for a > b."""
    return a + math.log1p(-math.exp(b - a))


def bs_exact_call(sigma: float, mu: float, t: float, k: float) -> float:
    """log E[(exp(mu t + sigma sqrt(t) N) - e^k)^+], N standard normal.

    Evaluated through log-CDFs, so deep out-of-the-money strikes keep full
    relative accuracy instead of underflowing.
    """
    if sigma <= 0 or t <= 0:
        raise ValueError("sigma and t must be positive")
    st = sigma * math.sqrt(t)
    d2 = (mu * t - k) / st
    d1 = d2 + st
    a = mu * t + 0.5 * sigma**2 * t + log_ndtr(d1)
    b = k + log_ndtr(d2)
    return _log_diff_exp(a, b)


def _ldp_log_price(energy: float, lam_prime: float, sigma_x: float, a_factor: float,
                   eps: float, eps_bar: float) -> float:
    """Shared evaluation path for every expansion of the form
    exp(-energy / eps_bar^2) * eps * eps_bar^2 * a / (lam'^2 sigma_x sqrt(2 pi))."""
    return (
        -energy / eps_bar**2
        + math.log(eps)
        + 2.0 * math.log(eps_bar)
        + math.log(a_factor)
        - 2.0 * math.log(lam_prime)
        - math.log(sigma_x)
        - 0.5 * LOG_2PI
    )


def bs_asymptotic_call(sigma: float, mu: float, eps: float, k: float) -> float:
    """Leading-order log call price exp(-k^2/(2 eps^2 sigma^2)) eps^3 sigma^3
    e^k e^(k mu / sigma^2) / (k^2 sqrt(2 pi)).

    Shares the arithmetic of :func:`precise_ldp_price`, to which it is
    bit-identical for energy k^2/(2 sigma^2), slope k/sigma^2, sigma_x = sigma
    and prefactor exp(k (1 + mu/sigma^2)).
    """
    if k <= 0 or eps <= 0:
        raise ValueError("k and eps must be positive")
    energy = k**2 / (2.0 * sigma**2)
    lam_prime = k / sigma**2
    a_factor = math.exp(k * (1.0 + mu / sigma**2))
    return _ldp_log_price(energy, lam_prime, sigma, a_factor, eps, eps)


def precise_ldp_price(x: float, sol: RateFunctionSolution, a_factor: float,
                      regime: ScalingRegime, eps: float) -> float:
    """Log of the precise small-noise expansion with measured prefactor."""
    if x <= 0:
        raise ValueError("x must be positive")
    if not sol.nondeg_margin > 0:
        raise DegenerateMinimizer(
            f"non-degeneracy margin {sol.nondeg_margin:g} is not positive"
        )
    return _ldp_log_price(
        sol.energy, sol.lambda_prime, sol.sigma_x, a_factor, eps, regime.eps_bar(eps)
    )


def precise_mdp_price(x_eps: float, sigma0: float, sol_lambda, regime: ScalingRegime,
                      eps: float) -> float:
    """Moderate-strike expansion: energy at x_eps, prefactor from spot vol only.

    ``sol_lambda`` maps x to the energy; pass None to substitute the small-x
    quadratic x^2 / (2 sigma0^2) (the right behaviour when x_eps sits below
    solver resolution).
    """
    if regime.kind != "mdp":
        raise ValueError("precise_mdp_price requires an mdp regime")
    if x_eps <= 0 or eps <= 0:
        raise ValueError("x_eps and eps must be positive")
    eps_bar = regime.eps_bar(eps)
    if x_eps / eps_bar <= 10.0:
        warnings.warn(
            f"x_eps/eps_bar = {x_eps / eps_bar:.3g} <= 10: moderate-strike "
            "formula used near the edge of its regime",
            RegimeViolationWarning,
        )
    energy = x_eps**2 / (2.0 * sigma0**2) if sol_lambda is None else float(sol_lambda(x_eps))
    return (
        -energy / eps_bar**2
        + math.log(eps)
        + 2.0 * math.log(eps_bar)
        + 3.0 * math.log(sigma0)
        - 2.0 * math.log(x_eps)
        - 0.5 * LOG_2PI
    )


def _bsabs_closed_forms(alpha: float, gamma: float):
    e_minus = math.exp(alpha / (1.0 - gamma))
    e_plus = math.exp(alpha / (1.0 + gamma))
    first = (1.0 - gamma) * e_minus + 2.0 * gamma
    second = (1.0 + gamma) * e_plus
    return first, second, max(e_minus, e_plus)


def bsabs_sandwich(alpha: float, gamma: float, eps: float):
    """(lower, middle, upper) for the reweighted positive-part Gaussian moment

        middle = sqrt(2 pi) eps^-2 E[exp(-N/eps) (N + gamma |N| + eps alpha)^+]
               = int exp(-eps^2 v^2 / 2 - v) (v + gamma |v| + alpha)^+ dv,

    lower/upper the closed-form bounds from 1 - y^2/2 <= e^{-y^2/2} <= 1.
    Raises if the quadrature cannot certify lower <= middle <= upper.
    """
    if not 0.0 <= gamma < 1.0:
        raise ValueError("gamma must lie in [0, 1)")
    if eps <= 0:
        raise ValueError("eps must be positive")
    first, second, emax = _bsabs_closed_forms(alpha, gamma)
    upper = max(first, second)
    lower = min(first, second) - eps**2 * (BSABS_C * (1.0 + alpha**2) * emax + 6.0 * gamma)

    def integrand(v):
        kink = v + gamma * abs(v) + alpha
        return math.exp(-0.5 * eps**2 * v * v - v) * kink if kink > 0.0 else 0.0

    kinks = sorted({0.0, -alpha / (1.0 - gamma), -alpha / (1.0 + gamma)})
    pieces = [min(kinks) - 1.0] + kinks
    middle = 0.0
    err = 0.0
    for a, b in zip(pieces[:-1], pieces[1:]):
        val, e = quad(integrand, a, b, limit=200)
        middle += val
        err += e
    val, e = quad(integrand, pieces[-1], np.inf, limit=200)
    middle += val
    err += e
    if err > 1e-7 * max(1.0, abs(middle)):
        raise QuadratureError(f"sandwich quadrature error {err:g} too large")
    slack = 1e-9 * max(1.0, abs(middle))
    if not (lower - slack <= middle <= upper + slack):
        raise QuadratureError(
            f"sandwich ordering violated: {lower!r} <= {middle!r} <= {upper!r} fails"
        )
    return lower, middle, upper


def ldp_digital_bound(x: float, sol: RateFunctionSolution, spec, regime: ScalingRegime,
                      eps_list, n_paths: int, grid, seed: int):
    """Rows (eps, eps_bar, -eps_bar^2 log P[rescaled log-price > x], energy).

    The tail probability comes from the shifted digital estimator; for the
    flat-volatility H = 1/2 model the Gaussian tail is exact and used instead.
    Cells whose estimate carries no hits are marked missing (None).
    """
    from .mc import digital_is
    from .volmodel import ConstantSigma

    rows = []
    for eps in eps_list:
        eps_bar = regime.eps_bar(eps)
        if isinstance(spec.sigma, ConstantSigma) and spec.hurst == 0.5:
            # log-price is N(-eps^2 s^2/2, eps^2 s^2); rescale by nu = eps_bar/eps
            s = spec.sigma0
            z = (x / regime.nu(eps) + 0.5 * eps**2 * s**2) / (eps * s)
            stat = -eps_bar**2 * float(log_ndtr(-z))
        else:
            est = digital_is(spec, eps, x, sol, n_paths, grid, seed, regime=regime)
            stat = -eps_bar**2 * est.mean if np.isfinite(est.mean) else None
        rows.append({"eps": eps, "eps_bar": eps_bar, "statistic": stat, "energy": sol.energy})
    return rows

"""Monte Carlo pricing: plain and Girsanov importance-sampled estimators.

Every path draws its own counter-based substream (Philox keyed by
(seed, path index)), so estimates are bit-identical across runs and across
batch sizes. The importance sampler simulates the full shifted dynamics and
weights with the exact discrete change of measure, which makes it unbiased
for the discretized model, with no expansion truncation.

Batched sampling works at substeps=1: per-cell iterated integrals vanish there
and the expansion functionals collapse to plain left-point sums, which is also
the unbiased Ito convention for genuinely random increments (sub-refining
interpolated noise would reintroduce a Stratonovich-style bias).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.special import logsumexp

from .errors import DegenerateMinimizer, GridMismatch, WeightDegeneracyWarning
from .fbm import CameronMartinPair, Grid, GridPath, _node_weights, fractional_integral_cm
from .models import ItoModel, lift_from_fine
from .rate import RateFunctionSolution, dphi1
from .expansion import taylor_terms
from .volmodel import VolModelSpec

__all__ = [
    "MCEstimate",
    "ShiftDecomposition",
    "simulate_noise",
    "noise_batches",
    "price_call_plain",
    "price_call_is",
    "digital_is",
    "j_estimators",
    "sample_g1_g2",
    "sample_g1_values",
    "decompose_shift",
    "estimate_A",
]

DEFAULT_BATCH = 16384
ESS_WARN_FRACTION = 0.01


@dataclass(frozen=True)
class MCEstimate:
    mean: float
    std_error: float
    n_paths: int
    seed: int
    log_space: bool
    ess_fraction: float | None = None
    flags: tuple = ()
    diagnostics: dict = field(default_factory=dict)


@dataclass(frozen=True)
class ShiftDecomposition:
    """Per-sample split of the second-order coefficient into the part
    independent of the first-order Gaussian (delta2), the bilinear cross
    (delta1, recovered; nan when g1 is numerically zero) and the deterministic
    square (delta0)."""

    g1_sample: float
    v_path: CameronMartinPair
    V_model: ItoModel
    delta2: float
    delta1: float
    delta0: float


@lru_cache(maxsize=32)
def _hat_matrix(n_steps: int, hurst: float) -> np.ndarray:
    """(n, n+1) right-multiplier turning increment rows into smoothed paths."""
    m = np.ascontiguousarray(_node_weights(n_steps, hurst).T * n_steps)
    m.setflags(write=False)
    return m


def _path_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=[np.uint64(seed), np.uint64(index)]))


def noise_batches(n_paths: int, grid: Grid, hurst: float, seed: int,
                  batch_size: int = DEFAULT_BATCH):
    """Yield (start_index, dW, dWbar, What) with per-path substreams.

    dW, dWbar have shape (b, n); What has shape (b, n+1) and is the
    kernel-smoothed W with the exact cell-average weights.
    """
    n = grid.n_steps
    sd = math.sqrt(grid.dt)
    hat = _hat_matrix(n, hurst)
    for start in range(0, n_paths, batch_size):
        b = min(batch_size, n_paths - start)
        z = np.empty((b, 2 * n))
        for i in range(b):
            z[i] = _path_rng(seed, start + i).standard_normal(2 * n)
        dw = z[:, :n] * sd
        dwbar = z[:, n:] * sd
        yield start, dw, dwbar, dw @ hat


def simulate_noise(n_paths: int, grid: Grid, spec: VolModelSpec, seed: int):
    """Per-path stream of (dW, dWbar, What); path i depends only on (seed, i)."""
    for start, dw, dwbar, what in noise_batches(n_paths, grid, spec.hurst, seed):
        for i in range(dw.shape[0]):
            yield dw[i], dwbar[i], GridPath(grid, what[i])


def _k_strike(spec: VolModelSpec, x: float, eps: float, regime=None) -> float:
    if regime is not None:
        return regime.k_eps(x, eps)
    return x * eps ** (1.0 - 2.0 * spec.hurst)


def _log_prices(spec, eps, dw, dwbar, what):
    """Left-point log-price of each path at noise amplitude eps."""
    n = dw.shape[1]
    eps_hat = eps ** (2.0 * spec.hurst)
    sv = spec.sigma.deriv(0, eps_hat * what[:, :n])
    dwt = spec.rho * dw + spec.rho_bar * dwbar
    dt = 1.0 / n
    return eps * np.einsum("bi,bi->b", sv, dwt) - 0.5 * eps**2 * dt * np.einsum(
        "bi,bi->b", sv, sv
    )


def price_call_plain(spec: VolModelSpec, eps: float, x: float, n_paths: int,
                     grid: Grid, seed: int, regime=None,
                     batch_size: int = DEFAULT_BATCH) -> MCEstimate:
    """Plain Monte Carlo call price at log-strike x * eps^(1-2H)."""
    k = _k_strike(spec, x, eps, regime)
    payoff = np.empty(n_paths)
    moment = np.empty(n_paths)
    for start, dw, dwbar, what in noise_batches(n_paths, grid, spec.hurst, seed, batch_size):
        lx = _log_prices(spec, eps, dw, dwbar, what)
        payoff[start:start + len(lx)] = np.maximum(np.exp(lx) - math.exp(k), 0.0)
        moment[start:start + len(lx)] = np.exp(1.25 * lx)
    mean = float(np.mean(payoff))
    se = float(np.std(payoff, ddof=1) / math.sqrt(n_paths)) if n_paths > 1 else 0.0
    return MCEstimate(
        mean=mean, std_error=se, n_paths=n_paths, seed=seed, log_space=False,
        diagnostics={"moment_p125": float(np.mean(moment))},
    )


def _shifted_arrays(spec, sol, eps, grid):
    h = sol.h_star
    grid.check_same(h.grid)
    eps_hat = eps ** (2.0 * spec.hurst)
    hhat = fractional_integral_cm(h.hdot, spec.kernel, grid).values[: grid.n_steps]
    dht = (spec.rho * h.hdot + spec.rho_bar * h.hbardot) * grid.dt
    return eps_hat, hhat, dht


def _is_core(spec, eps, sol, n_paths, grid, seed, batch_size):
    """Shared shifted-simulation pass; returns per-path arrays
    (shifted log-price, log-weight)."""
    eps_hat, hhat, dht = _shifted_arrays(spec, sol, eps, grid)
    h = sol.h_star
    n = grid.n_steps
    dt = grid.dt
    xs = np.empty(n_paths)
    lw = np.empty(n_paths)
    for start, dw, dwbar, what in noise_batches(n_paths, grid, spec.hurst, seed, batch_size):
        sv = spec.sigma.deriv(0, eps_hat * what[:, :n] + hhat)
        dwt = spec.rho * dw + spec.rho_bar * dwbar
        b = dw.shape[0]
        xs[start:start + b] = (
            eps * np.einsum("bi,bi->b", sv, dwt)
            + (eps / eps_hat) * (sv @ dht)
            - 0.5 * eps**2 * dt * np.einsum("bi,bi->b", sv, sv)
        )
        lw[start:start + b] = (
            -(dw @ h.hdot + dwbar @ h.hbardot) / eps_hat - sol.energy / eps_hat**2
        )
    return xs, lw


def _log_mean_and_se(logvals, n_paths):
    """Stable log-mean with delta-method standard error of the log."""
    finite = np.isfinite(logvals)
    if not np.any(finite):
        return -math.inf, 0.0
    l1 = logsumexp(logvals[finite]) - math.log(n_paths)
    m2 = logsumexp(2.0 * logvals[finite]) - math.log(n_paths)
    gap = 2.0 * l1 - m2
    if gap >= 0.0:
        return float(l1), 0.0
    log_var = m2 + math.log1p(-math.exp(gap))
    rel_se = math.exp(0.5 * (log_var - math.log(n_paths)) - l1)
    return float(l1), float(rel_se)


def _ess_fraction(log_terms, n_paths):
    """Effective sample size of the estimator terms, as a fraction of paths.

    Computed from payoff*weight (not the raw weights): with the optimizer
    shift the raw weights always degenerate in the small-noise limit while
    the product stays balanced, and it is the product that carries the
    estimate."""
    finite = log_terms[np.isfinite(log_terms)]
    if finite.size == 0:
        return 0.0
    return float(math.exp(2.0 * logsumexp(finite) - logsumexp(2.0 * finite)) / n_paths)


def price_call_is(spec: VolModelSpec, eps: float, x: float, sol: RateFunctionSolution,
                  n_paths: int, grid: Grid, seed: int, regime=None,
                  batch_size: int = DEFAULT_BATCH) -> MCEstimate:
    """Importance-sampled call price in log space.

    Simulates the exact dynamics under the shift h/eps_bar and reweights with
    the discrete Girsanov density, so the estimator targets the same discrete
    expectation as :func:`price_call_plain`.
    """
    k = _k_strike(spec, x, eps, regime)
    xs, lw = _is_core(spec, eps, sol, n_paths, grid, seed, batch_size)
    with np.errstate(invalid="ignore", divide="ignore"):
        lpay = np.where(xs > k, xs + np.log1p(-np.exp(np.minimum(k - xs, 0.0))), -np.inf)
    log_terms = lpay + lw
    log_price, rel_se = _log_mean_and_se(log_terms, n_paths)
    ess = _ess_fraction(log_terms, n_paths)
    flags = ()
    if ess < ESS_WARN_FRACTION:
        flags = ("weight-degeneracy",)
        warnings.warn(
            f"importance-sampling ESS fraction {ess:.3g} below {ESS_WARN_FRACTION}",
            WeightDegeneracyWarning,
        )
    if not np.isfinite(log_price):
        flags = flags + ("all-otm",)
    return MCEstimate(
        mean=log_price, std_error=rel_se, n_paths=n_paths, seed=seed,
        log_space=True, ess_fraction=ess, flags=flags,
    )


def digital_is(spec: VolModelSpec, eps: float, x: float, sol: RateFunctionSolution,
               n_paths: int, grid: Grid, seed: int, regime=None,
               batch_size: int = DEFAULT_BATCH) -> MCEstimate:
    """log P[log-price > strike] by the same shifted simulation."""
    k = _k_strike(spec, x, eps, regime)
    xs, lw = _is_core(spec, eps, sol, n_paths, grid, seed, batch_size)
    log_terms = np.where(xs > k, 0.0, -np.inf) + lw
    log_p, rel_se = _log_mean_and_se(log_terms, n_paths)
    return MCEstimate(
        mean=log_p, std_error=rel_se, n_paths=n_paths, seed=seed, log_space=True,
        ess_fraction=_ess_fraction(log_terms, n_paths),
    )


def j_estimators(spec: VolModelSpec, eps: float, x: float, sol: RateFunctionSolution,
                 n_paths: int, grid: Grid, seed: int,
                 batch_size: int = DEFAULT_BATCH):
    """Two routes to the normalized payoff expectation J.

    Exact route: log(price) + energy/eps_bar^2 - k from the Girsanov weight.
    Expansion route: weight exp(-lambda' g1 / eps_bar) with g1 the first-order
    coefficient of the shifted simulation. The two agree up to the
    discretization gap between the gradient pairing and the multiplier times
    g1 (and MC error).
    """
    eps_hat, hhat, dht = _shifted_arrays(spec, sol, eps, grid)
    k = _k_strike(spec, x, eps)
    h = sol.h_star
    n = grid.n_steps
    dt = grid.dt
    sv0 = spec.sigma.deriv(0, hhat)
    sv1 = spec.sigma.deriv(1, hhat)
    lt_exact = np.empty(n_paths)
    lt_taylor = np.empty(n_paths)
    for start, dw, dwbar, what in noise_batches(n_paths, grid, spec.hurst, seed, batch_size):
        sv = spec.sigma.deriv(0, eps_hat * what[:, :n] + hhat)
        dwt = spec.rho * dw + spec.rho_bar * dwbar
        b = dw.shape[0]
        xs = (
            eps * np.einsum("bi,bi->b", sv, dwt)
            + (eps / eps_hat) * (sv @ dht)
            - 0.5 * eps**2 * dt * np.einsum("bi,bi->b", sv, sv)
        )
        with np.errstate(invalid="ignore", divide="ignore"):
            lpay = np.where(xs > k, np.log(np.expm1(np.maximum(xs - k, 1e-300))), -np.inf)
        g1 = dwt @ sv0 + (what[:, :n] * sv1[None, :]) @ dht
        lw_exact = -(dw @ h.hdot + dwbar @ h.hbardot) / eps_hat
        lt_exact[start:start + b] = lpay + lw_exact
        lt_taylor[start:start + b] = lpay - sol.lambda_prime * g1 / eps_hat
    le, se_e = _log_mean_and_se(lt_exact, n_paths)
    lt, se_t = _log_mean_and_se(lt_taylor, n_paths)
    return (le, se_e), (lt, se_t)


def sample_g1_g2(spec: VolModelSpec, sol: RateFunctionSolution, model_sample: ItoModel):
    """First- and second-order coefficients of one sampled model at the
    optimal shift."""
    terms = taylor_terms(sol.h_star, model_sample, spec, 0.0)
    return terms.g1, terms.g2


def _batch_functional_arrays(spec, sol, grid):
    """Frozen-coefficient arrays for the vectorized g1/g2 evaluation at
    substeps=1 (cross-cell corrections vanish there)."""
    h = sol.h_star
    grid.check_same(h.grid)
    hhat = fractional_integral_cm(h.hdot, spec.kernel, grid).values[: grid.n_steps]
    dht = (spec.rho * h.hdot + spec.rho_bar * h.hbardot) * grid.dt
    s0 = spec.sigma.deriv(0, hhat)
    s1 = spec.sigma.deriv(1, hhat)
    s2 = spec.sigma.deriv(2, hhat)
    k2 = -0.5 * float(np.sum(spec.sigma_sq(hhat))) * grid.dt if spec.hurst == 0.5 else 0.0
    return dht, s0, s1, s2, k2


def sample_g1_values(spec: VolModelSpec, sol: RateFunctionSolution, n_paths: int,
                     grid: Grid, seed: int, batch_size: int = DEFAULT_BATCH) -> np.ndarray:
    """Vectorized draw of the first-order coefficient over many paths."""
    dht, s0, s1, _, _ = _batch_functional_arrays(spec, sol, grid)
    n = grid.n_steps
    out = np.empty(n_paths)
    for start, dw, dwbar, what in noise_batches(n_paths, grid, spec.hurst, seed, batch_size):
        dwt = spec.rho * dw + spec.rho_bar * dwbar
        b = dw.shape[0]
        out[start:start + b] = dwt @ s0 + (what[:, :n] * s1[None, :]) @ dht
    return out


def decompose_shift(spec: VolModelSpec, sol: RateFunctionSolution,
                    model_sample: ItoModel) -> ShiftDecomposition:
    """Split g2 into delta2 + g1*delta1 + g1^2*delta0.

    The sample's noise is re-centered along v = grad/||grad||^2 so that the
    remainder path V carries no component of the first-order Gaussian; delta2
    is the second-order functional of the V-lift (drift constant included),
    delta0 the same functional of the deterministic v-lift.
    """
    grid = model_sample.grid
    d = dphi1(sol.h_star, spec)
    v = d.scaled(1.0 / d.norm_sq())
    terms = taylor_terms(sol.h_star, model_sample, spec, 0.0)
    g1, g2, k2 = terms.g1, terms.g2, terms.k2
    r = model_sample.substeps
    fine_dt = grid.refine(r).dt
    zeta_w = np.repeat(v.hdot, r) * fine_dt
    zeta_wbar = np.repeat(v.hbardot, r) * fine_dt
    vmodel = lift_from_fine(
        model_sample.dw_fine - g1 * zeta_w,
        model_sample.dwbar_fine - g1 * zeta_wbar,
        model_sample.params, grid, r,
    )
    delta2 = taylor_terms(sol.h_star, vmodel, spec, 0.0).g2
    zlift = lift_from_fine(zeta_w, zeta_wbar, model_sample.params, grid, r)
    delta0 = taylor_terms(sol.h_star, zlift, spec, 0.0).g2 - k2
    delta1 = (g2 - delta2 - g1**2 * delta0) / g1 if abs(g1) > 1e-8 else math.nan
    return ShiftDecomposition(
        g1_sample=g1, v_path=v, V_model=vmodel,
        delta2=delta2, delta1=delta1, delta0=delta0,
    )


def estimate_A(spec: VolModelSpec, sol: RateFunctionSolution, x: float, n_paths: int,
               grid: Grid, seed: int, batch_size: int = DEFAULT_BATCH) -> MCEstimate:
    """Monte Carlo prefactor E[exp(lambda' * delta2)], times e^x when H = 1/2.

    Requires a positive non-degeneracy margin (otherwise the exponential
    moment need not exist and the estimate is refused). Reports the fraction
    of the sample mass carried by the top 1% of draws as a tail diagnostic.
    """
    if not sol.nondeg_margin > 0.0:
        raise DegenerateMinimizer(
            f"non-degeneracy margin {sol.nondeg_margin:g} is not positive"
        )
    dht, s0, s1, s2, k2 = _batch_functional_arrays(spec, sol, grid)
    d = dphi1(sol.h_star, spec)
    v = d.scaled(1.0 / d.norm_sq())
    kern = spec.kernel
    vhat = fractional_integral_cm(v.hdot, kern, grid).values
    vt = (spec.rho * v.hdot + spec.rho_bar * v.hbardot) * grid.dt
    n = grid.n_steps
    q = sol.lambda_prime
    vals = np.empty(n_paths)
    for start, dw, dwbar, what in noise_batches(n_paths, grid, spec.hurst, seed, batch_size):
        dwt = spec.rho * dw + spec.rho_bar * dwbar
        b = dw.shape[0]
        g1 = dwt @ s0 + (what[:, :n] * s1[None, :]) @ dht
        vhat_b = what - g1[:, None] * vhat[None, :]
        dvt = dwt - g1[:, None] * vt[None, :]
        delta2 = (
            0.5 * (vhat_b[:, :n] ** 2 * s2[None, :]) @ dht
            + np.einsum("bi,bi->b", vhat_b[:, :n] * s1[None, :], dvt)
            + k2
        )
        vals[start:start + b] = np.exp(q * delta2)
    factor = math.exp(x) if spec.hurst == 0.5 else 1.0
    mean = factor * float(np.mean(vals))
    se = factor * float(np.std(vals, ddof=1) / math.sqrt(n_paths)) if n_paths > 1 else 0.0
    srt = np.sort(vals)
    top = max(1, n_paths // 100)
    top_mass = float(np.sum(srt[-top:]) / np.sum(srt)) if np.sum(srt) > 0 else math.nan
    return MCEstimate(
        mean=mean, std_error=se, n_paths=n_paths, seed=seed, log_space=False,
        diagnostics={"top1_mass_fraction": top_mass},
    )

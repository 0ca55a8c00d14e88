"""Constrained energy minimization for the most-likely control path.

Minimizes (1/2)||(h, hbar)||^2 over piecewise-constant derivatives subject to
the terminal log-price constraint Phi1(h) = x, via an augmented Lagrangian
with L-BFGS inner solves. The multiplier at the optimum is the derivative of
the energy in x and feeds every downstream asymptotic formula.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import minimize

from .errors import DegenerateSpec, NonConvergence
from .fbm import CameronMartinPair, Grid, fractional_eval_midpoints
from .volmodel import VolModelSpec

__all__ = [
    "SolveOptions",
    "RateFunctionSolution",
    "phi1_cm",
    "dphi1",
    "solve_rate",
    "lambda_prime_check",
    "check_nondegeneracy",
    "g1_variance_analytic",
]


@dataclass(frozen=True)
class SolveOptions:
    tol_constraint: float = 1e-11
    tol_kkt: float = 1e-9
    max_outer: int = 40
    max_inner: int = 400
    penalty0: float = 10.0
    penalty_growth: float = 10.0
    penalty_max: float = 1e10
    # continuation kicks in once x exceeds this multiple of sigma0
    continuation_scale: float = 0.75
    # extra perturbed restarts; energies disagreeing by more than
    # restart_warn_tol (relative) emit a multiple-minima warning
    multistart: int = 0
    restart_warn_tol: float = 1e-6
    hessian_fd_step: float = 1e-4
    compute_margin: bool = True


@dataclass(frozen=True)
class RateFunctionSolution:
    """Converged minimizer and the scalar quantities derived from it."""

    x: float
    h_star: CameronMartinPair
    energy: float
    multiplier: float
    lambda_prime: float
    sigma_x: float
    nondeg_margin: float
    kkt_residual: float
    constraint_residual: float
    grid: Grid
    n_outer: int = 0
    warnings: tuple = ()


def _tilde_dot(h: CameronMartinPair, spec: VolModelSpec) -> np.ndarray:
    return spec.rho * h.hdot + spec.rho_bar * h.hbardot


def phi1_cm(h: CameronMartinPair, spec: VolModelSpec) -> float:
    """Terminal value of the controlled log-price: int sigma(hhat) d(tilde h),
    with the smooth integrand sampled at cell midpoints."""
    hhat_mid = fractional_eval_midpoints(h.hdot, spec.kernel, h.grid)
    return float(np.sum(spec.sigma.deriv(0, hhat_mid) * _tilde_dot(h, spec)) * h.grid.dt)


def dphi1(h: CameronMartinPair, spec: VolModelSpec) -> CameronMartinPair:
    """Gradient of phi1_cm as an element of the control space.

    The W-component density is rho*sigma(hhat) plus the kernel-transpose term
    collecting how hhat at later midpoints responds to the derivative on each
    cell; the Wbar-component is rho_bar*sigma(hhat).
    """
    grid = h.grid
    kern = spec.kernel
    hhat_mid = fractional_eval_midpoints(h.hdot, kern, grid)
    sig = spec.sigma.deriv(0, hhat_mid)
    sig1 = spec.sigma.deriv(1, hhat_mid)
    tdot = _tilde_dot(h, spec)
    from .fbm import _midpoint_weights  # exact partial-cell kernel integrals

    g = _midpoint_weights(grid.n_steps, kern.hurst)
    a = spec.rho * sig + g.T @ (sig1 * tdot)
    b = spec.rho_bar * sig
    return CameronMartinPair(grid, a, b)


def g1_variance_analytic(sol: RateFunctionSolution, spec: VolModelSpec) -> float:
    """Variance of the first-order noise coefficient: the squared control-space
    norm of the gradient at the minimizer."""
    return dphi1(sol.h_star, spec).norm_sq()


def _pack(h: CameronMartinPair) -> np.ndarray:
    return np.concatenate([h.hdot, h.hbardot])


def _unpack(z: np.ndarray, grid: Grid) -> CameronMartinPair:
    n = grid.n_steps
    return CameronMartinPair(grid, z[:n], z[n:])


def _fd_hessian(z, spec, grid, step_rel):
    """Central finite differences of the gradient densities: the (2n x 2n)
    symmetrized second derivative of the constraint functional."""
    n2 = z.shape[0]
    step = step_rel * max(1.0, float(np.max(np.abs(z))))
    hess = np.empty((n2, n2))
    for j in range(n2):
        zp = z.copy()
        zp[j] += step
        dp = _pack(dphi1(_unpack(zp, grid), spec))
        zp[j] -= 2 * step
        dm = _pack(dphi1(_unpack(zp, grid), spec))
        hess[:, j] = (dp - dm) / (2 * step)
    return 0.5 * (hess + hess.T)


def _residuals(z, q, x, spec, grid):
    dt = grid.dt
    h = _unpack(z, grid)
    c = phi1_cm(h, spec) - x
    d = _pack(dphi1(h, spec))
    dd = (d @ d) * dt
    q_ls = (z @ d) * dt / dd if dd > 0 else 0.0
    kkt = np.sqrt(np.sum((z - q_ls * d) ** 2) * dt)
    return h, c, d, q_ls, kkt


def _newton_polish(x, spec, grid, opts, z, q):
    """Drive the stationarity system (z = q grad, constraint = x) to
    tolerance; quadratic convergence where the quasi-Newton phase stalls on
    function-value granularity."""
    dt = grid.dt
    n2 = z.shape[0]
    for _ in range(4):
        h, c, d, q_ls, kkt = _residuals(z, q, x, spec, grid)
        scale = max(1.0, np.sqrt((z @ z) * dt))
        if abs(c) <= opts.tol_constraint and kkt <= opts.tol_kkt * scale:
            return z, c, d, q_ls, kkt
        hess = _fd_hessian(z, spec, grid, opts.hessian_fd_step)
        jac = np.zeros((n2 + 1, n2 + 1))
        jac[:n2, :n2] = np.eye(n2) - q * hess
        jac[:n2, n2] = -d
        jac[n2, :n2] = dt * d
        rhs = np.concatenate([q * d - z, [-c]])
        try:
            delta = np.linalg.solve(jac, rhs)
        except np.linalg.LinAlgError:
            break
        z = z + delta[:n2]
        q = q + delta[n2]
    h, c, d, q_ls, kkt = _residuals(z, q, x, spec, grid)
    return z, c, d, q_ls, kkt


def _solve_one_target(x, spec, grid, opts, z0, q0):
    """Augmented Lagrangian loop for one constraint target, finished by a
    Newton polish of the stationarity system; returns
    (h, q_leastsq, kkt, cres, n_outer)."""
    dt = grid.dt
    q = q0
    mu = opts.penalty0
    z = np.asarray(z0, dtype=float)
    prev_c = np.inf
    n_outer = 0
    # quasi-Newton phase: constraint to tolerance, gradient as far as
    # function-value granularity allows
    kkt_coarse = max(opts.tol_kkt, 1e-6)
    for n_outer in range(1, opts.max_outer + 1):

        def fun_grad(zv, q=q, mu=mu):
            h = _unpack(zv, grid)
            c = phi1_cm(h, spec) - x
            f = 0.5 * (zv @ zv) * dt - q * c + 0.5 * mu * c * c
            d = _pack(dphi1(h, spec))
            grad = dt * (zv - (q - mu * c) * d)
            return f, grad

        res = minimize(
            fun_grad,
            z,
            jac=True,
            method="L-BFGS-B",
            options={"maxiter": opts.max_inner, "ftol": 1e-18, "gtol": 1e-14},
        )
        z = res.x
        h, c, d, q_ls, kkt = _residuals(z, q, x, spec, grid)
        scale = max(1.0, np.sqrt((z @ z) * dt))
        if abs(c) <= max(opts.tol_constraint, 1e-9) and kkt <= kkt_coarse * scale:
            break
        q = q - mu * c
        if abs(c) > 0.25 * prev_c:
            mu = min(mu * opts.penalty_growth, opts.penalty_max)
        prev_c = abs(c)
    else:
        raise NonConvergence(
            f"augmented Lagrangian did not reach tolerance at x={x:g}",
            {"constraint": c, "kkt": kkt, "outer": n_outer},
        )
    z, c, d, q_ls, kkt = _newton_polish(x, spec, grid, opts, z, q_ls)
    scale = max(1.0, np.sqrt((z @ z) * dt))
    if not (abs(c) <= opts.tol_constraint and kkt <= opts.tol_kkt * scale):
        raise NonConvergence(
            f"Newton polish did not reach tolerance at x={x:g}",
            {"constraint": c, "kkt": kkt, "outer": n_outer},
        )
    return _unpack(z, grid), q_ls, kkt, abs(c), n_outer


def solve_rate(x: float, spec: VolModelSpec, grid: Grid,
               opts: SolveOptions = SolveOptions()) -> RateFunctionSolution:
    """Solve the variational problem at log-strike parameter x >= 0.

    Initialized at the constant-volatility closed form; for large x the target
    is approached by continuation. The returned multiplier is the least-squares
    projection <h, dPhi1>/||dPhi1||^2, reported as the energy derivative.
    """
    if x < 0:
        raise ValueError("x must be >= 0")
    if spec.sigma0 <= 0:
        raise DegenerateSpec("sigma(0) must be positive")
    s0 = spec.sigma0
    if x == 0.0:
        h0 = CameronMartinPair.zero(grid)
        sigma_x = float(np.sqrt(dphi1(h0, spec).norm_sq()))
        return RateFunctionSolution(
            x=0.0, h_star=h0, energy=0.0, multiplier=0.0, lambda_prime=0.0,
            sigma_x=sigma_x, nondeg_margin=1.0, kkt_residual=0.0,
            constraint_residual=0.0, grid=grid,
        )

    n_stages = max(1, int(np.ceil(x / (opts.continuation_scale * s0))))
    targets = x * np.arange(1, n_stages + 1) / n_stages

    def run_from(z_init, q_init):
        z, q = z_init, q_init
        total_outer = 0
        for xt in targets:
            if z is None:
                h_init = CameronMartinPair.constant(grid, xt * spec.rho / s0, xt * spec.rho_bar / s0)
                z = _pack(h_init)
                q = xt / s0**2
            h, q, kkt, cres, n_outer = _solve_one_target(xt, spec, grid, opts, z, q)
            z = _pack(h)
            total_outer += n_outer
        return h, q, kkt, cres, total_outer

    h, q, kkt, cres, total_outer = run_from(None, None)
    notes = []

    if opts.multistart > 0:
        rng = np.random.default_rng(
            np.frombuffer(np.float64(x).tobytes(), dtype=np.uint64) ^ np.uint64(grid.n_steps)
        )
        energies = [0.5 * h.norm_sq()]
        best = (h, q, kkt, cres)
        for _ in range(opts.multistart):
            z0 = _pack(h) * (1.0 + 0.3 * rng.standard_normal(2 * grid.n_steps))
            try:
                h2, q2, kkt2, cres2, extra = _solve_one_target(x, spec, grid, opts, z0, q)
            except NonConvergence:
                continue
            total_outer += extra
            energies.append(0.5 * h2.norm_sq())
            if energies[-1] < energies[0] - 1e-15:
                best = (h2, q2, kkt2, cres2)
        spread = (max(energies) - min(energies)) / max(min(energies), 1e-300)
        if spread > opts.restart_warn_tol:
            msg = f"multistart energies disagree (relative spread {spread:.2e}); minimizer may not be unique"
            warnings.warn(msg)
            notes.append(msg)
        h, q, kkt, cres = best

    energy = 0.5 * h.norm_sq()
    sigma_x = np.sqrt(2.0 * energy) / q if q != 0 else np.sqrt(dphi1(h, spec).norm_sq())
    sol = RateFunctionSolution(
        x=x, h_star=h, energy=energy, multiplier=q, lambda_prime=q,
        sigma_x=float(sigma_x), nondeg_margin=np.nan, kkt_residual=float(kkt),
        constraint_residual=float(cres), grid=grid, n_outer=total_outer,
        warnings=tuple(notes),
    )
    margin = check_nondegeneracy(sol, spec, opts) if opts.compute_margin else np.nan
    return replace(sol, nondeg_margin=float(margin))


def lambda_prime_check(x: float, spec: VolModelSpec, grid: Grid,
                       opts: SolveOptions = SolveOptions(), delta: float | None = None) -> float:
    """|central finite difference of the energy - multiplier| at x."""
    if delta is None:
        delta = max(0.02 * x, 1e-4)
    fast = replace(opts, compute_margin=False)
    lam_p = solve_rate(x + delta, spec, grid, fast).energy
    lam_m = solve_rate(max(x - delta, 0.0), spec, grid, fast).energy
    q = solve_rate(x, spec, grid, fast).multiplier
    fd = (lam_p - lam_m) / (2.0 * delta)
    return abs(fd - q)


def check_nondegeneracy(sol: RateFunctionSolution, spec: VolModelSpec,
                        opts: SolveOptions = SolveOptions()) -> float:
    """Margin 1 - q * lambda_max of the constraint Hessian on the tangent
    space orthogonal to the minimizer; positive margin is required by every
    downstream prefactor computation.

    The Hessian is assembled by central finite differences of the analytic
    gradient, symmetrized, and projected onto {h}^perp.
    """
    grid = sol.grid
    z = _pack(sol.h_star)
    hess = _fd_hessian(z, spec, grid, opts.hessian_fd_step)
    if z @ z > 0:
        w = z / np.linalg.norm(z)
        hw = hess @ w
        hess -= np.outer(w, hw)
        hess -= np.outer(hw, w)
        hess += (w @ hw) * np.outer(w, w)
        # one symmetric projection P H P, written to avoid forming P
    lam_max = float(np.linalg.eigvalsh(hess)[-1])
    return 1.0 - sol.multiplier * lam_max

"""Batch command-line interface.

Subcommands: rate, price, verify, taylor-check, bsabs. Outputs are CSV files
(or a text+JSON report for verify) whose content is a pure function of the
config file and seed. Exit codes: 0 success, 1 validation error, 2 numerical
failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .asymptotics import (
    ScalingRegime,
    bs_exact_call,
    bsabs_sandwich,
    precise_ldp_price,
    precise_mdp_price,
)
from .config import ScenarioConfig
from .errors import NonConvergence, RoughAsymError
from .expansion import remainder_scaling_check, taylor_terms
from .fbm import CameronMartinPair, Grid
from .mc import decompose_shift, estimate_A, price_call_is, price_call_plain, sample_g1_g2
from .models import (
    canonical_lift,
    dilate,
    homogeneous_norm,
    lift_ito,
    model_distance,
    translate,
)
from .rate import dphi1, g1_variance_analytic, solve_rate
from .volmodel import ConstantSigma

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_NUMERICAL = 2


def _load_config(args) -> ScenarioConfig:
    cfg = ScenarioConfig.from_file(args.config) if args.config else ScenarioConfig.default()
    if args.seed is not None:
        cfg.seed = args.seed
    if args.paths is not None:
        cfg.n_paths = args.paths
    if args.grid is not None:
        cfg.n_steps = args.grid
    cfg.validate()
    return cfg


def _write_csv(path: Path, cfg: ScenarioConfig, header, rows):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(f"# config_hash={cfg.config_hash()} version={__version__}\n")
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)
    return path


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(float(v))
    return v


def cmd_rate(cfg: ScenarioConfig, out_dir: Path) -> int:
    spec = cfg.spec()
    grid = cfg.grid()
    opts = cfg.solve_options()
    rows = []
    for x in cfg.x_list:
        sol = solve_rate(x, spec, grid, opts)
        ratio = 1.0 if x == 0 else sol.energy * 2.0 * spec.sigma0**2 / x**2
        rows.append([
            _fmt(float(x)), _fmt(sol.energy), _fmt(sol.lambda_prime), _fmt(sol.sigma_x),
            _fmt(sol.nondeg_margin), _fmt(sol.kkt_residual), _fmt(ratio), cfg.n_steps,
        ])
    path = _write_csv(
        out_dir / "rate.csv", cfg,
        ["x", "energy", "lambda_prime", "sigma_x", "margin", "kkt_residual",
         "smallx_ratio", "n_steps"],
        rows,
    )
    print(f"wrote {path}")
    return EXIT_OK


def cmd_price(cfg: ScenarioConfig, out_dir: Path) -> int:
    spec = cfg.spec()
    grid = cfg.grid()
    regime = cfg.regime()
    opts = cfg.solve_options()
    rows = []
    header = ["eps", "x", "hurst", "method", "log_price", "price", "std_error",
              "n_paths", "ess_fraction", "seed", "flags"]

    def add(eps, x, method, log_price, se, n_paths="", ess="", flags=()):
        price = math.exp(log_price) if log_price is not None and log_price > -690 else None
        rows.append([
            _fmt(eps), _fmt(x), _fmt(cfg.hurst), method, _fmt(log_price), _fmt(price),
            _fmt(se), n_paths, _fmt(ess), cfg.seed, ";".join(flags),
        ])

    for x in cfg.x_list:
        if x <= 0:
            continue
        sol = solve_rate(x, spec, grid, opts)
        a_est = estimate_A(spec, sol, x, min(cfg.n_paths, 200000), grid, cfg.seed + 1)
        for eps in cfg.eps_list:
            plain = price_call_plain(spec, eps, x, cfg.n_paths, grid, cfg.seed,
                                     regime=regime, batch_size=cfg.batch_size)
            if plain.mean > 0:
                add(eps, x, "plain-mc", math.log(plain.mean),
                    plain.std_error / plain.mean, cfg.n_paths)
            is_est = price_call_is(spec, eps, x, sol, cfg.n_paths, grid, cfg.seed,
                                   regime=regime, batch_size=cfg.batch_size)
            add(eps, x, "is-mc", is_est.mean, is_est.std_error, cfg.n_paths,
                is_est.ess_fraction, is_est.flags)
            add(eps, x, "precise-ldp",
                precise_ldp_price(x, sol, a_est.mean, regime, eps), a_est.std_error)
            if regime.kind == "mdp":
                add(eps, x, "precise-mdp",
                    precise_mdp_price(x, spec.sigma0, None, regime, eps), None)
            if isinstance(spec.sigma, ConstantSigma) and spec.hurst == 0.5:
                mu = -0.5 * spec.sigma0**2
                add(eps, x, "bs-exact",
                    bs_exact_call(spec.sigma0, mu, eps**2, regime.k_eps(x, eps)), None)
            eps_bar = regime.eps_bar(eps)
            ratio = math.exp(
                is_est.mean + sol.energy / eps_bar**2 - math.log(eps) - 2 * math.log(eps_bar)
            ) if np.isfinite(is_est.mean) else None
            rows.append([
                _fmt(eps), _fmt(x), _fmt(cfg.hurst), "ratio-R", "", _fmt(ratio),
                "", cfg.n_paths, "", cfg.seed, "",
            ])
    path = _write_csv(out_dir / "price.csv", cfg, header, rows)
    print(f"wrote {path}")
    return EXIT_OK


def cmd_taylor_check(cfg: ScenarioConfig, out_dir: Path) -> int:
    spec = cfg.spec()
    rng = np.random.default_rng(cfg.seed)
    n = min(cfg.n_steps, 64)
    grid = Grid(n)
    sd = math.sqrt(grid.dt)
    model = lift_ito(rng.standard_normal(n) * sd, rng.standard_normal(n) * sd,
                     spec.params, substeps=2)
    h = CameronMartinPair.constant(grid, 0.3, -0.2)
    eps_list = cfg.eps_list or [2.0 ** (-j) for j in range(3, 9)]
    sweep = remainder_scaling_check(h, model, spec, eps_list)
    rows = []
    for eps, ebar, rem in zip(eps_list, sweep.eps_bars, sweep.remainders):
        terms = taylor_terms(h, model, spec, eps)
        rows.append([_fmt(float(eps)), _fmt(float(ebar)), _fmt(terms.g0), _fmt(terms.g1),
                     _fmt(terms.g2), _fmt(float(rem)), _fmt(sweep.slope)])
    path = _write_csv(
        out_dir / "taylor.csv", cfg,
        ["eps", "eps_bar", "g0", "g1", "g2", "remainder", "slope"], rows,
    )
    print(f"wrote {path}")
    return EXIT_OK


def cmd_bsabs(cfg: ScenarioConfig, out_dir: Path) -> int:
    rows = []
    for alpha in np.linspace(-2.0, 2.0, 5):
        for gamma in np.linspace(0.0, 0.5, 5):
            for eps in np.linspace(0.01, 0.5, 5):
                lower, middle, upper = bsabs_sandwich(alpha, gamma, eps)
                rows.append(["BSabs", _fmt(float(alpha)), _fmt(float(gamma)),
                             _fmt(float(eps)), _fmt(lower), _fmt(middle), _fmt(upper),
                             int(lower <= middle <= upper)])
    path = _write_csv(
        out_dir / "bsabs.csv", cfg,
        ["formula_id", "alpha", "gamma", "eps", "lower", "middle", "upper", "ok"], rows,
    )
    print(f"wrote {path}")
    return EXIT_OK


def _verify_checks(cfg: ScenarioConfig):
    """Deterministic invariant suite; yields (name, passed, detail)."""
    spec = cfg.spec()
    params = spec.params
    rng = np.random.default_rng(cfg.seed)
    n = 32
    grid = Grid(n)
    sd = math.sqrt(grid.dt)

    def rand_model():
        return lift_ito(rng.standard_normal(n) * sd, rng.standard_normal(n) * sd,
                        params, substeps=2)

    def rand_h(scale=1.0):
        return CameronMartinPair(grid, scale * rng.standard_normal(n),
                                 scale * rng.standard_normal(n))

    model = rand_model()
    h = rand_h(0.5)

    # dilation scales the homogeneous norm exactly
    base = homogeneous_norm(model)
    err = max(abs(homogeneous_norm(dilate(model, e)) - e * base) for e in (0.5, 0.25))
    yield "dilation-homogeneity", err <= 1e-12, f"max |err| = {err:.3e}"

    # recombination identity at every grid triple
    worst = 0.0
    for m in range(1, params.level_m + 1):
        pw = model.level_pairs(m, "w")
        wv = model.what.values
        dwc = model.w.increments
        for i in range(n):
            for u in range(i + 1, n + 1):
                for j in range(u, n + 1):
                    acc = pw[i, u]
                    d = wv[u] - wv[i]
                    for l in range(0, m + 1):
                        piece = pw[u, j] if l == m else (
                            (wv[j] - wv[u]) if l == 0 else model.level_pairs(l, "w")[u, j]
                        )
                        acc += math.comb(m, m - l) * d ** (m - l) * piece
                    worst = max(worst, abs(acc - pw[i, j]))
    yield "recombination", worst <= 1e-12, f"max residual = {worst:.3e}"

    # translation round trip
    rt = model_distance(translate(translate(model, h), h.scaled(-1.0)), model)
    yield "translate-roundtrip", rt <= 1e-8, f"distance = {rt:.3e}"

    # measured translation bound constant
    ratios = []
    for _ in range(20):
        mm, hh = rand_model(), rand_h(0.7)
        ratios.append(homogeneous_norm(translate(mm, hh))
                      / (homogeneous_norm(mm) + math.sqrt(hh.norm_sq())))
    cbound = max(ratios)
    yield "translation-bound", math.isfinite(cbound), f"measured constant = {cbound:.3f}"

    # shifting increments commutes with the lift
    dw = rng.standard_normal(n) * sd
    dwb = rng.standard_normal(n) * sd
    lifted = lift_ito(dw + h.hdot * grid.dt, dwb + h.hbardot * grid.dt, params, substeps=2)
    shifted = translate(lift_ito(dw, dwb, params, substeps=2), h)
    gerr = model_distance(lifted, shifted)
    yield "girsanov-lift", gerr <= 1e-12, f"distance = {gerr:.3e}"

    # third-order remainder decay (amplitudes keep eps_bar * norm bounded)
    small = lift_ito(0.5 * sd * rng.standard_normal(n), 0.5 * sd * rng.standard_normal(n),
                     params, substeps=2)
    eps_slope = [(2.0 ** (-j)) ** (1.0 / (2.0 * spec.hurst)) for j in range(3, 9)]
    sweep = remainder_scaling_check(rand_h(0.3), small, spec, eps_slope)
    yield "remainder-slope", sweep.slope >= 2.7, f"slope = {sweep.slope:.3f}"

    # energy-variance identity at the first positive sweep x
    xs = [x for x in cfg.x_list if x > 0] or [0.05]
    sol = solve_rate(xs[0], spec, cfg.grid(), cfg.solve_options())
    var = g1_variance_analytic(sol, spec)
    ref = 2.0 * sol.energy / sol.lambda_prime**2
    rel = abs(var - ref) / ref
    yield "energy-variance-identity", rel <= 1e-6, f"relative gap = {rel:.3e}"

    # sandwich ordering on a thinned grid (full grid runs in the test suite)
    ok = True
    for alpha in (-2.0, 0.0, 2.0):
        for gamma in (0.0, 0.5):
            for eps in (0.01, 0.5):
                lo, mid, up = bsabs_sandwich(alpha, gamma, eps)
                ok = ok and lo <= mid <= up
    yield "bsabs-sandwich", ok, "ordering holds"

    # per-sample split of the second-order coefficient (needs a solution on
    # the same small grid as the sampled models)
    sol_small = solve_rate(xs[0], spec, grid, cfg.solve_options())
    worst = 0.0
    for _ in range(20):
        ms = rand_model()
        dec = decompose_shift(spec, sol_small, ms)
        g1, g2 = sample_g1_g2(spec, sol_small, ms)
        if math.isnan(dec.delta1):
            continue
        resid = abs(g2 - (dec.delta2 + g1 * dec.delta1 + g1**2 * dec.delta0))
        worst = max(worst, resid)
    yield "shift-decomposition", worst <= 1e-8, f"max residual = {worst:.3e}"


def cmd_verify(cfg: ScenarioConfig, out_dir: Path) -> int:
    results = list(_verify_checks(cfg))
    n_failed = sum(0 if ok else 1 for _, ok, _ in results)
    lines = [f"verification report (config {cfg.config_hash()}, version {__version__})"]
    for name, ok, detail in results:
        lines.append(f"{'PASS' if ok else 'FAIL'}  {name:28s} {detail}")
    lines.append(f"{len(results) - n_failed}/{len(results)} checks passed")
    text = "\n".join(lines) + "\n"
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "verify.txt").write_text(text, encoding="utf-8")
    payload = {
        "config_hash": cfg.config_hash(),
        "version": __version__,
        "checks": [{"name": n, "passed": bool(ok), "detail": d} for n, ok, d in results],
        "n_failed": n_failed,
    }
    (out_dir / "verify.json").write_text(json.dumps(payload, indent=2) + "\n",
                                         encoding="utf-8")
    print(text, end="")
    return n_failed


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="roughasym",
        description="small-noise call-price asymptotics for rough volatility models",
    )
    parser.add_argument("--config", type=str, default=None, help="INI scenario file")
    parser.add_argument("--seed", type=int, default=None, help="override config seed")
    parser.add_argument("--out", type=str, default=".", help="output directory")
    parser.add_argument("--paths", type=int, default=None, help="override MC path count")
    parser.add_argument("--grid", type=int, default=None, help="override grid size")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("rate", "price", "verify", "taylor-check", "bsabs"):
        sub.add_parser(name)
    args = parser.parse_args(argv)

    try:
        cfg = _load_config(args)
    except (ValueError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION

    out_dir = Path(args.out)
    dispatch = {
        "rate": cmd_rate,
        "price": cmd_price,
        "verify": cmd_verify,
        "taylor-check": cmd_taylor_check,
        "bsabs": cmd_bsabs,
    }
    try:
        return dispatch[args.command](cfg, out_dir)
    except NonConvergence as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except RoughAsymError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())

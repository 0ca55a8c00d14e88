"""Iterated-integral enhancement of the two-factor noise.

A model bundles the driving paths (W, Wbar, What) with the per-cell iterated
integrals int (What_r - What_s)^m dW_r (and the same against dWbar) for
m = 1..M. Pair values over arbitrary grid windows follow from the per-cell
values through the multiplicative recombination identity, which holds exactly
at the discrete level. Dilation, Cameron-Martin translation, Hoelder-type
norms and a columnar text serialization are provided.

Per-cell integrals are left-point sums on an optional sub-refinement of the
grid (``substeps``). With substeps=1 the within-cell integrals vanish (a
single left endpoint contributes (What_s - What_s)^m = 0) and all window
values reduce to plain left-point sums across cells; substeps>1 interpolates
increments linearly and resolves integrals inside cells, which is the right
choice for deterministic/smooth inputs but adds a Stratonovich-style bias for
Brownian inputs.
"""

from __future__ import annotations

import io
import math

import numpy as np

from . import _backend
from .errors import GridMismatch, LevelMismatch
from .fbm import (
    CameronMartinPair,
    FractionalKernel,
    Grid,
    GridPath,
    fractional_eval,
    fractional_integral_bm,
)

__all__ = [
    "ModelParams",
    "ItoModel",
    "choose_levels",
    "lift_ito",
    "canonical_lift",
    "dilate",
    "translate",
    "model_norm",
    "homogeneous_norm",
    "model_distance",
    "model_to_text",
    "model_from_text",
]

# Pair arrays are cached on the model up to this grid size; beyond it they are
# rebuilt from the per-cell values on every request.
PAIR_CACHE_LIMIT = 512

DEFAULT_SUBSTEPS = 8

SERIAL_FORMAT_VERSION = 1


def _min_level(hurst: float) -> int:
    m = 1
    while (m + 1) * hurst - 0.5 <= 0.0:
        m += 1
    return m


class ModelParams:
    """Hurst index, truncation level M and Hoelder slack kappa.

    M must make the top level regular, (M+1)H - 1/2 > 0 (choose_levels picks
    the smallest such M), and kappa must leave it with positive homogeneity:
    (M+1)(H-kappa) - 1/2 - kappa > 0.
    """

    __slots__ = ("hurst", "level_m", "kappa")

    def __init__(self, hurst: float, level_m: int, kappa: float):
        if not 0.0 < hurst <= 0.5:
            raise ValueError("hurst must lie in (0, 1/2]")
        if level_m < _min_level(hurst):
            raise ValueError(
                f"level_m must be at least {_min_level(hurst)} for hurst {hurst}"
            )
        kappa_max = ((level_m + 1) * hurst - 0.5) / (level_m + 2)
        if not 0.0 < kappa < kappa_max:
            raise ValueError(f"kappa must lie in (0, {kappa_max:g})")
        self.hurst = float(hurst)
        self.level_m = int(level_m)
        self.kappa = float(kappa)

    def __eq__(self, other):
        return (
            isinstance(other, ModelParams)
            and self.hurst == other.hurst
            and self.level_m == other.level_m
            and self.kappa == other.kappa
        )

    def __repr__(self):
        return f"ModelParams(hurst={self.hurst}, level_m={self.level_m}, kappa={self.kappa})"

    @property
    def kernel(self) -> FractionalKernel:
        return FractionalKernel(self.hurst)

    def path_exponents(self):
        """Hoelder exponents of (W, Wbar, What)."""
        k = self.kappa
        return 0.5 - k, 0.5 - k, self.hurst - k

    def level_exponent(self, m: int) -> float:
        """Hoelder exponent of the level-(m+1) object int What^m dW."""
        return m * (self.hurst - self.kappa) + 0.5 - self.kappa


def choose_levels(hurst: float) -> ModelParams:
    """Minimal truncation level for the given roughness, with kappa set to
    half the admissible slack (capped at 0.01)."""
    if not 0.0 < hurst <= 0.5:
        raise ValueError("hurst must lie in (0, 1/2]")
    m = _min_level(hurst)
    kappa_max = ((m + 1) * hurst - 0.5) / (m + 2)
    return ModelParams(hurst, m, min(0.01, 0.5 * kappa_max))


class ItoModel:
    """Noise paths plus iterated integrals; immutable after construction.

    Carries the fine-grid increments it was built from, so translation can
    evaluate the Young-type cross integrals with the same quadrature that
    produced the stored levels.
    """

    __slots__ = (
        "params",
        "grid",
        "substeps",
        "dw_fine",
        "dwbar_fine",
        "what_fine",
        "base_w",
        "base_wbar",
        "_pair_cache",
    )

    def __init__(self, params, grid, substeps, dw_fine, dwbar_fine, what_fine, base_w, base_wbar):
        n = grid.n_steps
        r = int(substeps)
        nf = n * r
        self.params = params
        self.grid = grid
        self.substeps = r
        self.dw_fine = _frozen(dw_fine, (nf,))
        self.dwbar_fine = _frozen(dwbar_fine, (nf,))
        self.what_fine = _frozen(what_fine, (nf + 1,))
        self.base_w = _frozen(base_w, (params.level_m, n))
        self.base_wbar = _frozen(base_wbar, (params.level_m, n))
        self._pair_cache = {}

    # -- derived paths -------------------------------------------------

    def _coarse_increments(self, fine: np.ndarray) -> np.ndarray:
        return fine.reshape(self.grid.n_steps, self.substeps).sum(axis=1)

    @property
    def w(self) -> GridPath:
        return GridPath.from_increments(self.grid, self._coarse_increments(self.dw_fine))

    @property
    def wbar(self) -> GridPath:
        return GridPath.from_increments(self.grid, self._coarse_increments(self.dwbar_fine))

    @property
    def what(self) -> GridPath:
        return GridPath(self.grid, self.what_fine[:: self.substeps].copy())

    def level_pairs(self, m: int, kind: str = "w") -> np.ndarray:
        """Pair array of int_s^t (What_r - What_s)^m d(kind)_r over all grid
        windows, filled by recombination from the per-cell values."""
        if not 1 <= m <= self.params.level_m:
            raise LevelMismatch(f"level {m} outside 1..{self.params.level_m}")
        key = kind
        if key not in self._pair_cache:
            base = self.base_w if kind == "w" else self.base_wbar
            dx = self._coarse_increments(self.dw_fine if kind == "w" else self.dwbar_fine)
            pairs = _backend.fill_level_pairs(dx, self.what.values, base)
            if self.grid.n_steps > PAIR_CACHE_LIMIT:
                return pairs[m - 1]
            self._pair_cache[key] = pairs
        return self._pair_cache[key][m - 1]

    def check_compatible(self, other: "ItoModel"):
        self.grid.check_same(other.grid)
        if self.params != other.params:
            raise LevelMismatch("models carry different parameters")

    # -- constructors ----------------------------------------------------

    @classmethod
    def zero(cls, params: ModelParams, grid: Grid, substeps: int = DEFAULT_SUBSTEPS) -> "ItoModel":
        n, r, m = grid.n_steps, int(substeps), params.level_m
        z = np.zeros(n * r)
        return cls(params, grid, r, z, z.copy(), np.zeros(n * r + 1), np.zeros((m, n)), np.zeros((m, n)))


def _frozen(arr, shape) -> np.ndarray:
    a = np.ascontiguousarray(arr, dtype=float)
    if a.shape != shape:
        raise GridMismatch(f"array has shape {a.shape}, expected {shape}")
    a.setflags(write=False)
    return a


def _left_point_base(what_fine, dx_fine, grid, substeps, levels):
    """Per-cell left-point sums of (What - What(cell start))^m dX, m = 1..levels."""
    r = substeps
    n = grid.n_steps
    wref = what_fine[::r][:n]
    zeros_f = np.zeros(n * r)
    zeros_c = np.zeros(n)
    sums = _backend.cell_cross_sums(
        what_fine[:-1], wref, zeros_f, zeros_c, dx_fine, r, levels, 0
    )
    return sums[1:, 0, :]


def lift_ito(w_increments, wbar_increments, params: ModelParams,
             substeps: int = DEFAULT_SUBSTEPS) -> ItoModel:
    """Enhance per-cell noise increments to a model.

    Increments are interpolated linearly inside cells when substeps > 1; the
    smoothed path What uses the exact cell-average kernel weights on the fine
    grid, matching the deterministic smoothing of Cameron-Martin shifts so the
    two commute exactly.
    """
    dw = np.asarray(w_increments, dtype=float)
    dwbar = np.asarray(wbar_increments, dtype=float)
    if dw.shape != dwbar.shape or dw.ndim != 1:
        raise GridMismatch("increment arrays must be 1-d and of equal length")
    grid = Grid(dw.shape[0])
    r = int(substeps)
    if r < 1:
        raise ValueError("substeps must be >= 1")
    fine = grid.refine(r)
    dw_f = np.repeat(dw / r, r)
    dwbar_f = np.repeat(dwbar / r, r)
    what_f = fractional_integral_bm(dw_f, params.kernel, fine).values
    base_w = _left_point_base(what_f, dw_f, grid, r, params.level_m)
    base_wbar = _left_point_base(what_f, dwbar_f, grid, r, params.level_m)
    return ItoModel(params, grid, r, dw_f, dwbar_f, what_f, base_w, base_wbar)


def lift_from_fine(dw_fine, dwbar_fine, params: ModelParams, grid: Grid, substeps: int) -> ItoModel:
    """Lift noise already given at the fine resolution (no interpolation)."""
    r = int(substeps)
    fine = grid.refine(r)
    dw_f = np.asarray(dw_fine, dtype=float)
    dwbar_f = np.asarray(dwbar_fine, dtype=float)
    what_f = fractional_integral_bm(dw_f, params.kernel, fine).values
    base_w = _left_point_base(what_f, dw_f, grid, r, params.level_m)
    base_wbar = _left_point_base(what_f, dwbar_f, grid, r, params.level_m)
    return ItoModel(params, grid, r, dw_f, dwbar_f, what_f, base_w, base_wbar)


def canonical_lift(h: CameronMartinPair, params: ModelParams,
                   substeps: int = DEFAULT_SUBSTEPS) -> ItoModel:
    """Model of a smooth control path: Riemann-Stieltjes integrals of
    hhat powers against dh, dhbar, sampled at cell midpoints."""
    grid = h.grid
    r = int(substeps)
    fine = grid.refine(r)
    n = grid.n_steps
    dh_f = np.repeat(h.hdot, r) * fine.dt
    dhbar_f = np.repeat(h.hbardot, r) * fine.dt
    kern = params.kernel
    hhat_nodes = fractional_eval(h.hdot, kern, grid, fine.times)
    hhat_mid = fractional_eval(h.hdot, kern, grid, fine.midpoints)
    href = hhat_nodes[::r][:n]
    zeros_f = np.zeros(n * r)
    zeros_c = np.zeros(n)
    m = params.level_m
    base_w = _backend.cell_cross_sums(hhat_mid, href, zeros_f, zeros_c, dh_f, r, m, 0)[1:, 0, :]
    base_wbar = _backend.cell_cross_sums(hhat_mid, href, zeros_f, zeros_c, dhbar_f, r, m, 0)[1:, 0, :]
    return ItoModel(params, grid, r, dh_f, dhbar_f, hhat_nodes, base_w, base_wbar)


def dilate(model: ItoModel, eps: float) -> ItoModel:
    """Scale the paths by eps and the level-m integrals by eps^(m+1)."""
    if eps < 0:
        raise ValueError("eps must be >= 0")
    powers = eps ** (np.arange(1, model.params.level_m + 1) + 1.0)
    return ItoModel(
        model.params,
        model.grid,
        model.substeps,
        eps * model.dw_fine,
        eps * model.dwbar_fine,
        eps * model.what_fine,
        powers[:, None] * model.base_w,
        powers[:, None] * model.base_wbar,
    )


def cross_cell_sums(model: ItoModel, h: CameronMartinPair, jmax: int, pmax: int):
    """Per-cell mixed sums of What powers and hhat powers against the four
    integrators dW, dWbar, dh, dhbar, with the model's left-point quadrature.

    Returns a dict with keys "w", "wbar", "h", "hbar", each of shape
    (jmax+1, pmax+1, n): entry [j, p, i] is
    int over cell i of (What - What_s)^j (hhat - hhat_s)^p d(integrator).
    """
    model.grid.check_same(h.grid)
    grid, r = model.grid, model.substeps
    n = grid.n_steps
    fine = grid.refine(r)
    kern = model.params.kernel
    hhat_f = fractional_eval(h.hdot, kern, grid, fine.times)
    dh_f = np.repeat(h.hdot, r) * fine.dt
    dhbar_f = np.repeat(h.hbardot, r) * fine.dt
    wsamp = model.what_fine[:-1]
    wref = model.what_fine[::r][:n]
    hsamp = hhat_f[:-1]
    href = hhat_f[::r][:n]
    out = {}
    for key, dx in (("w", model.dw_fine), ("wbar", model.dwbar_fine), ("h", dh_f), ("hbar", dhbar_f)):
        out[key] = _backend.cell_cross_sums(wsamp, wref, hsamp, href, dx, r, jmax, pmax)
    return out, hhat_f


def translate(model: ItoModel, h: CameronMartinPair) -> ItoModel:
    """Cameron-Martin translation lifted to the model.

    Paths gain (h, hbar, hhat); the level-(k+1) integrals expand binomially
    into the stored pure-noise level plus Young-type cross integrals, all with
    the quadrature that built the model, so lifting shifted increments equals
    translating the lift exactly.
    """
    model.grid.check_same(h.grid)
    mlev = model.params.level_m
    sums, hhat_f = cross_cell_sums(model, h, mlev, mlev)
    r = model.substeps
    new_base_w = np.array(model.base_w)
    new_base_wbar = np.array(model.base_wbar)
    for k in range(1, mlev + 1):
        for j in range(k + 1):
            c = math.comb(k, j)
            if j < k:
                new_base_w[k - 1] += c * sums["w"][j, k - j]
                new_base_wbar[k - 1] += c * sums["wbar"][j, k - j]
            new_base_w[k - 1] += c * sums["h"][j, k - j]
            new_base_wbar[k - 1] += c * sums["hbar"][j, k - j]
    fine_dt = model.grid.refine(r).dt
    return ItoModel(
        model.params,
        model.grid,
        r,
        model.dw_fine + np.repeat(h.hdot, r) * fine_dt,
        model.dwbar_fine + np.repeat(h.hbardot, r) * fine_dt,
        model.what_fine + hhat_f,
        new_base_w,
        new_base_wbar,
    )


# -- norms ---------------------------------------------------------------


def _component_quotients(model: ItoModel):
    """Discrete Hoelder quotients (sup over grid windows) per component.

    Returns (path_terms, level_terms) where level_terms[m-1] covers both
    integrator choices at level m. The discrete sup is a lower bound for the
    continuum norm.
    """
    times = model.grid.times
    e_w, e_wbar, e_hat = model.params.path_exponents()
    paths = [
        _backend.path_holder_max(model.w.values, times, e_w),
        _backend.path_holder_max(model.wbar.values, times, e_wbar),
        _backend.path_holder_max(model.what.values, times, e_hat),
    ]
    levels = []
    for m in range(1, model.params.level_m + 1):
        expo = model.params.level_exponent(m)
        levels.append(_backend.pair_holder_max(model.level_pairs(m, "w"), times, expo))
        levels.append(_backend.pair_holder_max(model.level_pairs(m, "wbar"), times, expo))
    return paths, levels


def model_norm(model: ItoModel) -> float:
    """Sum of the discrete Hoelder quotients of all components."""
    paths, levels = _component_quotients(model)
    return float(sum(paths) + sum(levels))


def homogeneous_norm(model: ItoModel) -> float:
    """Dilation-homogeneous norm: level-(m+1) quotients enter with exponent
    1/(m+1), so the value scales exactly linearly under dilation."""
    paths, levels = _component_quotients(model)
    total = sum(paths)
    idx = 0
    for m in range(1, model.params.level_m + 1):
        for _ in range(2):
            total += levels[idx] ** (1.0 / (m + 1))
            idx += 1
    return float(total)


def model_distance(m1: ItoModel, m2: ItoModel) -> float:
    """Norm of the componentwise difference (pair arrays subtracted window by
    window; this is not the translation by the negated path)."""
    m1.check_compatible(m2)
    times = m1.grid.times
    e_w, e_wbar, e_hat = m1.params.path_exponents()
    total = _backend.path_holder_max(m1.w.values - m2.w.values, times, e_w)
    total += _backend.path_holder_max(m1.wbar.values - m2.wbar.values, times, e_wbar)
    total += _backend.path_holder_max(m1.what.values - m2.what.values, times, e_hat)
    for m in range(1, m1.params.level_m + 1):
        expo = m1.params.level_exponent(m)
        for kind in ("w", "wbar"):
            diff = m1.level_pairs(m, kind) - m2.level_pairs(m, kind)
            total += _backend.pair_holder_max(diff, times, expo)
    return float(total)


# -- columnar text serialization -----------------------------------------
#
# Layout (whitespace-separated columns, '#' comments):
#   header line:  roughasym-model <version> n_steps substeps hurst level_m kappa
#   [fine]        idx  dw  dwbar  what        (nf rows; what at the LEFT node)
#   what_end      <value of what at t = 1>
#   [base]        level  cell  w_value  wbar_value
#   [pairs]       level  kind  i  j  value    (derived; verified on read)


def model_to_text(model: ItoModel, include_pairs: bool = True) -> str:
    buf = io.StringIO()
    p = model.params
    r = repr  # round-trippable float formatting
    buf.write(
        f"roughasym-model {SERIAL_FORMAT_VERSION} {model.grid.n_steps} "
        f"{model.substeps} {p.hurst!r} {p.level_m} {p.kappa!r}\n"
    )
    buf.write("[fine]\n")
    for i in range(model.grid.n_steps * model.substeps):
        buf.write(
            f"{i} {r(float(model.dw_fine[i]))} {r(float(model.dwbar_fine[i]))} "
            f"{r(float(model.what_fine[i]))}\n"
        )
    buf.write(f"what_end {r(float(model.what_fine[-1]))}\n")
    buf.write("[base]\n")
    for m in range(1, p.level_m + 1):
        for i in range(model.grid.n_steps):
            buf.write(
                f"{m} {i} {r(float(model.base_w[m - 1, i]))} "
                f"{r(float(model.base_wbar[m - 1, i]))}\n"
            )
    if include_pairs:
        buf.write("[pairs]\n")
        n = model.grid.n_steps
        for m in range(1, p.level_m + 1):
            for kind in ("w", "wbar"):
                pairs = model.level_pairs(m, kind)
                for i in range(n):
                    for j in range(i + 1, n + 1):
                        buf.write(f"{m} {kind} {i} {j} {r(float(pairs[i, j]))}\n")
    return buf.getvalue()


def model_from_text(text: str, verify_pairs: bool = True, tol: float = 1e-12) -> ItoModel:
    lines = [ln.strip() for ln in text.splitlines()]
    lines = [ln for ln in lines if ln and not ln.startswith("#")]
    head = lines[0].split()
    if head[0] != "roughasym-model" or int(head[1]) != SERIAL_FORMAT_VERSION:
        raise ValueError("not a roughasym model file")
    n, r = int(head[2]), int(head[3])
    params = ModelParams(float(head[4]), int(head[5]), float(head[6]))
    nf = n * r
    dw = np.zeros(nf)
    dwbar = np.zeros(nf)
    what = np.zeros(nf + 1)
    base_w = np.zeros((params.level_m, n))
    base_wbar = np.zeros((params.level_m, n))
    pair_rows = []
    section = None
    for ln in lines[1:]:
        if ln.startswith("["):
            section = ln
            continue
        parts = ln.split()
        if parts[0] == "what_end":
            what[-1] = float(parts[1])
        elif section == "[fine]":
            i = int(parts[0])
            dw[i], dwbar[i], what[i] = map(float, parts[1:4])
        elif section == "[base]":
            m, i = int(parts[0]), int(parts[1])
            base_w[m - 1, i] = float(parts[2])
            base_wbar[m - 1, i] = float(parts[3])
        elif section == "[pairs]":
            pair_rows.append((int(parts[0]), parts[1], int(parts[2]), int(parts[3]), float(parts[4])))
    model = ItoModel(params, Grid(n), r, dw, dwbar, what, base_w, base_wbar)
    if verify_pairs and pair_rows:
        for m, kind, i, j, val in pair_rows:
            got = model.level_pairs(m, kind)[i, j]
            if abs(got - val) > tol * max(1.0, abs(val)):
                raise ValueError(
                    f"pair value mismatch at level {m} {kind} ({i},{j}): {got!r} vs {val!r}"
                )
    return model

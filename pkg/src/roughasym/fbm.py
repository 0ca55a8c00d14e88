"""Uniform-grid paths, the power-law Volterra kernel, and fractional integration.

Everything lives on the unit horizon [0, 1]; time scaling enters the rest of
the package only through the noise amplitude. Kernel integrals are done with
the exact per-cell antiderivative of (t - s)^(H - 1/2), so the s -> t
singularity never has to be evaluated pointwise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import GridMismatch

__all__ = [
    "Grid",
    "GridPath",
    "CameronMartinPair",
    "FractionalKernel",
    "kernel_value",
    "fractional_integral_cm",
    "fractional_integral_bm",
    "cm_norm_sq",
    "correlate",
]


@dataclass(frozen=True)
class Grid:
    """Uniform grid t_i = i / n_steps on [0, 1]."""

    n_steps: int

    def __post_init__(self):
        if self.n_steps < 1:
            raise ValueError("n_steps must be a positive integer")

    @property
    def dt(self) -> float:
        return 1.0 / self.n_steps

    @property
    def times(self) -> np.ndarray:
        return _grid_times(self.n_steps)

    @property
    def midpoints(self) -> np.ndarray:
        return _grid_midpoints(self.n_steps)

    def refine(self, substeps: int) -> "Grid":
        return Grid(self.n_steps * int(substeps))

    def check_same(self, other: "Grid"):
        if self.n_steps != other.n_steps:
            raise GridMismatch(
                f"grids differ: {self.n_steps} vs {other.n_steps} steps"
            )


@lru_cache(maxsize=64)
def _grid_times(n_steps: int) -> np.ndarray:
    t = np.linspace(0.0, 1.0, n_steps + 1)
    t.setflags(write=False)
    return t


@lru_cache(maxsize=64)
def _grid_midpoints(n_steps: int) -> np.ndarray:
    t = _grid_times(n_steps)
    m = 0.5 * (t[:-1] + t[1:])
    m.setflags(write=False)
    return m


@dataclass(frozen=True)
class GridPath:
    """Real-valued path sampled at the grid nodes, starting at the origin."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (self.grid.n_steps + 1,):
            raise ValueError("values must have one entry per grid node")
        if v[0] != 0.0:
            raise ValueError("paths start at the origin: values[0] must be 0")
        object.__setattr__(self, "values", v)

    @classmethod
    def from_increments(cls, grid: Grid, increments) -> "GridPath":
        inc = np.asarray(increments, dtype=float)
        v = np.concatenate(([0.0], np.cumsum(inc)))
        return cls(grid, v)

    @property
    def increments(self) -> np.ndarray:
        return np.diff(self.values)


@dataclass(frozen=True)
class FractionalKernel:
    """Power kernel K(s, t) = sqrt(2H) (t - s)^(H - 1/2) on {s < t}, H in (0, 1/2].

    H = 1/2 makes the kernel identically one on {s < t}, i.e. plain
    indefinite integration.
    """

    hurst: float

    def __post_init__(self):
        if not 0.0 < self.hurst <= 0.5:
            raise ValueError("hurst must lie in (0, 1/2]")

    @property
    def normalization(self) -> float:
        return math.sqrt(2.0 * self.hurst)

    def value(self, s: float, t: float) -> float:
        if s >= t:
            return 0.0
        return self.normalization * (t - s) ** (self.hurst - 0.5)

    def cell_integral_weights(self, edges: np.ndarray, ts: np.ndarray) -> np.ndarray:
        """W[p, i] = integral of K(s, ts[p]) over cell [edges[i], edges[i+1]] ∩ [0, ts[p]].

        Uses the closed-form antiderivative, exact across the s -> t
        singularity. Shape (len(ts), len(edges) - 1).
        """
        p = self.hurst + 0.5
        c = self.normalization / p
        gap = ts[:, None] - edges[None, :]
        np.maximum(gap, 0.0, out=gap)
        pw = gap**p
        return c * (pw[:, :-1] - pw[:, 1:])


def kernel_value(kernel: FractionalKernel, s: float, t: float) -> float:
    """Pointwise kernel evaluation; 0 on {s >= t}."""
    return kernel.value(s, t)


@lru_cache(maxsize=64)
def _node_weights(n_steps: int, hurst: float) -> np.ndarray:
    """L[j, i] = integral of K(s, t_j) over cell i (full lower triangle)."""
    grid = Grid(n_steps)
    kern = FractionalKernel(hurst)
    w = kern.cell_integral_weights(grid.times, grid.times)
    w.setflags(write=False)
    return w


@lru_cache(maxsize=64)
def _midpoint_weights(n_steps: int, hurst: float) -> np.ndarray:
    """Weights for evaluating a fractional integral at the cell midpoints.

    Includes the exact partial-cell contribution of the cell containing the
    midpoint.
    """
    grid = Grid(n_steps)
    kern = FractionalKernel(hurst)
    w = kern.cell_integral_weights(grid.times, grid.midpoints)
    w.setflags(write=False)
    return w


def fractional_integral_cm(hdot, kernel: FractionalKernel, grid: Grid) -> GridPath:
    """Kernel-smooth a piecewise-constant derivative: returns t -> ∫ K(s,t) hdot(s) ds.

    The per-cell integrals are exact, so H = 1/2 reproduces cumulative sums to
    machine precision.
    """
    hdot = np.asarray(hdot, dtype=float)
    if hdot.shape != (grid.n_steps,):
        raise GridMismatch("hdot must have one entry per grid cell")
    vals = _node_weights(grid.n_steps, kernel.hurst) @ hdot
    vals[0] = 0.0
    return GridPath(grid, vals)


def fractional_integral_bm(w_increments, kernel: FractionalKernel, grid: Grid) -> GridPath:
    """Kernel-smooth Brownian increments with the same cell-average weights as
    :func:`fractional_integral_cm`, so discrete Cameron-Martin shifts commute
    with the smoothing exactly."""
    dw = np.asarray(w_increments, dtype=float)
    if dw.shape != (grid.n_steps,):
        raise GridMismatch("increments must have one entry per grid cell")
    return fractional_integral_cm(dw * grid.n_steps, kernel, grid)


def fractional_eval(hdot, kernel: FractionalKernel, grid: Grid, ts: np.ndarray) -> np.ndarray:
    """Evaluate the fractional integral of a cell density at arbitrary times."""
    hdot = np.asarray(hdot, dtype=float)
    w = kernel.cell_integral_weights(grid.times, np.asarray(ts, dtype=float))
    return w @ hdot


def fractional_eval_midpoints(hdot, kernel: FractionalKernel, grid: Grid) -> np.ndarray:
    hdot = np.asarray(hdot, dtype=float)
    return _midpoint_weights(grid.n_steps, kernel.hurst) @ hdot


@dataclass(frozen=True)
class CameronMartinPair:
    """A two-component control path (h, hbar) stored through its cell derivatives."""

    grid: Grid
    hdot: np.ndarray
    hbardot: np.ndarray

    def __post_init__(self):
        hd = np.asarray(self.hdot, dtype=float)
        hbd = np.asarray(self.hbardot, dtype=float)
        n = self.grid.n_steps
        if hd.shape != (n,) or hbd.shape != (n,):
            raise GridMismatch("derivatives must have one entry per grid cell")
        object.__setattr__(self, "hdot", hd)
        object.__setattr__(self, "hbardot", hbd)

    @classmethod
    def zero(cls, grid: Grid) -> "CameronMartinPair":
        z = np.zeros(grid.n_steps)
        return cls(grid, z, z.copy())

    @classmethod
    def constant(cls, grid: Grid, hdot: float, hbardot: float) -> "CameronMartinPair":
        n = grid.n_steps
        return cls(grid, np.full(n, float(hdot)), np.full(n, float(hbardot)))

    @property
    def h(self) -> GridPath:
        return GridPath.from_increments(self.grid, self.hdot * self.grid.dt)

    @property
    def hbar(self) -> GridPath:
        return GridPath.from_increments(self.grid, self.hbardot * self.grid.dt)

    def norm_sq(self) -> float:
        return float((self.hdot @ self.hdot + self.hbardot @ self.hbardot) * self.grid.dt)

    def scaled(self, a: float) -> "CameronMartinPair":
        return CameronMartinPair(self.grid, a * self.hdot, a * self.hbardot)

    def added(self, other: "CameronMartinPair") -> "CameronMartinPair":
        self.grid.check_same(other.grid)
        return CameronMartinPair(self.grid, self.hdot + other.hdot, self.hbardot + other.hbardot)

    def inner(self, other: "CameronMartinPair") -> float:
        self.grid.check_same(other.grid)
        return float(
            (self.hdot @ other.hdot + self.hbardot @ other.hbardot) * self.grid.dt
        )


def cm_norm_sq(h: CameronMartinPair) -> float:
    """Squared derivative-space norm of (h, hbar); callers halve it for energies."""
    return h.norm_sq()


def correlate(h: CameronMartinPair, rho: float) -> np.ndarray:
    """Cell derivative of the correlated combination rho*h + sqrt(1-rho^2)*hbar."""
    if abs(rho) > 1.0:
        raise ValueError("correlation must lie in [-1, 1]")
    rho_bar = math.sqrt(1.0 - rho * rho)
    return rho * h.hdot + rho_bar * h.hbardot

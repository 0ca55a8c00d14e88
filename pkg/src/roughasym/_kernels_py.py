"""Pure-numpy implementations of the hot kernels.

Same call signatures as the compiled module ``roughasym._kernels``; the
backend selector picks one of the two at import time. All inputs are float64
arrays; outputs are freshly allocated.
"""

import math

import numpy as np


def fill_level_pairs(dw, what, base):
    """Fill iterated-integral pair arrays from per-cell values.

    Parameters
    ----------
    dw : (n,) per-cell increments of the integrator path W.
    what : (n+1,) node values of the smoothed path driving the integrand.
    base : (M, n) per-cell integrals of (what - what(cell start))^m dW,
        m = 1..M.

    Returns
    -------
    pairs : (M, n+1, n+1) with pairs[m-1, i, j] = value on [t_i, t_j] for
        i < j, zeros elsewhere. Built column by column with the
        multiplicativity identity
        I_m(i, j+1) = I_m(i, j) + sum_l C(m, l) (what_j - what_i)^(m-l) B_l(j)
        where B_0(j) = dw[j] and B_l(j) = base[l-1, j].
    """
    dw = np.ascontiguousarray(dw, dtype=float)
    what = np.ascontiguousarray(what, dtype=float)
    base = np.ascontiguousarray(base, dtype=float)
    levels, n = base.shape
    pairs = np.zeros((levels, n + 1, n + 1))
    binom = [[math.comb(m, l) for l in range(m + 1)] for m in range(levels + 1)]
    for j in range(n):
        d = what[j] - what[: j + 1]
        dpow = {0: np.ones(j + 1)}
        for q in range(1, levels + 1):
            dpow[q] = dpow[q - 1] * d
        for m in range(1, levels + 1):
            acc = dpow[m] * dw[j]
            for l in range(1, m + 1):
                acc = acc + binom[m][l] * dpow[m - l] * base[l - 1, j]
            pairs[m - 1, : j + 1, j + 1] = pairs[m - 1, : j + 1, j] + acc
    return pairs


def pair_holder_max(pairs, times, exponent):
    """max over i < j of |pairs[i, j]| / (t_j - t_i)^exponent."""
    pairs = np.asarray(pairs, dtype=float)
    times = np.asarray(times, dtype=float)
    gaps = times[None, :] - times[:, None]
    iu = np.triu_indices(len(times), k=1)
    return float(np.max(np.abs(pairs[iu]) / gaps[iu] ** exponent))


def path_holder_max(values, times, exponent):
    """max over i < j of |v_j - v_i| / (t_j - t_i)^exponent."""
    values = np.asarray(values, dtype=float)
    times = np.asarray(times, dtype=float)
    iu = np.triu_indices(len(times), k=1)
    incs = values[None, :] - values[:, None]
    gaps = times[None, :] - times[:, None]
    return float(np.max(np.abs(incs[iu]) / gaps[iu] ** exponent))


def cell_cross_sums(wsamp, wref, hsamp, href, dx, substeps, jmax, pmax):
    """Per-cell mixed power sums against an integrator increment.

    C[j, p, i] = sum over fine cells l inside coarse cell i of
        (wsamp[l] - wref[i])^j (hsamp[l] - href[i])^p dx[l]

    wsamp, hsamp, dx have length n*substeps; wref, href length n. The caller
    chooses the sampling points (left nodes for Ito-style sums, midpoints for
    smooth-path quadrature); the reference values are always the coarse cell
    start.
    """
    r = int(substeps)
    n = len(wref)
    w = np.asarray(wsamp, dtype=float).reshape(n, r) - np.asarray(wref, dtype=float)[:, None]
    h = np.asarray(hsamp, dtype=float).reshape(n, r) - np.asarray(href, dtype=float)[:, None]
    d = np.asarray(dx, dtype=float).reshape(n, r)
    out = np.empty((jmax + 1, pmax + 1, n))
    wp = np.ones_like(w)
    for j in range(jmax + 1):
        hp = np.ones_like(h)
        for p in range(pmax + 1):
            out[j, p] = (wp * hp * d).sum(axis=1)
            if p < pmax:
                hp = hp * h
        if j < jmax:
            wp = wp * w
    return out

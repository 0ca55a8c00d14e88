"""Parity between the compiled kernels and the numpy fallback."""

import math

import numpy as np
import pytest

from roughasym import _kernels_py

compiled = pytest.importorskip("roughasym._kernels")


@pytest.fixture
def data():
    rng = np.random.default_rng(0)
    n, r, levels = 24, 4, 3
    return {
        "dw": rng.standard_normal(n) * 0.2,
        "what": np.concatenate(([0.0], np.cumsum(rng.standard_normal(n) * 0.2))),
        "base": rng.standard_normal((levels, n)) * 0.05,
        "times": np.linspace(0.0, 1.0, n + 1),
        "wsamp": rng.standard_normal(n * r),
        "wref": rng.standard_normal(n),
        "hsamp": rng.standard_normal(n * r),
        "href": rng.standard_normal(n),
        "dx": rng.standard_normal(n * r) * 0.1,
        "r": r,
    }


def test_fill_level_pairs_parity(data):
    a = compiled.fill_level_pairs(data["dw"], data["what"], data["base"])
    b = _kernels_py.fill_level_pairs(data["dw"], data["what"], data["base"])
    np.testing.assert_allclose(a, b, rtol=0, atol=1e-13)


def test_holder_parity(data):
    pairs = compiled.fill_level_pairs(data["dw"], data["what"], data["base"])[0]
    for expo in (0.3, 0.45):
        a = compiled.pair_holder_max(pairs, data["times"], expo)
        b = _kernels_py.pair_holder_max(pairs, data["times"], expo)
        assert a == pytest.approx(b, rel=1e-14)
        a = compiled.path_holder_max(data["what"], data["times"], expo)
        b = _kernels_py.path_holder_max(data["what"], data["times"], expo)
        assert a == pytest.approx(b, rel=1e-14)


def test_cell_cross_sums_parity(data):
    args = (data["wsamp"], data["wref"], data["hsamp"], data["href"], data["dx"],
            data["r"], 2, 3)
    a = compiled.cell_cross_sums(*args)
    b = _kernels_py.cell_cross_sums(*args)
    np.testing.assert_allclose(a, b, rtol=0, atol=1e-14)


def test_cross_sums_power_zero_is_plain_sum(data):
    out = _kernels_py.cell_cross_sums(
        data["wsamp"], data["wref"], data["hsamp"], data["href"], data["dx"],
        data["r"], 0, 0,
    )
    ref = data["dx"].reshape(-1, data["r"]).sum(axis=1)
    np.testing.assert_allclose(out[0, 0], ref, rtol=1e-15)

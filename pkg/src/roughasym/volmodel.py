"""Volatility functions and the model specification they plug into."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateSpec
from .fbm import FractionalKernel
from .models import ModelParams, choose_levels

__all__ = [
    "SigmaFunction",
    "ConstantSigma",
    "LinearSigma",
    "ExpSigma",
    "sigma_from_name",
    "VolModelSpec",
]


class SigmaFunction:
    """Scalar volatility function with derivatives of every order.

    ``deriv(k, v)`` must accept numpy arrays; order k up to the truncation
    level plus two is exercised by the expansion machinery.
    """

    name = "sigma"

    def __call__(self, v):
        return self.deriv(0, v)

    def deriv(self, k: int, v):
        raise NotImplementedError


@dataclass(frozen=True)
class ConstantSigma(SigmaFunction):
    sigma0: float
    name = "constant"

    def deriv(self, k, v):
        v = np.asarray(v, dtype=float)
        return np.full_like(v, self.sigma0) if k == 0 else np.zeros_like(v)


@dataclass(frozen=True)
class LinearSigma(SigmaFunction):
    """sigma(v) = sigma0 + eta * v."""

    sigma0: float
    eta: float = 1.0
    name = "linear"

    def deriv(self, k, v):
        v = np.asarray(v, dtype=float)
        if k == 0:
            return self.sigma0 + self.eta * v
        if k == 1:
            return np.full_like(v, self.eta)
        return np.zeros_like(v)


@dataclass(frozen=True)
class ExpSigma(SigmaFunction):
    """sigma(v) = sigma0 * exp(eta * v): log-normal volatility."""

    sigma0: float
    eta: float = 1.0
    name = "exp-ou"

    def deriv(self, k, v):
        v = np.asarray(v, dtype=float)
        return self.eta**k * self.sigma0 * np.exp(self.eta * v)


def sigma_from_name(kind: str, sigma0: float, eta: float = 1.0) -> SigmaFunction:
    kind = kind.strip().lower()
    if kind == "constant":
        return ConstantSigma(sigma0)
    if kind == "linear":
        return LinearSigma(sigma0, eta)
    if kind in ("exp-ou", "exp"):
        return ExpSigma(sigma0, eta)
    raise ValueError(f"unknown sigma kind {kind!r} (constant, linear, exp-ou)")


@dataclass(frozen=True)
class VolModelSpec:
    """Volatility function, roughness and leverage correlation."""

    sigma: SigmaFunction
    hurst: float
    rho: float
    params: ModelParams = field(init=False)

    def __post_init__(self):
        if not -1.0 < self.rho < 1.0:
            raise ValueError("rho must lie in (-1, 1)")
        object.__setattr__(self, "params", choose_levels(self.hurst))
        if self.sigma0 <= 0.0:
            raise DegenerateSpec("spot volatility sigma(0) must be positive")

    @property
    def rho_bar(self) -> float:
        return math.sqrt(1.0 - self.rho * self.rho)

    @property
    def sigma0(self) -> float:
        return float(self.sigma.deriv(0, 0.0))

    @property
    def sigma0_prime(self) -> float:
        return float(self.sigma.deriv(1, 0.0))

    @property
    def kernel(self) -> FractionalKernel:
        return self.params.kernel

    def sigma_sq(self, v):
        s = self.sigma.deriv(0, v)
        return s * s

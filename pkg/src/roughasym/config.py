"""Scenario configuration: flat INI-style sections, diff-friendly and
losslessly round-trippable. The canonical serialization is hashed into every
output file so results can be traced back to their inputs."""

from __future__ import annotations

import configparser
import hashlib
import io
from dataclasses import dataclass, field

from .asymptotics import ScalingRegime
from .fbm import Grid
from .rate import SolveOptions
from .volmodel import VolModelSpec, sigma_from_name

__all__ = ["ScenarioConfig", "DEFAULT_CONFIG_TEXT"]

DEFAULT_CONFIG_TEXT = """\
[model]
sigma = exp-ou
sigma0 = 0.2
eta = 1.0
rho = -0.7
hurst = 0.3

[regime]
kind = ldp
beta = 0.0

[grid]
n_steps = 128

[mc]
n_paths = 50000
seed = 20240801
batch_size = 16384

[sweep]
eps = 0.4 0.3 0.2
x = 0.05

[solver]
tol_constraint = 1e-11
tol_kkt = 1e-9
multistart = 0
"""


def _floats(text: str):
    return [float(tok) for tok in text.replace(",", " ").split()]


@dataclass
class ScenarioConfig:
    sigma_kind: str
    sigma0: float
    eta: float
    rho: float
    hurst: float
    regime_kind: str
    beta: float
    n_steps: int
    n_paths: int
    seed: int
    batch_size: int
    eps_list: list
    x_list: list
    tol_constraint: float
    tol_kkt: float
    multistart: int
    source_text: str = field(default="", repr=False)

    @classmethod
    def from_text(cls, text: str) -> "ScenarioConfig":
        cp = configparser.ConfigParser()
        cp.read_string(text)
        try:
            cfg = cls(
                sigma_kind=cp.get("model", "sigma"),
                sigma0=cp.getfloat("model", "sigma0"),
                eta=cp.getfloat("model", "eta", fallback=1.0),
                rho=cp.getfloat("model", "rho"),
                hurst=cp.getfloat("model", "hurst"),
                regime_kind=cp.get("regime", "kind", fallback="ldp"),
                beta=cp.getfloat("regime", "beta", fallback=0.0),
                n_steps=cp.getint("grid", "n_steps"),
                n_paths=cp.getint("mc", "n_paths"),
                seed=cp.getint("mc", "seed"),
                batch_size=cp.getint("mc", "batch_size", fallback=16384),
                eps_list=_floats(cp.get("sweep", "eps", fallback="")),
                x_list=_floats(cp.get("sweep", "x", fallback="")),
                tol_constraint=cp.getfloat("solver", "tol_constraint", fallback=1e-11),
                tol_kkt=cp.getfloat("solver", "tol_kkt", fallback=1e-9),
                multistart=cp.getint("solver", "multistart", fallback=0),
            )
        except (configparser.Error, ValueError) as exc:
            raise ValueError(f"config parse error: {exc}") from exc
        cfg.source_text = text
        cfg.validate()
        return cfg

    @classmethod
    def from_file(cls, path) -> "ScenarioConfig":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_text(fh.read())

    @classmethod
    def default(cls) -> "ScenarioConfig":
        return cls.from_text(DEFAULT_CONFIG_TEXT)

    def validate(self):
        if self.tol_constraint <= 0 or self.tol_kkt <= 0:
            raise ValueError("solver tolerances must be positive")
        if self.n_steps < 1 or self.n_paths < 1 or self.batch_size < 1:
            raise ValueError("grid/mc sizes must be positive")
        if self.multistart < 0:
            raise ValueError("multistart must be >= 0")
        if not 0.0 < self.hurst <= 0.5:
            raise ValueError("hurst must lie in (0, 1/2]")
        if not -1.0 < self.rho < 1.0:
            raise ValueError("rho must lie in (-1, 1)")
        if any(e <= 0 for e in self.eps_list):
            raise ValueError("eps sweep values must be positive")
        if any(x < 0 for x in self.x_list):
            raise ValueError("x sweep values must be >= 0")
        # constructing the pieces performs the remaining checks
        self.spec()
        self.regime()

    # -- derived objects -------------------------------------------------

    def spec(self) -> VolModelSpec:
        return VolModelSpec(
            sigma=sigma_from_name(self.sigma_kind, self.sigma0, self.eta),
            hurst=self.hurst,
            rho=self.rho,
        )

    def regime(self) -> ScalingRegime:
        return ScalingRegime(kind=self.regime_kind, hurst=self.hurst, beta=self.beta)

    def grid(self) -> Grid:
        return Grid(self.n_steps)

    def solve_options(self) -> SolveOptions:
        return SolveOptions(
            tol_constraint=self.tol_constraint,
            tol_kkt=self.tol_kkt,
            multistart=self.multistart,
        )

    # -- canonical text and hash -----------------------------------------

    def to_text(self) -> str:
        buf = io.StringIO()
        buf.write("[model]\n")
        buf.write(f"sigma = {self.sigma_kind}\n")
        buf.write(f"sigma0 = {self.sigma0!r}\n")
        buf.write(f"eta = {self.eta!r}\n")
        buf.write(f"rho = {self.rho!r}\n")
        buf.write(f"hurst = {self.hurst!r}\n\n")
        buf.write("[regime]\n")
        buf.write(f"kind = {self.regime_kind}\n")
        buf.write(f"beta = {self.beta!r}\n\n")
        buf.write("[grid]\n")
        buf.write(f"n_steps = {self.n_steps}\n\n")
        buf.write("[mc]\n")
        buf.write(f"n_paths = {self.n_paths}\n")
        buf.write(f"seed = {self.seed}\n")
        buf.write(f"batch_size = {self.batch_size}\n\n")
        buf.write("[sweep]\n")
        buf.write("eps = " + " ".join(repr(e) for e in self.eps_list) + "\n")
        buf.write("x = " + " ".join(repr(x) for x in self.x_list) + "\n\n")
        buf.write("[solver]\n")
        buf.write(f"tol_constraint = {self.tol_constraint!r}\n")
        buf.write(f"tol_kkt = {self.tol_kkt!r}\n")
        buf.write(f"multistart = {self.multistart}\n")
        return buf.getvalue()

    def config_hash(self) -> str:
        return hashlib.sha256(self.to_text().encode()).hexdigest()[:16]

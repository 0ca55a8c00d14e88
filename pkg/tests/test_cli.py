import csv
import json
import math
from pathlib import Path

import pytest

from roughasym.cli import main
from roughasym.config import DEFAULT_CONFIG_TEXT, ScenarioConfig

SMALL_CONFIG = """\
[model]
sigma = constant
sigma0 = 0.2
eta = 1.0
rho = -0.7
hurst = 0.5

[regime]
kind = ldp
beta = 0.0

[grid]
n_steps = 64

[mc]
n_paths = 2000
seed = 7

[sweep]
eps = 0.3
x = 0.0 0.1

[solver]
"""


def write_config(tmp_path, text=SMALL_CONFIG):
    p = tmp_path / "scenario.ini"
    p.write_text(text, encoding="utf-8")
    return str(p)


def read_rows(path):
    with open(path, encoding="utf-8") as fh:
        comment = fh.readline()
        assert comment.startswith("# config_hash=")
        assert "version=" in comment
        return list(csv.DictReader(fh))


class TestRate:
    def test_constant_sigma_energy_column(self, tmp_path):
        cfgp = write_config(tmp_path)
        assert main(["--config", cfgp, "--out", str(tmp_path), "rate"]) == 0
        rows = read_rows(tmp_path / "rate.csv")
        by_x = {float(r["x"]): r for r in rows}
        assert float(by_x[0.1]["energy"]) == pytest.approx(0.1**2 / 0.08, rel=1e-8)
        assert float(by_x[0.1]["smallx_ratio"]) == pytest.approx(1.0, rel=1e-8)

    def test_zero_strike_row(self, tmp_path):
        cfgp = write_config(tmp_path)
        main(["--config", cfgp, "--out", str(tmp_path), "rate"])
        rows = read_rows(tmp_path / "rate.csv")
        r0 = {float(r["x"]): r for r in rows}[0.0]
        assert float(r0["energy"]) == 0.0
        assert float(r0["lambda_prime"]) == 0.0
        assert float(r0["sigma_x"]) == pytest.approx(0.2, rel=1e-12)
        assert float(r0["margin"]) == 1.0
        assert float(r0["smallx_ratio"]) == 1.0

    def test_exp_vol_ratio_column_approaches_one(self, tmp_path):
        text = SMALL_CONFIG.replace("sigma = constant", "sigma = exp-ou")
        text = text.replace("hurst = 0.5", "hurst = 0.3")
        text = text.replace("rho = -0.7", "rho = 0.0")
        text = text.replace("x = 0.0 0.1", "x = 0.04 0.01")
        cfgp = write_config(tmp_path, text)
        assert main(["--config", cfgp, "--out", str(tmp_path), "rate"]) == 0
        rows = read_rows(tmp_path / "rate.csv")
        by_x = {float(r["x"]): float(r["smallx_ratio"]) for r in rows}
        assert abs(by_x[0.01] - 1.0) < abs(by_x[0.04] - 1.0)


class TestPrice:
    def test_methods_and_determinism(self, tmp_path):
        cfgp = write_config(tmp_path)
        out1 = tmp_path / "a"
        out2 = tmp_path / "b"
        assert main(["--config", cfgp, "--out", str(out1), "price"]) == 0
        assert main(["--config", cfgp, "--out", str(out2), "price"]) == 0
        assert (out1 / "price.csv").read_bytes() == (out2 / "price.csv").read_bytes()
        rows = read_rows(out1 / "price.csv")
        methods = {r["method"] for r in rows}
        assert {"plain-mc", "is-mc", "precise-ldp", "bs-exact", "ratio-R"} <= methods

    def test_is_price_close_to_exact(self, tmp_path):
        cfgp = write_config(tmp_path)
        main(["--config", cfgp, "--out", str(tmp_path), "price"])
        rows = read_rows(tmp_path / "price.csv")
        is_row = next(r for r in rows if r["method"] == "is-mc")
        bs_row = next(r for r in rows if r["method"] == "bs-exact")
        gap = abs(float(is_row["log_price"]) - float(bs_row["log_price"]))
        assert gap <= 4.0 * float(is_row["std_error"]) + 0.02

    def test_empty_sweep_header_only(self, tmp_path):
        text = SMALL_CONFIG.replace("eps = 0.3", "eps =").replace("x = 0.0 0.1", "x =")
        cfgp = write_config(tmp_path, text)
        assert main(["--config", cfgp, "--out", str(tmp_path), "price"]) == 0
        assert read_rows(tmp_path / "price.csv") == []


class TestVerify:
    def test_default_config_all_pass(self, tmp_path):
        rc = main(["--out", str(tmp_path), "--grid", "48", "verify"])
        assert rc == 0
        report = json.loads((tmp_path / "verify.json").read_text())
        assert report["n_failed"] == 0
        assert all(c["passed"] for c in report["checks"])
        names = {c["name"] for c in report["checks"]}
        assert {"dilation-homogeneity", "recombination", "translate-roundtrip",
                "girsanov-lift", "remainder-slope", "energy-variance-identity",
                "bsabs-sandwich", "shift-decomposition"} <= names

    def test_report_bytes_reproducible(self, tmp_path):
        out1, out2 = tmp_path / "r1", tmp_path / "r2"
        main(["--out", str(out1), "--grid", "48", "verify"])
        main(["--out", str(out2), "--grid", "48", "verify"])
        assert (out1 / "verify.txt").read_bytes() == (out2 / "verify.txt").read_bytes()

    def test_tampered_tolerance_rejected(self, tmp_path):
        bad = SMALL_CONFIG + "tol_kkt = -1e-9\n"
        cfgp = write_config(tmp_path, bad)
        assert main(["--config", cfgp, "--out", str(tmp_path), "verify"]) == 1


class TestOtherCommands:
    def test_taylor_check_writes_slope(self, tmp_path):
        cfgp = write_config(tmp_path)
        assert main(["--config", cfgp, "--out", str(tmp_path), "taylor-check"]) == 0
        rows = read_rows(tmp_path / "taylor.csv")
        assert float(rows[0]["slope"]) == math.inf or float(rows[0]["slope"]) >= 2.7

    def test_bsabs_grid(self, tmp_path):
        cfgp = write_config(tmp_path)
        assert main(["--config", cfgp, "--out", str(tmp_path), "bsabs"]) == 0
        rows = read_rows(tmp_path / "bsabs.csv")
        assert len(rows) == 125
        assert all(r["ok"] == "1" for r in rows)

    def test_missing_config_file(self, tmp_path):
        assert main(["--config", str(tmp_path / "nope.ini"), "rate"]) == 1


class TestConfig:
    def test_round_trip_lossless(self):
        cfg = ScenarioConfig.from_text(DEFAULT_CONFIG_TEXT)
        again = ScenarioConfig.from_text(cfg.to_text())
        assert again.to_text() == cfg.to_text()
        assert again.config_hash() == cfg.config_hash()

    def test_overrides_change_hash(self, tmp_path):
        cfg = ScenarioConfig.from_text(SMALL_CONFIG)
        h1 = cfg.config_hash()
        cfg.seed = 8
        assert cfg.config_hash() != h1

    def test_invalid_values_rejected(self):
        with pytest.raises(ValueError):
            ScenarioConfig.from_text(SMALL_CONFIG.replace("hurst = 0.5", "hurst = 0.9"))
        with pytest.raises(ValueError):
            ScenarioConfig.from_text(SMALL_CONFIG.replace("n_paths = 2000", "n_paths = 0"))

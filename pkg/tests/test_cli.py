import json
import subprocess
import sys

import numpy as np
import pytest

from nlslab import cli
from nlslab import spectral as sp
from nlslab.norms import Partition, fourier_lebesgue_norm


def run_cli(args, cwd):
    return subprocess.run(
        [sys.executable, "-m", "nlslab.cli", *args],
        capture_output=True,
        text=True,
        cwd=cwd,
    )


class TestResonanceCommand:
    def test_quintic_listing_contains_example(self, tmp_path):
        rc = run_cli(
            ["resonance", "--d", "1", "--sigma", "2", "--j", "0", "--window", "4",
             "--out", "r.csv", "--manifest", "r.json"],
            tmp_path,
        )
        assert rc.returncode == 0
        text = (tmp_path / "r.csv").read_text()
        assert "2,-1,-2,4,3" in text
        manifest = json.loads((tmp_path / "r.json").read_text())
        assert manifest["count"] == len(text.strip().split("\n")) - 1

    def test_rerun_byte_identical(self, tmp_path):
        args = ["resonance", "--d", "2", "--sigma", "1", "--j", "1,0",
                "--window", "2", "--out", "r.csv", "--manifest", "r.json"]
        run_cli(args, tmp_path)
        first = (tmp_path / "r.csv").read_bytes()
        run_cli(args, tmp_path)
        assert (tmp_path / "r.csv").read_bytes() == first


class TestNormCommand:
    def test_l2_value(self, tmp_path):
        g = sp.make_grid(1, 8.0, 64)
        rng = np.random.default_rng(5)
        f = sp.field(g, rng.standard_normal(g.shape) + 1j * rng.standard_normal(g.shape))
        sp.save_field(f, tmp_path / "field.nlsf")
        rc = run_cli(
            ["norm", "--in", "field.nlsf", "--spec", '{"kind":"fl","p":2,"s":0}'],
            tmp_path,
        )
        assert rc.returncode == 0
        loaded = sp.load_field(tmp_path / "field.nlsf")
        assert float(rc.stdout) == pytest.approx(
            fourier_lebesgue_norm(loaded, 2.0, 0.0), rel=1e-15
        )

    def test_config_error_json_on_stderr(self, tmp_path):
        rc = run_cli(
            ["norm", "--in", "missing.nlsf", "--spec", '{"kind":"fl","p":2,"s":0}'],
            tmp_path,
        )
        assert rc.returncode == cli.EXIT_CONFIG
        err = json.loads(rc.stderr)
        assert "message" in err


class TestInflateCommand:
    def test_small_sweep_and_precedence(self, tmp_path):
        cfg = {"params": {"space": "fl", "nmin": 64, "nmax": 128, "s": -0.9}}
        (tmp_path / "cfg.json").write_text(json.dumps(cfg))
        rc = run_cli(
            ["inflate", "--config", "cfg.json", "--s", "-0.75",
             "--out", "o.csv", "--manifest", "m.json"],
            tmp_path,
        )
        assert rc.returncode == 0
        lines = (tmp_path / "o.csv").read_text().strip().split("\n")
        assert lines[0].startswith("N,R,A,T,norm0")
        assert len(lines) == 3
        manifest = json.loads((tmp_path / "m.json").read_text())
        # flag overrides the config file value
        assert manifest["config"]["params"]["s"] == -0.75
        assert "config_sha256" in manifest

    def test_invalid_s_exits_2(self, tmp_path):
        rc = run_cli(
            ["inflate", "--space", "fl", "--s", "-0.1", "--nmin", "64",
             "--nmax", "64", "--out", "o.csv", "--manifest", "m.json"],
            tmp_path,
        )
        assert rc.returncode == cli.EXIT_CONFIG
        assert "hypothesis" in json.loads(rc.stderr)["message"]


class TestEpsParsing:
    def test_range_syntax(self):
        got = cli._parse_eps_list("2^-3..2^-5")
        assert got == [0.125, 0.0625, 0.03125]

    def test_comma_list(self):
        assert cli._parse_eps_list("0.5,0.25") == [0.5, 0.25]


class TestSelfcheck:
    def test_fresh_build_passes(self):
        report = cli.selfcheck()
        assert report["pass"]
        names = {c["name"] for c in report["checks"]}
        assert {"partition_unity", "unitarity_d1", "parity_structural",
                "resonance_oracle_equivalence"} <= names

    def test_corrupted_partition_fails(self):
        class Corrupted(Partition):
            def unity_deviation(self):
                return 1e-3

        report = cli.selfcheck(partition_override=Corrupted(sp.make_grid(1, 12.0, 96)))
        assert not report["pass"]
        bad = [c for c in report["checks"] if c["name"] == "partition_unity"]
        assert bad and not bad[0]["pass"]

    def test_cli_exit_code(self, tmp_path):
        rc = run_cli(["selfcheck"], tmp_path)
        assert rc.returncode == 0
        report = json.loads(rc.stdout)
        assert report["pass"]


class TestFloatFormatting:
    def test_17_digit_roundtrip(self):
        vals = [1 / 3, 0.1, 2.0**-52, 1.2345678901234567e-8]
        for v in vals:
            assert float(cli._fmt(v)) == v


def test_budget_exit_code(tmp_path):
    rc = run_cli(
        ["resonance", "--d", "3", "--sigma", "2", "--j", "0", "--window", "6",
         "--out", "r.csv", "--manifest", "r.json"],
        tmp_path,
    )
    assert rc.returncode == cli.EXIT_BUDGET

"""Config parsing, presets, and end-to-end CLI runs."""

import subprocess
import sys

import pytest

from aptest.cli import EXIT_CONFIG, build_manifest, build_parser, load_config, main
from aptest.errors import ConfigError
from aptest.presets import build_preset, preset_names

GOOD_CONFIG = """
scenarios:
  - name: demo
    design: {kind: standard, total_n: 30, burn_in: 6, block_size: 2}
    outcome: {family: exponential, control: 1.0, experimental: [1.8]}
    prior: {kind: gamma, shape: 1.0, rate: 0.001}
    alpha: 0.05
    seed: 5
    replicates: {calibration: 3000, evaluation: 1000}
    tests:
      - {ap: lastblock}
      - {comparator: lr, mode: nominal}
      - {comparator: lr, mode: nominal, on_er: true, name: lr-er}
"""


class TestLoadConfig:
    def test_round_trip(self, tmp_path):
        path = tmp_path / "c.yaml"
        path.write_text(GOOD_CONFIG)
        specs = load_config(path)
        assert len(specs) == 1
        spec = specs[0]
        assert spec.design.num_blocks == 12  # (30 - 6) / 2
        assert spec.replicates_calib == 3000
        assert {e.name for e in spec.tests} == {"lastblock", "lr", "lr-er"}

    def test_block_count_resolution(self, tmp_path):
        path = tmp_path / "c.yaml"
        path.write_text(
            GOOD_CONFIG.replace("total_n: 30, burn_in: 6, block_size: 2",
                                "total_n: 100, burn_in: 10, block_size: 1")
        )
        assert load_config(path)[0].design.num_blocks == 90

    def test_non_integer_block_count_rejected(self, tmp_path):
        path = tmp_path / "c.yaml"
        path.write_text(
            GOOD_CONFIG.replace("total_n: 30, burn_in: 6, block_size: 2",
                                "total_n: 101, burn_in: 10, block_size: 10")
        )
        with pytest.raises(ConfigError, match=r"scenarios\[0\].design"):
            load_config(path)

    def test_unknown_key_reports_path(self, tmp_path):
        path = tmp_path / "c.yaml"
        path.write_text(GOOD_CONFIG.replace("alpha: 0.05", "alfa: 0.05"))
        with pytest.raises(ConfigError, match=r"scenarios\[0\].alfa"):
            load_config(path)

    def test_prior_family_mismatch_reported(self, tmp_path):
        path = tmp_path / "c.yaml"
        path.write_text(GOOD_CONFIG.replace("kind: gamma, shape: 1.0, rate: 0.001",
                                            "kind: beta, alpha: 1, beta: 1"))
        with pytest.raises(ConfigError):
            load_config(path)

    def test_custom_ap_test(self, tmp_path):
        path = tmp_path / "c.yaml"
        path.write_text(
            GOOD_CONFIG.replace(
                "- {ap: lastblock}",
                "- {ap: custom, name: w2, f: indicator, threshold: 0.6, "
                "weights: [0,0,0,0,0,0,0,0,0,0,0,0,1]}",
            )
        )
        spec = load_config(path)[0]
        entry = next(e for e in spec.tests if e.name == "w2")
        assert entry.spec.f.threshold == 0.6


class TestPresets:
    def test_all_presets_instantiate(self):
        for name in preset_names():
            jobs = build_preset(name, seed=1)
            assert jobs
            for job in jobs:
                assert job.scenario.seed == 1

    def test_phase3_preset_matches_published_design(self):
        jobs = build_preset("phase3-desk")
        grid_jobs = [j for j in jobs if "benefit" not in j.scenario.name]
        assert len(grid_jobs) == 2
        spec = grid_jobs[0].scenario
        assert spec.design.total_n == 500
        assert spec.design.burn_in == 50
        assert spec.design.block_size == 10
        assert spec.alpha == 0.05
        rates = [m.param_experimental for m in spec.alternative_models]
        assert rates == [1.2, 1.4, 1.6, 1.8, 2.0]
        assert spec.replicates_calib == 10**5
        assert spec.replicates_eval == 10**4

    def test_empirical_presets_match_published_settings(self):
        exp = build_preset("empirical-exponential-desk")
        assert all(j.scenario.design.total_n == 121 for j in exp)
        assert all(j.scenario.design.burn_in == 12 for j in exp)
        spec = exp[0].scenario
        assert spec.null_model.param_control == 0.002
        assert spec.alternative_models[0].param_experimental == 0.0035
        binary = build_preset("empirical-binary-desk")
        spec = binary[0].scenario
        assert spec.null_model.param_control == 0.7
        assert spec.alternative_models[0].param_experimental == 0.9

    def test_unknown_preset_rejected(self):
        with pytest.raises(ConfigError):
            build_preset("phase9")


class TestManifest:
    def test_overrides_apply(self, tmp_path):
        path = tmp_path / "c.yaml"
        path.write_text(GOOD_CONFIG)
        parser = build_parser()
        args = parser.parse_args(
            ["--config", str(path), "--seed", "99", "--replicates-eval", "500",
             "--out", str(tmp_path)]
        )
        manifest = build_manifest(args)
        spec = manifest.jobs[0].scenario
        assert spec.seed == 99
        assert spec.replicates_eval == 500

    def test_mode_override_spares_continuous_ap(self, tmp_path):
        path = tmp_path / "c.yaml"
        path.write_text(GOOD_CONFIG)
        parser = build_parser()
        args = parser.parse_args(
            ["--config", str(path), "--mode", "nominal", "--out", str(tmp_path)]
        )
        manifest = build_manifest(args)
        modes = {e.name: e.mode for e in manifest.jobs[0].scenario.tests}
        assert modes["lastblock"] == "calibrated"  # no nominal form exists
        assert modes["lr"] == "nominal"


class TestEndToEnd:
    def test_run_writes_reports_and_reruns_identically(self, tmp_path):
        config = tmp_path / "c.yaml"
        config.write_text(GOOD_CONFIG)
        out1 = tmp_path / "r1"
        out2 = tmp_path / "r2"
        assert main(["--config", str(config), "--out", str(out1)]) == 0
        assert main(["--config", str(config), "--out", str(out2)]) == 0
        r1 = (out1 / "demo_report.tsv").read_bytes()
        assert r1 == (out2 / "demo_report.tsv").read_bytes()
        cv1 = (out1 / "demo_critical_values.tsv").read_bytes()
        assert cv1 == (out2 / "demo_critical_values.tsv").read_bytes()
        assert b"seed=5" in r1

    def test_parallel_run_matches_serial(self, tmp_path):
        config = tmp_path / "c.yaml"
        config.write_text(GOOD_CONFIG.replace("calibration: 3000", "calibration: 20000"))
        out1 = tmp_path / "serial"
        out2 = tmp_path / "parallel"
        assert main(["--config", str(config), "--out", str(out1), "--threads", "1"]) == 0
        assert main(["--config", str(config), "--out", str(out2), "--threads", "2"]) == 0
        assert (out1 / "demo_report.tsv").read_bytes() == (out2 / "demo_report.tsv").read_bytes()

    def test_config_error_exit_code(self, tmp_path):
        config = tmp_path / "c.yaml"
        config.write_text(GOOD_CONFIG.replace("alpha: 0.05", "alfa: 0.05"))
        assert main(["--config", str(config), "--out", str(tmp_path)]) == EXIT_CONFIG

    def test_console_entry_point(self, tmp_path):
        result = subprocess.run(
            [sys.executable, "-m", "aptest.cli", "--version"],
            capture_output=True,
            text=True,
        )
        assert result.returncode == 0
        assert "aptest 0.1.0" in result.stdout

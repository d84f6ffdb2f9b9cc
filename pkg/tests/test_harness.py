"""Scenario evaluation, patient benefit, sweeps, and report export."""

import numpy as np
import pytest

from aptest.allocation import DesignConfig
from aptest.engine import simulate_batch
from aptest.errors import ConfigError
from aptest.harness import (
    ScenarioSpec,
    TestEntry,
    equal_randomization_design,
    export_report,
    model_label,
    patient_benefit,
    power_convergence_sweep,
    run_scenario,
    type1_curve,
)
from aptest.models import Bernoulli, Exponential, GammaPrior, OutcomeModel
from aptest.stats import ComparatorTest, lastblock_ap_test, original_ap_test, timedirect_ap_test

PRIOR = GammaPrior(1.0, 0.001)
NULL = OutcomeModel(Exponential(1.0, 1.0))


def tiny_scenario(**overrides):
    base = dict(
        name="tiny",
        design=DesignConfig(30, 6, 2, 12),
        prior=PRIOR,
        null_model=NULL,
        alternative_models=(OutcomeModel(Exponential(1.0, 1.8)),),
        tests=(
            TestEntry(lastblock_ap_test()),
            TestEntry(ComparatorTest("lr", "lr"), mode="nominal"),
            TestEntry(ComparatorTest("lr", "lr-er"), mode="nominal", on_er=True),
        ),
        alpha=0.05,
        replicates_eval=4000,
        replicates_calib=20000,
        seed=77,
    )
    base.update(overrides)
    return ScenarioSpec(**base)


class TestScenarioValidation:
    def test_alternatives_must_share_control_arm(self):
        with pytest.raises(ConfigError):
            tiny_scenario(alternative_models=(OutcomeModel(Exponential(1.1, 1.8)),))

    def test_alternatives_must_share_family(self):
        with pytest.raises(ConfigError):
            tiny_scenario(alternative_models=(OutcomeModel(Bernoulli(0.5, 0.7)),))

    def test_duplicate_test_names_rejected(self):
        with pytest.raises(ConfigError):
            tiny_scenario(
                tests=(TestEntry(lastblock_ap_test()), TestEntry(lastblock_ap_test()))
            )

    def test_er_design_derived_when_needed(self):
        spec = tiny_scenario()
        assert spec.er_design is not None
        assert spec.er_design.total_n == 30
        assert not spec.er_design.is_adaptive

    def test_ap_test_on_er_rejected(self):
        with pytest.raises(ConfigError):
            TestEntry(lastblock_ap_test(), on_er=True)

    def test_continuous_ap_has_no_nominal_mode(self):
        with pytest.raises(ConfigError):
            TestEntry(timedirect_ap_test(), mode="nominal")


class TestPatientBenefit:
    def test_er_design_sits_at_half(self):
        design = equal_randomization_design(100)
        model = OutcomeModel(Exponential(1.0, 1.5))
        batch = simulate_batch(design, model, PRIOR, (), 20000, seed=3)
        b = patient_benefit(batch, model, design)
        assert abs(b.pct_on_better_mean - 50.0) < 0.5
        assert not b.better_arm_defaulted

    def test_all_subjects_on_better_arm_boundary(self):
        design = equal_randomization_design(10)
        model = OutcomeModel(Exponential(1.0, 2.0))
        batch = simulate_batch(design, model, PRIOR, (), 100, seed=3)
        batch.n_experimental[:] = 10
        b = patient_benefit(batch, model, design)
        assert b.pct_on_better_mean == 100.0

    def test_smaller_is_better_counts_other_arm(self):
        design = equal_randomization_design(10)
        model = OutcomeModel(Exponential(1.0, 2.0), "smaller")
        batch = simulate_batch(design, model, PRIOR, (), 100, seed=3)
        batch.n_experimental[:] = 10
        b = patient_benefit(batch, model, design)
        assert b.pct_on_better_mean == 0.0

    def test_equal_arms_flagged(self):
        design = equal_randomization_design(10)
        batch = simulate_batch(design, NULL, PRIOR, (), 100, seed=3)
        b = patient_benefit(batch, NULL, design)
        assert b.better_arm_defaulted


class TestRunScenario:
    def test_report_shape_and_null_calibration(self):
        report = run_scenario(tiny_scenario())
        assert len(report.rows) == 6  # 2 models x 3 tests
        null_rate = report.rejection_rate("exponential(1,1)", "lastblock")
        se = np.sqrt(0.05 * 0.95 / 4000)
        assert abs(null_rate - 0.05) < 3.5 * se
        power = report.rejection_rate("exponential(1,1.8)", "lastblock")
        assert power > 0.3  # far above the 5% null level even at N=30

    def test_er_rows_carry_er_benefit(self):
        report = run_scenario(tiny_scenario())
        row = report.row("exponential(1,1.8)", "lr-er")
        assert abs(row.pct_better_mean - 50.0) < 2.0
        brar_row = report.row("exponential(1,1.8)", "lastblock")
        assert brar_row.pct_better_mean > 60.0

    def test_same_seed_reproduces_report(self):
        a = run_scenario(tiny_scenario())
        b = run_scenario(tiny_scenario())
        assert a.rows == b.rows
        assert a.critical_values == b.critical_values

    def test_mc_se_formula(self):
        report = run_scenario(tiny_scenario())
        for row in report.rows:
            expected = np.sqrt(row.rejection_rate * (1 - row.rejection_rate) / 4000)
            assert row.mc_se == pytest.approx(expected)

    def test_degenerate_calibration_reported_not_raised(self):
        spec = tiny_scenario(
            tests=(TestEntry(original_ap_test()),),
            design=DesignConfig(16, 6, 1, 10),
        )
        report = run_scenario(spec)
        assert report.critical_values["original"].degenerate_max
        assert report.rejection_rate("exponential(1,1)", "original") == 0.0


class TestSweeps:
    def test_type1_curve_resizes_designs(self):
        template = tiny_scenario(
            design=DesignConfig(20, 6, 1, 14),
            tests=(TestEntry(ComparatorTest("lr", "lr"), mode="nominal"),),
            replicates_eval=2000,
            replicates_calib=2000,
        )
        reports = type1_curve(template, (20, 30), threads=1)
        assert [r.rows[0].total_n for r in reports] == [20, 30]
        for r in reports:
            assert all(row.param_control == row.param_experimental for row in r.rows)

    def test_power_sweep_keeps_alternatives(self):
        template = tiny_scenario(
            design=DesignConfig(20, 6, 1, 14),
            tests=(TestEntry(lastblock_ap_test()),),
            replicates_eval=2000,
            replicates_calib=5000,
        )
        reports = power_convergence_sweep(template, (20, 40), threads=1)
        powers = [r.rejection_rate("exponential(1,1.8)", "lastblock") for r in reports]
        assert len(powers) == 2
        assert powers[1] > powers[0] - 3 * 0.011  # non-decreasing within MC noise


class TestExport:
    def test_export_reproducible_and_headed(self, tmp_path):
        report = run_scenario(tiny_scenario(replicates_eval=1000, replicates_calib=2000))
        p1 = tmp_path / "a.tsv"
        p2 = tmp_path / "b.tsv"
        export_report(p1, report)
        export_report(p2, report)
        b1 = p1.read_bytes()
        assert b1 == p2.read_bytes()
        text = b1.decode()
        assert text.startswith("# aptest 0.1.0 seed=77")
        assert "replicates_eval=1000" in text.splitlines()[0]

    def test_model_label_formatting(self):
        assert model_label(NULL) == "exponential(1,1)"
        assert model_label(OutcomeModel(Bernoulli(0.7, 0.9))) == "bernoulli(0.7,0.9)"

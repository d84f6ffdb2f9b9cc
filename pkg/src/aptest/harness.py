"""Scenario evaluation: power, type I error, and patient-benefit aggregation.

A scenario couples one adaptive design with a null model, a grid of
alternatives, and a battery of tests.  Calibrated tests get their critical
values from a null Monte Carlo run; nominal tests use their asymptotic or
exact thresholds directly.  Every test for a given design is evaluated on
the same simulated trajectories, which shrinks the Monte Carlo variance of
power differences.
"""

from __future__ import annotations

import dataclasses
import logging
import time
from dataclasses import dataclass

import numpy as np

from . import __version__
from .allocation import DesignConfig, EqualRandomization
from .calibration import (
    STREAM_EVALUATION,
    CriticalValue,
    NullSpec,
    calibrate,
)
from .engine import BatchResult, simulate_batch
from .errors import ConfigError
from .models import OutcomeModel, PriorSpec, prior_matches_family
from .stats import APTestSpec, TestSpec, nominal_critical_value

log = logging.getLogger(__name__)

CALIBRATED = "calibrated"
NOMINAL = "nominal"

_PRIMARY_ROLE = 0
_ER_ROLE = 1


@dataclass(frozen=True)
class TestEntry:
    """One test in a scenario: the statistic, its mode, and which design it reads."""

    __test__ = False  # not a pytest class, despite the name

    spec: TestSpec
    mode: str = CALIBRATED
    on_er: bool = False

    def __post_init__(self) -> None:
        if self.mode not in (CALIBRATED, NOMINAL):
            raise ConfigError(f"test mode must be calibrated or nominal, got {self.mode!r}")
        if self.on_er and isinstance(self.spec, APTestSpec):
            raise ConfigError("AP tests do not apply to the equal-randomization design")
        if (
            self.mode == NOMINAL
            and isinstance(self.spec, APTestSpec)
            and not self.spec.integer_valued
        ):
            raise ConfigError(
                f"AP test {self.spec.name!r} is continuous and has no nominal form"
            )

    @property
    def name(self) -> str:
        return self.spec.name


def equal_randomization_design(total_n: int, permuted_block_size: int = 8) -> DesignConfig:
    """Comparator design allocating all N subjects by permuted blocks."""
    return DesignConfig(
        total_n=total_n,
        burn_in=2,
        block_size=1,
        num_blocks=total_n - 2,
        design=EqualRandomization(permuted_block_size),
    )


@dataclass(frozen=True)
class ScenarioSpec:
    """One evaluation cell grid: design, models, tests, and budgets."""

    name: str
    design: DesignConfig
    prior: PriorSpec
    null_model: OutcomeModel
    alternative_models: tuple[OutcomeModel, ...] = ()
    tests: tuple[TestEntry, ...] = ()
    alpha: float = 0.05
    replicates_eval: int = 10**5
    replicates_calib: int = 10**6
    seed: int = 0
    er_design: DesignConfig | None = None

    def __post_init__(self) -> None:
        if not 0.0 < self.alpha < 1.0:
            raise ConfigError("alpha must lie in (0, 1)")
        if not prior_matches_family(self.prior, self.null_model.kind):
            raise ConfigError("prior family does not match the outcome family")
        for m in self.alternative_models:
            if m.kind != self.null_model.kind:
                raise ConfigError("alternative models must share the null's family")
            if m.better_direction != self.null_model.better_direction:
                raise ConfigError("alternative models must share the null's direction")
            if m.param_control != self.null_model.param_control:
                raise ConfigError(
                    "alternative models must share the null's control arm parameter"
                )
        names = [e.name for e in self.tests]
        if len(set(names)) != len(names):
            raise ConfigError(f"test names must be unique within a scenario: {names}")
        if self.replicates_eval < 10**4:
            log.warning(
                "scenario %s: replicates_eval=%d gives binomial SE > 0.005 at p=0.5",
                self.name,
                self.replicates_eval,
            )
        if any(e.on_er for e in self.tests) and self.er_design is None:
            object.__setattr__(
                self, "er_design", equal_randomization_design(self.design.total_n)
            )

    def model_grid(self) -> tuple[OutcomeModel, ...]:
        return (self.null_model, *self.alternative_models)


@dataclass(frozen=True)
class BenefitSummary:
    """Patient-level operating characteristics of one (model, design) cell."""

    pct_on_better_mean: float
    pct_on_better_sd: float
    mean_outcome: float          # average outcome per subject
    mean_total_outcome: float    # average summed outcome per trial
    better_arm_defaulted: bool   # arms equal: percentages refer to arm 1


def patient_benefit(batch: BatchResult, model: OutcomeModel, design: DesignConfig) -> BenefitSummary:
    """Fraction of subjects on the truly better arm and the mean outcome.

    When the arms are exactly equal there is no better arm; the fraction is
    reported for arm 1 and flagged.
    """
    if batch.replicates == 0:
        raise ConfigError("empty batch")
    better = model.better_arm()
    defaulted = better is None
    n_better = batch.n_experimental
    if better == 0:
        n_better = design.total_n - batch.n_experimental
    frac = n_better / design.total_n
    return BenefitSummary(
        pct_on_better_mean=float(frac.mean() * 100.0),
        pct_on_better_sd=float(frac.std() * 100.0),
        mean_outcome=float(batch.outcome_total.mean() / design.total_n),
        mean_total_outcome=float(batch.outcome_total.mean()),
        better_arm_defaulted=defaulted,
    )


@dataclass(frozen=True)
class ReportRow:
    """One (model, test) cell of a performance report."""

    scenario: str
    design_label: str
    total_n: int
    block_size: int
    burn_in: int
    family: str
    param_control: float
    param_experimental: float
    test: str
    mode: str
    alpha: float
    rejection_rate: float
    mc_se: float
    pct_better_mean: float
    pct_better_sd: float
    mean_outcome: float
    seed: int


@dataclass
class PerformanceReport:
    """Operating characteristics of one scenario."""

    scenario: str
    rows: list[ReportRow]
    benefit: dict[tuple[str, str], BenefitSummary]
    critical_values: dict[str, CriticalValue]
    replicates_eval: int
    replicates_calib: int
    seed: int
    wall_time: float = 0.0
    version: str = __version__

    def row(self, model_label: str, test: str) -> ReportRow:
        for r in self.rows:
            if r.test == test and _model_label_of_row(r) == model_label:
                return r
        raise KeyError(f"no row for model {model_label!r}, test {test!r}")

    def rejection_rate(self, model_label: str, test: str) -> float:
        return self.row(model_label, test).rejection_rate


def model_label(model: OutcomeModel) -> str:
    return f"{model.kind}({model.param_control:g},{model.param_experimental:g})"


def _model_label_of_row(row: ReportRow) -> str:
    return f"{row.family}({row.param_control:g},{row.param_experimental:g})"


def _mc_se(rate: float, replicates: int) -> float:
    return float(np.sqrt(rate * (1.0 - rate) / replicates))


def run_scenario(spec: ScenarioSpec, threads: int = 1) -> PerformanceReport:
    """Calibrate, evaluate every model cell, and aggregate the report."""
    start = time.perf_counter()
    roles: list[tuple[int, DesignConfig, tuple[TestEntry, ...]]] = []
    primary_entries = tuple(e for e in spec.tests if not e.on_er)
    er_entries = tuple(e for e in spec.tests if e.on_er)
    roles.append((_PRIMARY_ROLE, spec.design, primary_entries))
    if er_entries:
        roles.append((_ER_ROLE, spec.er_design, er_entries))

    critical_values: dict[str, CriticalValue] = {}
    for role, design, entries in roles:
        to_calibrate = tuple(e.spec for e in entries if e.mode == CALIBRATED)
        if not to_calibrate:
            continue
        null = NullSpec(
            design=design,
            model=spec.null_model,
            prior=spec.prior,
            replicates=spec.replicates_calib,
            seed=spec.seed,
        )
        critical_values.update(
            calibrate(null, to_calibrate, spec.alpha, threads=threads, stream=(role,))
        )

    rows: list[ReportRow] = []
    benefit: dict[tuple[str, str], BenefitSummary] = {}
    for mi, model in enumerate(spec.model_grid()):
        label = model_label(model)
        for role, design, entries in roles:
            if not entries and role != _PRIMARY_ROLE:
                continue  # primary runs regardless, so benefit is always reported
            batch = simulate_batch(
                design,
                model,
                spec.prior,
                tuple(e.spec for e in entries),
                spec.replicates_eval,
                spec.seed,
                stream=(STREAM_EVALUATION, role, mi),
                threads=threads,
            )
            cell_benefit = patient_benefit(batch, model, design)
            benefit[(label, design.label())] = cell_benefit
            for e in entries:
                if e.mode == CALIBRATED:
                    threshold = critical_values[e.name].q_alpha
                else:
                    threshold = nominal_critical_value(e.spec, design.num_blocks, spec.alpha)
                rate = float((batch.statistics[e.name] > threshold).mean())
                se = _mc_se(rate, spec.replicates_eval)
                if spec.replicates_eval >= 10**4 and 0.05 <= rate <= 0.95 and se > 0.005:
                    log.warning(
                        "scenario %s: mc_se=%.4f exceeds 0.005 for test %s",
                        spec.name, se, e.name,
                    )
                rows.append(
                    ReportRow(
                        scenario=spec.name,
                        design_label=design.label(),
                        total_n=design.total_n,
                        block_size=design.block_size,
                        burn_in=design.burn_in,
                        family=model.kind,
                        param_control=model.param_control,
                        param_experimental=model.param_experimental,
                        test=e.name,
                        mode=e.mode,
                        alpha=spec.alpha,
                        rejection_rate=rate,
                        mc_se=se,
                        pct_better_mean=cell_benefit.pct_on_better_mean,
                        pct_better_sd=cell_benefit.pct_on_better_sd,
                        mean_outcome=_reported_outcome(cell_benefit, model),
                        seed=spec.seed,
                    )
                )

    return PerformanceReport(
        scenario=spec.name,
        rows=rows,
        benefit=benefit,
        critical_values=critical_values,
        replicates_eval=spec.replicates_eval,
        replicates_calib=spec.replicates_calib,
        seed=spec.seed,
        wall_time=time.perf_counter() - start,
    )


def _reported_outcome(b: BenefitSummary, model: OutcomeModel) -> float:
    # Binary scenarios report expected total successes per trial; the other
    # families report the per-subject mean outcome.
    return b.mean_total_outcome if model.kind == "bernoulli" else b.mean_outcome


def type1_curve(
    template: ScenarioSpec, n_grid: tuple[int, ...], threads: int = 1
) -> list[PerformanceReport]:
    """Null rejection rates over a sample-size grid of fully sequential designs.

    Each N gets its own design (block size 1, the template's burn-in) and
    its own calibration; alternatives in the template are dropped.
    """
    reports = []
    for n in n_grid:
        design = dataclasses.replace(
            template.design,
            total_n=n,
            block_size=1,
            num_blocks=n - template.design.burn_in,
        )
        spec = dataclasses.replace(
            template,
            name=f"{template.name}-n{n}",
            design=design,
            er_design=None,
            alternative_models=(),
        )
        reports.append(run_scenario(spec, threads=threads))
    return reports


def power_convergence_sweep(
    template: ScenarioSpec, n_grid: tuple[int, ...], threads: int = 1
) -> list[PerformanceReport]:
    """Power over a sample-size grid, recalibrating at every N."""
    reports = []
    for n in n_grid:
        design = dataclasses.replace(
            template.design,
            total_n=n,
            block_size=1,
            num_blocks=n - template.design.burn_in,
        )
        spec = dataclasses.replace(
            template, name=f"{template.name}-n{n}", design=design, er_design=None
        )
        reports.append(run_scenario(spec, threads=threads))
    return reports


# ---------------------------------------------------------------------------
# Delimited export
# ---------------------------------------------------------------------------

_COLUMNS = (
    "scenario",
    "design",
    "N",
    "B",
    "Bprime",
    "family",
    "param_ctrl",
    "param_exp",
    "test",
    "mode",
    "alpha",
    "rejection_rate",
    "mc_se",
    "pct_better_mean",
    "pct_better_sd",
    "mean_outcome",
    "seed",
)


def export_report(path, report: PerformanceReport) -> None:
    """Write one report as tab-delimited text, reconstructible from its header."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(
            f"# aptest {report.version} seed={report.seed} "
            f"replicates_eval={report.replicates_eval} "
            f"replicates_calib={report.replicates_calib}\n"
        )
        fh.write("\t".join(_COLUMNS) + "\n")
        for r in report.rows:
            fh.write(
                f"{r.scenario}\t{r.design_label}\t{r.total_n}\t{r.block_size}"
                f"\t{r.burn_in}\t{r.family}\t{r.param_control:.10g}"
                f"\t{r.param_experimental:.10g}\t{r.test}\t{r.mode}"
                f"\t{r.alpha:.10g}\t{r.rejection_rate:.10g}\t{r.mc_se:.10g}"
                f"\t{r.pct_better_mean:.10g}\t{r.pct_better_sd:.10g}"
                f"\t{r.mean_outcome:.10g}\t{r.seed}\n"
            )

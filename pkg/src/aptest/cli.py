"""Batch front-end: scenario configs or presets in, delimited reports out.

Every output file embeds the seed, replicate counts, and tool version in a
header comment, and contains nothing run-dependent beyond them, so reruns
of the same manifest are byte-identical.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
import time
from dataclasses import dataclass
from pathlib import Path

import yaml

from . import __version__
from .allocation import DesignConfig, EqualRandomization, StandardBRAR, TunedBRAR
from .calibration import export_critical_values
from .errors import ConfigError, NumericalError
from .harness import (
    CALIBRATED,
    NOMINAL,
    PerformanceReport,
    ScenarioSpec,
    TestEntry,
    export_report,
    model_label,
    power_convergence_sweep,
    run_scenario,
    type1_curve,
)
from .models import (
    Bernoulli,
    BetaPrior,
    Exponential,
    GammaPrior,
    NormalKnownVar,
    NormalPrior,
    OutcomeModel,
)
from .presets import PresetJob, build_preset, preset_names
from .stats import (
    APTestSpec,
    ComparatorTest,
    CustomWeights,
    Identity,
    Indicator,
    lastblock_ap_test,
    original_ap_test,
    timedirect_ap_test,
)

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


@dataclass(frozen=True)
class RunManifest:
    """Fully resolved run: jobs plus I/O and execution settings."""

    jobs: tuple[PresetJob, ...]
    output_dir: Path
    threads: int = 1
    preset: str | None = None
    config_path: Path | None = None


# ---------------------------------------------------------------------------
# Config parsing
# ---------------------------------------------------------------------------


def _expect_mapping(node, path: str) -> dict:
    if not isinstance(node, dict):
        raise ConfigError(f"{path}: expected a mapping")
    return node


def _check_keys(node: dict, allowed: set[str], path: str) -> None:
    for key in node:
        if key not in allowed:
            raise ConfigError(f"{path}.{key}: unknown key")


def _require(node: dict, key: str, path: str):
    if key not in node:
        raise ConfigError(f"{path}.{key}: missing required key")
    return node[key]


def _parse_design(node, path: str) -> DesignConfig:
    node = _expect_mapping(node, path)
    _check_keys(
        node,
        {"kind", "total_n", "burn_in", "block_size", "num_blocks", "t_min",
         "permuted_block_size"},
        path,
    )
    kind = node.get("kind", "standard")
    if kind == "standard":
        design = StandardBRAR()
    elif kind == "tuned":
        design = TunedBRAR()
    elif kind == "er":
        design = EqualRandomization(int(node.get("permuted_block_size", 8)))
    else:
        raise ConfigError(f"{path}.kind: must be standard, tuned, or er, got {kind!r}")
    total_n = int(_require(node, "total_n", path))
    burn_in = int(_require(node, "burn_in", path))
    block_size = int(node.get("block_size", 1))
    if "num_blocks" in node:
        num_blocks = int(node["num_blocks"])
    else:
        remaining = total_n - burn_in
        if block_size <= 0 or remaining % block_size != 0:
            raise ConfigError(
                f"{path}: total_n - burn_in = {remaining} is not a whole number "
                f"of blocks of size {block_size}"
            )
        num_blocks = remaining // block_size
    try:
        return DesignConfig(
            total_n=total_n,
            burn_in=burn_in,
            block_size=block_size,
            num_blocks=num_blocks,
            t_min=int(node.get("t_min", 1)),
            design=design,
        )
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def _parse_models(node, path: str) -> tuple[OutcomeModel, tuple[OutcomeModel, ...]]:
    node = _expect_mapping(node, path)
    _check_keys(
        node,
        {"family", "control", "experimental", "direction", "sd_control",
         "sd_experimental"},
        path,
    )
    family = _require(node, "family", path)
    direction = node.get("direction", "larger")
    control = float(_require(node, "control", path))
    raw = _require(node, "experimental", path)
    experimental = [float(v) for v in (raw if isinstance(raw, list) else [raw])]

    def build(exp_value: float) -> OutcomeModel:
        if family == "exponential":
            fam = Exponential(control, exp_value)
        elif family == "bernoulli":
            fam = Bernoulli(control, exp_value)
        elif family == "normal":
            fam = NormalKnownVar(
                control,
                exp_value,
                float(_require(node, "sd_control", path)),
                float(_require(node, "sd_experimental", path)),
            )
        else:
            raise ConfigError(
                f"{path}.family: must be exponential, bernoulli, or normal, got {family!r}"
            )
        return OutcomeModel(fam, direction)

    null_model = build(control)
    alternatives = []
    for v in experimental:
        if v == control:
            raise ConfigError(
                f"{path}.experimental: value {v} equals the control parameter; "
                "the null cell is always evaluated and need not be listed"
            )
        alternatives.append(build(v))
    return null_model, tuple(alternatives)


def _parse_prior(node, path: str):
    node = _expect_mapping(node, path)
    kind = _require(node, "kind", path)
    if kind == "gamma":
        _check_keys(node, {"kind", "shape", "rate"}, path)
        return GammaPrior(float(_require(node, "shape", path)), float(_require(node, "rate", path)))
    if kind == "beta":
        _check_keys(node, {"kind", "alpha", "beta"}, path)
        return BetaPrior(float(_require(node, "alpha", path)), float(_require(node, "beta", path)))
    if kind == "normal":
        _check_keys(node, {"kind", "mean", "variance"}, path)
        return NormalPrior(float(_require(node, "mean", path)), float(_require(node, "variance", path)))
    raise ConfigError(f"{path}.kind: must be gamma, beta, or normal, got {kind!r}")


_AP_BUILDERS = {
    "original": original_ap_test,
    "timedirect": timedirect_ap_test,
    "lastblock": lastblock_ap_test,
}


def _parse_test(node, path: str) -> TestEntry:
    node = _expect_mapping(node, path)
    _check_keys(
        node,
        {"ap", "comparator", "mode", "on_er", "name", "t_min", "f", "weights",
         "threshold", "strict"},
        path,
    )
    mode = node.get("mode", CALIBRATED)
    on_er = bool(node.get("on_er", False))
    if ("ap" in node) == ("comparator" in node):
        raise ConfigError(f"{path}: specify exactly one of 'ap' or 'comparator'")
    if "comparator" in node:
        kind = node["comparator"]
        name = node.get("name", kind + ("-er" if on_er else ""))
        spec = ComparatorTest(kind, name)
    else:
        ap = node["ap"]
        t_min = int(node.get("t_min", 1))
        if ap in _AP_BUILDERS:
            spec = _AP_BUILDERS[ap](t_min=t_min, name=node.get("name", ap))
        elif ap == "custom":
            if "weights" not in node:
                raise ConfigError(f"{path}.weights: custom AP tests need weights")
            f_kind = node.get("f", "identity")
            if f_kind == "identity":
                f = Identity()
            elif f_kind == "indicator":
                f = Indicator(
                    threshold=float(node.get("threshold", 0.5)),
                    strict=bool(node.get("strict", True)),
                )
            else:
                raise ConfigError(f"{path}.f: must be identity or indicator")
            spec = APTestSpec(
                name=_require(node, "name", path),
                f=f,
                w=CustomWeights(tuple(float(v) for v in node["weights"])),
                t_min=t_min,
            )
        else:
            raise ConfigError(
                f"{path}.ap: must be original, timedirect, lastblock, or custom"
            )
    try:
        return TestEntry(spec, mode=mode, on_er=on_er)
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def _parse_scenario(node, index: int) -> ScenarioSpec:
    path = f"scenarios[{index}]"
    node = _expect_mapping(node, path)
    _check_keys(
        node,
        {"name", "design", "outcome", "prior", "alpha", "seed", "replicates", "tests"},
        path,
    )
    design = _parse_design(_require(node, "design", path), f"{path}.design")
    null_model, alternatives = _parse_models(_require(node, "outcome", path), f"{path}.outcome")
    prior = _parse_prior(_require(node, "prior", path), f"{path}.prior")
    reps = _expect_mapping(node.get("replicates", {}), f"{path}.replicates")
    _check_keys(reps, {"calibration", "evaluation"}, f"{path}.replicates")
    tests_node = node.get("tests", [])
    if not isinstance(tests_node, list):
        raise ConfigError(f"{path}.tests: expected a list")
    tests = tuple(
        _parse_test(t, f"{path}.tests[{i}]") for i, t in enumerate(tests_node)
    )
    try:
        return ScenarioSpec(
            name=str(node.get("name", f"scenario-{index}")),
            design=design,
            prior=prior,
            null_model=null_model,
            alternative_models=alternatives,
            tests=tests,
            alpha=float(node.get("alpha", 0.05)),
            replicates_eval=int(reps.get("evaluation", 10**5)),
            replicates_calib=int(reps.get("calibration", 10**6)),
            seed=int(node.get("seed", 0)),
        )
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def load_config(path) -> list[ScenarioSpec]:
    """Parse and fully validate a scenario config document."""
    text = Path(path).read_text(encoding="utf-8")
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: not a valid config document: {exc}") from exc
    doc = _expect_mapping(doc, str(path))
    _check_keys(doc, {"scenarios"}, str(path))
    scenarios = doc.get("scenarios")
    if not isinstance(scenarios, list) or not scenarios:
        raise ConfigError(f"{path}.scenarios: expected a non-empty list")
    return [_parse_scenario(node, i) for i, node in enumerate(scenarios)]


# ---------------------------------------------------------------------------
# Execution
# ---------------------------------------------------------------------------


def _apply_overrides(spec: ScenarioSpec, args) -> ScenarioSpec:
    updates = {}
    if args.seed is not None:
        updates["seed"] = args.seed
    if args.alpha is not None:
        updates["alpha"] = args.alpha
    if args.replicates_eval is not None:
        updates["replicates_eval"] = args.replicates_eval
    if args.replicates_calib is not None:
        updates["replicates_calib"] = args.replicates_calib
    if args.mode is not None:
        tests = []
        for e in spec.tests:
            if args.mode == NOMINAL:
                has_nominal = not isinstance(e.spec, APTestSpec) or e.spec.integer_valued
                tests.append(
                    dataclasses.replace(e, mode=NOMINAL if has_nominal else CALIBRATED)
                )
            else:
                tests.append(dataclasses.replace(e, mode=CALIBRATED))
        updates["tests"] = tuple(tests)
    if not updates:
        return spec
    updates["er_design"] = None  # rederived after overrides
    return dataclasses.replace(spec, **updates)


def _summarize(report: PerformanceReport) -> str:
    lines = [
        f"scenario {report.scenario}: eval={report.replicates_eval} "
        f"calib={report.replicates_calib} seed={report.seed} "
        f"wall={report.wall_time:.1f}s"
    ]
    width = max((len(r.test) for r in report.rows), default=4)
    for r in report.rows:
        label = f"{r.family}({r.param_control:g},{r.param_experimental:g})"
        lines.append(
            f"  {label:<28} {r.test:<{width}} [{r.mode}] "
            f"reject={r.rejection_rate:6.4f} (se {r.mc_se:.4f}) "
            f"benefit={r.pct_better_mean:5.1f}% outcome={r.mean_outcome:.4g}"
        )
    for name, cv in report.critical_values.items():
        flag = " DEGENERATE(never rejects)" if cv.degenerate_max else ""
        lines.append(
            f"  cv[{name}] = {cv.q_alpha:.6g} (achieved alpha {cv.achieved_alpha:.4f}){flag}"
        )
    return "\n".join(lines)


def run(manifest: RunManifest) -> int:
    """Execute every job and write reports; returns a process exit code."""
    out = manifest.output_dir
    out.mkdir(parents=True, exist_ok=True)
    started = time.perf_counter()
    figure_rows: dict[str, list] = {}
    for job in manifest.jobs:
        if job.kind == "scenario":
            reports = [run_scenario(job.scenario, threads=manifest.threads)]
        elif job.kind == "type1-curve":
            reports = type1_curve(job.scenario, job.n_grid, threads=manifest.threads)
        else:
            reports = power_convergence_sweep(
                job.scenario, job.n_grid, threads=manifest.threads
            )
        for report in reports:
            export_report(out / f"{report.scenario}_report.tsv", report)
            if report.critical_values:
                export_critical_values(
                    out / f"{report.scenario}_critical_values.tsv",
                    report.critical_values,
                    report.replicates_calib,
                    report.seed,
                    model_label(job.scenario.null_model),
                )
            print(_summarize(report))
            if job.figure:
                figure_rows.setdefault(job.figure, []).extend(report.rows)
    for figure, rows in figure_rows.items():
        _write_figure_data(out / f"{figure}_data.tsv", rows)
    print(f"done in {time.perf_counter() - started:.1f}s -> {out}")
    return EXIT_OK


def _write_figure_data(path: Path, rows) -> None:
    # One aggregated file per figure tag, rewritten whole for rerun identity.
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(
            "scenario\tdesign\tN\tfamily\tparam_ctrl\tparam_exp\ttest\tmode"
            "\talpha\trejection_rate\tmc_se\tseed\n"
        )
        for r in rows:
            fh.write(
                f"{r.scenario}\t{r.design_label}\t{r.total_n}\t{r.family}"
                f"\t{r.param_control:.10g}\t{r.param_experimental:.10g}"
                f"\t{r.test}\t{r.mode}\t{r.alpha:.10g}"
                f"\t{r.rejection_rate:.10g}\t{r.mc_se:.10g}\t{r.seed}\n"
            )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="aptest",
        description=(
            "Simulate two-arm response-adaptive trials, calibrate allocation-"
            "probability tests by Monte Carlo, and report operating characteristics."
        ),
    )
    source = parser.add_mutually_exclusive_group(required=True)
    source.add_argument("--config", type=Path, help="scenario config file (YAML)")
    source.add_argument(
        "--preset",
        help="built-in study: " + ", ".join(preset_names()),
    )
    parser.add_argument("--seed", type=int, default=None, help="master seed override")
    parser.add_argument("--alpha", type=float, default=None, help="significance level override")
    parser.add_argument("--replicates-eval", type=int, default=None)
    parser.add_argument("--replicates-calib", type=int, default=None)
    parser.add_argument("--threads", type=int, default=1, help="worker processes")
    parser.add_argument("--out", type=Path, default=Path("results"), help="output directory")
    parser.add_argument(
        "--mode",
        choices=(NOMINAL, CALIBRATED),
        default=None,
        help="force a decision mode on every test that supports it",
    )
    parser.add_argument("--version", action="version", version=f"aptest {__version__}")
    return parser


def build_manifest(args) -> RunManifest:
    if args.preset:
        jobs = build_preset(args.preset, seed=args.seed if args.seed is not None else 0)
        jobs = tuple(
            dataclasses.replace(j, scenario=_apply_overrides(j.scenario, args))
            for j in jobs
        )
        return RunManifest(
            jobs=jobs, output_dir=args.out, threads=args.threads, preset=args.preset
        )
    scenarios = load_config(args.config)
    jobs = tuple(
        PresetJob("scenario", _apply_overrides(s, args)) for s in scenarios
    )
    return RunManifest(
        jobs=jobs, output_dir=args.out, threads=args.threads, config_path=args.config
    )


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        manifest = build_manifest(args)
        return run(manifest)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())

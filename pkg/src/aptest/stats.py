"""Allocation-probability test statistics and frequentist comparators.

The allocation-probability (AP) statistic for a trial with T adaptive
blocks is

    sum over t = t_min .. T+1 of f(pi_t) * w_t

for a transform f (indicator above a threshold, or identity) and block
weights w.  Three named members of the family recur throughout:

* original:   f = indicator(pi > 0.5), w_t = 1   (integer-valued)
* timedirect: f = identity, w_t = t
* lastblock:  f = identity, w = (0, ..., 0, 1)   (equals pi_{T+1} and, under
  BRAR, a Bayesian decision rule on the posterior superiority probability)

Comparator tests operate on the outcome data: a two-sample exponential
likelihood-ratio test (signed root of the deviance), the one-sided Fisher
exact test, and a known-variance Z test.  All three are oriented toward
"experimental arm parameter larger"; their statistics increase with
evidence in that direction so that calibrated thresholds apply uniformly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Union

import numpy as np
from scipy import special, stats

from .allocation import TrialTrajectory
from .errors import ConfigError, DataError


@dataclass(frozen=True)
class Indicator:
    """f(pi) = 1 when pi exceeds the threshold (strictly, unless strict=False)."""

    threshold: float = 0.5
    strict: bool = True

    def __post_init__(self) -> None:
        if not 0.0 < self.threshold < 1.0:
            raise ConfigError("indicator threshold must lie in (0, 1)")


@dataclass(frozen=True)
class Identity:
    """f(pi) = pi."""


@dataclass(frozen=True)
class Ones:
    """w_t = 1 for every included block."""


@dataclass(frozen=True)
class TimeWeights:
    """w_t = t: later blocks rest on more data and weigh more."""


@dataclass(frozen=True)
class LastBlockOnly:
    """w_t = 0 except w_{T+1} = 1."""


@dataclass(frozen=True)
class CustomWeights:
    """Explicit nonnegative weights for blocks t_min .. T+1, in order."""

    values: tuple[float, ...]

    def __post_init__(self) -> None:
        arr = np.asarray(self.values, dtype=np.float64)
        if arr.size == 0:
            raise ConfigError("custom weights cannot be empty")
        if not np.all(np.isfinite(arr)) or np.any(arr < 0):
            raise ConfigError("custom weights must be finite and nonnegative")
        if not np.any(arr > 0):
            raise ConfigError("custom weights cannot all be zero")


Transform = Union[Indicator, Identity]
WeightRule = Union[Ones, TimeWeights, LastBlockOnly, CustomWeights]


@dataclass(frozen=True)
class APTestSpec:
    """One member of the generalized AP family: (f, w, t_min) plus a label."""

    name: str
    f: Transform
    w: WeightRule
    t_min: int = 1

    def __post_init__(self) -> None:
        if not self.name:
            raise ConfigError("AP test spec needs a name")
        if self.t_min < 1:
            raise ConfigError("t_min must be >= 1")

    @property
    def integer_valued(self) -> bool:
        return isinstance(self.f, Indicator) and isinstance(self.w, Ones)

    def max_statistic(self, num_blocks: int) -> float:
        """Largest attainable statistic for a trial with the given block count.

        Both transforms are bounded by 1 per block, so the bound is the
        weight total (attained only by the indicator transform).
        """
        return float(block_weights(self, num_blocks).sum())


def original_ap_test(t_min: int = 1, name: str = "original") -> APTestSpec:
    return APTestSpec(name=name, f=Indicator(), w=Ones(), t_min=t_min)


def timedirect_ap_test(t_min: int = 1, name: str = "timedirect") -> APTestSpec:
    return APTestSpec(name=name, f=Identity(), w=TimeWeights(), t_min=t_min)


def lastblock_ap_test(t_min: int = 1, name: str = "lastblock") -> APTestSpec:
    return APTestSpec(name=name, f=Identity(), w=LastBlockOnly(), t_min=t_min)


def block_weights(spec: APTestSpec, num_blocks: int) -> np.ndarray:
    """Weight vector over blocks t_min .. T+1 for a trial with T blocks."""
    if spec.t_min > num_blocks + 1:
        raise ConfigError(
            f"t_min={spec.t_min} exceeds the last block index {num_blocks + 1}"
        )
    length = num_blocks + 2 - spec.t_min
    if isinstance(spec.w, Ones):
        return np.ones(length)
    if isinstance(spec.w, TimeWeights):
        return np.arange(spec.t_min, num_blocks + 2, dtype=np.float64)
    if isinstance(spec.w, LastBlockOnly):
        w = np.zeros(length)
        w[-1] = 1.0
        return w
    values = np.asarray(spec.w.values, dtype=np.float64)
    if values.size != length:
        raise ConfigError(
            f"custom weight vector has length {values.size}, expected {length} "
            f"(blocks {spec.t_min}..{num_blocks + 1})"
        )
    return values


def apply_transform(f: Transform, probs: np.ndarray) -> np.ndarray:
    if isinstance(f, Indicator):
        hits = probs > f.threshold if f.strict else probs >= f.threshold
        return hits.astype(np.float64)
    return np.asarray(probs, dtype=np.float64)


def ap_statistic_from_probs(probs: np.ndarray, spec: APTestSpec) -> float:
    """AP statistic from a full probability path pi_1 .. pi_{T+1}."""
    probs = np.asarray(probs, dtype=np.float64)
    num_blocks = probs.size - 1
    w = block_weights(spec, num_blocks)
    window = probs[spec.t_min - 1 :]
    return float(apply_transform(spec.f, window) @ w)


def ap_statistic(traj: TrialTrajectory, spec: APTestSpec) -> float:
    """AP statistic of one simulated trial."""
    return ap_statistic_from_probs(traj.alloc_probs, spec)


# ---------------------------------------------------------------------------
# Comparator tests
# ---------------------------------------------------------------------------


class LRResult(NamedTuple):
    statistic: float
    p_value: float
    degenerate: bool


class ZResult(NamedTuple):
    statistic: float
    p_value: float
    degenerate: bool


def lr_exponential_from_counts(n1, s1, n0, s0):
    """Signed-root likelihood-ratio statistic for two exponential samples.

    Vectorized over replicates.  Returns (statistic, degenerate mask); the
    statistic is sign(rate1_hat - rate0_hat) * sqrt(deviance) and is set to
    -inf where an arm is empty, so degenerate replicates never reject.
    """
    n1 = np.asarray(n1, dtype=np.float64)
    n0 = np.asarray(n0, dtype=np.float64)
    s1 = np.asarray(s1, dtype=np.float64)
    s0 = np.asarray(s0, dtype=np.float64)
    degenerate = (n1 < 1) | (n0 < 1) | (s1 <= 0) | (s0 <= 0)
    with np.errstate(divide="ignore", invalid="ignore"):
        lam1 = n1 / s1
        lam0 = n0 / s0
        pooled = (n1 + n0) / (s1 + s0)
        deviance = 2.0 * (n1 * np.log(lam1 / pooled) + n0 * np.log(lam0 / pooled))
        deviance = np.maximum(deviance, 0.0)  # guard tiny negative round-off
        stat = np.sign(lam1 - lam0) * np.sqrt(deviance)
    stat = np.where(degenerate, -np.inf, stat)
    return stat, degenerate


def lr_exponential(traj: TrialTrajectory) -> LRResult:
    """Two-sample exponential LR test of "experimental rate larger".

    The one-sided statistic is the signed root of the deviance at the
    per-arm maximum-likelihood rates against the pooled rate; the p-value is
    its upper standard-normal tail.  An empty arm yields a flagged
    non-rejection rather than an error.
    """
    post = traj.final_posteriors
    if post.kind != "exponential":
        raise DataError("likelihood-ratio test requires exponential outcomes")
    stat, degenerate = lr_exponential_from_counts(
        post.experimental.n,
        post.experimental.total,
        post.control.n,
        post.control.total,
    )
    stat = float(stat)
    if bool(degenerate):
        return LRResult(-math.inf, 1.0, True)
    return LRResult(stat, float(special.ndtr(-stat)), False)


def fisher_exact_one_sided(n1: int, s1: int, n0: int, s0: int) -> float:
    """One-sided Fisher exact p-value for "experimental success rate larger".

    Conditional on the table margins, P(S1 >= s1) under the hypergeometric
    distribution.
    """
    if not (0 <= s1 <= n1 and 0 <= s0 <= n0):
        raise DataError("success counts must lie in [0, n] per arm")
    if n1 == 0:
        return 1.0
    return float(stats.hypergeom.sf(s1 - 1, n1 + n0, s1 + s0, n1))


def fisher_statistic_from_counts(n1, s1, n0, s0):
    """Vectorized -p for the one-sided Fisher test (larger = more evidence)."""
    n1 = np.asarray(n1)
    s1 = np.asarray(s1)
    n0 = np.asarray(n0)
    s0 = np.asarray(s0)
    p = stats.hypergeom.sf(s1 - 1, n1 + n0, s1 + s0, n1)
    return -np.asarray(p, dtype=np.float64)


def z_statistic_from_counts(n1, s1, n0, s0, sd0: float, sd1: float):
    """Vectorized known-variance Z statistic; -inf where an arm is empty."""
    n1 = np.asarray(n1, dtype=np.float64)
    n0 = np.asarray(n0, dtype=np.float64)
    degenerate = (n1 < 1) | (n0 < 1)
    with np.errstate(divide="ignore", invalid="ignore"):
        mean1 = np.asarray(s1, dtype=np.float64) / n1
        mean0 = np.asarray(s0, dtype=np.float64) / n0
        z = (mean1 - mean0) / np.sqrt(sd1 * sd1 / n1 + sd0 * sd0 / n0)
    z = np.where(degenerate, -np.inf, z)
    return z, degenerate


def z_test_normal(traj: TrialTrajectory, sd0: float, sd1: float) -> ZResult:
    """Two-sample known-variance Z test of "experimental mean larger"."""
    if sd0 <= 0 or sd1 <= 0:
        raise ConfigError("standard deviations must be positive")
    post = traj.final_posteriors
    if post.kind != "normal":
        raise DataError("Z test requires normal outcomes")
    z, degenerate = z_statistic_from_counts(
        post.experimental.n,
        post.experimental.total,
        post.control.n,
        post.control.total,
        sd0,
        sd1,
    )
    z = float(z)
    if bool(degenerate):
        return ZResult(-math.inf, 1.0, True)
    return ZResult(z, float(special.ndtr(-z)), False)


# ---------------------------------------------------------------------------
# Test batteries: AP specs plus outcome-based comparators
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ComparatorTest:
    """An outcome-based test computed from the final sufficient statistics.

    ``two_sided`` switches LR and Z to their absolute-value statistics
    (equivalently, the deviance against a chi-square threshold); the Fisher
    test stays one-sided.
    """

    kind: str  # "lr" | "fisher" | "z"
    name: str
    two_sided: bool = False

    def __post_init__(self) -> None:
        if self.kind not in ("lr", "fisher", "z"):
            raise ConfigError(f"unknown comparator kind {self.kind!r}")
        if not self.name:
            raise ConfigError("comparator test needs a name")
        if self.two_sided and self.kind == "fisher":
            raise ConfigError("the Fisher comparator is one-sided only")


TestSpec = Union[APTestSpec, ComparatorTest]


def nominal_critical_value(spec: TestSpec, num_blocks: int, alpha: float) -> float:
    """Rejection threshold for the uncalibrated ("nominal") form of a test.

    For the integer-valued AP test this is the largest usable threshold,
    T + 1 - t_min (rejection means every included block favored the
    experimental arm); its size is whatever the design implies, not alpha.
    For LR and Z it is the upper-alpha normal quantile; for Fisher, on the
    -p scale, it is -alpha.
    """
    if isinstance(spec, APTestSpec):
        if not spec.integer_valued:
            raise ConfigError(
                f"AP test {spec.name!r} has no nominal form; calibrate it"
            )
        return float(num_blocks + 1 - spec.t_min)
    if spec.kind in ("lr", "z"):
        tail = alpha / 2.0 if spec.two_sided else alpha
        return float(stats.norm.ppf(1.0 - tail))
    return -alpha


@dataclass(frozen=True)
class TestDecisionRecord:
    """Outcome of applying one test at one critical value."""

    __test__ = False  # not a pytest class, despite the name

    test_name: str
    statistic: float
    critical_value: float
    rejected: bool
    nominal_alpha: float

    def __post_init__(self) -> None:
        if self.rejected != (self.statistic > self.critical_value):
            raise ConfigError("rejected flag must equal statistic > critical_value")


def decide(test_name: str, statistic: float, critical_value: float, alpha: float) -> TestDecisionRecord:
    """Build a decision record; rejection is strictly statistic > threshold."""
    return TestDecisionRecord(
        test_name=test_name,
        statistic=float(statistic),
        critical_value=float(critical_value),
        rejected=bool(statistic > critical_value),
        nominal_alpha=alpha,
    )

"""Outcome families, conjugate priors, and posterior superiority probabilities.

Three outcome families are supported: exponential (time-to-event, rate
parameter), Bernoulli (response probability), and normal with known,
possibly arm-specific, standard deviations.  Each family pairs with a
conjugate prior applied identically to both arms, so the full history of a
trial is summarized by per-arm counts and sufficient statistics.

The quantity that drives response-adaptive allocation is the posterior
probability that the experimental arm's parameter beats the control arm's.
It is computed in closed form whenever the posterior parameters allow it
(integer gamma/beta parameters, any normal posterior) and by adaptive
quadrature otherwise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Union

import numpy as np
from scipy import integrate, special, stats

from .errors import ConfigError, DataError, NumericalError

LARGER = "larger"
SMALLER = "smaller"

# Open-interval clamp for probabilities that feed log/power transforms.
PROB_FLOOR = 1e-15


# ---------------------------------------------------------------------------
# Outcome families
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Exponential:
    """Exponential time-to-event outcomes; the natural parameter is the rate."""

    rate_control: float
    rate_experimental: float

    kind = "exponential"

    def __post_init__(self) -> None:
        if self.rate_control <= 0 or self.rate_experimental <= 0:
            raise ConfigError("exponential rates must be strictly positive")


@dataclass(frozen=True)
class Bernoulli:
    """Binary outcomes; the natural parameter is the success probability."""

    p_control: float
    p_experimental: float

    kind = "bernoulli"

    def __post_init__(self) -> None:
        for p in (self.p_control, self.p_experimental):
            if not 0.0 < p < 1.0:
                raise ConfigError("Bernoulli probabilities must lie strictly in (0, 1)")


@dataclass(frozen=True)
class NormalKnownVar:
    """Normal outcomes with known arm-specific standard deviations."""

    mean_control: float
    mean_experimental: float
    sd_control: float
    sd_experimental: float

    kind = "normal"

    def __post_init__(self) -> None:
        if self.sd_control <= 0 or self.sd_experimental <= 0:
            raise ConfigError("normal standard deviations must be strictly positive")


Family = Union[Exponential, Bernoulli, NormalKnownVar]


@dataclass(frozen=True)
class OutcomeModel:
    """Data-generating truth for a two-arm trial.

    ``better_direction`` applies to the family's natural parameter: the rate
    for exponential outcomes (a higher rate means shorter time to event), the
    success probability for Bernoulli, and the mean for normal outcomes.  The
    direction is always explicit, never inferred from the parameter values.
    """

    family: Family
    better_direction: str = LARGER

    def __post_init__(self) -> None:
        if self.better_direction not in (LARGER, SMALLER):
            raise ConfigError(
                f"better_direction must be '{LARGER}' or '{SMALLER}', "
                f"got {self.better_direction!r}"
            )

    @property
    def kind(self) -> str:
        return self.family.kind

    @property
    def param_control(self) -> float:
        return _natural_params(self.family)[0]

    @property
    def param_experimental(self) -> float:
        return _natural_params(self.family)[1]

    def better_arm(self) -> int | None:
        """Index of the truly better arm, or None when the arms are equal."""
        ctrl, exp = _natural_params(self.family)
        if ctrl == exp:
            return None
        if self.better_direction == LARGER:
            return 1 if exp > ctrl else 0
        return 1 if exp < ctrl else 0


def _natural_params(family: Family) -> tuple[float, float]:
    if isinstance(family, Exponential):
        return family.rate_control, family.rate_experimental
    if isinstance(family, Bernoulli):
        return family.p_control, family.p_experimental
    return family.mean_control, family.mean_experimental


# ---------------------------------------------------------------------------
# Priors
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GammaPrior:
    """Gamma(shape, rate) prior on an exponential rate.

    ``improper=True`` permits rate 0 (the scale-free limit).  That mode exists
    only so tests can check exact scale invariance; regular runs use proper
    priors.
    """

    shape: float
    rate: float
    improper: bool = False

    def __post_init__(self) -> None:
        if self.shape <= 0:
            raise ConfigError("gamma prior shape must be strictly positive")
        if self.improper:
            if self.rate != 0.0:
                raise ConfigError("improper gamma prior requires rate exactly 0")
        elif self.rate <= 0:
            raise ConfigError("gamma prior rate must be strictly positive")


@dataclass(frozen=True)
class BetaPrior:
    """Beta(alpha, beta) prior on a Bernoulli success probability."""

    alpha: float
    beta: float

    def __post_init__(self) -> None:
        if self.alpha <= 0 or self.beta <= 0:
            raise ConfigError("beta prior parameters must be strictly positive")


@dataclass(frozen=True)
class NormalPrior:
    """Normal(mean, variance) prior on a normal mean with known outcome SD."""

    mean: float
    variance: float

    def __post_init__(self) -> None:
        if self.variance <= 0:
            raise ConfigError("normal prior variance must be strictly positive")


PriorSpec = Union[GammaPrior, BetaPrior, NormalPrior]

#: Vague default prior for the normal family (mean 0, variance 1e6).
VAGUE_NORMAL_PRIOR = NormalPrior(mean=0.0, variance=1e6)


def prior_matches_family(prior: PriorSpec, kind: str) -> bool:
    return (
        (isinstance(prior, GammaPrior) and kind == "exponential")
        or (isinstance(prior, BetaPrior) and kind == "bernoulli")
        or (isinstance(prior, NormalPrior) and kind == "normal")
    )


# ---------------------------------------------------------------------------
# Posterior state
# ---------------------------------------------------------------------------


class ArmPosterior(NamedTuple):
    """One arm's observed-data summary: subject count and sufficient statistic.

    ``total`` is the sum of outcomes: total time on arm for exponential,
    number of successes for Bernoulli, sum of responses for normal.
    """

    n: int
    total: float


@dataclass(frozen=True)
class PosteriorState:
    """Both arms' sufficient statistics for one outcome family."""

    kind: str
    control: ArmPosterior
    experimental: ArmPosterior

    def __post_init__(self) -> None:
        if self.kind not in ("exponential", "bernoulli", "normal"):
            raise ConfigError(f"unknown outcome family {self.kind!r}")
        for arm in (self.control, self.experimental):
            if arm.n < 0:
                raise ConfigError("arm count cannot be negative")
            if self.kind == "bernoulli" and not 0 <= arm.total <= arm.n:
                raise ConfigError("success count must lie in [0, n]")
            if self.kind == "exponential" and arm.total < 0:
                raise ConfigError("total time must be nonnegative")

    def arm(self, a: int) -> ArmPosterior:
        return self.experimental if a == 1 else self.control


def initial_posterior(kind: str) -> PosteriorState:
    """Empty posterior state (no data on either arm)."""
    return PosteriorState(kind, ArmPosterior(0, 0.0), ArmPosterior(0, 0.0))


def sample_outcome(model: OutcomeModel, arm: int, rng: np.random.Generator) -> float:
    """Draw one outcome from the given arm's distribution."""
    fam = model.family
    if isinstance(fam, Exponential):
        rate = fam.rate_experimental if arm == 1 else fam.rate_control
        return float(rng.exponential(1.0 / rate))
    if isinstance(fam, Bernoulli):
        p = fam.p_experimental if arm == 1 else fam.p_control
        return float(rng.random() < p)
    mean = fam.mean_experimental if arm == 1 else fam.mean_control
    sd = fam.sd_experimental if arm == 1 else fam.sd_control
    return float(rng.normal(mean, sd))


def update_posterior(state: PosteriorState, arm: int, outcome: float) -> PosteriorState:
    """Fold one observed outcome into the given arm; the other arm is untouched.

    Raises DataError when the outcome is incompatible with the family
    (non-binary value for Bernoulli, nonpositive time for exponential).
    """
    if arm not in (0, 1):
        raise ConfigError(f"arm must be 0 or 1, got {arm}")
    if state.kind == "bernoulli" and outcome not in (0.0, 1.0):
        raise DataError(f"Bernoulli outcome must be 0 or 1, got {outcome}")
    if state.kind == "exponential" and outcome <= 0:
        raise DataError(f"exponential outcome must be positive, got {outcome}")
    if not math.isfinite(outcome):
        raise DataError(f"outcome must be finite, got {outcome}")
    old = state.arm(arm)
    new = ArmPosterior(old.n + 1, old.total + outcome)
    if arm == 1:
        return PosteriorState(state.kind, state.control, new)
    return PosteriorState(state.kind, new, state.experimental)


# ---------------------------------------------------------------------------
# Posterior parameters per family
# ---------------------------------------------------------------------------


def gamma_posterior(prior: GammaPrior, arm: ArmPosterior) -> tuple[float, float]:
    """(shape, rate) of the gamma posterior for one arm's rate."""
    return prior.shape + arm.n, prior.rate + arm.total


def beta_posterior(prior: BetaPrior, arm: ArmPosterior) -> tuple[float, float]:
    """(alpha, beta) of the beta posterior for one arm's success probability."""
    return prior.alpha + arm.total, prior.beta + (arm.n - arm.total)


def normal_posterior(
    prior: NormalPrior, arm: ArmPosterior, sd: float
) -> tuple[float, float]:
    """(mean, variance) of the normal posterior for one arm's mean."""
    precision = 1.0 / prior.variance + arm.n / (sd * sd)
    var = 1.0 / precision
    mean = var * (prior.mean / prior.variance + arm.total / (sd * sd))
    return mean, var


# ---------------------------------------------------------------------------
# Superiority probability
# ---------------------------------------------------------------------------


def _is_integral(x: float) -> bool:
    return abs(x - round(x)) < 1e-9


def gamma_superiority_closed(a1: float, b1: float, a0: float, b0: float) -> float:
    """P(X1 > X0) for X1 ~ Gamma(a1, b1), X0 ~ Gamma(a0, b0).

    Equals the negative-binomial tail sum over the integer shape, expressed
    through the regularized incomplete beta function:
    P = I_{b0/(b0+b1)}(a0, a1).
    """
    return float(special.betainc(a0, a1, b0 / (b0 + b1)))


def _beta_superiority_core(a1: float, b1: float, a0: float, b0: float) -> float:
    # P(X1 > X0) for X1 ~ Beta(a1, b1), X0 ~ Beta(a0, b0); requires a1 integer.
    betaln = special.betaln
    base = betaln(a0, b0)
    total = 0.0
    for i in range(int(round(a1))):
        total += math.exp(
            betaln(a0 + i, b0 + b1) - math.log(b1 + i) - betaln(1 + i, b1) - base
        )
    return total


def beta_superiority_closed(a1: float, b1: float, a0: float, b0: float) -> float:
    """P(X1 > X0) for beta posteriors via the finite sum over an integer parameter.

    Any one of the four parameters being an integer suffices; the sum runs
    over the smallest integral one (mirroring x -> 1-x or swapping the arms
    as needed).
    """
    candidates = sorted(
        (value, name)
        for name, value in (("a1", a1), ("a0", a0), ("b0", b0), ("b1", b1))
        if _is_integral(value)
    )
    if not candidates:
        raise ConfigError("beta superiority closed form requires an integer parameter")
    _, pick = candidates[0]
    if pick == "a1":
        return _beta_superiority_core(a1, b1, a0, b0)
    if pick == "a0":
        return 1.0 - _beta_superiority_core(a0, b0, a1, b1)
    if pick == "b0":
        # X1 > X0  <=>  (1-X0) > (1-X1), with 1-X ~ Beta(b, a)
        return _beta_superiority_core(b0, a0, b1, a1)
    return 1.0 - _beta_superiority_core(b1, a1, b0, a0)


def _quadrature_superiority(dist_exp, dist_ctrl) -> float:
    """Integral of pdf_exp(x) * cdf_ctrl(x) over a bracketing of both supports."""
    eps = 1e-15
    lo = min(dist_exp.ppf(eps), dist_ctrl.ppf(eps))
    hi = max(dist_exp.ppf(1 - eps), dist_ctrl.ppf(1 - eps))
    value, abserr = integrate.quad(
        lambda x: dist_exp.pdf(x) * dist_ctrl.cdf(x),
        lo,
        hi,
        epsabs=1e-10,
        epsrel=1e-10,
        limit=200,
    )
    if not np.isfinite(value) or abserr > 1e-8:
        raise NumericalError(
            f"superiority quadrature did not converge: value={value}, "
            f"abserr={abserr}, bracket=({lo}, {hi})"
        )
    return value


def superiority_probability(
    post_exp: ArmPosterior,
    post_ctrl: ArmPosterior,
    prior: PriorSpec,
    direction: str = LARGER,
    sds: tuple[float, float] | None = None,
) -> float:
    """Posterior probability that the experimental arm's parameter is better.

    Exact closed forms are used for gamma posteriors with an integer shape,
    beta posteriors with an integer parameter, and all normal posteriors;
    otherwise the probability is computed by adaptive quadrature with
    absolute tolerance 1e-10.  For the normal family ``sds`` must supply the
    known (control, experimental) outcome standard deviations.

    The returned value is clamped to the open interval (0, 1).
    """
    if isinstance(prior, GammaPrior):
        a1, b1 = gamma_posterior(prior, post_exp)
        a0, b0 = gamma_posterior(prior, post_ctrl)
        if b1 <= 0 or b0 <= 0:
            raise DataError("gamma posterior rate is not positive; need data or a proper prior")
        if _is_integral(a1) or _is_integral(a0):
            larger = gamma_superiority_closed(a1, b1, a0, b0)
        else:
            larger = _quadrature_superiority(
                stats.gamma(a1, scale=1.0 / b1), stats.gamma(a0, scale=1.0 / b0)
            )
    elif isinstance(prior, BetaPrior):
        a1, b1 = beta_posterior(prior, post_exp)
        a0, b0 = beta_posterior(prior, post_ctrl)
        if any(_is_integral(v) for v in (a1, a0, b0, b1)):
            larger = beta_superiority_closed(a1, b1, a0, b0)
        else:
            larger = _quadrature_superiority(stats.beta(a1, b1), stats.beta(a0, b0))
    elif isinstance(prior, NormalPrior):
        if sds is None:
            raise ConfigError("normal superiority requires known outcome sds")
        m1, v1 = normal_posterior(prior, post_exp, sds[1])
        m0, v0 = normal_posterior(prior, post_ctrl, sds[0])
        larger = float(special.ndtr((m1 - m0) / math.sqrt(v1 + v0)))
    else:
        raise ConfigError(f"unknown prior type {type(prior).__name__}")

    prob = larger if direction == LARGER else 1.0 - larger
    return float(min(max(prob, PROB_FLOOR), 1.0 - PROB_FLOOR))

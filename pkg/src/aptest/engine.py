"""Vectorized mass replication of trials with deterministic stream splitting.

Replicates are simulated in lockstep chunks of fixed size: every chunk owns
a counter-based random stream derived from (seed, stream key, chunk index),
so results are bit-identical whether chunks run serially or across worker
processes, and independent of worker count.  Within a chunk the per-block
work is pure array arithmetic; only sufficient statistics are tracked, so
memory stays O(chunk) regardless of trial length.

The per-block random stream order is: allocation counts, experimental-arm
outcome sums, control-arm outcome sums.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy import special

from .allocation import DesignConfig
from .errors import ConfigError
from .models import (
    BetaPrior,
    GammaPrior,
    LARGER,
    NormalKnownVar,
    OutcomeModel,
    PROB_FLOOR,
    PriorSpec,
    prior_matches_family,
)
from .stats import (
    APTestSpec,
    ComparatorTest,
    Indicator,
    TestSpec,
    block_weights,
    fisher_statistic_from_counts,
    lr_exponential_from_counts,
    z_statistic_from_counts,
)

#: Replicates simulated per random stream.  Part of the algorithm identity:
#: changing it changes (valid) results.
CHUNK_SIZE = 16384


def derive_rng(seed: int, *key: int) -> np.random.Generator:
    """Counter-based generator for one (seed, key...) stream."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence((seed, *key))))


@dataclass
class BatchResult:
    """Per-replicate statistics and patient-level totals for one batch."""

    statistics: dict[str, np.ndarray]
    n_experimental: np.ndarray
    outcome_total: np.ndarray

    @property
    def replicates(self) -> int:
        return self.n_experimental.size


def _validate_battery(
    design: DesignConfig, model: OutcomeModel, prior: PriorSpec, tests: tuple[TestSpec, ...]
) -> None:
    if not prior_matches_family(prior, model.kind):
        raise ConfigError(
            f"prior {type(prior).__name__} does not match outcome family {model.kind}"
        )
    if isinstance(prior, GammaPrior) and abs(prior.shape - round(prior.shape)) > 1e-9:
        raise ConfigError("batched simulation requires an integer gamma prior shape")
    if isinstance(prior, BetaPrior):
        for v in (prior.alpha, prior.beta):
            if abs(v - round(v)) > 1e-9:
                raise ConfigError("batched simulation requires integer beta prior parameters")
    names = [t.name for t in tests]
    if len(set(names)) != len(names):
        raise ConfigError(f"duplicate test names in battery: {names}")
    comparator_kinds = {
        "exponential": "lr",
        "bernoulli": "fisher",
        "normal": "z",
    }
    for t in tests:
        if isinstance(t, APTestSpec):
            if not design.is_adaptive:
                raise ConfigError(
                    "AP tests read the adaptive probability path; "
                    "they do not apply to equal-randomization designs"
                )
            block_weights(t, design.num_blocks)  # validates t_min and lengths
        elif t.kind != comparator_kinds[model.kind]:
            raise ConfigError(
                f"comparator {t.kind!r} does not apply to {model.kind} outcomes"
            )


# ---------------------------------------------------------------------------
# Vectorized superiority probabilities
# ---------------------------------------------------------------------------


def gamma_superiority_vec(a1, b1, a0, b0) -> np.ndarray:
    """P(X1 > X0) elementwise for gamma posteriors, via the incomplete beta."""
    return special.betainc(a0, a1, b0 / (b0 + b1))


def _beta_sup_sum(A1, B1, A0, B0, table) -> np.ndarray:
    # sum_{i < A1} Beta(A0+i, B0+B1) / ((B1+i) Beta(1+i, B1) Beta(A0, B0)),
    # all parameters integer arrays; log-beta values come from a gammaln table.
    T = table
    bb = B0 + B1
    const = T[bb] - T[B1] - (T[A0] + T[B0] - T[A0 + B0])
    out = np.zeros(A1.shape, dtype=np.float64)
    imax = int(A1.max())
    for i in range(imax):
        log_term = (
            T[A0 + i]
            - T[A0 + i + bb]
            - np.log(B1 + i)
            - T[1 + i]
            + T[1 + i + B1]
            + const
        )
        term = np.exp(log_term)
        if i > 0:
            term = np.where(i < A1, term, 0.0)
        out += term
    return out


def beta_superiority_vec(al1, be1, al0, be0, table) -> np.ndarray:
    """P(X1 > X0) elementwise for beta posteriors with integer parameters.

    Sums over whichever parameter keeps the loop shortest, mirroring
    x -> 1 - x or swapping arms as needed.
    """
    spans = (int(al1.max()), int(al0.max()), int(be0.max()), int(be1.max()))
    variant = int(np.argmin(spans))
    if variant == 0:
        return _beta_sup_sum(al1, be1, al0, be0, table)
    if variant == 1:
        return 1.0 - _beta_sup_sum(al0, be0, al1, be1, table)
    if variant == 2:
        return _beta_sup_sum(be0, al0, be1, al1, table)
    return 1.0 - _beta_sup_sum(be1, al1, be0, al0, table)


def normal_superiority_vec(m1, v1, m0, v0) -> np.ndarray:
    """P(mu1 > mu0) elementwise for normal posteriors."""
    return special.ndtr((m1 - m0) / np.sqrt(v1 + v0))


class _PosteriorVec:
    """Chunk-wide sufficient statistics with a family-specific probability map."""

    def __init__(self, model: OutcomeModel, prior: PriorSpec, size: int, max_n: int):
        self.model = model
        self.prior = prior
        self.kind = model.kind
        self.n1 = np.zeros(size, dtype=np.int64)
        self.n0 = np.zeros(size, dtype=np.int64)
        count_valued = self.kind == "bernoulli"
        dtype = np.int64 if count_valued else np.float64
        self.s1 = np.zeros(size, dtype=dtype)
        self.s0 = np.zeros(size, dtype=dtype)
        self._table: np.ndarray | None = None
        if isinstance(prior, BetaPrior):
            top = 2 * int(round(prior.alpha + prior.beta)) + 4 * max_n + 16
            self._table = special.gammaln(np.arange(top, dtype=np.float64))
        if isinstance(model.family, NormalKnownVar):
            self._sds = (model.family.sd_control, model.family.sd_experimental)

    def superiority(self) -> np.ndarray:
        prior = self.prior
        if isinstance(prior, GammaPrior):
            pi = gamma_superiority_vec(
                prior.shape + self.n1,
                prior.rate + self.s1,
                prior.shape + self.n0,
                prior.rate + self.s0,
            )
        elif isinstance(prior, BetaPrior):
            a = int(round(prior.alpha))
            b = int(round(prior.beta))
            pi = beta_superiority_vec(
                a + self.s1,
                b + (self.n1 - self.s1),
                a + self.s0,
                b + (self.n0 - self.s0),
                self._table,
            )
        else:
            tau2 = prior.variance
            sd0, sd1 = self._sds
            v1 = 1.0 / (1.0 / tau2 + self.n1 / (sd1 * sd1))
            v0 = 1.0 / (1.0 / tau2 + self.n0 / (sd0 * sd0))
            m1 = v1 * (prior.mean / tau2 + self.s1 / (sd1 * sd1))
            m0 = v0 * (prior.mean / tau2 + self.s0 / (sd0 * sd0))
            pi = normal_superiority_vec(m1, v1, m0, v0)
        if self.model.better_direction != LARGER:
            pi = 1.0 - pi
        return np.clip(pi, PROB_FLOOR, 1.0 - PROB_FLOOR)

    def absorb(self, k1: np.ndarray, k0: np.ndarray, rng: np.random.Generator) -> None:
        """Draw and fold in the outcome sums for k1/k0 new subjects per arm."""
        self.s1 += _outcome_sums(self.model, 1, k1, rng)
        self.s0 += _outcome_sums(self.model, 0, k0, rng)
        self.n1 += k1
        self.n0 += k0


def _outcome_sums(model: OutcomeModel, arm: int, counts: np.ndarray, rng) -> np.ndarray:
    fam = model.family
    if model.kind == "exponential":
        rate = fam.rate_experimental if arm == 1 else fam.rate_control
        return rng.standard_gamma(counts) / rate
    if model.kind == "bernoulli":
        p = fam.p_experimental if arm == 1 else fam.p_control
        return rng.binomial(counts, p)
    mean = fam.mean_experimental if arm == 1 else fam.mean_control
    sd = fam.sd_experimental if arm == 1 else fam.sd_control
    return counts * mean + np.sqrt(counts) * sd * rng.standard_normal(counts.size)


def _simulate_chunk(
    design: DesignConfig,
    model: OutcomeModel,
    prior: PriorSpec,
    tests: tuple[TestSpec, ...],
    size: int,
    rng: np.random.Generator,
) -> BatchResult:
    if not design.is_adaptive:
        return _simulate_chunk_er(design, model, prior, tests, size, rng)

    T = design.num_blocks
    post = _PosteriorVec(model, prior, size, design.total_n)

    ap_specs = [t for t in tests if isinstance(t, APTestSpec)]
    # weight_by_block[name][t] = w_t for t = 0..T+1 (0 outside t_min..T+1)
    weight_by_block = {}
    for spec in ap_specs:
        w = np.zeros(T + 2)
        w[spec.t_min :] = block_weights(spec, T)
        weight_by_block[spec.name] = w
    acc = {spec.name: np.zeros(size) for spec in ap_specs}

    def record(pi: np.ndarray, t: int) -> None:
        for spec in ap_specs:
            w = weight_by_block[spec.name][t]
            if w == 0.0:
                continue
            if isinstance(spec.f, Indicator):
                hits = pi > spec.f.threshold if spec.f.strict else pi >= spec.f.threshold
                acc[spec.name] += w * hits
            else:
                acc[spec.name] += w * pi

    half = design.burn_in // 2
    full = np.full(size, half, dtype=np.int64)
    post.absorb(full, full, rng)

    B = design.block_size
    tuned = design.is_tuned
    for t in range(1, T + 1):
        pi = post.superiority()
        if tuned and t != T:  # exponent is exactly 1 at t = T
            c = 0.1 + 0.9 * t / T
            num = np.power(pi, c)
            pi = num / (num + np.power(1.0 - pi, c))
        record(pi, t)
        if B == 1:
            k1 = (rng.random(size) < pi).astype(np.int64)
        else:
            k1 = rng.binomial(B, pi)
        post.absorb(k1, B - k1, rng)

    # Hypothetical final block: untuned posterior probability from all data.
    record(post.superiority(), T + 1)

    stats_out = dict(acc)
    _add_comparators(stats_out, tests, post, model)
    return BatchResult(
        statistics=stats_out,
        n_experimental=post.n1.copy(),
        outcome_total=(post.s1 + post.s0).astype(np.float64),
    )


def _simulate_chunk_er(
    design: DesignConfig,
    model: OutcomeModel,
    prior: PriorSpec,
    tests: tuple[TestSpec, ...],
    size: int,
    rng: np.random.Generator,
) -> BatchResult:
    pbs = design.design.permuted_block_size
    full_blocks, leftover = divmod(design.total_n, pbs)
    n1 = np.full(size, full_blocks * (pbs // 2) + leftover // 2, dtype=np.int64)
    if leftover % 2:
        n1 += rng.integers(0, 2, size)
    n0 = design.total_n - n1
    post = _PosteriorVec(model, prior, size, design.total_n)
    post.absorb(n1, n0, rng)
    stats_out: dict[str, np.ndarray] = {}
    _add_comparators(stats_out, tests, post, model)
    return BatchResult(
        statistics=stats_out,
        n_experimental=post.n1.copy(),
        outcome_total=(post.s1 + post.s0).astype(np.float64),
    )


def _add_comparators(
    out: dict[str, np.ndarray],
    tests: tuple[TestSpec, ...],
    post: _PosteriorVec,
    model: OutcomeModel,
) -> None:
    for t in tests:
        if not isinstance(t, ComparatorTest):
            continue
        if t.kind == "lr":
            stat, _ = lr_exponential_from_counts(post.n1, post.s1, post.n0, post.s0)
        elif t.kind == "fisher":
            stat = fisher_statistic_from_counts(post.n1, post.s1, post.n0, post.s0)
        else:
            fam = model.family
            stat, _ = z_statistic_from_counts(
                post.n1, post.s1, post.n0, post.s0, fam.sd_control, fam.sd_experimental
            )
        if t.two_sided:
            # degenerate replicates are marked -inf and must stay non-rejecting
            stat = np.where(np.isneginf(stat), stat, np.abs(stat))
        out[t.name] = np.asarray(stat, dtype=np.float64)


def _chunk_task(args) -> BatchResult:
    design, model, prior, tests, size, seed, stream, index = args
    rng = derive_rng(seed, *stream, index)
    return _simulate_chunk(design, model, prior, tests, size, rng)


def simulate_batch(
    design: DesignConfig,
    model: OutcomeModel,
    prior: PriorSpec,
    tests: tuple[TestSpec, ...],
    replicates: int,
    seed: int,
    stream: tuple[int, ...] = (),
    threads: int = 1,
) -> BatchResult:
    """Simulate ``replicates`` independent trials and collect every statistic.

    All requested tests share the same simulated trajectories.  Results are
    identical for any ``threads`` value; chunks are reassembled in index
    order.
    """
    if replicates < 1:
        raise ConfigError("replicates must be >= 1")
    _validate_battery(design, model, prior, tests)
    sizes = [
        min(CHUNK_SIZE, replicates - start) for start in range(0, replicates, CHUNK_SIZE)
    ]
    tasks = [
        (design, model, prior, tests, size, seed, stream, index)
        for index, size in enumerate(sizes)
    ]
    if threads > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(_chunk_task, tasks))
    else:
        parts = [_chunk_task(task) for task in tasks]
    names = parts[0].statistics.keys()
    return BatchResult(
        statistics={
            name: np.concatenate([p.statistics[name] for p in parts]) for name in names
        },
        n_experimental=np.concatenate([p.n_experimental for p in parts]),
        outcome_total=np.concatenate([p.outcome_total for p in parts]),
    )

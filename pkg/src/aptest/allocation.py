"""Single-trial simulation for equal-randomization and BRAR designs.

A trial runs in blocks: a burn-in block of even size with exact 50/50
balance, then ``num_blocks`` adaptive blocks in which every subject shares
one allocation probability.  After the last block a final allocation
probability is computed from the complete data for the hypothetical next
block; no subjects are allocated to it, but it carries the trial's residual
evidence and is part of the recorded trajectory.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np

from .errors import ConfigError
from .models import (
    LARGER,
    ArmPosterior,
    NormalKnownVar,
    OutcomeModel,
    PosteriorState,
    PriorSpec,
    initial_posterior,
    prior_matches_family,
    sample_outcome,
    superiority_probability,
    update_posterior,
)


@dataclass(frozen=True)
class EqualRandomization:
    """Non-adaptive comparator: permuted blocks with forced balance."""

    permuted_block_size: int = 8

    def __post_init__(self) -> None:
        if self.permuted_block_size < 2 or self.permuted_block_size % 2 != 0:
            raise ConfigError("permuted block size must be even and >= 2")


@dataclass(frozen=True)
class StandardBRAR:
    """Allocation probability equals the posterior superiority probability."""


@dataclass(frozen=True)
class TunedBRAR:
    """BRAR regularized toward 0.5 early in the trial (exponent 0.1 + 0.9 t/T)."""


DesignKind = Union[EqualRandomization, StandardBRAR, TunedBRAR]


@dataclass(frozen=True)
class DesignConfig:
    """Trial layout: N subjects = burn_in + block_size * num_blocks.

    ``t_min`` is the design's default run-in for allocation-probability
    tests: the first adaptive block whose probability enters a test
    statistic.  Individual test specs may override it.
    """

    total_n: int
    burn_in: int
    block_size: int
    num_blocks: int
    t_min: int = 1
    design: DesignKind = StandardBRAR()

    def __post_init__(self) -> None:
        if self.burn_in < 2 or self.burn_in % 2 != 0:
            raise ConfigError("burn-in must be even and >= 2 so both arms have data")
        if self.block_size < 1:
            raise ConfigError("block size must be >= 1")
        if self.num_blocks < 0:
            raise ConfigError("number of blocks cannot be negative")
        if self.total_n != self.burn_in + self.block_size * self.num_blocks:
            raise ConfigError(
                f"total_n={self.total_n} != burn_in + block_size * num_blocks "
                f"= {self.burn_in} + {self.block_size} * {self.num_blocks}"
            )
        if not 1 <= self.t_min <= self.num_blocks + 1:
            raise ConfigError(
                f"t_min must lie in [1, {self.num_blocks + 1}], got {self.t_min}"
            )

    @property
    def is_adaptive(self) -> bool:
        return not isinstance(self.design, EqualRandomization)

    @property
    def is_tuned(self) -> bool:
        return isinstance(self.design, TunedBRAR)

    def label(self) -> str:
        if isinstance(self.design, EqualRandomization):
            return "er"
        return "tuned-brar" if self.is_tuned else "standard-brar"


@dataclass(frozen=True)
class TrialTrajectory:
    """One simulated trial: per-subject records plus the probability path.

    ``alloc_probs[i]`` is the allocation probability of adaptive block
    ``i + 1``; the last entry belongs to the hypothetical block after the
    trial.  Block 0 of ``allocations``/``outcomes`` is the burn-in.
    """

    allocations: tuple[np.ndarray, ...]
    outcomes: tuple[np.ndarray, ...]
    alloc_probs: np.ndarray
    final_posteriors: PosteriorState
    per_block_posteriors: tuple[PosteriorState, ...] | None = None

    def prob(self, t: int) -> float:
        """Allocation probability of block t, for t in 1..num_blocks+1."""
        return float(self.alloc_probs[t - 1])

    @property
    def num_blocks(self) -> int:
        return len(self.alloc_probs) - 1

    @property
    def n_by_arm(self) -> tuple[int, int]:
        n1 = sum(int(block.sum()) for block in self.allocations)
        total = sum(block.size for block in self.allocations)
        return total - n1, n1


def brar_probability(
    post_exp: ArmPosterior,
    post_ctrl: ArmPosterior,
    prior: PriorSpec,
    direction: str = LARGER,
    sds: tuple[float, float] | None = None,
) -> float:
    """Untuned BRAR allocation probability for the experimental arm."""
    return superiority_probability(post_exp, post_ctrl, prior, direction, sds)


def tune_probability(pi, t: int, num_blocks: int):
    """Regularize an allocation probability with exponent c = 0.1 + 0.9 t/T.

    Accepts scalars or arrays.  The map fixes 0.5, preserves ordering
    relative to 0.5, and at t = T (c = 1) returns the input unchanged.
    """
    c = 0.1 + 0.9 * t / num_blocks
    if c == 1.0:
        return pi
    num = np.power(pi, c)
    den = num + np.power(1.0 - np.asarray(pi), c)
    out = num / den
    return float(out) if np.isscalar(pi) else out


def permuted_block_sequence(n: int, block: int, rng: np.random.Generator) -> np.ndarray:
    """Arm labels for n subjects under a permuted block design.

    Every complete block holds exactly block/2 subjects per arm in uniformly
    random order; the leftover block is balanced as closely as possible, with
    a fair coin deciding the extra arm when the leftover is odd.
    """
    if n < 1:
        raise ConfigError("sequence length must be >= 1")
    if block < 2 or block % 2 != 0:
        raise ConfigError("permuted block size must be even and >= 2")
    out = np.empty(n, dtype=np.int8)
    half = np.repeat(np.array([0, 1], dtype=np.int8), block // 2)
    pos = 0
    while pos + block <= n:
        out[pos : pos + block] = rng.permutation(half)
        pos += block
    leftover = n - pos
    if leftover:
        tail = np.repeat(np.array([0, 1], dtype=np.int8), leftover // 2)
        if leftover % 2:
            tail = np.append(tail, np.int8(rng.integers(0, 2)))
        out[pos:] = rng.permutation(tail)
    return out


def _balanced_burn_in(burn_in: int, rng: np.random.Generator) -> np.ndarray:
    half = np.repeat(np.array([0, 1], dtype=np.int8), burn_in // 2)
    return rng.permutation(half)


def simulate_trial(
    design: DesignConfig,
    model: OutcomeModel,
    prior: PriorSpec,
    rng: np.random.Generator,
    keep_posterior_history: bool = False,
) -> TrialTrajectory:
    """Simulate one complete trial and record its probability trajectory.

    Posteriors update after each whole block (all subjects in a block share
    one allocation probability, and their outcomes are treated as observed
    before the next block).  BRAR blocks allocate each subject by an
    independent Bernoulli draw at the block's probability; equal
    randomization takes its labels from one permuted-block sequence over all
    N subjects, and the probability path is recorded untuned, for
    diagnostics only.

    Within a block the random stream is consumed as: allocation draws
    (one batch), then outcomes in subject order.
    """
    if not prior_matches_family(prior, model.kind):
        raise ConfigError(
            f"prior {type(prior).__name__} does not match outcome family {model.kind}"
        )
    sds = None
    if isinstance(model.family, NormalKnownVar):
        sds = (model.family.sd_control, model.family.sd_experimental)
    direction = model.better_direction
    tuned = design.is_tuned
    T = design.num_blocks

    er_labels: np.ndarray | None = None
    if not design.is_adaptive:
        er_labels = permuted_block_sequence(
            design.total_n, design.design.permuted_block_size, rng
        )

    state = initial_posterior(model.kind)
    allocations: list[np.ndarray] = []
    outcomes: list[np.ndarray] = []
    history: list[PosteriorState] = []

    def run_block(arms: np.ndarray) -> None:
        nonlocal state
        ys = np.empty(arms.size, dtype=np.float64)
        for i, arm in enumerate(arms):
            ys[i] = sample_outcome(model, int(arm), rng)
        for arm, y in zip(arms, ys):
            state = update_posterior(state, int(arm), float(y))
        allocations.append(arms)
        outcomes.append(ys)
        if keep_posterior_history:
            history.append(state)

    if er_labels is not None:
        run_block(er_labels[: design.burn_in])
    else:
        run_block(_balanced_burn_in(design.burn_in, rng))

    probs = np.empty(T + 1, dtype=np.float64)
    for t in range(1, T + 1):
        pi = brar_probability(state.experimental, state.control, prior, direction, sds)
        if tuned:
            pi = tune_probability(pi, t, T)
        probs[t - 1] = pi
        if er_labels is not None:
            start = design.burn_in + (t - 1) * design.block_size
            arms = er_labels[start : start + design.block_size]
        else:
            arms = (rng.random(design.block_size) < pi).astype(np.int8)
        run_block(arms)

    # Hypothetical block T+1: computed from all data, untuned (the tuning
    # schedule ends at c = 1, so the posterior probability is used directly).
    probs[T] = brar_probability(state.experimental, state.control, prior, direction, sds)

    return TrialTrajectory(
        allocations=tuple(allocations),
        outcomes=tuple(outcomes),
        alloc_probs=probs,
        final_posteriors=state,
        per_block_posteriors=tuple(history) if keep_posterior_history else None,
    )


def dump_trajectories(
    path,
    design: DesignConfig,
    model: OutcomeModel,
    prior: PriorSpec,
    replicates: int,
    seed: int,
) -> None:
    """Write per-block posterior snapshots for a handful of replicates.

    One row per (replicate, block t >= 1): the block's allocation
    probability and the posterior state after the block's outcomes landed
    (the final row, at t = num_blocks + 1, repeats the end-of-trial state).
    Tab-delimited; intended for debugging and external plotting.
    """
    from .engine import derive_rng  # local import to avoid a cycle

    with open(path, "w", encoding="utf-8") as fh:
        fh.write("replicate\tt\tpi_t1\tn1\tn0\tsuffstat1\tsuffstat0\n")
        for rep in range(replicates):
            traj = simulate_trial(
                design, model, prior, derive_rng(seed, rep), keep_posterior_history=True
            )
            assert traj.per_block_posteriors is not None
            for t in range(1, design.num_blocks + 2):
                # index t lands on the state after block t (burn-in is entry 0);
                # the hypothetical block reuses the final state.
                snap = traj.per_block_posteriors[min(t, design.num_blocks)]
                fh.write(
                    f"{rep}\t{t}\t{traj.prob(t):.10g}"
                    f"\t{snap.experimental.n}\t{snap.control.n}"
                    f"\t{snap.experimental.total:.10g}\t{snap.control.total:.10g}\n"
                )

"""The noisy nanopore channel: geometric sample duplications plus AWGN.

Holds the simulator and the exact brute-force likelihood oracle that
the trellis decoder is tested against.  All randomness flows through
explicit numpy Generators; worker seeds are derived with
``np.random.SeedSequence((master_seed, worker_index))``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import combinations
from typing import Iterator, Optional

import numpy as np
from scipy.special import logsumexp

# Refuse brute-force enumeration beyond this many segmentations.
MAX_ORACLE_SEGMENTATIONS = 10_000_000


class CapacityError(RuntimeError):
    """An oracle computation would exceed its size guard."""


@dataclass(frozen=True)
class NncParams:
    """Channel parameters: mean samples per state and noise level.

    mean_duration is E[K] of the i.i.d. geometric durations on the
    positive integers; mean_duration = 1 is the duplication-free edge
    case.  sigma is the AWGN standard deviation in normalized current
    units.
    """

    mean_duration: float
    sigma: float

    def __post_init__(self):
        if not self.mean_duration >= 1.0:
            raise ValueError(f"mean_duration must be >= 1, got {self.mean_duration}")
        if not self.sigma > 0.0:
            raise ValueError(f"sigma must be > 0, got {self.sigma}")

    @property
    def dup_prob(self) -> float:
        """Probability 1 - 1/E[K] of duplicating the current sample."""
        return 1.0 - 1.0 / self.mean_duration


@dataclass(frozen=True)
class Segmentation:
    """Strictly increasing jump times t_1 < ... < t_m (1-based sample indices)."""

    jump_times: np.ndarray

    def __post_init__(self):
        jt = np.asarray(self.jump_times, dtype=np.int64)
        object.__setattr__(self, "jump_times", jt)
        if jt.size == 0:
            raise ValueError("segmentation must have at least one jump time")
        if jt[0] < 1 or np.any(np.diff(jt) < 1):
            raise ValueError("jump times must be strictly increasing positive integers")

    @property
    def num_segments(self) -> int:
        return int(self.jump_times.size)

    @property
    def total(self) -> int:
        """t_m, the number of samples covered."""
        return int(self.jump_times[-1])

    @property
    def durations(self) -> np.ndarray:
        """Run lengths k_l = t_l - t_{l-1} with t_0 = 0."""
        return np.diff(self.jump_times, prepend=0)


@dataclass
class SimulatedRead:
    """One simulator draw: states, noisy signal and the true segmentation.

    noise is retained only when the simulator is asked to keep it, so
    tests can assert exact self-consistency.
    """

    states: np.ndarray
    signal: np.ndarray
    truth: Segmentation
    params: NncParams
    initial_state: int
    noise: Optional[np.ndarray] = field(default=None, repr=False)


def stretch(values: np.ndarray, durations: np.ndarray) -> np.ndarray:
    """Repeat value l exactly durations[l] times, in order."""
    values = np.asarray(values)
    durations = np.asarray(durations, dtype=np.int64)
    if values.shape != durations.shape:
        raise ValueError("values and durations must have equal length")
    if np.any(durations < 1):
        raise ValueError("all durations must be >= 1")
    return np.repeat(values, durations)


def sample_durations(m: int, params: NncParams, rng: np.random.Generator) -> np.ndarray:
    """i.i.d. geometric durations, P(K=k) = (1-1/E[K])^(k-1) / E[K].

    Sampled by inverse CDF: k = 1 + floor(ln U / ln(1-1/E[K])).
    """
    if m < 1:
        raise ValueError("m must be >= 1")
    if params.mean_duration == 1.0:
        return np.ones(m, dtype=np.int64)
    u = rng.random(m)
    return 1 + np.floor(np.log(u) / np.log(params.dup_prob)).astype(np.int64)


def simulate_read(
    model,
    bases: str,
    params: NncParams,
    rng: np.random.Generator,
    keep_noise: bool = False,
) -> SimulatedRead:
    """Draw one read: stretch the state levels and add Gaussian noise.

    The initial state q is drawn uniformly from the predecessors of the
    first state, so the read can be decoded directly against q.
    """
    states = model.state_space.states_from_bases(bases)
    durations = sample_durations(states.size, params, rng)
    clean = stretch(model.levels_for(states), durations)
    noise = params.sigma * rng.standard_normal(clean.size)
    q = int(rng.choice(model.state_space.predecessors(int(states[0]))))
    return SimulatedRead(
        states=states,
        signal=clean + noise,
        truth=Segmentation(np.cumsum(durations)),
        params=params,
        initial_state=q,
        noise=noise if keep_noise else None,
    )


def num_segmentations(m: int, total: int) -> int:
    """|T_{m,total}| = C(total-1, m-1) by stars and bars."""
    return math.comb(total - 1, m - 1)


def enumerate_segmentations(m: int, total: int) -> Iterator[Segmentation]:
    """All segmentations of `total` samples into m positive runs.

    Oracle only: refuses instances with more than
    MAX_ORACLE_SEGMENTATIONS members.
    """
    if total < m:
        raise ValueError(f"total={total} < m={m}: no segmentation exists")
    if num_segmentations(m, total) > MAX_ORACLE_SEGMENTATIONS:
        raise CapacityError(
            f"{num_segmentations(m, total)} segmentations exceeds oracle guard "
            f"of {MAX_ORACLE_SEGMENTATIONS}"
        )

    def gen():
        for cut in combinations(range(1, total), m - 1):
            yield Segmentation(np.array(cut + (total,), dtype=np.int64))

    return gen()


def log_norm_constant(params: NncParams, m: int, total: int) -> float:
    """log C' from the channel law; 0^0 := 1 at E[K] = 1 and total = m."""
    sigma = params.sigma
    value = -0.5 * total * math.log(2.0 * math.pi * sigma * sigma)
    value -= m * math.log(params.mean_duration)
    if total > m:
        if params.dup_prob == 0.0:
            return -math.inf
        value += (total - m) * math.log(params.dup_prob)
    return value


def log_likelihood_bruteforce(
    params: NncParams, levels: np.ndarray, signal: np.ndarray
) -> float:
    """log W(y|s,q) by explicit summation over all segmentations.

    This is the test oracle for the trellis decoder; it is only
    feasible for tiny instances.
    """
    levels = np.asarray(levels, dtype=np.float64)
    signal = np.asarray(signal, dtype=np.float64)
    m, total = levels.size, signal.size
    log_c = log_norm_constant(params, m, total)
    if log_c == -math.inf:
        return -math.inf
    inv2s2 = 1.0 / (2.0 * params.sigma ** 2)
    terms = [
        -inv2s2 * float(np.sum((signal - stretch(levels, seg.durations)) ** 2))
        for seg in enumerate_segmentations(m, total)
    ]
    return log_c + float(logsumexp(terms))

"""Information densities, achievable-rate estimation and outage curves.

The pipeline per read is: level lookup -> DTW alignment -> chopping
into m-state blocks -> per-block log-APP -> information density.  The
pooled rate is the unweighted block average (uniformly chosen
nanopores); per-channel summaries group blocks by flowcell channel.

The information density uses i = 2 + log2(V)/m, the pointwise mutual
information under the uniform 2-bit prior, so a certain posterior
gives 2 bits/base and a uniform posterior gives 0.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from . import decoder, dtw
from .channel import NncParams
from .dataset_io import Read
from .pore_model import PoreModel, StateSpace

LOG2 = math.log(2.0)

# Reads longer than this in states get the banded DTW by default.
BAND_THRESHOLD_STATES = 5000


@dataclass(frozen=True)
class BlockResult:
    """Per-block decode outcome."""

    read_id: str
    channel_id: int
    block_index: int
    m: int
    t: int
    log_app: float
    info_density: float
    sigma_dtw: float
    mean_duration: float


@dataclass(frozen=True)
class ChannelSummary:
    channel_id: int
    rate: float
    block_count: int
    mean_sigma_dtw: float
    mean_duration: float


@dataclass(frozen=True)
class RateReport:
    """Aggregated rate estimate with and without outlier-block removal."""

    pooled_rate: float
    pooled_rate_with_outliers: float
    per_channel: dict[int, ChannelSummary]
    total_blocks: int
    outliers_removed: int
    failed_blocks: int
    block_size: int
    sigma: float
    outlier_threshold: float


@dataclass(frozen=True)
class OutageCurve:
    """Empirical CDF of per-block information densities."""

    thresholds: np.ndarray
    probabilities: np.ndarray


@dataclass(frozen=True)
class FilterConstraints:
    """Dataset admission constraints (strict inequalities throughout)."""

    min_bases: int = 8000
    max_bases: int = 12000
    typicality: float = 0.01
    max_mean_duration: float = 20.0


@dataclass(frozen=True)
class RatePolicy:
    """Decoding policy: fixed sigma, per-read mean duration."""

    sigma: float = 0.5
    transition_weights: str = "full"
    outlier_threshold: float = 0.35
    band_width: Optional[float] = None  # None = auto for long reads
    threads: Optional[int] = None


def info_density(log_app: float, m: int) -> float:
    """Bits per base: 2 + log2(V) / m."""
    if m < 1:
        raise ValueError("m must be >= 1")
    return 2.0 + (log_app / LOG2) / m


def rate_loss_bound(tau: int, m: int) -> float:
    """Worst-case rate loss from an unknown initial state: 2*tau/m bits/base."""
    if m < 1:
        raise ValueError("m must be >= 1")
    return 2.0 * tau / m


def estimate_mean_duration(read: Read, tau: int = 1) -> float:
    """Per-read E[K] estimate: samples per state."""
    n_states = len(read.bases) - tau + 1
    if n_states < 1 or read.signal.size < 1:
        raise ValueError("read too short to estimate mean duration")
    return read.signal.size / n_states


def base_frequencies(bases: str) -> dict[str, float]:
    n = len(bases)
    return {b: bases.count(b) / n for b in "ATCG"}


def filter_reads(
    reads: Iterable[Read],
    constraints: FilterConstraints = FilterConstraints(),
    tau: int = 1,
) -> tuple[list[Read], list[tuple[str, str]]]:
    """Split reads into retained and (read_id, reason) rejections."""
    retained: list[Read] = []
    rejected: list[tuple[str, str]] = []
    for read in reads:
        n = len(read.bases)
        if not constraints.min_bases < n < constraints.max_bases:
            rejected.append(
                (read.read_id, f"length: {n} bases outside "
                               f"({constraints.min_bases}, {constraints.max_bases})")
            )
            continue
        freqs = base_frequencies(read.bases)
        off = max(abs(f - 0.25) for f in freqs.values())
        if not off < constraints.typicality:
            rejected.append(
                (read.read_id, f"typicality: max |freq - 1/4| = {off:.4f} "
                               f">= {constraints.typicality}")
            )
            continue
        duration = estimate_mean_duration(read, tau=tau)
        if not duration < constraints.max_mean_duration:
            rejected.append(
                (read.read_id, f"mean duration {duration:.2f} "
                               f">= {constraints.max_mean_duration}")
            )
            continue
        retained.append(read)
    return retained, rejected


def filter_outlier_blocks(
    blocks: Sequence[BlockResult], threshold: float = 0.35
) -> list[BlockResult]:
    """Drop blocks whose per-block sigma_dtw exceeds the threshold."""
    if not threshold > 0:
        raise ValueError("threshold must be > 0")
    return [b for b in blocks if b.sigma_dtw <= threshold]


def outage_curve(
    block_densities: Sequence[float], thresholds: np.ndarray
) -> OutageCurve:
    """Empirical P(i <= gamma) at each threshold."""
    densities = np.sort(np.asarray(block_densities, dtype=np.float64))
    if densities.size == 0:
        raise ValueError("need at least one density")
    thresholds = np.asarray(thresholds, dtype=np.float64)
    if np.any(np.diff(thresholds) < 0):
        raise ValueError("thresholds must be ascending")
    probs = np.searchsorted(densities, thresholds, side="right") / densities.size
    return OutageCurve(thresholds=thresholds, probabilities=probs)


def _decode_block_task(args):
    (levels, tau, mean_duration, sigma, mode,
     states, q, signal, read_id, channel_id, block_index) = args
    model = PoreModel(StateSpace(tau), levels)
    params = NncParams(mean_duration=mean_duration, sigma=sigma)
    m = states.size
    sigma_block = dtw.normalized_dtw(model.levels_for(states), signal)
    out = decoder.log_app(model, params, states, signal, q, mode=mode)
    return BlockResult(
        read_id=read_id,
        channel_id=channel_id,
        block_index=block_index,
        m=int(m),
        t=int(signal.size),
        log_app=out.log_app,
        info_density=info_density(out.log_app, int(m)),
        sigma_dtw=sigma_block,
        mean_duration=mean_duration,
    )


def decode_blocks(tasks, threads: Optional[int] = None) -> list[BlockResult]:
    """Decode block tasks, in order, optionally across a process pool."""
    tasks = list(tasks)
    threads = threads or os.cpu_count() or 1
    if threads <= 1 or len(tasks) <= 1:
        return [_decode_block_task(t) for t in tasks]
    chunk = max(1, len(tasks) // (threads * 4))
    with ProcessPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(_decode_block_task, tasks, chunksize=chunk))


def estimate_rate(
    reads: Sequence[Read],
    model: PoreModel,
    policy: RatePolicy,
    m: int,
) -> tuple[RateReport, list[BlockResult]]:
    """Run the full chopping + decoding pipeline over a set of reads.

    Blocks that cannot be aligned or decoded are flagged and excluded
    (counted in the report), never silently dropped.  The result is
    invariant to read order: aggregation sorts by (read_id, block_index).
    """
    space = model.state_space
    tasks = []
    failed = 0
    for read in reads:
        states = space.states_from_bases(read.bases)
        duration = read.signal.size / states.size
        try:
            params = NncParams(mean_duration=duration, sigma=policy.sigma)
        except ValueError:
            failed += 1
            continue
        band = policy.band_width
        if band is None and states.size > BAND_THRESHOLD_STATES:
            band = dtw.auto_band_width(states.size, duration)
        try:
            blocks = dtw.chop_blocks(
                model, states, read.signal, m, band_width=band, read_id=read.read_id
            )
        except (dtw.InfeasibleAlignmentError, ValueError):
            failed += 1
            continue
        for block in blocks:
            if block.signal.size < m:
                failed += 1
                continue
            tasks.append(
                (model.levels, space.tau, duration, policy.sigma,
                 policy.transition_weights, block.states, block.initial_state,
                 block.signal, read.read_id, read.channel_id, block.block_index)
            )

    results = decode_blocks(tasks, threads=policy.threads)
    results.sort(key=lambda b: (b.read_id, b.block_index))
    retained = filter_outlier_blocks(results, policy.outlier_threshold)
    report = build_report(
        results,
        retained,
        failed_blocks=failed,
        block_size=m,
        sigma=policy.sigma,
        outlier_threshold=policy.outlier_threshold,
    )
    return report, results


def build_report(
    all_blocks: Sequence[BlockResult],
    retained: Sequence[BlockResult],
    failed_blocks: int,
    block_size: int,
    sigma: float,
    outlier_threshold: float,
) -> RateReport:
    def mean(values):
        values = list(values)
        return float(np.mean(values)) if values else math.nan

    per_channel: dict[int, ChannelSummary] = {}
    for cid in sorted({b.channel_id for b in retained}):
        group = [b for b in retained if b.channel_id == cid]
        per_channel[cid] = ChannelSummary(
            channel_id=cid,
            rate=mean(b.info_density for b in group),
            block_count=len(group),
            mean_sigma_dtw=mean(b.sigma_dtw for b in group),
            mean_duration=mean(b.mean_duration for b in group),
        )
    return RateReport(
        pooled_rate=mean(b.info_density for b in retained),
        pooled_rate_with_outliers=mean(b.info_density for b in all_blocks),
        per_channel=per_channel,
        total_blocks=len(retained),
        outliers_removed=len(all_blocks) - len(retained),
        failed_blocks=failed_blocks,
        block_size=block_size,
        sigma=sigma,
        outlier_threshold=outlier_threshold,
    )

"""Duplication-only dynamic time warping.

Distance, normalized distance, the maximum-likelihood segmentation by
backtrace, and DTW-based chopping of long reads into fixed-length
blocks.  The backtrace choice matrix is bit-packed (one bit per cell)
so that full reads at desk scale stay within memory.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from numba import njit

from .channel import Segmentation


class InfeasibleAlignmentError(ValueError):
    """The signal is shorter than the level sequence (or the band is empty)."""


@dataclass(frozen=True)
class DtwResult:
    """Alignment output: squared-Euclidean distance and its segmentation."""

    distance: float
    segmentation: Segmentation

    @property
    def normalized(self) -> float:
        """sigma_dtw = sqrt(distance / len(y))."""
        return math.sqrt(self.distance / self.segmentation.total)


@dataclass(frozen=True)
class Block:
    """A fixed-length chunk of a read with its known initial state."""

    states: np.ndarray
    signal: np.ndarray
    initial_state: int
    read_id: str = ""
    block_index: int = 0


@njit(cache=True)
def _dtw_fill(x, y, lo, hi):
    """Fill the duplication-only DTW table row by row.

    choice bit 1 at (l, n) means cell (l, n) was reached by a jump from
    (l-1, n-1); ties prefer the duplication branch (bit 0).  lo/hi give
    the inclusive feasible sample range per row (band support).
    """
    m = x.size
    t = y.size
    nbytes = (t + 7) // 8
    choice = np.zeros((m, nbytes), dtype=np.uint8)
    prev = np.full(t, np.inf)
    cur = np.full(t, np.inf)

    acc = 0.0
    for n in range(0, hi[0] + 1):
        d = y[n] - x[0]
        acc += d * d
        if n >= lo[0]:
            prev[n] = acc
        else:
            prev[n] = acc  # row 0 is cumulative from n = 0 regardless of band
    for l in range(1, m):
        for n in range(t):
            cur[n] = np.inf
        for n in range(lo[l], hi[l] + 1):
            d = y[n] - x[l]
            d = d * d
            stay = cur[n - 1]
            jump = prev[n - 1]
            # ties go to the jump branch: latest feasible jump times
            if jump <= stay:
                cur[n] = d + jump
                choice[l, n >> 3] |= np.uint8(1 << (n & 7))
            else:
                cur[n] = d + stay
        tmp = prev
        prev = cur
        cur = tmp
    return prev[t - 1], choice


@njit(cache=True)
def _dtw_backtrace(choice, m, t):
    jump_times = np.empty(m, dtype=np.int64)
    jump_times[m - 1] = t
    l = m - 1
    n = t - 1
    while l > 0:
        if choice[l, n >> 3] & np.uint8(1 << (n & 7)):
            jump_times[l - 1] = n  # previous sample index, 1-based
            l -= 1
        n -= 1
    return jump_times


def _band_bounds(m: int, t: int, band_width: Optional[float]):
    """Inclusive per-row feasible 0-based sample ranges.

    Without a band these are exact feasibility bounds.  With a band the
    corridor is centered on the line through (1, t/m-slope) so the final
    cell (m, t) is always inside.
    """
    rows = np.arange(m, dtype=np.int64)
    lo = rows.copy()
    hi = t - m + rows
    if band_width is not None:
        slope = t / m
        center = (rows + 1) * slope
        lo = np.maximum(lo, np.ceil(center - band_width).astype(np.int64) - 1)
        hi = np.minimum(hi, np.floor(center + band_width).astype(np.int64) - 1)
        if np.any(lo > hi):
            raise InfeasibleAlignmentError(f"band width {band_width} leaves empty rows")
    return lo, hi


def dtw_align(
    x: np.ndarray, y: np.ndarray, band_width: Optional[float] = None
) -> DtwResult:
    """Minimize ||y - stretch(x, t)||^2 over all segmentations.

    Ties are broken toward the jump branch, yielding the latest
    feasible jump times deterministically.
    """
    x = np.ascontiguousarray(x, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.float64)
    m, t = x.size, y.size
    if m < 1:
        raise ValueError("x must be non-empty")
    if t < m:
        raise InfeasibleAlignmentError(f"len(y)={t} < len(x)={m}")
    lo, hi = _band_bounds(m, t, band_width)
    distance, choice = _dtw_fill(x, y, lo, hi)
    if not np.isfinite(distance):
        raise InfeasibleAlignmentError("no feasible path within the band")
    jump_times = _dtw_backtrace(choice, m, t)
    return DtwResult(float(distance), Segmentation(jump_times))


def normalized_dtw(x: np.ndarray, y: np.ndarray, band_width: Optional[float] = None) -> float:
    """sigma_dtw, an asymptotic lower bound on the generating noise level."""
    return dtw_align(x, y, band_width=band_width).normalized


def auto_band_width(m: int, mean_duration: float) -> float:
    """Default band for long reads: six sigma of the jump-time spread."""
    sd_k = math.sqrt(max(mean_duration * (mean_duration - 1.0), 1.0))
    return 6.0 * math.sqrt(m) * sd_k


def chop_blocks(
    model,
    states: np.ndarray,
    signal: np.ndarray,
    m: int,
    segmentation: Optional[Segmentation] = None,
    band_width: Optional[float] = None,
    read_id: str = "",
) -> list[Block]:
    """Chop a read into blocks of m states at every m-th jump time.

    The first state's run is treated as known preamble: block j carries
    states s_{(j-1)m+2 .. jm+1}, its initial state is s_{(j-1)m+1}, and
    its samples are those strictly after jump time (j-1)m+1 up to jump
    time jm+1.  Leftover tail states and samples are discarded.  When
    `segmentation` is given (e.g. the simulator's truth) the DTW pass
    is skipped.
    """
    states = np.asarray(states, dtype=np.int64)
    big_m = states.size
    if m < 1:
        raise ValueError("block size m must be >= 1")
    if big_m < m + 1:
        raise ValueError(f"read has {big_m} states, need at least m+1={m + 1}")
    if segmentation is None:
        segmentation = dtw_align(model.levels_for(states), signal, band_width=band_width).segmentation
    jt = segmentation.jump_times
    if jt.size != big_m:
        raise ValueError("segmentation length does not match the state sequence")
    n_blocks = (big_m - 1) // m
    blocks = []
    for j in range(n_blocks):
        start = j * m
        blocks.append(
            Block(
                states=states[start + 1 : start + m + 1],
                signal=np.asarray(signal[jt[start] : jt[start + m]], dtype=np.float64),
                initial_state=int(states[start]),
                read_id=read_id,
                block_index=j,
            )
        )
    return blocks

"""Forward and conditional forward trellis recursions in the log domain.

The forward pass sums over all admissible state paths (the APP
denominator); the conditional forward pass sums over segmentations of
one given path (the numerator).  Both drop the Gaussian normalization
constant identically, so it cancels in the log-APP.

Two transition-weight modes are supported:

* ``full`` (default): each duplication step carries log(1 - 1/E[K])
  and each jump carries log(p(s|s')/E[K]) = -log(4 E[K]), so the mean
  duration actually influences decoding.
* ``uniform``: both weights are dropped, reproducing the literal
  proportional recursions.

On the de Bruijn graph every admissible path through a fixed (m, t_m)
trellis has the same total weight, so the two modes differ only by an
additive constant and yield identical log-APPs.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from numba import njit

from .channel import NncParams
from .pore_model import PoreModel

MODES = ("full", "uniform")


@dataclass(frozen=True)
class DecodeOutput:
    """log-numerator, log-denominator and their difference log V(s|y,q)."""

    log_numerator: float
    log_denominator: float

    @property
    def log_app(self) -> float:
        return self.log_numerator - self.log_denominator


def lse(a: float, b: float) -> float:
    """log(exp(a) + exp(b)), exact for -inf operands."""
    return float(_lse2(float(a), float(b)))


@njit(cache=True, inline="always")
def _lse2(a, b):
    if a < b:
        a, b = b, a
    if b == -np.inf:
        return a
    d = b - a
    if d < -37.0:  # exp(d) below double-precision resolution of log1p
        return a
    return a + np.log1p(np.exp(d))


@njit(cache=True)
def _gauss_table(levels, y, inv2s2):
    t = y.size
    nst = levels.size
    g = np.empty((t, nst))
    for n in range(t):
        yn = y[n]
        for s in range(nst):
            d = yn - levels[s]
            g[n, s] = -d * d * inv2s2
    return g


@njit(cache=True)
def _forward_debruijn(levels, y, q, inv2s2, log_dup, log_jump, m):
    """Forward pass on the standard shift graph.

    Exploits that the four predecessors of state s depend only on
    s >> 2, so the jump message is shared by groups of four states.
    """
    nst = levels.size
    t = y.size
    high = nst // 4
    g = _gauss_table(levels, y, inv2s2)
    neg = -np.inf
    prev = np.full((t, nst), neg)
    cur = np.full((t, nst), neg)

    base = (q * 4) % nst
    for b in range(4):
        s = base + b
        acc = log_jump
        for n in range(t):
            acc += g[n, s]
            prev[n, s] = acc
            acc += log_dup

    jmsg = np.empty(high)
    for l in range(1, m):
        for n in range(l - 1, t):
            for s in range(nst):
                cur[n, s] = neg
        for n in range(l, t):
            for grp in range(high):
                a = prev[n - 1, grp]
                a = _lse2(a, prev[n - 1, high + grp])
                a = _lse2(a, prev[n - 1, 2 * high + grp])
                a = _lse2(a, prev[n - 1, 3 * high + grp])
                jmsg[grp] = a
            for s in range(nst):
                v = _lse2(cur[n - 1, s] + log_dup, jmsg[s >> 2] + log_jump)
                cur[n, s] = v + g[n, s]
        tmp = prev
        prev = cur
        cur = tmp

    out = neg
    for s in range(nst):
        out = _lse2(out, prev[t - 1, s])
    return out


@njit(cache=True)
def _forward_generic(levels, y, init_states, pred, inv2s2, log_dup, log_jump, m):
    """Forward pass for an arbitrary predecessor table (rows padded with -1)."""
    nst = levels.size
    t = y.size
    g = _gauss_table(levels, y, inv2s2)
    neg = -np.inf
    prev = np.full((t, nst), neg)
    cur = np.full((t, nst), neg)

    for i in range(init_states.size):
        s = init_states[i]
        acc = log_jump
        for n in range(t):
            acc += g[n, s]
            prev[n, s] = acc
            acc += log_dup

    for l in range(1, m):
        for n in range(l - 1, t):
            for s in range(nst):
                cur[n, s] = neg
        for n in range(l, t):
            for s in range(nst):
                a = neg
                for j in range(pred.shape[1]):
                    p = pred[s, j]
                    if p >= 0:
                        a = _lse2(a, prev[n - 1, p])
                v = _lse2(cur[n - 1, s] + log_dup, a + log_jump)
                cur[n, s] = v + g[n, s]
        tmp = prev
        prev = cur
        cur = tmp

    out = neg
    for s in range(nst):
        out = _lse2(out, prev[t - 1, s])
    return out


@njit(cache=True)
def _conditional_forward(x, y, inv2s2, log_dup, log_jump):
    m = x.size
    t = y.size
    neg = -np.inf
    prev = np.full(t, neg)
    cur = np.full(t, neg)

    acc = log_jump
    for n in range(t):
        d = y[n] - x[0]
        acc += -d * d * inv2s2
        prev[n] = acc
        acc += log_dup

    for l in range(1, m):
        for n in range(l - 1, t):
            cur[n] = neg
        for n in range(l, t):
            d = y[n] - x[l]
            v = _lse2(cur[n - 1] + log_dup, prev[n - 1] + log_jump)
            cur[n] = v - d * d * inv2s2
        tmp = prev
        prev = cur
        cur = tmp
    return prev[t - 1]


def _weights(params: NncParams, mode: str) -> tuple[float, float]:
    if mode not in MODES:
        raise ValueError(f"unknown transition_weights mode {mode!r}, expected one of {MODES}")
    if mode == "uniform":
        return 0.0, 0.0
    log_dup = math.log(params.dup_prob) if params.dup_prob > 0.0 else -math.inf
    log_jump = -math.log(4.0 * params.mean_duration)
    return log_dup, log_jump


def _check_signal(y: np.ndarray, m: int) -> np.ndarray:
    y = np.ascontiguousarray(y, dtype=np.float64)
    if not np.all(np.isfinite(y)):
        raise ValueError("signal contains non-finite samples")
    if y.size < m:
        raise ValueError(f"len(y)={y.size} < m={m}: infeasible")
    if m < 1:
        raise ValueError("m must be >= 1")
    return y


def forward(
    model: PoreModel,
    params: NncParams,
    q: int,
    y: np.ndarray,
    m: int,
    mode: str = "full",
    predecessors: Optional[np.ndarray] = None,
) -> float:
    """log of the summed forward messages over all m-state paths from q.

    The common constant (Gaussian normalization and the uniform input
    prior) is dropped; `predecessors` substitutes a custom graph (rows
    of predecessor indices, padded with -1) for the de Bruijn one.
    """
    y = _check_signal(y, m)
    log_dup, log_jump = _weights(params, mode)
    inv2s2 = 1.0 / (2.0 * params.sigma ** 2)
    space = model.state_space
    if not 0 <= q < space.num_states:
        raise ValueError(f"initial state {q} out of range")
    if predecessors is None:
        return float(
            _forward_debruijn(model.levels, y, q, inv2s2, log_dup, log_jump, m)
        )
    pred = np.ascontiguousarray(predecessors, dtype=np.int64)
    init = np.array(
        [s for s in range(space.num_states) if q in pred[s]], dtype=np.int64
    )
    if init.size == 0:
        raise ValueError(f"state {q} has no successors in the supplied graph")
    return float(
        _forward_generic(model.levels, y, init, pred, inv2s2, log_dup, log_jump, m)
    )


def conditional_forward(
    model: PoreModel,
    params: NncParams,
    states: np.ndarray,
    y: np.ndarray,
    mode: str = "full",
) -> float:
    """log of the summed segmentation messages for one given state path."""
    states = np.asarray(states, dtype=np.int64)
    model.state_space.validate_path(states)
    y = _check_signal(y, states.size)
    log_dup, log_jump = _weights(params, mode)
    inv2s2 = 1.0 / (2.0 * params.sigma ** 2)
    x = np.ascontiguousarray(model.levels_for(states))
    return float(_conditional_forward(x, y, inv2s2, log_dup, log_jump))


def log_app(
    model: PoreModel,
    params: NncParams,
    states: np.ndarray,
    y: np.ndarray,
    q: int,
    mode: str = "full",
    predecessors: Optional[np.ndarray] = None,
) -> DecodeOutput:
    """log V(s|y,q) = conditional forward minus forward."""
    states = np.asarray(states, dtype=np.int64)
    if predecessors is None:
        if int(states[0]) not in model.state_space.successors(q):
            raise ValueError(f"states[0]={states[0]} is not a successor of q={q}")
    num = conditional_forward(model, params, states, y, mode=mode)
    den = forward(model, params, q, y, states.size, mode=mode, predecessors=predecessors)
    return DecodeOutput(log_numerator=num, log_denominator=den)

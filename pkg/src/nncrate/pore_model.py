"""De Bruijn state space over tau-mers and the pore level table.

States are radix-4 codes of tau-mers with A=0, T=1, C=2, G=3 and the
oldest base most significant, so advancing by one base is a
shift-and-mask.  The level table maps every one of the 4^tau states to
a mean current level on the normalized (zero-mean, unit-scale) pore
model scale.
"""
from __future__ import annotations

import io
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

BASES = "ATCG"
_BASE_CODE = {b: i for i, b in enumerate(BASES)}

# 4^8 = 65536 states is the largest table we accept: beyond that the
# decoder's per-sample cost (4^tau state updates) is no longer desk scale.
MAX_TAU = 8


class PoreModelFormatError(ValueError):
    """A pore-model table could not be parsed or is incomplete."""


def encode_base(base: str) -> int:
    try:
        return _BASE_CODE[base]
    except KeyError:
        raise ValueError(f"unknown base {base!r}, expected one of {BASES}") from None


def decode_base(code: int) -> str:
    return BASES[code]


def random_bases(n: int, rng: np.random.Generator) -> str:
    """Uniform i.i.d. base string of length n."""
    return "".join(BASES[c] for c in rng.integers(0, 4, size=n))


class StateSpace:
    """The 4^tau tau-mer states with shift-by-one-base transitions.

    Each state has exactly four successors (drop the oldest base,
    append one of ATCG) and four predecessors; the resulting graph is
    the 4-in 4-out regular de Bruijn graph.  Instances are immutable
    and safe to share across workers.
    """

    def __init__(self, tau: int):
        if tau < 1:
            raise ValueError(f"tau must be >= 1, got {tau}")
        if tau > MAX_TAU:
            raise ValueError(
                f"tau={tau} refused: decoding cost grows as 4^tau, max supported is {MAX_TAU}"
            )
        self.tau = int(tau)
        self.num_states = 4 ** self.tau
        # shifting drops the contribution of the oldest (most significant) base
        self._high = 4 ** (self.tau - 1)

    def __repr__(self):
        return f"StateSpace(tau={self.tau})"

    def __eq__(self, other):
        return isinstance(other, StateSpace) and other.tau == self.tau

    def kmer_to_state(self, kmer: str) -> int:
        """Radix-4 code of a tau-mer, oldest base most significant."""
        if len(kmer) != self.tau:
            raise ValueError(f"kmer {kmer!r} has length {len(kmer)}, expected tau={self.tau}")
        state = 0
        for b in kmer:
            state = state * 4 + encode_base(b)
        return state

    def state_to_kmer(self, state: int) -> str:
        if not 0 <= state < self.num_states:
            raise ValueError(f"state {state} out of range [0, {self.num_states})")
        out = []
        for _ in range(self.tau):
            out.append(BASES[state % 4])
            state //= 4
        return "".join(reversed(out))

    def states_from_bases(self, bases: str) -> np.ndarray:
        """Sliding tau-window state sequence; length is len(bases) - tau + 1."""
        n = len(bases)
        if n < self.tau:
            raise ValueError(f"need at least tau={self.tau} bases, got {n}")
        codes = np.fromiter((_BASE_CODE[b] for b in bases), dtype=np.int64, count=n)
        windows = np.lib.stride_tricks.sliding_window_view(codes, self.tau)
        weights = 4 ** np.arange(self.tau - 1, -1, -1, dtype=np.int64)
        return windows @ weights

    def successors(self, state: int) -> np.ndarray:
        """The four states reached by appending one base."""
        base = (state * 4) % self.num_states
        return base + np.arange(4, dtype=np.int64)

    def predecessors(self, state: int) -> np.ndarray:
        """The four states from which `state` is reachable in one shift."""
        low = state // 4
        return low + self._high * np.arange(4, dtype=np.int64)

    def successor_array(self) -> np.ndarray:
        """(num_states, 4) successor table."""
        s = np.arange(self.num_states, dtype=np.int64)
        return ((s * 4) % self.num_states)[:, None] + np.arange(4, dtype=np.int64)[None, :]

    def predecessor_array(self) -> np.ndarray:
        """(num_states, 4) predecessor table."""
        s = np.arange(self.num_states, dtype=np.int64)
        return (s // 4)[:, None] + self._high * np.arange(4, dtype=np.int64)[None, :]

    def is_edge(self, src: int, dst: int) -> bool:
        return dst // 4 == src % self._high

    def validate_path(self, states: np.ndarray) -> None:
        """Raise if consecutive states are not de Bruijn successors."""
        states = np.asarray(states)
        if states.size == 0:
            raise ValueError("empty state path")
        if np.any((states < 0) | (states >= self.num_states)):
            raise ValueError("state index out of range")
        if states.size > 1:
            expected_low = states[:-1] % self._high
            if np.any(states[1:] // 4 != expected_low):
                bad = int(np.nonzero(states[1:] // 4 != expected_low)[0][0])
                raise ValueError(
                    f"invalid transition at position {bad}: "
                    f"{states[bad]} -> {states[bad + 1]} is not a de Bruijn edge"
                )


@dataclass(frozen=True)
class PoreModel:
    """Level table over a de Bruijn state space.

    Levels are taken as-is and assumed pre-normalized; a table that
    looks far from zero-mean/unit-scale triggers a warning only.
    """

    state_space: StateSpace
    levels: np.ndarray = field(repr=False)

    def __post_init__(self):
        levels = np.asarray(self.levels, dtype=np.float64)
        object.__setattr__(self, "levels", levels)
        if levels.shape != (self.state_space.num_states,):
            raise ValueError(
                f"levels has shape {levels.shape}, expected ({self.state_space.num_states},)"
            )
        if not np.all(np.isfinite(levels)):
            raise ValueError("levels must be finite")
        mean, std = float(levels.mean()), float(levels.std())
        # small tables get slack proportional to the sample std-err
        mean_tol = max(0.5, 4.0 / math.sqrt(levels.size))
        if abs(mean) > mean_tol or not 0.2 < std < 5.0:
            warnings.warn(
                f"pore-model levels look unnormalized (mean={mean:.3g}, std={std:.3g}); "
                "expected approximately zero-mean, unit-scale",
                stacklevel=2,
            )

    @property
    def tau(self) -> int:
        return self.state_space.tau

    def level(self, state: int) -> float:
        return float(self.levels[state])

    def levels_for(self, states: np.ndarray) -> np.ndarray:
        return self.levels[np.asarray(states)]


def load_pore_model(source) -> PoreModel:
    """Parse a k-mer level TSV (header `kmer<TAB>level_mean`, extra columns ignored).

    The layout matches published Scrappie/ONT k-mer tables so real
    tables can be dropped in.  Every one of the 4^tau k-mers must be
    present exactly once; tau is inferred from the k-mer length.
    """
    if isinstance(source, Path) or (
        isinstance(source, str) and "\n" not in source and "\t" not in source
    ):
        with open(source, "r", encoding="utf-8") as fh:
            return load_pore_model(fh)
    if isinstance(source, str):
        source = io.StringIO(source)

    header = source.readline()
    if not header:
        raise PoreModelFormatError("empty pore-model table")
    cols = header.rstrip("\n").split("\t")
    try:
        kmer_col = cols.index("kmer")
        level_col = cols.index("level_mean")
    except ValueError:
        raise PoreModelFormatError(
            f"header must contain 'kmer' and 'level_mean' columns, got {cols}"
        ) from None

    entries: dict[str, float] = {}
    tau = None
    for lineno, line in enumerate(source, start=2):
        line = line.rstrip("\n")
        if not line:
            continue
        fields = line.split("\t")
        if len(fields) <= max(kmer_col, level_col):
            raise PoreModelFormatError(f"line {lineno}: expected {len(cols)} columns")
        kmer = fields[kmer_col]
        if tau is None:
            tau = len(kmer)
        elif len(kmer) != tau:
            raise PoreModelFormatError(
                f"line {lineno}: k-mer {kmer!r} has length {len(kmer)}, expected {tau}"
            )
        if any(b not in _BASE_CODE for b in kmer):
            raise PoreModelFormatError(f"line {lineno}: k-mer {kmer!r} has non-ATCG symbols")
        if kmer in entries:
            raise PoreModelFormatError(f"line {lineno}: duplicate k-mer {kmer!r}")
        try:
            entries[kmer] = float(fields[level_col])
        except ValueError:
            raise PoreModelFormatError(
                f"line {lineno}: non-numeric level {fields[level_col]!r}"
            ) from None

    if tau is None:
        raise PoreModelFormatError("pore-model table has no rows")
    space = StateSpace(tau)
    if len(entries) != space.num_states:
        for s in range(space.num_states):
            kmer = space.state_to_kmer(s)
            if kmer not in entries:
                raise PoreModelFormatError(f"missing k-mer {kmer!r} (expected {space.num_states} rows)")
    levels = np.empty(space.num_states)
    for kmer, value in entries.items():
        levels[space.kmer_to_state(kmer)] = value
    return PoreModel(space, levels)


def synth_pore_model(tau: int, seed: int) -> PoreModel:
    """Deterministic synthetic model: i.i.d. standard normal levels."""
    rng = np.random.default_rng(np.random.SeedSequence((int(seed), 0x6C6576)))
    return PoreModel(StateSpace(tau), rng.standard_normal(4 ** tau))

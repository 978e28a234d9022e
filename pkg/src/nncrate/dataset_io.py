"""On-disk formats for reads and signal normalization.

Reads live in JSONL (one read per line, gzip auto-detected by a .gz
extension).  A leading ``{"_meta": ...}`` line carries provenance and
is skipped on read.  Values round-trip bit-exactly because floats are
serialized with repr precision.
"""
from __future__ import annotations

import gzip
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Optional

import numpy as np

_VALID_BASES = frozenset("ATCG")

# Makes the MAD a consistent estimator of a Gaussian sigma.
MAD_SCALE = 1.4826


@dataclass
class Read:
    """One nanopore read: bases, normalized raw signal and metadata."""

    read_id: str
    channel_id: int
    bases: str
    signal: np.ndarray = field(repr=False)
    truth_jump_times: Optional[np.ndarray] = field(default=None, repr=False)
    q_score: Optional[float] = None

    def __post_init__(self):
        self.signal = np.asarray(self.signal, dtype=np.float64)
        if self.truth_jump_times is not None:
            self.truth_jump_times = np.asarray(self.truth_jump_times, dtype=np.int64)


def _open_text(path, mode: str):
    path = Path(path)
    if path.suffix == ".gz":
        return gzip.open(path, mode + "t", encoding="utf-8")
    return open(path, mode, encoding="utf-8")


def _read_from_obj(obj: dict, lineno: int) -> Read:
    try:
        read_id = obj["read_id"]
        channel_id = int(obj["channel_id"])
        bases = obj["bases"]
        signal = obj["signal"]
    except KeyError as exc:
        raise ValueError(f"line {lineno}: missing required field {exc}") from None
    bad = set(bases) - _VALID_BASES
    if bad:
        raise ValueError(
            f"line {lineno}: read {read_id!r} has invalid bases {sorted(bad)}"
        )
    signal = np.asarray(signal, dtype=np.float64)
    if not np.all(np.isfinite(signal)):
        raise ValueError(f"line {lineno}: read {read_id!r} has non-finite samples")
    return Read(
        read_id=read_id,
        channel_id=channel_id,
        bases=bases,
        signal=signal,
        truth_jump_times=obj.get("truth_jump_times"),
        q_score=obj.get("q_score"),
    )


def iter_dataset(path) -> Iterator[Read]:
    """Stream reads from a JSONL file, preserving order."""
    with _open_text(path, "r") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"line {lineno}: malformed JSON ({exc.msg})") from None
            if "_meta" in obj:
                continue
            yield _read_from_obj(obj, lineno)


def read_dataset(path) -> list[Read]:
    return list(iter_dataset(path))


def read_dataset_meta(path) -> Optional[dict]:
    """Return the _meta header of a JSONL file, if present."""
    with _open_text(path, "r") as fh:
        first = fh.readline().strip()
    if not first:
        return None
    obj = json.loads(first)
    return obj.get("_meta")


def _read_to_obj(read: Read) -> dict:
    obj = {
        "read_id": read.read_id,
        "channel_id": read.channel_id,
        "bases": read.bases,
        "signal": [float(v) for v in read.signal],
    }
    if read.truth_jump_times is not None:
        obj["truth_jump_times"] = [int(v) for v in read.truth_jump_times]
    if read.q_score is not None:
        obj["q_score"] = float(read.q_score)
    return obj


def write_dataset(reads: Iterable[Read], path, meta: Optional[dict] = None) -> int:
    """Write reads as JSONL; returns the number written."""
    count = 0
    with _open_text(path, "w") as fh:
        if meta is not None:
            fh.write(json.dumps({"_meta": meta}, sort_keys=True) + "\n")
        for read in reads:
            fh.write(json.dumps(_read_to_obj(read), sort_keys=True) + "\n")
            count += 1
    return count


def normalize_signal(raw: np.ndarray) -> np.ndarray:
    """Robust z-normalization: (x - median) / (1.4826 * MAD).

    Idempotent on already-normalized inputs and invariant to affine
    transforms a*x + b with a > 0.
    """
    raw = np.asarray(raw, dtype=np.float64)
    if raw.size < 2:
        raise ValueError("need at least 2 samples to normalize")
    med = np.median(raw)
    mad = np.median(np.abs(raw - med))
    if mad == 0.0 or not math.isfinite(mad):
        raise ValueError("degenerate signal: zero or non-finite MAD")
    return (raw - med) / (MAD_SCALE * mad)

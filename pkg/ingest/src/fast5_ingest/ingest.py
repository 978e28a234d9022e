"""FAST5 to JSONL dataset conversion.

Resolves raw signals from single- or multi-read FAST5 containers,
converts DAC values to picoamps when the container carries scaling
attributes, applies med-MAD normalization, and writes one JSON object
per read in manifest order.  Bases come either from an external FASTA
keyed by read_id or from a basecall Fastq embedded in the container.

The manifest is a JSON file:

    {
      "output": "reads.jsonl",
      "fasta": "bases.fa",            # optional, default bases source
      "entries": [
        {"fast5": "run1.fast5", "read_id": "abc",
         "bases_source": "fasta" | "embedded"}   # optional per entry
      ]
    }
"""
from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import h5py
import numpy as np

# Same constant as the downstream consumer's normalize_signal.
MAD_SCALE = 1.4826

_VALID_BASES = frozenset("ATCG")


class ManifestError(ValueError):
    """The manifest file is malformed."""


@dataclass
class IngestEntry:
    fast5: str
    read_id: str
    bases_source: Optional[str] = None  # "fasta" | "embedded" | None = default


@dataclass
class IngestManifest:
    output: str
    entries: list[IngestEntry]
    fasta: Optional[str] = None


@dataclass
class IngestSummary:
    ingested: int = 0
    skipped: list[dict] = field(default_factory=list)
    scaled_to_pa: int = 0
    unscaled: int = 0
    fasta: Optional[str] = None

    def skip(self, read_id: str, reason: str) -> None:
        self.skipped.append({"read_id": read_id, "reason": reason})

    def as_dict(self) -> dict:
        return {
            "ingested": self.ingested,
            "skipped": self.skipped,
            "scaled_to_pa": self.scaled_to_pa,
            "unscaled": self.unscaled,
            "fasta": self.fasta,
        }


def load_manifest(path) -> IngestManifest:
    with open(path, "r", encoding="utf-8") as fh:
        obj = json.load(fh)
    if "output" not in obj:
        raise ManifestError("manifest missing 'output'")
    entries = []
    for i, raw in enumerate(obj.get("entries", [])):
        if "fast5" not in raw or "read_id" not in raw:
            raise ManifestError(f"entry {i}: needs 'fast5' and 'read_id'")
        source = raw.get("bases_source")
        if source not in (None, "fasta", "embedded"):
            raise ManifestError(f"entry {i}: unknown bases_source {source!r}")
        entries.append(IngestEntry(raw["fast5"], raw["read_id"], source))
    return IngestManifest(
        output=obj["output"], entries=entries, fasta=obj.get("fasta")
    )


def load_fasta(path) -> dict[str, str]:
    """Minimal FASTA reader keyed by the first token of each header."""
    records: dict[str, str] = {}
    name = None
    parts: list[str] = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith(">"):
                if name is not None:
                    records[name] = "".join(parts)
                name = line[1:].split()[0]
                parts = []
            elif name is not None:
                parts.append(line.upper())
    if name is not None:
        records[name] = "".join(parts)
    return records


@dataclass
class RawRecord:
    signal: np.ndarray
    channel_id: int
    scaled: bool
    fastq: Optional[str] = None


def _scale_to_pa(raw: np.ndarray, attrs) -> tuple[np.ndarray, bool]:
    digitisation = attrs.get("digitisation")
    rng = attrs.get("range")
    offset = attrs.get("offset")
    if digitisation and rng is not None and offset is not None:
        return (raw + float(offset)) * float(rng) / float(digitisation), True
    return raw.astype(np.float64), False


def _channel_number(attrs) -> int:
    value = attrs.get("channel_number", 0)
    if isinstance(value, bytes):
        value = value.decode()
    try:
        return int(value)
    except (TypeError, ValueError):
        return 0


def _decode(value) -> str:
    if isinstance(value, bytes):
        return value.decode()
    return str(value)


def _find_fastq(group: h5py.Group) -> Optional[str]:
    analyses = group.get("Analyses")
    if analyses is None:
        return None
    for name in sorted(analyses):
        called = analyses[name].get("BaseCalled_template")
        if called is not None and "Fastq" in called:
            return _decode(called["Fastq"][()])
    return None


def _extract_multi(fh: h5py.File, read_id: str) -> Optional[RawRecord]:
    group = fh.get(f"read_{read_id}")
    if group is None:
        return None
    raw = group.get("Raw/Signal")
    if raw is None:
        return None
    channel_grp = group.get("channel_id")
    attrs = channel_grp.attrs if channel_grp is not None else {}
    signal, scaled = _scale_to_pa(np.asarray(raw[()], dtype=np.float64), attrs)
    return RawRecord(
        signal=signal,
        channel_id=_channel_number(attrs),
        scaled=scaled,
        fastq=_find_fastq(group),
    )


def _extract_single(fh: h5py.File, read_id: str) -> Optional[RawRecord]:
    reads = fh.get("Raw/Reads")
    if reads is None:
        return None
    for name in sorted(reads):
        group = reads[name]
        if _decode(group.attrs.get("read_id", "")) != read_id:
            continue
        raw = group.get("Signal")
        if raw is None:
            return None
        channel_grp = fh.get("UniqueGlobalKey/channel_id")
        attrs = channel_grp.attrs if channel_grp is not None else {}
        signal, scaled = _scale_to_pa(np.asarray(raw[()], dtype=np.float64), attrs)
        return RawRecord(
            signal=signal,
            channel_id=_channel_number(attrs),
            scaled=scaled,
            fastq=_find_fastq(fh),
        )
    return None


def extract_raw(path, read_id: str) -> Optional[RawRecord]:
    """Locate one read's raw record in either FAST5 layout."""
    with h5py.File(path, "r") as fh:
        record = _extract_multi(fh, read_id)
        if record is None:
            record = _extract_single(fh, read_id)
        return record


def normalize_signal(raw: np.ndarray) -> np.ndarray:
    """Robust z-normalization: (x - median) / (1.4826 * MAD)."""
    raw = np.asarray(raw, dtype=np.float64)
    if raw.size < 2:
        raise ValueError("need at least 2 samples to normalize")
    med = np.median(raw)
    mad = np.median(np.abs(raw - med))
    if mad == 0.0 or not np.isfinite(mad):
        raise ValueError("degenerate signal: zero or non-finite MAD")
    return (raw - med) / (MAD_SCALE * mad)


def _parse_fastq(fastq: str) -> tuple[str, Optional[float]]:
    lines = fastq.strip().splitlines()
    if len(lines) < 2:
        raise ValueError("embedded Fastq has no sequence line")
    bases = lines[1].strip().upper()
    q_score = None
    if len(lines) >= 4 and lines[3]:
        quals = [ord(c) - 33 for c in lines[3].strip()]
        if quals:
            q_score = float(np.mean(quals))
    return bases, q_score


def _resolve_bases(
    entry: IngestEntry, record: RawRecord, fasta: Optional[dict[str, str]]
) -> tuple[Optional[str], Optional[float], Optional[str]]:
    """Return (bases, q_score, skip_reason)."""
    source = entry.bases_source or ("fasta" if fasta is not None else "embedded")
    if source == "fasta":
        if fasta is None:
            return None, None, "no bases: manifest has no fasta"
        bases = fasta.get(entry.read_id)
        if bases is None:
            return None, None, "no bases: read_id not in fasta"
        return bases, None, None
    if record.fastq is None:
        return None, None, "no bases: no embedded basecall"
    try:
        bases, q_score = _parse_fastq(record.fastq)
    except ValueError as exc:
        return None, None, f"no bases: {exc}"
    return bases, q_score, None


def ingest(manifest: IngestManifest) -> IngestSummary:
    """Run the conversion; writes the JSONL output and returns a summary."""
    summary = IngestSummary(fasta=manifest.fasta)
    fasta = load_fasta(manifest.fasta) if manifest.fasta else None
    rows: list[dict] = []
    for entry in manifest.entries:
        try:
            record = extract_raw(entry.fast5, entry.read_id)
        except OSError as exc:
            summary.skip(entry.read_id, f"unreadable container: {exc}")
            continue
        if record is None:
            summary.skip(entry.read_id, "read_id not found in container")
            continue
        bases, q_score, reason = _resolve_bases(entry, record, fasta)
        if reason is not None:
            summary.skip(entry.read_id, reason)
            continue
        bad = set(bases) - _VALID_BASES
        if bad:
            summary.skip(entry.read_id, f"invalid bases {sorted(bad)}")
            continue
        try:
            signal = normalize_signal(record.signal)
        except ValueError as exc:
            summary.skip(entry.read_id, f"unusable signal: {exc}")
            continue
        obj = {
            "read_id": entry.read_id,
            "channel_id": record.channel_id,
            "bases": bases,
            "signal": [float(v) for v in signal],
        }
        if q_score is not None:
            obj["q_score"] = q_score
        rows.append(obj)
        summary.ingested += 1
        if record.scaled:
            summary.scaled_to_pa += 1
        else:
            summary.unscaled += 1

    meta = {
        "tool": "fast5-ingest",
        "normalization": "med-MAD",
        "summary": summary.as_dict(),
    }
    with open(manifest.output, "w", encoding="utf-8") as fh:
        fh.write(json.dumps({"_meta": meta}, sort_keys=True) + "\n")
        for obj in rows:
            fh.write(json.dumps(obj, sort_keys=True) + "\n")
    return summary


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="fast5-ingest",
        description="Convert FAST5 raw reads into a normalized JSONL dataset.",
    )
    parser.add_argument("manifest", help="JSON manifest path")
    args = parser.parse_args(argv)
    try:
        manifest = load_manifest(args.manifest)
        summary = ingest(manifest)
    except (ManifestError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(json.dumps(summary.as_dict(), sort_keys=True, indent=2))
    return 0


if __name__ == "__main__":
    sys.exit(main())

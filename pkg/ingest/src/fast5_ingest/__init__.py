"""FAST5 to JSONL dataset converter with med-MAD normalization."""
from .ingest import (
    IngestEntry,
    IngestManifest,
    IngestSummary,
    ManifestError,
    extract_raw,
    ingest,
    load_fasta,
    load_manifest,
    normalize_signal,
)

__version__ = "0.1.0"

__all__ = [
    "IngestEntry",
    "IngestManifest",
    "IngestSummary",
    "ManifestError",
    "extract_raw",
    "ingest",
    "load_fasta",
    "load_manifest",
    "normalize_signal",
    "__version__",
]

"""Noisy nanopore channel simulation, segmentation, decoding and rate estimation."""

__version__ = "0.1.0"

from .channel import (
    NncParams,
    Segmentation,
    SimulatedRead,
    enumerate_segmentations,
    log_likelihood_bruteforce,
    sample_durations,
    simulate_read,
    stretch,
)
from .dataset_io import Read, iter_dataset, normalize_signal, read_dataset, write_dataset
from .decoder import DecodeOutput, conditional_forward, forward, log_app, lse
from .dtw import Block, DtwResult, chop_blocks, dtw_align, normalized_dtw
from .pore_model import PoreModel, StateSpace, load_pore_model, synth_pore_model
from .rates import (
    BlockResult,
    FilterConstraints,
    OutageCurve,
    RatePolicy,
    RateReport,
    estimate_mean_duration,
    estimate_rate,
    filter_outlier_blocks,
    filter_reads,
    info_density,
    outage_curve,
    rate_loss_bound,
)

__all__ = [name for name in dir() if not name.startswith("_")]

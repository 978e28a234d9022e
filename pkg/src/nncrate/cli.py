"""Operator surface: one multiplexed command with subcommands.

All logic lives in the library; the CLI parses flags, wires files and
embeds the effective configuration into every output artifact.  Exit
codes: 0 success, 1 input error, 2 infeasibility.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__, channel, dataset_io, decoder, dtw, pore_model, rates

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_INFEASIBLE = 2


class InfeasibleInputError(RuntimeError):
    """Valid input on which the requested computation is impossible."""


@dataclass
class RunConfig:
    """Effective configuration; defaults follow the reference operating point."""

    pore_model_path: Optional[str] = None
    tau: int = 5
    model_seed: int = 0
    dataset_path: Optional[str] = None
    m: int = 100
    sigma: float = 0.5
    mean_duration: float = 10.0
    seed: int = 0
    reads: int = 10
    bases: int = 1000
    channels: int = 1
    transition_weights: str = "full"
    outlier_threshold: float = 0.35
    band_width: Optional[float] = None
    threads: Optional[int] = None
    min_bases: int = 8000
    max_bases: int = 12000
    typicality: float = 0.01
    max_duration: float = 20.0
    no_filter: bool = False
    format: str = "json"

    def provenance(self, subcommand: str) -> dict:
        return {
            "tool": "nncrate",
            "version": __version__,
            "subcommand": subcommand,
            "config": dataclasses.asdict(self),
        }


def _load_config(args: argparse.Namespace) -> RunConfig:
    """Precedence: flags > config file > defaults."""
    cfg = RunConfig()
    if getattr(args, "config", None):
        with open(args.config, "r", encoding="utf-8") as fh:
            file_cfg = json.load(fh)
        for key, value in file_cfg.items():
            if not hasattr(cfg, key):
                raise ValueError(f"unknown config key {key!r}")
            setattr(cfg, key, value)
    for field in dataclasses.fields(RunConfig):
        value = getattr(args, field.name, None)
        if value is not None:
            setattr(cfg, field.name, value)
    return cfg


def _model_from_config(cfg: RunConfig) -> pore_model.PoreModel:
    if cfg.pore_model_path:
        return pore_model.load_pore_model(cfg.pore_model_path)
    return pore_model.synth_pore_model(cfg.tau, cfg.model_seed)


def _read_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence((seed, index)))


def _write_jsonl(path, meta: dict, rows) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps({"_meta": meta}, sort_keys=True) + "\n")
        for row in rows:
            fh.write(json.dumps(row, sort_keys=True) + "\n")


def _write_csv(path, meta: dict, header: list[str], rows) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# nncrate {__version__}\n")
        fh.write(f"# {json.dumps(meta, sort_keys=True)}\n")
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(str(v) for v in row) + "\n")


def _log(message: str) -> None:
    print(message, file=sys.stderr)


def cmd_simulate(cfg: RunConfig, args) -> int:
    model = _model_from_config(cfg)
    params = channel.NncParams(mean_duration=cfg.mean_duration, sigma=cfg.sigma)
    reads = []
    for i in range(cfg.reads):
        rng = _read_rng(cfg.seed, i)
        bases = pore_model.random_bases(cfg.bases, rng)
        sim = channel.simulate_read(model, bases, params, rng)
        reads.append(
            dataset_io.Read(
                read_id=f"sim-{i:04d}",
                channel_id=i % cfg.channels,
                bases=bases,
                signal=sim.signal,
                truth_jump_times=sim.truth.jump_times,
            )
        )
    dataset_io.write_dataset(reads, args.out, meta=cfg.provenance("simulate"))
    _log(f"wrote {len(reads)} simulated reads to {args.out}")
    return EXIT_OK


def cmd_filter(cfg: RunConfig, args) -> int:
    model = _model_from_config(cfg)
    reads = dataset_io.read_dataset(cfg.dataset_path)
    constraints = rates.FilterConstraints(
        min_bases=cfg.min_bases,
        max_bases=cfg.max_bases,
        typicality=cfg.typicality,
        max_mean_duration=cfg.max_duration,
    )
    retained, rejected = rates.filter_reads(reads, constraints, tau=model.tau)
    dataset_io.write_dataset(retained, args.out, meta=cfg.provenance("filter"))
    summary = {
        "_meta": cfg.provenance("filter"),
        "retained": len(retained),
        "rejected": [{"read_id": rid, "reason": reason} for rid, reason in rejected],
    }
    print(json.dumps(summary, sort_keys=True, indent=2))
    return EXIT_OK


def _dataset_blocks(cfg: RunConfig, model: pore_model.PoreModel):
    """Yield per-read segmentations and chopped blocks for segment/decode."""
    for read in dataset_io.iter_dataset(cfg.dataset_path):
        states = model.state_space.states_from_bases(read.bases)
        duration = read.signal.size / states.size
        band = cfg.band_width
        if band is None and states.size > rates.BAND_THRESHOLD_STATES:
            band = dtw.auto_band_width(states.size, duration)
        result = dtw.dtw_align(model.levels_for(states), read.signal, band_width=band)
        yield read, states, duration, result


def cmd_segment(cfg: RunConfig, args) -> int:
    model = _model_from_config(cfg)
    rows = []
    block_rows = []
    for read, states, duration, result in _dataset_blocks(cfg, model):
        rows.append(
            {
                "read_id": read.read_id,
                "jump_times": [int(t) for t in result.segmentation.jump_times],
                "dtw_distance": result.distance,
                "sigma_dtw": result.normalized,
            }
        )
        if args.blocks_out:
            blocks = dtw.chop_blocks(
                model, states, read.signal, cfg.m,
                segmentation=result.segmentation, read_id=read.read_id,
            )
            for block in blocks:
                block_rows.append(
                    {
                        "read_id": read.read_id,
                        "channel_id": read.channel_id,
                        "block_index": block.block_index,
                        "initial_state": block.initial_state,
                        "states": [int(s) for s in block.states],
                        "signal": [float(v) for v in block.signal],
                        "mean_duration": duration,
                    }
                )
    _write_jsonl(args.out, cfg.provenance("segment"), rows)
    _log(f"wrote {len(rows)} segmentations to {args.out}")
    if args.blocks_out:
        _write_jsonl(args.blocks_out, cfg.provenance("segment"), block_rows)
        _log(f"wrote {len(block_rows)} blocks to {args.blocks_out}")
    return EXIT_OK


def cmd_decode(cfg: RunConfig, args) -> int:
    model = _model_from_config(cfg)
    rows = []
    with open(args.blocks, "r", encoding="utf-8") as fh:
        for line in fh:
            obj = json.loads(line)
            if "_meta" in obj:
                continue
            states = np.asarray(obj["states"], dtype=np.int64)
            signal = np.asarray(obj["signal"], dtype=np.float64)
            params = channel.NncParams(
                mean_duration=obj.get("mean_duration", cfg.mean_duration),
                sigma=cfg.sigma,
            )
            out = decoder.log_app(
                model, params, states, signal, int(obj["initial_state"]),
                mode=cfg.transition_weights,
            )
            rows.append(
                {
                    "read_id": obj["read_id"],
                    "block_index": obj["block_index"],
                    "log_app": out.log_app,
                    "m": int(states.size),
                    "t": int(signal.size),
                }
            )
    _write_jsonl(args.out, cfg.provenance("decode"), rows)
    _log(f"decoded {len(rows)} blocks to {args.out}")
    return EXIT_OK


def _run_rate(cfg: RunConfig) -> tuple[rates.RateReport, list[rates.BlockResult]]:
    model = _model_from_config(cfg)
    reads = dataset_io.read_dataset(cfg.dataset_path)
    if not cfg.no_filter:
        constraints = rates.FilterConstraints(
            min_bases=cfg.min_bases,
            max_bases=cfg.max_bases,
            typicality=cfg.typicality,
            max_mean_duration=cfg.max_duration,
        )
        reads, rejected = rates.filter_reads(reads, constraints, tau=model.tau)
        for rid, reason in rejected:
            _log(f"rejected {rid}: {reason}")
    if not reads:
        raise InfeasibleInputError("no reads retained")
    policy = rates.RatePolicy(
        sigma=cfg.sigma,
        transition_weights=cfg.transition_weights,
        outlier_threshold=cfg.outlier_threshold,
        band_width=cfg.band_width,
        threads=cfg.threads,
    )
    return rates.estimate_rate(reads, model, policy, cfg.m)


def _report_to_dict(report: rates.RateReport) -> dict:
    obj = dataclasses.asdict(report)
    obj["per_channel"] = {
        str(cid): dataclasses.asdict(summary)
        for cid, summary in report.per_channel.items()
    }
    return obj


_BLOCK_CSV_HEADER = [
    "read_id", "channel_id", "block_index", "m", "t",
    "log_app", "info_density_bits_per_base", "sigma_dtw",
]


def cmd_rate(cfg: RunConfig, args) -> int:
    report, blocks = _run_rate(cfg)
    payload = {"_meta": cfg.provenance("rate"), **_report_to_dict(report)}
    text = json.dumps(payload, sort_keys=True, indent=2)
    if args.report:
        Path(args.report).write_text(text + "\n", encoding="utf-8")
        _log(f"wrote report to {args.report}")
    else:
        print(text)
    if args.blocks_csv:
        _write_csv(
            args.blocks_csv,
            cfg.provenance("rate"),
            _BLOCK_CSV_HEADER,
            (
                (b.read_id, b.channel_id, b.block_index, b.m, b.t,
                 repr(b.log_app), repr(b.info_density), repr(b.sigma_dtw))
                for b in blocks
            ),
        )
        _log(f"wrote {len(blocks)} block results to {args.blocks_csv}")
    return EXIT_OK


def _load_blocks_csv(path) -> list[dict]:
    import csv

    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    for row in csv.DictReader(lines):
        rows.append(row)
    return rows


def cmd_outage(cfg: RunConfig, args) -> int:
    rows = _load_blocks_csv(args.blocks_csv)
    if not rows:
        raise InfeasibleInputError("no blocks in input CSV")
    densities = [float(r["info_density_bits_per_base"]) for r in rows]
    if args.gammas:
        thresholds = np.array([float(v) for v in args.gammas.split(",")])
    else:
        thresholds = np.linspace(args.gamma_min, args.gamma_max, args.gamma_steps)
    curve = rates.outage_curve(densities, thresholds)
    _write_csv(
        args.out,
        cfg.provenance("outage"),
        ["gamma", "p_outage"],
        ((repr(float(g)), repr(float(p)))
         for g, p in zip(curve.thresholds, curve.probabilities)),
    )
    _log(f"wrote outage curve to {args.out}")
    if args.svg:
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt

        fig, ax = plt.subplots(figsize=(6, 4))
        ax.plot(curve.thresholds, curve.probabilities)
        ax.set_xlabel("rate threshold [bits/base]")
        ax.set_ylabel("outage probability")
        ax.grid(True, alpha=0.3)
        fig.savefig(args.svg, format="svg", bbox_inches="tight")
        _log(f"wrote plot to {args.svg}")
    return EXIT_OK


def cmd_oracle(cfg: RunConfig, args) -> int:
    """Brute-force cross-checks of decoder and DTW on tiny instances."""
    from scipy.special import logsumexp

    rng = np.random.default_rng(cfg.seed)
    worst_decode = 0.0
    worst_dtw = 0.0
    for _ in range(args.fixtures):
        tau = int(rng.integers(1, 3))
        model = pore_model.PoreModel(
            pore_model.StateSpace(tau), rng.standard_normal(4 ** tau)
        )
        m = int(rng.integers(1, 5))
        t = int(rng.integers(m, 9))
        params = channel.NncParams(
            mean_duration=float(rng.choice([1.5, 2.0, 5.0])),
            sigma=float(rng.choice([0.3, 0.5, 1.0])),
        )
        bases = pore_model.random_bases(m + tau - 1, rng)
        states = model.state_space.states_from_bases(bases)
        y = rng.standard_normal(t)
        x = model.levels_for(states)

        log_c = channel.log_norm_constant(params, m, t)
        brute = channel.log_likelihood_bruteforce(params, x, y)
        cond = decoder.conditional_forward(model, params, states, y, mode="uniform")
        worst_decode = max(worst_decode, abs(cond - (brute - log_c)))

        q = int(rng.choice(model.state_space.predecessors(int(states[0]))))
        fwd = decoder.forward(model, params, q, y, m, mode="uniform")
        per_path = []
        for s in _all_paths(model.state_space, q, m):
            lv = model.levels_for(np.asarray(s))
            per_path.append(
                channel.log_likelihood_bruteforce(params, lv, y) - log_c
            )
        worst_decode = max(worst_decode, abs(fwd - float(logsumexp(per_path))))

        best = min(
            float(np.sum((y - channel.stretch(x, seg.durations)) ** 2))
            for seg in channel.enumerate_segmentations(m, t)
        )
        worst_dtw = max(worst_dtw, abs(dtw.dtw_align(x, y).distance - best))

    print(json.dumps(
        {"fixtures": args.fixtures,
         "max_decoder_error": worst_decode,
         "max_dtw_error": worst_dtw},
        sort_keys=True,
    ))
    ok = worst_decode <= 1e-9 and worst_dtw <= 1e-9
    return EXIT_OK if ok else EXIT_INPUT


def _all_paths(space: pore_model.StateSpace, q: int, m: int):
    if m == 0:
        yield []
        return
    for s in space.successors(q):
        for rest in _all_paths(space, int(s), m - 1):
            yield [int(s)] + rest


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nncrate",
        description="Noisy nanopore channel simulation, segmentation, decoding "
                    "and achievable-rate estimation.",
    )
    parser.add_argument("--version", action="version", version=f"nncrate {__version__}")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    def add_common(p):
        p.add_argument("--config", help="JSON config file (flags take precedence)")
        p.add_argument("--pore-model", dest="pore_model_path", help="pore-model TSV path")
        p.add_argument("--tau", type=int, help="memory length for a synthetic model")
        p.add_argument("--model-seed", dest="model_seed", type=int,
                       help="seed for the synthetic level table")
        p.add_argument("--m", type=int, help="block size in states (default 100)")
        p.add_argument("--sigma", type=float, help="decoding noise level (default 0.5)")
        p.add_argument("--seed", type=int, help="master RNG seed")
        p.add_argument("--transition-weights", dest="transition_weights",
                       choices=decoder.MODES, help="trellis weight mode (default full)")
        p.add_argument("--band-width", dest="band_width", type=float,
                       help="DTW band width (default: exact, auto for long reads)")
        p.add_argument("--threads", type=int, help="decoding worker count")

    p = sub.add_parser("simulate", help="generate a synthetic dataset")
    add_common(p)
    p.add_argument("--reads", type=int, help="number of reads")
    p.add_argument("--bases", type=int, help="bases per read")
    p.add_argument("--mean-duration", dest="mean_duration", type=float,
                   help="E[K], samples per state")
    p.add_argument("--channels", type=int, help="number of flowcell channels to spread over")
    p.add_argument("--out", required=True, help="output dataset JSONL")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("filter", help="apply dataset admission constraints")
    add_common(p)
    p.add_argument("--in", dest="dataset_path", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--min-bases", dest="min_bases", type=int)
    p.add_argument("--max-bases", dest="max_bases", type=int)
    p.add_argument("--typicality", type=float)
    p.add_argument("--max-duration", dest="max_duration", type=float)
    p.set_defaults(func=cmd_filter)

    p = sub.add_parser("segment", help="DTW-align reads, optionally emit blocks")
    add_common(p)
    p.add_argument("--in", dest="dataset_path", required=True)
    p.add_argument("--out", required=True, help="segmentations JSONL")
    p.add_argument("--blocks-out", dest="blocks_out", help="chopped blocks JSONL")
    p.set_defaults(func=cmd_segment)

    p = sub.add_parser("decode", help="per-block log-APP from a blocks JSONL")
    add_common(p)
    p.add_argument("--blocks", required=True, help="blocks JSONL from `segment --blocks-out`")
    p.add_argument("--mean-duration", dest="mean_duration", type=float,
                   help="fallback E[K] for blocks without one")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("rate", help="full achievable-rate pipeline")
    add_common(p)
    p.add_argument("--in", dest="dataset_path", required=True)
    p.add_argument("--report", help="report JSON path (default: stdout)")
    p.add_argument("--blocks-csv", dest="blocks_csv", help="per-block results CSV")
    p.add_argument("--outlier-threshold", dest="outlier_threshold", type=float)
    p.add_argument("--min-bases", dest="min_bases", type=int)
    p.add_argument("--max-bases", dest="max_bases", type=int)
    p.add_argument("--typicality", type=float)
    p.add_argument("--max-duration", dest="max_duration", type=float)
    p.add_argument("--no-filter", dest="no_filter", action="store_const", const=True,
                   help="skip dataset admission constraints")
    p.set_defaults(func=cmd_rate)

    p = sub.add_parser("outage", help="outage curve from a per-block CSV")
    add_common(p)
    p.add_argument("--blocks-csv", dest="blocks_csv", required=True)
    p.add_argument("--out", required=True, help="output CSV (gamma, p_outage)")
    p.add_argument("--gammas", help="comma-separated thresholds")
    p.add_argument("--gamma-min", dest="gamma_min", type=float, default=-1.0)
    p.add_argument("--gamma-max", dest="gamma_max", type=float, default=2.0)
    p.add_argument("--gamma-steps", dest="gamma_steps", type=int, default=61)
    p.add_argument("--svg", help="optional SVG plot path")
    p.set_defaults(func=cmd_outage)

    p = sub.add_parser("oracle", help="brute-force cross-checks on tiny instances")
    add_common(p)
    p.add_argument("--fixtures", type=int, default=25)
    p.set_defaults(func=cmd_oracle)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = _load_config(args)
        return args.func(cfg, args)
    except InfeasibleInputError as exc:
        _log(f"error: {exc}")
        return EXIT_INFEASIBLE
    except (dtw.InfeasibleAlignmentError, channel.CapacityError) as exc:
        _log(f"error: {exc}")
        return EXIT_INFEASIBLE
    except (ValueError, OSError, json.JSONDecodeError) as exc:
        _log(f"error: {exc}")
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())

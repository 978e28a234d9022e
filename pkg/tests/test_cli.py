import json

import numpy as np
import pytest

from nncrate import cli
from nncrate.dataset_io import read_dataset, read_dataset_meta
from nncrate.pore_model import synth_pore_model
from nncrate.rates import RatePolicy, estimate_rate


def _simulate(tmp_path, name="data.jsonl", reads=3, bases=102, sigma=0.2,
              duration=3.0, seed=7, extra=()):
    out = tmp_path / name
    rc = cli.main([
        "simulate", "--tau", "2", "--model-seed", "0",
        "--reads", str(reads), "--bases", str(bases),
        "--sigma", str(sigma), "--mean-duration", str(duration),
        "--seed", str(seed), "--out", str(out), *extra,
    ])
    assert rc == 0
    return out


def test_simulate_deterministic(tmp_path):
    a = _simulate(tmp_path, "a.jsonl")
    b = _simulate(tmp_path, "b.jsonl")
    assert a.read_bytes() == b.read_bytes()


def test_simulate_seed_changes_output(tmp_path):
    a = _simulate(tmp_path, "a.jsonl", seed=7)
    b = _simulate(tmp_path, "b.jsonl", seed=8)
    assert a.read_bytes() != b.read_bytes()


def test_simulate_provenance_header(tmp_path):
    path = _simulate(tmp_path)
    meta = read_dataset_meta(path)
    assert meta["tool"] == "nncrate"
    assert meta["subcommand"] == "simulate"
    assert meta["config"]["sigma"] == 0.2


def test_rate_exits_2_when_no_reads_pass_filter(tmp_path, capsys):
    data = _simulate(tmp_path)  # 102-base reads fail the length constraint
    rc = cli.main(["rate", "--tau", "2", "--in", str(data), "--m", "10"])
    assert rc == 2
    assert "no reads retained" in capsys.readouterr().err


def test_rate_matches_library_bit_exact(tmp_path):
    data = _simulate(tmp_path, reads=4)
    report_path = tmp_path / "report.json"
    rc = cli.main([
        "rate", "--tau", "2", "--model-seed", "0", "--in", str(data),
        "--m", "10", "--sigma", "0.2", "--threads", "1", "--no-filter",
        "--report", str(report_path),
    ])
    assert rc == 0
    report = json.loads(report_path.read_text())

    model = synth_pore_model(2, seed=0)
    reads = read_dataset(data)
    lib_report, _ = estimate_rate(reads, model, RatePolicy(sigma=0.2, threads=1), 10)
    assert report["pooled_rate"] == lib_report.pooled_rate
    assert report["total_blocks"] == lib_report.total_blocks
    assert report["_meta"]["subcommand"] == "rate"


def test_segment_then_decode_pipeline(tmp_path):
    data = _simulate(tmp_path, reads=2)
    seg = tmp_path / "seg.jsonl"
    blocks = tmp_path / "blocks.jsonl"
    rc = cli.main([
        "segment", "--tau", "2", "--in", str(data), "--m", "10",
        "--out", str(seg), "--blocks-out", str(blocks),
    ])
    assert rc == 0
    seg_rows = [json.loads(l) for l in seg.read_text().splitlines()]
    assert "_meta" in seg_rows[0]
    for row in seg_rows[1:]:
        jt = row["jump_times"]
        assert all(a < b for a, b in zip(jt, jt[1:]))
        assert row["sigma_dtw"] < 0.2  # lower bound on the generating sigma

    decoded = tmp_path / "decoded.jsonl"
    rc = cli.main([
        "decode", "--tau", "2", "--blocks", str(blocks),
        "--sigma", "0.2", "--out", str(decoded),
    ])
    assert rc == 0
    rows = [json.loads(l) for l in decoded.read_text().splitlines()][1:]
    assert len(rows) == 2 * 10  # 101 states per read, m=10
    assert all(r["log_app"] <= 1e-9 for r in rows)
    assert all(r["m"] == 10 for r in rows)


def test_filter_writes_summary(tmp_path, capsys):
    data = _simulate(tmp_path)
    out = tmp_path / "kept.jsonl"
    rc = cli.main(["filter", "--tau", "2", "--in", str(data), "--out", str(out)])
    assert rc == 0
    summary = json.loads(capsys.readouterr().out)
    assert summary["retained"] == 0
    assert len(summary["rejected"]) == 3
    assert all("length" in r["reason"] for r in summary["rejected"])


def test_rate_blocks_csv_then_outage(tmp_path):
    data = _simulate(tmp_path, reads=3)
    csv_path = tmp_path / "blocks.csv"
    rc = cli.main([
        "rate", "--tau", "2", "--in", str(data), "--m", "10", "--sigma", "0.2",
        "--threads", "1", "--no-filter", "--report", str(tmp_path / "r.json"),
        "--blocks-csv", str(csv_path),
    ])
    assert rc == 0
    lines = csv_path.read_text().splitlines()
    assert lines[2].split(",")[0] == "read_id"
    assert len(lines) == 3 + 30  # two comment lines, header, 3 reads x 10 blocks

    out = tmp_path / "outage.csv"
    rc = cli.main([
        "outage", "--blocks-csv", str(csv_path), "--out", str(out),
        "--gammas", "0.0,1.0,2.0",
    ])
    assert rc == 0
    rows = [l.split(",") for l in out.read_text().splitlines()
            if not l.startswith("#")][1:]
    probs = [float(p) for _, p in rows]
    assert probs == sorted(probs)
    assert probs[-1] == 1.0  # info density never exceeds 2 bits/base


def test_outage_empty_csv_exits_2(tmp_path, capsys):
    csv_path = tmp_path / "empty.csv"
    csv_path.write_text("read_id,info_density_bits_per_base\n")
    rc = cli.main(["outage", "--blocks-csv", str(csv_path),
                   "--out", str(tmp_path / "o.csv")])
    assert rc == 2


def test_oracle_smoke():
    assert cli.main(["oracle", "--fixtures", "10", "--seed", "3"]) == 0


def test_config_file_and_flag_precedence(tmp_path):
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps({"sigma": 0.9, "m": 25}))
    out = tmp_path / "d.jsonl"
    rc = cli.main([
        "simulate", "--config", str(cfg_path), "--tau", "2", "--sigma", "0.3",
        "--reads", "1", "--bases", "50", "--mean-duration", "2",
        "--out", str(out),
    ])
    assert rc == 0
    meta = read_dataset_meta(out)
    assert meta["config"]["sigma"] == 0.3  # flag beats config file
    assert meta["config"]["m"] == 25  # config file beats default


def test_unknown_config_key_exits_1(tmp_path, capsys):
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps({"sgima": 0.9}))
    rc = cli.main(["simulate", "--config", str(cfg_path), "--tau", "2",
                   "--reads", "1", "--bases", "50",
                   "--out", str(tmp_path / "d.jsonl")])
    assert rc == 1
    assert "sgima" in capsys.readouterr().err


def test_missing_dataset_exits_1(tmp_path, capsys):
    rc = cli.main(["rate", "--tau", "2", "--in", str(tmp_path / "nope.jsonl"),
                   "--m", "10"])
    assert rc == 1

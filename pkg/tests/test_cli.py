from __future__ import annotations

import csv

import numpy as np
import pytest

from delayhet import delays, engine
from delayhet.cli import ROUND_COLUMNS, SUMMARY_COLUMNS, main, median_time, time_to_target

MINIMAL = """\
schema_version: 1
dataset: {type: quadratic, m: 5, n: 10, d: 3}
delay: {type: synthetic, lognormal_sigma: 0.3}
selector: {type: random, K: 2}
engine: {max_rounds: 20, target_value: 0.01}
seeds: [0]
"""


def write(path, text):
    path.write_text(text)
    return str(path)


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_minimal_run_writes_round_csv_and_summary(tmp_path):
    cfg = write(tmp_path / "c.yaml", MINIMAL)
    assert main(["run", "--config", cfg, "--out", str(tmp_path / "out")]) == 0
    files = sorted(p.name for p in (tmp_path / "out").iterdir())
    assert files == ["random__seed0.csv", "summary.csv"]
    rows = read_rows(tmp_path / "out" / "random__seed0.csv")
    assert tuple(rows[0]) == ROUND_COLUMNS
    rounds = [int(r[0]) for r in rows[1:]]
    clock = [float(r[1]) for r in rows[1:]]
    assert rounds == list(range(len(rounds)))
    assert all(b > a for a, b in zip(clock[1:], clock[2:]))
    assert rows[1][3] == ""
    for r in rows[2:]:
        ids = [int(x) for x in r[3].split(";")]
        assert ids == sorted(ids) and len(ids) == 2 and all(1 <= i <= 5 for i in ids)
    summary = read_rows(tmp_path / "out" / "summary.csv")
    assert tuple(summary[0]) == SUMMARY_COLUMNS
    assert summary[1][:3] == ["random", "0", "ok"]


def test_summary_matches_round_csv(tmp_path):
    cfg = write(tmp_path / "c.yaml", MINIMAL)
    main(["run", "--config", cfg, "--out", str(tmp_path / "out")])
    summary = dict(zip(SUMMARY_COLUMNS, read_rows(tmp_path / "out" / "summary.csv")[1]))
    derived = time_to_target(tmp_path / "out" / "random__seed0.csv", 0.01)
    assert summary["time_to_target_s"] == ("N/A" if derived is None else repr(derived))


def test_reruns_are_byte_identical(tmp_path):
    cfg = write(tmp_path / "c.yaml", MINIMAL.replace("seeds: [0]", "seeds: [0, 1]"))
    for out in ("a", "b"):
        assert main(["run", "--config", cfg, "--out", str(tmp_path / out)]) == 0
    for name in ("random__seed0.csv", "random__seed1.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_parallel_jobs_match_serial(tmp_path):
    text = MINIMAL.replace("seeds: [0]", "seeds: [0, 1]").replace(
        "selector: {type: random, K: 2}", "selector: [{type: random, K: 2}, {type: flanp}]"
    )
    cfg = write(tmp_path / "c.yaml", text)
    assert main(["run", "--config", cfg, "--out", str(tmp_path / "s")]) == 0
    assert main(["run", "--config", cfg, "--out", str(tmp_path / "p"), "--jobs", "2"]) == 0
    for p in (tmp_path / "s").glob("*__seed*.csv"):
        assert p.read_bytes() == (tmp_path / "p" / p.name).read_bytes()


def test_k_above_m_fails_naming_selector(tmp_path, capsys):
    cfg = write(tmp_path / "c.yaml", MINIMAL.replace("K: 2", "K: 6"))
    assert main(["run", "--config", cfg, "--out", str(tmp_path / "out")]) != 0
    assert "selector (random): K=6 exceeds" in capsys.readouterr().err


def test_unknown_key_fails(tmp_path, capsys):
    cfg = write(tmp_path / "c.yaml", MINIMAL.replace("max_rounds: 20", "max_rounds: 20, momentum: 0.9"))
    assert main(["run", "--config", cfg, "--out", str(tmp_path / "out")]) != 0
    assert "momentum" in capsys.readouterr().err


def test_divergence_reported_without_aborting_siblings(tmp_path, monkeypatch, capsys):
    real_run = engine.run

    def flaky_run(prob, roster, model, selector, cfg, w0=None):
        res = real_run(prob, roster, model, selector, cfg, w0)
        if cfg.seed == 1:
            raise engine.DivergenceError(3, "global model diverged", res.records[:3])
        return res

    monkeypatch.setattr(engine, "run", flaky_run)
    cfg = write(tmp_path / "c.yaml", MINIMAL.replace("seeds: [0]", "seeds: [0, 1, 2]"))
    assert main(["run", "--config", cfg, "--out", str(tmp_path / "out")]) == 1
    status = {r[1]: r[2] for r in read_rows(tmp_path / "out" / "summary.csv")[1:]}
    assert status == {"0": "ok", "1": "diverged", "2": "ok"}
    assert len(read_rows(tmp_path / "out" / "random__seed1.csv")) == 4
    assert "random seed 1: diverged" in capsys.readouterr().err


def test_step_size_above_inverse_smoothness_fails_the_run(tmp_path):
    cfg = write(tmp_path / "c.yaml", MINIMAL.replace("max_rounds: 20", "max_rounds: 20, eta: 5.0"))
    assert main(["run", "--config", cfg, "--out", str(tmp_path / "out")]) == 1
    row = dict(zip(SUMMARY_COLUMNS, read_rows(tmp_path / "out" / "summary.csv")[1]))
    assert row["status"] == "failed" and "exceeds 1/L" in row["message"]


def fake_run(path, times, metrics):
    with open(path, "w") as fh:
        fh.write(",".join(ROUND_COLUMNS) + "\n")
        for r, (t, v) in enumerate(zip(times, metrics)):
            fh.write(f"{r},{t!r},1.0,,{v!r},{v!r}\n")


def test_report_exact_time_na_and_median(tmp_path, capsys):
    fake_run(tmp_path / "fast__seed0.csv", [0.0, 10.0, 20.0], [5.0, 0.9, 0.1])
    fake_run(tmp_path / "fast__seed1.csv", [0.0, 20.0, 40.0], [5.0, 0.9, 0.1])
    fake_run(tmp_path / "fast__seed2.csv", [0.0, 30.0, 60.0], [5.0, 0.9, 0.1])
    fake_run(tmp_path / "slow__seed0.csv", [0.0, 12.5], [5.0, 3.0])
    assert main(["report", "--runs", str(tmp_path), "--target", "1.0"]) == 0
    rows = read_rows(tmp_path / "report.csv")
    assert rows[0] == ["selector", "seed", "time_to_target_s"]
    got = {(r[0], r[1]): r[2] for r in rows[1:]}
    assert got[("fast", "0")] == "10.0"
    assert got[("fast", "median")] == "20.0"
    assert got[("slow", "0")] == "N/A" and got[("slow", "median")] == "N/A"
    out = capsys.readouterr().out
    assert "fast" in out and "N/A" in out


def test_report_empty_or_missing_dir(tmp_path):
    assert main(["report", "--runs", str(tmp_path), "--target", "1"]) != 0
    assert main(["report", "--runs", str(tmp_path / "none"), "--target", "1"]) != 0


def test_median_time_convention():
    assert median_time([10.0, 20.0, 30.0]) == 20.0
    assert median_time([10.0, None, 30.0]) == 30.0
    assert median_time([10.0, None, None]) is None
    assert median_time([10.0, 20.0]) == 15.0
    assert median_time([]) is None


def test_traces_synth(tmp_path):
    out = tmp_path / "trace.csv"
    assert main(["traces", "synth", "--m", "7", "--out", str(out), "--seed", "3"]) == 0
    means, sigma = delays.read_trace(out)
    assert np.array_equal(means, delays.synth_long_tail_means(7, 3)) and sigma is None
    assert main(["traces", "synth", "--m", "4", "--out", str(out), "--sigma", "0.5"]) == 0
    assert delays.read_trace(out)[1].tolist() == [0.5] * 4
    assert main(["traces", "synth", "--m", "0", "--out", str(out)]) != 0


def test_bad_usage_exits_nonzero():
    with pytest.raises(SystemExit) as info:
        main(["run"])
    assert info.value.code != 0

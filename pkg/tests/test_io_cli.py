import json

import numpy as np
import pytest
from scipy import stats

from fmosum.cli import EXIT_COMPUTE, EXIT_INGEST, EXIT_OK, EXIT_USAGE, main, parse_range, resolve_config
from fmosum.distrib import DistSeq, ProbGrid
from fmosum.io import IngestError, ingest_raw, read_quantile_csv, write_quantile_csv

from conftest import random_quantiles


def write_raw(path, rows, header=("day", "value")):
    lines = [",".join(header)] + [f"{d},{v!r}" for d, v in rows]
    path.write_text("\n".join(lines) + "\n")


# -- quantile CSV -----------------------------------------------------------------


@pytest.mark.parametrize("labels", [None, np.array([3, 8, 20, 21])])
def test_quantile_csv_round_trip(tmp_path, labels):
    grid = ProbGrid.uniform(31)
    seq = DistSeq(grid, random_quantiles(np.random.default_rng(0), 4, 31, scale=1e3), labels)
    write_quantile_csv(seq, tmp_path / "q.csv")
    back = read_quantile_csv(tmp_path / "q.csv")
    assert np.max(np.abs(back.values - seq.values)) <= 1e-12
    assert np.array_equal(back.grid.points, grid.points)
    if labels is None:
        assert back.time_labels is None
    else:
        assert np.array_equal(back.time_labels, labels)


@pytest.mark.parametrize(
    "text",
    [
        "0,0.5,1\n0,1\n",
        "0,0.5,1\n0,x,1\n",
        "0,0.5,1\n1,0,2\n",
        "0,0.5,1\n",
        "0,0.7,0.5\n0,1,2\n",
    ],
)
def test_quantile_csv_rejects_malformed_files(tmp_path, text):
    (tmp_path / "bad.csv").write_text(text)
    with pytest.raises(IngestError):
        read_quantile_csv(tmp_path / "bad.csv")


def test_malformed_row_reports_its_line(tmp_path):
    (tmp_path / "bad.csv").write_text("# comment\n0,0.5,1\n0,1,2\n0,oops,2\n")
    with pytest.raises(IngestError, match="line 4"):
        read_quantile_csv(tmp_path / "bad.csv")


# -- raw ingestion ------------------------------------------------------------------


def test_raw_identical_values_give_constant_quantiles(tmp_path):
    rows = [(d, 0.25 * d) for d in (1, 2, 3) for _ in range(100)]
    write_raw(tmp_path / "raw.csv", rows)
    seq = ingest_raw(tmp_path / "raw.csv", ProbGrid.uniform(11), "SQI")
    assert seq.n == 3 and list(seq.time_labels) == [1, 2, 3]
    for d in range(3):
        assert np.all(seq.values[d] == 0.25 * (d + 1))


def test_raw_ingest_is_row_order_independent(tmp_path):
    rng = np.random.default_rng(1)
    rows = [(d, float(x)) for d in (5, 9, 12) for x in rng.normal(d, 1.0, 50)]
    write_raw(tmp_path / "a.csv", rows)
    write_raw(tmp_path / "b.csv", [rows[i] for i in rng.permutation(len(rows))])
    for strategy, grid in (("SQI", ProbGrid.uniform(21)), ("KSE", ProbGrid.open(21))):
        a = ingest_raw(tmp_path / "a.csv", grid, strategy)
        b = ingest_raw(tmp_path / "b.csv", grid, strategy)
        assert np.array_equal(a.values, b.values)
        assert np.array_equal(a.time_labels, b.time_labels)


def test_raw_ingest_recovers_daily_medians(tmp_path):
    rng = np.random.default_rng(2)
    centres = {1: -1.0, 2: 0.5, 3: 2.0, 4: 0.0}
    rows = [(d, float(x)) for d, m in centres.items() for x in rng.normal(m, 0.5, 2000)]
    write_raw(tmp_path / "raw.csv", rows)
    grid = ProbGrid.open(101)
    seq = ingest_raw(tmp_path / "raw.csv", grid, "KSE")
    mid = np.argmin(np.abs(grid.points - 0.5))
    assert np.max(np.abs(seq.values[:, mid] - np.array(list(centres.values())))) <= 0.05


def test_raw_ingest_accepts_iso_dates(tmp_path):
    rows = [("2024-03-01", 1.0), ("2024-03-01", 2.0), ("2024-02-28", 3.0), ("2024-02-28", 4.0)]
    write_raw(tmp_path / "raw.csv", rows)
    seq = ingest_raw(tmp_path / "raw.csv", ProbGrid.uniform(5), "SQI")
    assert seq.values[0, 0] == 3.0
    assert seq.time_labels[1] - seq.time_labels[0] == 2


def test_raw_ingest_errors(tmp_path):
    write_raw(tmp_path / "raw.csv", [(1, 1.0), (1, "nan")])
    with pytest.raises(IngestError, match="line 3"):
        ingest_raw(tmp_path / "raw.csv", ProbGrid.uniform(5), "SQI")
    write_raw(tmp_path / "raw.csv", [(1, 1.0)], header=("t", "value"))
    with pytest.raises(IngestError):
        ingest_raw(tmp_path / "raw.csv", ProbGrid.uniform(5), "SQI")
    write_raw(tmp_path / "raw.csv", [(1, 2.0), (1, 2.0)])
    with pytest.raises(IngestError, match="day 1"):
        ingest_raw(tmp_path / "raw.csv", ProbGrid.open(5), "KSE")


# -- configuration -------------------------------------------------------------------


def test_parse_range():
    assert parse_range("30:80:2") == tuple(range(30, 82, 2))
    assert parse_range("40") == (40,)
    with pytest.raises(Exception):
        parse_range("80:30:2")


def test_flags_override_config_file(tmp_path):
    (tmp_path / "run.cfg").write_text("# defaults\nbandwidth = 50\nalpha = 0.1\ng_grid = 30:40:5\n")
    cfg = resolve_config(["detect", "x.csv", "--config", str(tmp_path / "run.cfg"), "--alpha", "0.01"])
    assert cfg.bandwidth == 50 and cfg.alpha == 0.01
    assert cfg.g_grid == (30, 35, 40)


@pytest.mark.parametrize(
    "argv",
    [
        ["detect", "x.csv", "--alpha", "1.5"],
        ["detect", "x.csv", "--bandwidth", "0"],
        ["detect", "x.csv", "--grid-size", "2"],
        ["frobnicate"],
        ["detect"],
    ],
)
def test_invalid_configuration_exits_with_usage_code(argv, capsys):
    assert main(argv) == EXIT_USAGE


# -- commands ------------------------------------------------------------------------


def test_detect_constant_sequence_reports_no_change(tmp_path):
    grid = ProbGrid.uniform(21)
    write_quantile_csv(DistSeq(grid, np.tile(grid.points, (200, 1))), tmp_path / "c.csv")
    out = tmp_path / "out.json"
    assert main(["detect", str(tmp_path / "c.csv"), "-G", "20", "-o", str(out)]) == EXIT_OK
    rec = json.loads(out.read_text())
    assert rec["change_points"] == []
    assert list(rec)[:7] == ["n", "G", "alpha", "epsilon", "threshold", "profile", "change_points"]
    assert rec["config"]["bandwidth"] == 20


def test_simulate_is_byte_identical(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    for p in (a, b):
        assert main(["simulate", "--dgp", "1", "--seed", "7", "--grid-size", "51", "-o", str(p)]) == EXIT_OK
    assert a.read_bytes() == b.read_bytes()
    truth = json.loads((tmp_path / "a.csv.truth.json").read_text())
    assert truth["true_cps"] == [200, 400, 600] and truth["seed"] == 7
    assert read_quantile_csv(a).n == 800


def test_simulate_then_detect_and_multiscale(tmp_path):
    data = tmp_path / "d.csv"
    assert main(["simulate", "--dgp", "1", "--seed", "3", "--grid-size", "51", "-o", str(data)]) == EXIT_OK
    out = tmp_path / "det.csv"
    assert main(["detect", str(data), "--epsilon", "0.2", "--format", "csv", "-o", str(out)]) == EXIT_OK
    lines = out.read_text().splitlines()
    assert lines[0].startswith("# config: ") and lines[1] == "index,block_start,block_end,peak"
    found = [int(l.split(",")[0]) for l in lines[2:]]
    assert len(found) == 3 and all(abs(k - t) <= 80 for k, t in zip(found, (200, 400, 600)))
    ms = tmp_path / "ms.json"
    assert main(["multiscale", str(data), "--g-grid", "30:80:10", "-o", str(ms)]) == EXIT_OK
    rec = json.loads(ms.read_text())
    assert set(rec) >= {"g_grid", "marks", "trajectories", "merged"}
    assert rec["g_grid"] == [30, 40, 50, 60, 70, 80]


def test_cpt_plot_and_register_commands(tmp_path):
    rng = np.random.default_rng(4)
    grid = ProbGrid.uniform(21)
    paths = []
    for s, offset in enumerate((0, 1)):
        m = np.where(np.arange(600) < 300, 0.4, 0.5) + rng.uniform(-0.01, 0.01, 600)
        vals = stats.norm.ppf(np.clip(grid.points, 1e-3, 1 - 1e-3)[None, :], m[:, None], 0.02)
        labels = np.arange(600) * 2 + offset
        write_quantile_csv(DistSeq(grid, vals, labels), tmp_path / f"s{s}.csv")
        paths.append(str(tmp_path / f"s{s}.csv"))
    out = tmp_path / "cpt.csv"
    assert main(["cpt-plot", paths[0], "--g-grid", "30:60:10", "-o", str(out)]) == EXIT_OK
    assert out.read_text().splitlines()[1] == "G,index,count,stable"
    reg = tmp_path / "reg.csv"
    assert main(["register", *paths, "-G", "40", "-o", str(reg)]) == EXIT_OK
    lines = reg.read_text().splitlines()
    assert lines[1] == "sequence_id,original_index,registered_index,time_label"
    recs = [tuple(int(x) for x in l.split(",")) for l in lines[2:]]
    assert {r[0] for r in recs} == {0, 1}
    for s, orig, regi, label in recs:
        assert label == 2 * (orig - 1) + s and regi == label + 1


def test_bench_emits_one_row_per_length(tmp_path):
    out = tmp_path / "bench.csv"
    assert main(["bench", "--lengths", "400:4000:400", "-G", "40", "--grid-size", "21", "-o", str(out)]) == EXIT_OK
    lines = out.read_text().splitlines()
    assert lines[1] == "n,seconds"
    ns = [int(l.split(",")[0]) for l in lines[2:]]
    assert ns == list(range(400, 4001, 400))
    assert all(float(l.split(",")[1]) > 0 for l in lines[2:])


def test_stage_errors_map_to_exit_codes(tmp_path, capsys):
    assert main(["detect", str(tmp_path / "missing.csv")]) == EXIT_INGEST
    assert "ingest" in capsys.readouterr().err
    grid = ProbGrid.uniform(11)
    write_quantile_csv(DistSeq(grid, np.tile(grid.points, (50, 1))), tmp_path / "short.csv")
    assert main(["detect", str(tmp_path / "short.csv"), "-G", "80"]) == EXIT_COMPUTE
    assert "detect" in capsys.readouterr().err

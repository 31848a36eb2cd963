import csv
import json
import math

import numpy as np
import pytest

from dispersed_meta.cli import EXIT_CONFIG, EXIT_DATA, EXIT_OK, main
from dispersed_meta.experiment import ConfigError, parse_config
from dispersed_meta.io import DataError, fmt, read_task, write_task, task_record
from dispersed_meta.piecewise import Interval, PiecewiseConstant
from dispersed_meta.report import format_table, regret_svg, summarize
from dispersed_meta.robust import Attack

SMALL = """\
kind = {kind}
T_train = {T_train}
T_test = 2
m_rounds = {m}
replicas = 3
shots = {shots}
seed = 7
"""


def write_cfg(tmp_path, kind="knapsack", T_train=2, m=6, shots="1,5", extra=""):
    path = tmp_path / f"{kind}.cfg"
    path.write_text(SMALL.format(kind=kind, T_train=T_train, m=m, shots=shots) + extra)
    return path


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def gen_run(tmp_path, cfg, jobs=1, out="out"):
    data, out = tmp_path / "data", tmp_path / out
    assert main(["gen", "--config", str(cfg), "--data", str(data)]) == EXIT_OK
    assert main(["run", "--config", str(cfg), "--data", str(data), "--out", str(out),
                 "--jobs", str(jobs)]) == EXIT_OK
    return data, out


def test_parse_config_errors():
    with pytest.raises(ConfigError, match="line 1: unknown key 'colour'"):
        parse_config("colour = red\nkind = knapsack")
    with pytest.raises(ConfigError, match="line 2: kind: unknown kind 'sudoku'"):
        parse_config("# comment\nkind = sudoku")
    with pytest.raises(ConfigError, match="line 2: duplicate key"):
        parse_config("kind = knapsack\nkind = mwis")
    with pytest.raises(ConfigError, match="line 2: beta: must be positive"):
        parse_config("kind = knapsack\nbeta = -1")
    with pytest.raises(ConfigError, match="line 2: shots"):
        parse_config("kind = knapsack\nshots = 3")
    with pytest.raises(ConfigError, match="line 1"):
        parse_config("kind knapsack")
    cfg = parse_config("kind = knapsack # inline\n", seed=11)
    assert cfg.seed == 11 and cfg.domain == (0.0, 10.0)


def test_gen_is_deterministic(tmp_path):
    cfg = write_cfg(tmp_path, "gaussian_cluster", T_train=13, m=3, shots="1")
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["gen", "--config", str(cfg), "--data", str(a)]) == EXIT_OK
    assert main(["gen", "--config", str(cfg), "--data", str(b)]) == EXIT_OK
    files = sorted(p.name for p in (a / "tasks").iterdir())
    assert len(files) == 15
    for name in files:
        assert (a / "tasks" / name).read_bytes() == (b / "tasks" / name).read_bytes()
    assert (a / "manifest.json").read_bytes() == (b / "manifest.json").read_bytes()


def test_knapsack_dataset_shape(tmp_path):
    cfg = write_cfg(tmp_path, "knapsack", T_train=1, m=30)
    data = tmp_path / "data"
    main(["gen", "--config", str(cfg), "--data", str(data)])
    rec = read_task(data / "tasks" / "task_0000.jsonl")
    assert rec["m"] == 30 and len(rec["losses"]) == 30
    assert len(rec["meta"]["scales"]) == 30
    manifest = json.loads((data / "manifest.json").read_text())
    assert "test_task_policy" in manifest and len(manifest["config_hash"]) == 64


def test_exit_codes(tmp_path, capsys):
    bad = tmp_path / "bad.cfg"
    bad.write_text("kind = sudoku\n")
    assert main(["gen", "--config", str(bad)]) == EXIT_CONFIG
    assert "line 1: kind" in capsys.readouterr().err
    assert main(["gen"]) == EXIT_CONFIG
    assert main(["run", "--config", str(tmp_path / "missing.cfg")]) == EXIT_CONFIG
    cfg = write_cfg(tmp_path)
    assert main(["run", "--config", str(cfg), "--data", str(tmp_path / "none")]) == EXIT_DATA
    data = tmp_path / "data"
    main(["gen", "--config", str(cfg), "--data", str(data)])
    other = write_cfg(tmp_path, m=7)
    assert main(["run", "--config", str(other), "--data", str(data),
                 "--out", str(tmp_path / "o")]) == EXIT_DATA
    assert "different config" in capsys.readouterr().err
    assert main(["run", "--config", str(cfg), "--data", str(data), "--jobs", "0"]) == EXIT_CONFIG
    assert main(["report", "--out", str(tmp_path / "nothing")]) == EXIT_DATA


def test_run_and_report_table(tmp_path):
    cfg = write_cfg(tmp_path, "knapsack")
    _, out = gen_run(tmp_path, cfg)
    rows = read_rows(out / "results.csv")
    assert len(rows) == 2 * 3 * 2 * 2  # tasks x replicas x shots x variants
    assert list(rows[0]) == ["experiment_id", "dataset", "variant", "task_id", "replica",
                             "shots", "accuracy", "regret", "V2", "neg_log_overlap", "lambda"]
    for r in rows:
        assert 0.0 <= float(r["accuracy"]) <= 1.05
        assert float(r["lambda"]) > 0
    assert read_rows(out / "timings.csv")
    assert main(["report", "--out", str(out)]) == EXIT_OK
    table = (out / "table.txt").read_text().splitlines()
    assert len(table) == 2 + 4  # header, rule, 2 variants x 2 shots
    svg = (out / "regret.svg").read_text()
    assert svg.startswith("<svg") and 'width="800"' in svg and "polyline" in svg


def test_zero_training_tasks_share_init(tmp_path):
    cfg = write_cfg(tmp_path, "knapsack", T_train=0)
    _, out = gen_run(tmp_path, cfg)
    rows = read_rows(out / "results.csv")
    by_variant = {}
    for r in rows:
        by_variant.setdefault((r["task_id"], r["replica"], r["shots"]), {})[r["variant"]] = r
    for pair in by_variant.values():
        assert pair["single_task"]["neg_log_overlap"] == pair["meta_initialized"]["neg_log_overlap"]
    assert all(r["V2"] == "nan" for r in rows)


@pytest.mark.parametrize("kind,m,shots", [("mwis", 6, "1,5"), ("robust", 64, "1"),
                                          ("halving", 16, "1")])
def test_other_kinds(tmp_path, kind, m, shots):
    extra = "beta = 1.0\n" if kind == "robust" else ""
    cfg = write_cfg(tmp_path, kind, T_train=1, m=m, shots=shots, extra=extra)
    data, out = gen_run(tmp_path, cfg)
    rows = read_rows(out / "results.csv")
    assert rows and all(r["dataset"] == kind for r in rows)
    if kind != "mwis":
        assert all(r["accuracy"] == "nan" for r in rows)
        assert {r["shots"] for r in rows} == {str(m)}
    if kind == "robust":
        rec = read_task(data / "tasks" / "task_0001.jsonl")
        assert len(rec["attacks"]) == m and len(rec["true_losses"]) == m
    assert main(["report", "--out", str(out)]) == EXIT_OK


def test_jobs_do_not_change_results(tmp_path):
    cfg = write_cfg(tmp_path, "knapsack")
    data, one = gen_run(tmp_path, cfg, jobs=1, out="one")
    assert main(["run", "--config", str(cfg), "--data", str(data), "--out",
                 str(tmp_path / "two"), "--jobs", "2"]) == EXIT_OK
    for name in ("results.csv", "curve.csv"):
        assert (one / name).read_bytes() == (tmp_path / "two" / name).read_bytes()


def test_log_env(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv("DISPERSED_META_LOG", "loud")
    bad = tmp_path / "bad.cfg"
    bad.write_text("kind = sudoku\n")
    assert main(["gen", "--config", str(bad)]) == EXIT_CONFIG


# -- io and report ------------------------------------------------------------

def test_fmt():
    assert fmt(1 / 3) == "0.333333333"
    assert fmt(float("nan")) == "nan"
    assert fmt(float("-inf")) == "-inf"
    assert fmt(7) == "7"


def test_task_round_trip(tmp_path):
    f = PiecewiseConstant([0, 0.5, 1], [0.2, 0.4])
    a = Attack(0.5, 0.1, PiecewiseConstant.indicator(Interval(0, 1), Interval(0.45, 0.55), 0.3))
    rec = task_record(3, "robust", "test", [f], {"x": 1}, true_losses=[f], attacks=[a])
    write_task(tmp_path / "t.jsonl", rec)
    back = read_task(tmp_path / "t.jsonl")
    assert back["losses"][0].equals(f)
    assert back["attacks"][0].bump.equals(a.bump)
    (tmp_path / "bad.jsonl").write_text("{}\n{}\n")
    with pytest.raises(DataError):
        read_task(tmp_path / "bad.jsonl")


def result_row(**kw):
    row = {"experiment_id": "e", "dataset": "knapsack", "variant": "single_task", "shots": "1",
           "accuracy": "0.9", "regret": "2.0"}
    row.update(kw)
    return row


def test_summarize():
    s = summarize([result_row()])
    assert s[0]["accuracy"] == 0.9 and s[0]["accuracy_se"] == 0.0 and s[0]["n"] == 1
    s = summarize([result_row(accuracy="0.8"), result_row(accuracy="1.0")])
    assert s[0]["accuracy"] == pytest.approx(0.9)
    assert s[0]["accuracy_se"] == pytest.approx(np.std([0.8, 1.0], ddof=1) / math.sqrt(2))
    with pytest.raises(DataError):
        summarize([])
    with pytest.raises(DataError):
        summarize([result_row(), result_row(experiment_id="f")])
    with pytest.raises(DataError):
        summarize([result_row(shots="x")])
    assert "90.00 ± 0.00" in format_table(summarize([result_row()]))


def test_regret_svg_handles_empty_curve():
    svg = regret_svg([])
    assert svg.startswith("<svg") and svg.rstrip().endswith("</svg>")

import csv
import json
import os
import subprocess
import sys

import numpy as np
import pytest

from fsasl import cli
from fsasl.errors import SolverError
from fsasl.evaluation import planted_clusters


@pytest.fixture
def dataset(tmp_path):
    x, y = planted_clusters(0, n_samples=60, n_informative=3, n_noise=9)
    path = tmp_path / "d.csv"
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"g{j}" for j in range(x.shape[0])] + ["cls"])
        for i in range(x.shape[1]):
            w.writerow([repr(float(v)) for v in x[:, i]] + [int(y[i])])
    return path


def base(dataset, out, *extra):
    return ["--data", str(dataset), "--header", "--label", "cls", "--out", str(out), *extra]


def read_error(capsys):
    return json.loads(capsys.readouterr().err)["error"]


def test_select_writes_artifacts(dataset, tmp_path):
    out = tmp_path / "o"
    assert cli.main(["select", *base(dataset, out, "--alpha", "1", "--beta", "1", "--gamma", "0.01", "--k", "5", "--c", "3")]) == 0
    for name in ("ranking.json", "report.json", "timings.json", "manifest.json", "W.csv", "S.csv", "P.csv",
                 "S_triplets.csv", "P_triplets.csv"):
        assert (out / name).exists(), name
    ranking = json.loads((out / "ranking.json").read_text())
    assert sorted(ranking["order"]) == list(range(12))
    report = json.loads((out / "report.json").read_text())
    assert len(report["objective_trace"]) == report["iterations"]
    w = np.loadtxt(out / "W.csv", delimiter=",")
    assert w.shape == (12, 3)
    p = np.loadtxt(out / "P.csv", delimiter=",")
    rows = list(csv.reader((out / "P_triplets.csv").open()))
    assert rows[0] == ["row", "col", "value"] and len(rows) - 1 == np.count_nonzero(p)


def test_select_is_reproducible(dataset, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert cli.main(["select", *base(dataset, a)]) == 0
    assert cli.main(["select", *base(dataset, b)]) == 0
    for f in sorted(a.iterdir()):
        if f.name in ("timings.json", "manifest.json"):
            continue
        assert f.read_bytes() == (b / f.name).read_bytes(), f.name


def test_missing_file_is_io_error(tmp_path, capsys):
    out = tmp_path / "o"
    assert cli.main(["select", "--data", str(tmp_path / "none.csv"), "--c", "2", "--out", str(out)]) == 2
    assert read_error(capsys)["kind"] == "io"
    assert not (out / "ranking.json").exists()
    assert json.loads((out / "error.json").read_text())["error"]["kind"] == "io"


def test_bad_k_is_config_error(dataset, tmp_path, capsys):
    out = tmp_path / "o"
    assert cli.main(["select", *base(dataset, out, "--k", "59")]) == 3
    assert read_error(capsys)["kind"] == "config"
    assert not (out / "ranking.json").exists()


def test_zero_variance_is_data_error(tmp_path, capsys):
    path = tmp_path / "c.csv"
    path.write_text("1,2\n1,3\n1,4\n1,5\n")
    assert cli.main(["select", "--data", str(path), "--c", "1", "--k", "1", "--out", str(tmp_path / "o")]) == 4
    assert read_error(capsys)["kind"] == "data"


def test_solver_error_exit_code(dataset, tmp_path, capsys, monkeypatch):
    def boom(*_a, **_k):
        raise SolverError("outer iteration 2: singular")

    monkeypatch.setattr(cli, "run", boom)
    assert cli.main(["select", *base(dataset, tmp_path / "o")]) == 5
    err = read_error(capsys)
    assert err["kind"] == "solver" and "iteration 2" in err["message"]


def test_eval_report_and_determinism(dataset, tmp_path):
    out = tmp_path / "o"
    assert cli.main(["select", *base(dataset, out)]) == 0
    grid = ["--m-grid", "1,2,3,4,5,6,7,8,9,10", "--repeats", "20"]
    assert cli.main(["eval", *base(dataset, out, *grid)]) == 0
    report = json.loads((out / "eval.json").read_text())
    assert len(report["per_feature_count"]) == 10
    first = (out / "eval.json").read_bytes()
    assert cli.main(["eval", *base(dataset, out, *grid)]) == 0
    assert (out / "eval.json").read_bytes() == first


def test_eval_errors(dataset, tmp_path, capsys):
    out = tmp_path / "o"
    assert cli.main(["select", *base(dataset, out)]) == 0
    assert cli.main(["eval", *base(dataset, out, "--m-grid", "5,13")]) == 3
    assert read_error(capsys)["kind"] == "config"
    assert cli.main(["eval", "--data", str(dataset), "--header", "--out", str(out), "--m-grid", "5"]) == 3


def test_manifest_round_trip_and_override(dataset, tmp_path):
    m = cli.RunManifest(data=str(dataset), header=True, label="cls", k=4, m_grid=[2, 4],
                        seeds=[3, 1, 2], output=str(tmp_path / "m"))
    text = m.to_json()
    assert cli.RunManifest.from_json(text).to_json() == text
    mpath = tmp_path / "run.json"
    mpath.write_text(text)
    assert cli.main(["select", "--manifest", str(mpath), "--k", "50", "--out", str(tmp_path / "ignored")]) == 0
    assert (tmp_path / "m" / "ranking.json").exists()
    assert not (tmp_path / "ignored").exists()
    assert (tmp_path / "m" / "manifest.json").read_text() == text
    with pytest.raises(Exception):
        cli.RunManifest.from_json('{"bogus": 1}')


def test_sweep_cells_summary_and_resume(dataset, tmp_path):
    out = tmp_path / "sw"
    args = ["sweep", *base(dataset, out, "--alpha-grid", "1e-3,1e-2", "--gamma-fraction-grid", "0.5",
                          "--m-grid", "2,4", "--repeats", "3")]
    assert cli.main(args) == 0
    rows = list(csv.DictReader((out / "summary.csv").open()))
    assert len(rows) == 2 and all(r["status"] == "ok" for r in rows)
    cells = sorted(p for p in out.iterdir() if p.is_dir())
    assert len(cells) == 2
    stamp = [(c / "done.json").stat().st_mtime_ns for c in cells]
    summary = (out / "summary.csv").read_bytes()
    assert cli.main(args) == 0
    assert [(c / "done.json").stat().st_mtime_ns for c in cells] == stamp
    assert (out / "summary.csv").read_bytes() == summary


def test_single_cell_sweep_matches_select_eval(dataset, tmp_path):
    sw = tmp_path / "sw"
    common = ["--m-grid", "2,4", "--repeats", "3", "--alpha", "1e-3", "--gamma-fraction", "0.5"]
    assert cli.main(["sweep", *base(dataset, sw, *common)]) == 0
    cell = next(p for p in sw.iterdir() if p.is_dir())
    direct = tmp_path / "d"
    assert cli.main(["select", *base(dataset, direct, *common)]) == 0
    assert cli.main(["eval", *base(dataset, direct, *common)]) == 0
    for name in ("ranking.json", "eval.json", "W.csv"):
        assert (cell / name).read_bytes() == (direct / name).read_bytes()


def test_sweep_partial_failure(dataset, tmp_path):
    out = tmp_path / "sw"
    args = ["sweep", *base(dataset, out, "--alpha-grid", "1e-3,-1", "--m-grid", "2", "--repeats", "2")]
    assert cli.main(args) == 1
    rows = list(csv.DictReader((out / "summary.csv").open()))
    assert sorted(r["status"] for r in rows) == ["error:config", "ok"]


def test_sweep_parallel_with_worker_cap(dataset, tmp_path, monkeypatch):
    monkeypatch.setenv("FSASL_WORKERS", "2")
    out = tmp_path / "sw"
    args = ["sweep", *base(dataset, out, "--beta-grid", "0.1,1,10", "--workers", "4", "--m-grid", "2", "--repeats", "2")]
    assert cli.main(args) == 0
    assert len(list(csv.DictReader((out / "summary.csv").open()))) == 3


def test_console_entry_point(dataset, tmp_path):
    out = tmp_path / "o"
    proc = subprocess.run([sys.executable, "-m", "fsasl.cli", "select", *base(dataset, out)],
                          capture_output=True, text=True, env={**os.environ})
    assert proc.returncode == 0, proc.stderr
    assert (out / "ranking.json").exists()

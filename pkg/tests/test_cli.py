"""Command-line surface: argument parsing, config layering and each
subcommand end to end on a miniature on-disk dataset."""

import argparse
import json

import numpy as np
import pytest

from mqr import cli, datasets
from mqr.cli import build_config, main, parse_angle, parse_grid, parse_int_list
from mqr.harness import ENTROPY_CSV_COLUMNS, read_rows_csv


def test_parse_angle_values():
    assert parse_angle("pi") == pytest.approx(np.pi)
    assert parse_angle("pi/4") == pytest.approx(np.pi / 4)
    assert parse_angle("2pi") == pytest.approx(2 * np.pi)
    assert parse_angle("2*pi") == pytest.approx(2 * np.pi)
    assert parse_angle("-pi/8") == pytest.approx(-np.pi / 8)
    assert parse_angle("+pi") == pytest.approx(np.pi)
    assert parse_angle("0.3") == 0.3
    assert parse_angle("1.5e-2") == 0.015
    assert parse_angle(" PI / 2 ") == pytest.approx(np.pi / 2)


def test_parse_angle_rejects_garbage():
    for bad in ("pie", "pi/0", "two pi", "pi/x", "1.2.3"):
        with pytest.raises((argparse.ArgumentTypeError, ValueError)):
            parse_angle(bad)


def test_parse_grid():
    assert parse_grid("0:pi:3") == pytest.approx([0.0, np.pi / 2, np.pi])
    assert parse_grid("0,pi/2,1.0") == pytest.approx([0.0, np.pi / 2, 1.0])
    assert parse_grid("pi/4") == [pytest.approx(np.pi / 4)]
    with pytest.raises(argparse.ArgumentTypeError, match="start:stop:count"):
        parse_grid("0:1")
    with pytest.raises(argparse.ArgumentTypeError, match="count"):
        parse_grid("0:1:0")


def test_parse_int_list():
    assert parse_int_list("1,2,3") == [1, 2, 3]
    assert parse_int_list("4") == [4]
    assert parse_int_list("") == []


def run_cli(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr().out
    return code, out


def test_enumerate_parallel(capsys):
    code, out = run_cli(capsys, "enumerate", "--family", "parallel")
    assert code == 0
    assert out.strip() == "32"


def test_enumerate_parallel_three_modules(capsys):
    _, out = run_cli(capsys, "enumerate", "--family", "parallel",
                     "--layout", "5,5,5")
    assert out.strip() == "1024"
    _, out = run_cli(capsys, "enumerate", "--family", "parallel",
                     "--layout", "5,5,5", "--connected-only")
    assert out.strip() == "961"


def test_enumerate_arbitrary(capsys):
    _, out = run_cli(capsys, "enumerate", "--family", "arbitrary",
                     "--r-cross", "0", "--n-a", "2")
    assert out.strip() == "300"


def test_enumerate_boundary_with_list(capsys):
    _, out = run_cli(capsys, "enumerate", "--family", "boundary",
                     "--r-cross", "2", "--list")
    lines = out.strip().splitlines()
    assert lines[0] == "3"
    assert lines[1:] == ["4-6", "5-6", "5-7"]


def test_enumerate_list_encodings(capsys):
    _, out = run_cli(capsys, "enumerate", "--family", "parallel",
                     "--layout", "2,2", "--list")
    lines = out.strip().splitlines()
    assert lines[0] == "4"
    assert set(lines[1:]) == {"par:00", "par:01", "par:10", "par:11"}


def test_enumerate_missing_flags():
    with pytest.raises(SystemExit):
        main(["enumerate", "--family", "arbitrary"])


def make_args(**kw):
    defaults = dict(config=None, cache_dir=None, no_entropy=False)
    defaults.update(kw)
    return argparse.Namespace(**defaults)


def test_build_config_layering(tmp_path):
    cfg_file = tmp_path / "cfg.json"
    cfg_file.write_text(json.dumps({
        "layout": [2, 2], "components": 6, "seed": 3,
        "train": {"epochs": 7, "runs": 2, "smoothing_window": 3},
    }))
    cfg = build_config(make_args(config=str(cfg_file), components=8,
                                 seed=None, theta_c=0.5))
    # flag beats file, file beats default
    assert cfg.components == 8
    assert cfg.seed == 3
    assert cfg.layout == (2, 2)
    assert cfg.theta_c == 0.5
    assert cfg.train.epochs == 7
    assert cfg.train.runs == 2
    assert cfg.data_dir == "data"


def test_build_config_cache_disable():
    assert build_config(make_args(cache_dir="none")).cache_dir is None
    assert build_config(make_args(cache_dir="mycache")).cache_dir == "mycache"
    assert build_config(make_args()).cache_dir == "cache"
    assert build_config(make_args(no_entropy=True)).entropy is False


@pytest.fixture
def tiny_data(tmp_path, monkeypatch):
    """A 40/20-sample 28x28 dataset on disk that load_dataset accepts."""
    from conftest import write_idx_images, write_idx_labels
    rng = np.random.default_rng(11)
    root = tmp_path / "data"
    ddir = root / "mnist"
    ddir.mkdir(parents=True)
    for prefix, n in (("train", 40), ("t10k", 20)):
        images = rng.integers(0, 256, (n, 28, 28), dtype=np.uint8)
        labels = np.arange(n, dtype=np.uint8) % 10
        write_idx_images(ddir / f"{prefix}-images-idx3-ubyte", images)
        write_idx_labels(ddir / f"{prefix}-labels-idx1-ubyte", labels)
    monkeypatch.setitem(datasets.CANONICAL_SHAPES, "mnist", (40, 20, 784))
    return root


TRAIN_FLAGS = ["--epochs", "3", "--runs", "1", "--window", "2",
               "--layout", "2,2", "--components", "8", "--cache-dir", "none"]


def test_cli_run(tiny_data, tmp_path, capsys):
    out_json = tmp_path / "run.json"
    epoch_csv = tmp_path / "epochs.csv"
    code, out = run_cli(
        capsys, "run", "--dataset", "mnist", "--data-dir", str(tiny_data),
        "--out", str(out_json), "--epoch-csv", str(epoch_csv), *TRAIN_FLAGS)
    assert code == 0
    assert "eta" in out and "mean entropy" in out
    payload = json.loads(out_json.read_text())
    assert payload["command"] == "run"
    assert 0.0 <= payload["result_data"]["eta"] <= 1.0
    assert "mean_entropy_bits" in payload["result_data"]
    assert payload["config"]["dataset"] == "mnist"
    rows = read_rows_csv(epoch_csv)
    assert len(rows) == 3
    assert [r["epoch"] for r in rows] == ["1", "2", "3"]


def test_cli_baseline(tiny_data, tmp_path, capsys):
    code, out = run_cli(
        capsys, "baseline-pca", "--dataset", "mnist",
        "--data-dir", str(tiny_data), "--out-dir", str(tmp_path / "res"),
        *TRAIN_FLAGS)
    assert code == 0
    assert "eta" in out
    payload = json.loads((tmp_path / "res" / "baseline-mnist-k8.json").read_text())
    assert payload["command"] == "baseline-pca"
    assert "pca_only" in payload["result_data"]["config_descriptor"]


def test_cli_sweep_and_plot_data(tiny_data, tmp_path, capsys):
    out_csv = tmp_path / "rows.csv"
    code, out = run_cli(
        capsys, "sweep", "--family", "parallel", "--dataset", "mnist",
        "--data-dir", str(tiny_data), "--out", str(out_csv), *TRAIN_FLAGS)
    assert code == 0
    assert "4 points" in out
    rows = read_rows_csv(out_csv)
    assert len(rows) == 4
    assert {r["scheme"] for r in rows} == {"par:00", "par:01", "par:10", "par:11"}
    summary = json.loads((tmp_path / "rows.json").read_text())
    assert summary["family"] == "parallel"
    assert summary["points"] == 4

    plot_csv = tmp_path / "plot.csv"
    code, out = run_cli(capsys, "plot-data", str(out_csv),
                        "--kind", "acc_vs_nl", "--out", str(plot_csv))
    assert code == 0
    plot_rows = read_rows_csv(plot_csv)
    assert len(plot_rows) == 3  # best of n_ell = 0, 1, 2
    assert [float(r["x"]) for r in plot_rows] == [0.0, 1.0, 2.0]


def test_cli_sweep_needs_family_flags(tiny_data):
    with pytest.raises(SystemExit, match="r-cross"):
        main(["sweep", "--family", "arbitrary", "--dataset", "mnist",
              "--data-dir", str(tiny_data), *TRAIN_FLAGS])


def test_cli_cue(tiny_data, tmp_path, capsys):
    out_csv = tmp_path / "cue.csv"
    code, out = run_cli(
        capsys, "cue", "--n-ell-list", "0,1", "--realizations", "2",
        "--dataset", "mnist", "--data-dir", str(tiny_data),
        "--out", str(out_csv), *TRAIN_FLAGS)
    assert code == 0
    assert "n_ell=0" in out and "n_ell=1" in out
    rows = read_rows_csv(out_csv)
    assert len(rows) == 4
    summary = json.loads((tmp_path / "cue.json").read_text())
    assert sorted(summary["per_n_ell"]) == ["0", "1"]
    assert summary["per_n_ell"]["0"]["realizations"] == 2


def test_cli_entropy(tiny_data, tmp_path, capsys):
    out_csv = tmp_path / "entropy.csv"
    code, out = run_cli(
        capsys, "entropy", "--dataset", "mnist", "--data-dir", str(tiny_data),
        "--layout", "2,2", "--scheme", "par:10", "--components", "8",
        "--cache-dir", "none", "--theta-c-grid", "0,pi/4,pi/2",
        "--out", str(out_csv))
    assert code == 0
    assert "peak mean entropy" in out
    with open(out_csv) as fh:
        header = fh.readline().strip().split(",")
    assert header == ENTROPY_CSV_COLUMNS
    rows = read_rows_csv(out_csv)
    assert len(rows) == 3
    assert float(rows[0]["mean_entropy_bits"]) < 1e-9
    assert float(rows[1]["mean_entropy_bits"]) > 0.1
    assert rows[0]["n_test"] == "20"


def test_cli_fetch_wiring(capsys, monkeypatch):
    calls = []
    monkeypatch.setattr(
        cli.datasets, "fetch",
        lambda name, data_dir, mirror_url=None: calls.append(
            (name, data_dir, mirror_url)) or ["a", "b"])
    code, out = run_cli(capsys, "fetch", "all", "--data-dir", "d",
                        "--mirror", "http://m/")
    assert code == 0
    assert [c[0] for c in calls] == ["cifar10", "fashion_mnist", "mnist"]
    assert all(c[1] == "d" and c[2] == "http://m/" for c in calls)
    assert out.count("files ready") == 3


def test_cli_rejects_unknown_subcommand():
    with pytest.raises(SystemExit):
        main(["teleport"])
    with pytest.raises(SystemExit):
        main([])

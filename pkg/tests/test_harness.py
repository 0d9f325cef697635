"""Experiment harness: deterministic seeding, cache soundness, sweep
bookkeeping and the CSV/JSON output layer, all on a small synthetic
dataset so nothing touches the network."""

import json
import os
from dataclasses import replace

import numpy as np
import pytest

from conftest import make_synth_dataset
from mqr import harness
from mqr.classifier import TrainConfig
from mqr.harness import (
    CSV_COLUMNS,
    ENTROPY_CSV_COLUMNS,
    EPOCH_CSV_COLUMNS,
    ExperimentConfig,
    cue_summary,
    emit_plot_data,
    epoch_rows,
    feature_cache_path,
    load_features,
    mark_eta_star,
    parallel_sweep_points,
    pca_fingerprint,
    pca_for,
    point_descriptor,
    read_rows_csv,
    resolve_components,
    resolve_spec,
    resolve_train_config,
    run_cue_ensemble,
    run_entropy_sweep,
    run_pca_baseline,
    run_single,
    run_sweep,
    save_features,
    write_rows_csv,
    write_summary,
)
from mqr.util import derive_seed


def tiny_config(**overrides):
    defaults = dict(
        layout=(2, 2),
        scheme="par:10",
        components=8,
        cache_dir=None,
        chunk_size=64,
        train=TrainConfig(epochs=5, runs=1, smoothing_window=2),
    )
    defaults.update(overrides)
    return ExperimentConfig(**defaults)


@pytest.fixture(scope="module")
def ds():
    return make_synth_dataset(input_dim=30)


def rows_without_timing(rows):
    return [{k: v for k, v in row.items() if k != "wall_time_s"} for row in rows]


def test_resolve_components_default_and_explicit():
    assert resolve_components(tiny_config(components=None)) == 8
    assert resolve_components(tiny_config(components=12)) == 12
    assert resolve_components(ExperimentConfig(layout=(5, 5))) == 20


def test_resolve_spec_zz_defaults():
    spec = resolve_spec(tiny_config(cutoff=None))
    assert spec.kind.coupling.cutoff == 1  # largest module size minus one
    spec = resolve_spec(tiny_config(cutoff=3, layout=(4,), scheme="none"))
    assert spec.kind.coupling.cutoff == 3


def test_resolve_spec_cue_seed_derivation():
    cfg = tiny_config(kind="cue", realization_index=2, seed=5)
    spec = resolve_spec(cfg)
    assert spec.kind.seeds == (
        derive_seed(5, "cue", 2, 0), derive_seed(5, "cue", 2, 1))
    other = resolve_spec(replace(cfg, realization_index=3))
    assert other.kind.seeds != spec.kind.seeds


def test_descriptor_contents():
    cfg = tiny_config(seed=9)
    desc = point_descriptor(cfg, resolve_spec(cfg))
    assert "dataset=mnist" in desc
    assert "subset=all" in desc
    assert "components=8" in desc
    assert "par:10" in desc
    assert "seed=9" in desc
    assert "realization" not in desc

    cue = tiny_config(kind="cue", realization_index=4)
    cue_desc = point_descriptor(cue, resolve_spec(cue))
    assert "realization=4" in cue_desc

    sub = tiny_config(train_subset=50)
    assert "subset=50" in point_descriptor(sub, resolve_spec(sub))


def test_train_config_resolution_rules():
    small = tiny_config(components=20)
    large = tiny_config(components=30)
    assert resolve_train_config(small, "d").learning_rate == 0.05
    assert resolve_train_config(large, "d").learning_rate == 0.002
    explicit = tiny_config(train=TrainConfig(learning_rate=0.01))
    assert resolve_train_config(explicit, "d").learning_rate == 0.01
    # the training seed binds to the descriptor, not the shared seed alone
    cfg = tiny_config(seed=3)
    assert resolve_train_config(cfg, "a").seed == derive_seed(3, "a")
    assert resolve_train_config(cfg, "a").seed != resolve_train_config(cfg, "b").seed


def test_config_validation():
    with pytest.raises(ValueError, match="kind"):
        tiny_config(kind="haar")
    with pytest.raises(ValueError, match=">= 1"):
        tiny_config(jobs=0)


def test_run_single_deterministic(ds):
    cfg = tiny_config()
    a, report_a = run_single(cfg, dataset=ds)
    b, report_b = run_single(cfg, dataset=ds)
    assert a.eta == b.eta
    assert np.array_equal(a.per_run_epoch_accuracies, b.per_run_epoch_accuracies)
    assert report_a.mean_entropy == report_b.mean_entropy
    assert report_a.n_a_qubits == 2


def test_run_single_entropy_only_for_two_modules(ds):
    cfg = tiny_config(layout=(2, 2, 2), scheme="par:11|11", components=None)
    result, report = run_single(cfg, dataset=ds)
    assert report is None
    assert result.eta >= 0.0

    _, off = run_single(tiny_config(entropy=False), dataset=ds)
    assert off is None


def test_feature_cache_roundtrip(tmp_path):
    rng = np.random.default_rng(0)
    probs = rng.random((6, 16))
    labels = rng.integers(0, 10, 6).astype(np.int64)
    path = tmp_path / "f.mqft"
    save_features(path, 4, probs, labels)
    n_qubits, got_probs, got_labels = load_features(path)
    assert n_qubits == 4
    assert np.array_equal(got_probs, probs)
    assert np.array_equal(got_labels, labels)


def test_feature_cache_rejects_corruption(tmp_path):
    rng = np.random.default_rng(1)
    path = tmp_path / "f.mqft"
    save_features(path, 3, rng.random((4, 8)), np.arange(4))
    blob = path.read_bytes()

    path.write_bytes(b"XXXX" + blob[4:])
    with pytest.raises(ValueError, match="magic"):
        load_features(path)

    path.write_bytes(blob[:-5])
    with pytest.raises(ValueError, match="expected"):
        load_features(path)

    with pytest.raises(ValueError, match="does not match"):
        save_features(tmp_path / "g.mqft", 3, rng.random((4, 7)), np.arange(4))


def test_cached_run_matches_cold_run(ds, tmp_path):
    cfg = tiny_config(cache_dir=str(tmp_path))
    cold, report_cold = run_single(cfg, dataset=ds)
    cached_files = sorted(os.listdir(tmp_path))
    assert any(f.startswith("feat-") for f in cached_files)
    assert any(f.startswith("pca-") for f in cached_files)

    warm, report_warm = run_single(cfg, dataset=ds)
    assert warm.eta == cold.eta
    assert report_warm.mean_entropy == report_cold.mean_entropy
    assert sorted(os.listdir(tmp_path)) == cached_files


def test_corrupt_cache_rebuilt_with_warning(ds, tmp_path):
    cfg = tiny_config(cache_dir=str(tmp_path))
    cold, _ = run_single(cfg, dataset=ds)
    feature_files = [f for f in os.listdir(tmp_path) if f.startswith("feat-")]
    victim = tmp_path / feature_files[0]
    victim.write_bytes(victim.read_bytes()[:12])

    with pytest.warns(UserWarning, match="rebuilding corrupt feature cache"):
        rebuilt, _ = run_single(cfg, dataset=ds)
    assert rebuilt.eta == cold.eta
    # the rebuilt cache is valid again
    load_features(victim)


def test_cache_keys_separate_configurations(ds):
    cfg = tiny_config(cache_dir="cache")
    model = pca_for(replace(cfg, cache_dir=None), ds)
    fp = pca_fingerprint(model)
    base = feature_cache_path(cfg, fp, resolve_spec(cfg), "train")
    assert feature_cache_path(cfg, fp, resolve_spec(cfg), "test") != base
    other_scheme = resolve_spec(replace(cfg, scheme="par:01"))
    assert feature_cache_path(cfg, fp, other_scheme, "train") != base
    assert feature_cache_path(cfg, "0" * 16, resolve_spec(cfg), "train") != base
    assert feature_cache_path(replace(cfg, dataset="cifar10"), fp,
                              resolve_spec(cfg), "train") != base


def test_pca_cache_reused(ds, tmp_path, monkeypatch):
    cfg = tiny_config(cache_dir=str(tmp_path))
    calls = []
    real_fit = harness.fit_pca
    monkeypatch.setattr(harness, "fit_pca",
                        lambda x, k: calls.append(k) or real_fit(x, k))
    first = pca_for(cfg, ds)
    second = pca_for(cfg, ds)
    assert calls == [8]
    assert np.array_equal(first.components, second.components)
    pca_for(replace(cfg, components=6), ds)
    assert calls == [8, 6]


def test_sweep_rows_sorted_and_complete(ds):
    cfg = tiny_config()
    points = parallel_sweep_points(cfg)
    assert len(points) == 4
    rows = run_sweep(cfg, points, dataset=ds)
    descriptors = [r["config_descriptor"] for r in rows]
    assert descriptors == sorted(descriptors)
    for row in rows:
        assert set(CSV_COLUMNS) <= set(row)
        assert row["family"] == "par"
        assert row["dataset"] == "mnist"
        assert row["wall_time_s"] > 0


def test_sweep_row_matches_single_run(ds):
    cfg = tiny_config(scheme="par:11")
    single, report = run_single(cfg, dataset=ds)
    rows = run_sweep(cfg, [{"scheme": "par:11"}], dataset=ds)
    assert rows[0]["eta"] == single.eta
    assert rows[0]["mean_entropy_bits"] == report.mean_entropy
    assert rows[0]["config_descriptor"] == single.config_descriptor


def test_sweep_deterministic(ds):
    cfg = tiny_config()
    points = parallel_sweep_points(cfg)
    a = run_sweep(cfg, points, dataset=ds)
    b = run_sweep(cfg, points, dataset=ds)
    assert rows_without_timing(a) == rows_without_timing(b)


def test_parallel_jobs_match_sequential(ds):
    cfg = tiny_config()
    points = parallel_sweep_points(cfg)
    sequential = run_sweep(cfg, points, dataset=ds)
    pooled = run_sweep(replace(cfg, jobs=2), points, dataset=ds)
    assert rows_without_timing(sequential) == rows_without_timing(pooled)


def test_sweep_point_cap(ds):
    cfg = tiny_config(max_points=3)
    points = parallel_sweep_points(cfg)
    with pytest.raises(ValueError, match="4 points, cap is 3"):
        run_sweep(cfg, points, dataset=ds)


def test_eta_star_marks_group_maxima(ds):
    cfg = tiny_config()
    rows = run_sweep(cfg, parallel_sweep_points(cfg), dataset=ds)
    by_n_ell = {}
    for row in rows:
        by_n_ell.setdefault(row["n_ell"], []).append(row)
    assert sorted(by_n_ell) == [0, 1, 2]
    assert len(by_n_ell[1]) == 2
    for group in by_n_ell.values():
        best = max(r["eta"] for r in group)
        for row in group:
            assert row["eta_star"] == (row["eta"] == best)


def test_mark_eta_star_flags_ties():
    template = {"family": "par", "theta_c": 0.5, "r_cross": None, "n_a": None,
                "n_ell": 1, "alpha": 1.5, "theta_j": 1.0, "cutoff": 1,
                "realization": None}
    rows = [dict(template, eta=0.5, eta_star=False),
            dict(template, eta=0.7, eta_star=False),
            dict(template, eta=0.7, eta_star=False),
            dict(template, eta=0.6, eta_star=False, n_ell=2)]
    marked = mark_eta_star(rows)
    assert [r["eta_star"] for r in marked] == [False, True, True, True]


def test_cue_ensemble_and_summary(ds):
    cfg = tiny_config(kind="cue", realizations=2)
    rows = run_cue_ensemble(cfg, [0, 1], dataset=ds)
    assert len(rows) == 4
    assert {r["realization"] for r in rows} == {0, 1}
    assert {r["n_ell"] for r in rows} == {0, 1}
    assert len({r["config_descriptor"] for r in rows}) == 4
    stats = cue_summary(rows)
    assert sorted(stats) == [0, 1]
    for s in stats.values():
        assert s["realizations"] == 2
        assert 0.0 <= s["mean_eta"] <= 1.0
        assert s["std_eta"] >= 0.0


def test_entropy_sweep_profile(ds):
    cfg = tiny_config()
    rows = run_entropy_sweep(cfg, [0.0, np.pi / 4, np.pi / 2], dataset=ds)
    assert [r["theta_c"] for r in rows] == [0.0, np.pi / 4, np.pi / 2]
    assert all(set(ENTROPY_CSV_COLUMNS) <= set(r) for r in rows)
    assert rows[0]["n_test"] == ds.test_labels.size
    # no entanglement at the decoupled angles, a clear peak at pi/4
    assert rows[0]["mean_entropy_bits"] < 1e-9
    assert rows[2]["mean_entropy_bits"] < 1e-9
    assert rows[1]["mean_entropy_bits"] > 0.1


def test_entropy_sweep_needs_two_modules(ds):
    cfg = tiny_config(layout=(2, 2, 2), scheme="par:11|11")
    with pytest.raises(ValueError, match="two modules"):
        run_entropy_sweep(cfg, [0.0], dataset=ds)


def test_pca_baseline(ds):
    cfg = tiny_config(components=12,
                      train=TrainConfig(epochs=12, runs=1, smoothing_window=3))
    result = run_pca_baseline(cfg, dataset=ds)
    assert "kind=pca_only" in result.config_descriptor
    assert result.eta > 0.9
    again = run_pca_baseline(cfg, dataset=ds)
    assert again.eta == result.eta


def test_load_experiment_dataset_subset(ds, monkeypatch):
    monkeypatch.setattr(harness, "load_dataset", lambda name, d: ds)
    cfg = tiny_config(train_subset=50)
    subset = harness._load_experiment_dataset(cfg)
    assert subset.train_labels.size == 50
    assert subset.test_labels.size == ds.test_labels.size


def test_csv_roundtrip_preserves_floats(tmp_path):
    rows = [
        {"a": 0.1 + 0.2, "b": None, "c": True, "d": "par:10", "e": 7},
        {"a": 1e-17, "b": 2.5, "c": False, "d": "", "e": -1},
    ]
    path = tmp_path / "rows.csv"
    write_rows_csv(path, rows, ["a", "b", "c", "d", "e"])
    back = read_rows_csv(path)
    assert float(back[0]["a"]) == rows[0]["a"]
    assert float(back[1]["a"]) == rows[1]["a"]
    assert back[0]["b"] == ""
    assert back[0]["c"] == "true"
    assert back[1]["c"] == "false"
    assert back[0]["d"] == "par:10"
    assert int(back[1]["e"]) == -1


def test_write_summary(tmp_path):
    cfg = tiny_config()
    path = tmp_path / "summary.json"
    write_summary(path, "sweep", cfg, {"csv": "rows.csv"}, 1.25,
                  extra={"points": 4})
    payload = json.loads(path.read_text())
    assert payload["command"] == "sweep"
    assert payload["config"]["layout"] == [2, 2]
    assert payload["config"]["scheme"] == "par:10"
    assert payload["outputs"] == {"csv": "rows.csv"}
    assert payload["wall_time_s"] == 1.25
    assert payload["points"] == 4
    assert isinstance(payload["version"], str) and payload["version"]


def test_epoch_rows(ds):
    cfg = tiny_config(train=TrainConfig(epochs=4, runs=2, smoothing_window=2))
    result, _ = run_single(cfg, dataset=ds)
    rows = epoch_rows(result)
    assert len(rows) == 8
    assert rows[0] == {
        "run": 0, "epoch": 1,
        "test_accuracy": float(result.per_run_epoch_accuracies[0, 0]),
        "train_loss": float(result.per_run_epoch_losses[0, 0]),
    }
    assert rows[-1]["run"] == 1 and rows[-1]["epoch"] == 4
    assert set(rows[0]) == set(EPOCH_CSV_COLUMNS)


def sweep_csv_for_plots(tmp_path, ds):
    cfg = tiny_config()
    rows = run_sweep(cfg, parallel_sweep_points(cfg), dataset=ds)
    path = tmp_path / "sweep.csv"
    write_rows_csv(path, rows, CSV_COLUMNS)
    return path, rows


def test_plot_data_best_per_count(tmp_path, ds):
    path, rows = sweep_csv_for_plots(tmp_path, ds)
    out = tmp_path / "plot.csv"
    plot_rows = emit_plot_data(path, "acc_vs_nl", out)
    flagged = [r for r in rows if r["eta_star"]]
    assert len(plot_rows) == len(flagged)
    assert [r["x"] for r in plot_rows] == sorted(r["x"] for r in plot_rows)
    assert {r["y"] for r in plot_rows} == {r["eta"] for r in flagged}
    assert os.path.exists(out)


def test_plot_data_entropy_kind(tmp_path, ds):
    cfg = tiny_config()
    rows = run_entropy_sweep(cfg, [0.0, np.pi / 4], dataset=ds)
    src = tmp_path / "entropy.csv"
    write_rows_csv(src, rows, ENTROPY_CSV_COLUMNS)
    plot_rows = emit_plot_data(src, "entropy_vs_thetac", tmp_path / "p.csv")
    assert len(plot_rows) == 2
    assert plot_rows[0]["series"] == "par:10"
    assert plot_rows[0]["spread"] == rows[0]["std_entropy_bits"]
    assert plot_rows[1]["y"] == rows[1]["mean_entropy_bits"]


def test_plot_data_rejects_unknown_kind(tmp_path, ds):
    path, _ = sweep_csv_for_plots(tmp_path, ds)
    with pytest.raises(ValueError, match="unknown figure kind"):
        emit_plot_data(path, "acc_vs_moon", tmp_path / "p.csv")


def test_plot_data_empty_input(tmp_path):
    src = tmp_path / "empty.csv"
    write_rows_csv(src, [], CSV_COLUMNS)
    out = tmp_path / "plot.csv"
    assert emit_plot_data(src, "acc_vs_thetac", out) == []
    assert out.read_text() == "series,x,y,spread\n"

"""Command-line entry point.

Subcommands:
  fetch         download and verify datasets
  baseline-pca  train the softmax readout on rescaled PCA components alone
  run           full pipeline for one reservoir configuration
  sweep         one run per connectivity configuration (parallel, arbitrary,
                boundary or single-chain families)
  cue           ensemble of Haar-random module reservoirs
  entropy       mean test-set entanglement entropy over a theta_c grid
  enumerate     count (or list) the configurations of a scheme family
  plot-data     reduce a results CSV to plot-ready series/x/y/spread rows

Angles accept plain numbers or pi expressions: "pi", "pi/4", "2pi", "-pi/8",
"0.3". Grids are "start:stop:count" (inclusive, angles allowed) or an
explicit comma list.
"""

import argparse
import json
import math
import os
import sys
import time
from dataclasses import replace

import numpy as np

from . import datasets, harness
from .classifier import TrainConfig
from .harness import ExperimentConfig
from .reservoir import (
    ModuleLayout,
    boundary_cross_edges,
    enumerate_arbitrary_configs,
    enumerate_parallel_configs,
    parse_scheme,
)


def parse_angle(text):
    """Float angle from a decimal or a pi expression like 2pi, pi/4, -pi/8."""
    t = str(text).strip().lower().replace(" ", "").replace("*", "")
    if "pi" not in t:
        return float(t)
    sign = 1.0
    if t.startswith("-"):
        sign, t = -1.0, t[1:]
    elif t.startswith("+"):
        t = t[1:]
    num, _, den = t.partition("/")
    if not num.endswith("pi"):
        raise argparse.ArgumentTypeError(f"cannot parse angle {text!r}")
    coeff = num[:-2]
    try:
        coeff_v = float(coeff) if coeff else 1.0
        den_v = float(den) if den else 1.0
    except ValueError:
        raise argparse.ArgumentTypeError(f"cannot parse angle {text!r}")
    if den_v == 0:
        raise argparse.ArgumentTypeError(f"zero denominator in {text!r}")
    return sign * coeff_v * math.pi / den_v


def parse_grid(text):
    """List of floats from start:stop:count or a comma list (angles allowed)."""
    t = str(text).strip()
    if ":" in t:
        parts = t.split(":")
        if len(parts) != 3:
            raise argparse.ArgumentTypeError(
                f"grid must be start:stop:count, got {text!r}")
        start, stop = parse_angle(parts[0]), parse_angle(parts[1])
        count = int(parts[2])
        if count < 1:
            raise argparse.ArgumentTypeError(f"grid count must be >= 1, got {count}")
        return [float(v) for v in np.linspace(start, stop, count)]
    return [parse_angle(p) for p in t.split(",") if p]


def parse_int_list(text):
    return [int(p) for p in str(text).split(",") if p]


def _common_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--data-dir", default=None, help="dataset root (default data)")
    common.add_argument("--cache-dir", default=None,
                        help="PCA/feature cache root (default cache, 'none' disables)")
    common.add_argument("--out-dir", default=None, help="results root (default results)")
    common.add_argument("--jobs", type=int, default=None,
                        help="worker processes for sweeps (default 1)")
    common.add_argument("--seed", type=int, default=None,
                        help="experiment seed (default 0)")
    common.add_argument("--config", default=None,
                        help="JSON file of config fields, overridden by flags")
    return common


def _add_model_flags(p):
    p.add_argument("--dataset", choices=sorted(datasets.CANONICAL_SHAPES),
                   default=None)
    p.add_argument("--layout", type=parse_int_list, default=None,
                   metavar="N0,N1,...", help="qubits per module, e.g. 5,5")
    p.add_argument("--kind", choices=["zz", "cue"], default=None)
    p.add_argument("--theta-j", type=parse_angle, default=None)
    p.add_argument("--alpha", type=float, default=None)
    p.add_argument("--cutoff", type=int, default=None,
                   help="intra-module interaction range (default: all-to-all)")
    p.add_argument("--scheme", default=None,
                   help="bx:<R>, arb:<R>+<k-l,...>, par:<bits>[|<bits>], none")
    p.add_argument("--theta-c", type=parse_angle, default=None)
    p.add_argument("--theta-g", type=parse_angle, default=None)
    p.add_argument("--components", type=int, default=None,
                   help="PCA components (default: 2 x qubit count)")
    p.add_argument("--train-subset", type=int, default=None,
                   help="class-balanced training subset size")
    p.add_argument("--no-entropy", action="store_true",
                   help="skip the entanglement measurement")
    p.add_argument("--chunk-size", type=int, default=None)
    p.add_argument("--realizations", type=int, default=None,
                   help="CUE draws per point")


def _add_train_flags(p):
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--batch-size", type=int, default=None)
    p.add_argument("--runs", type=int, default=None)
    p.add_argument("--window", type=int, default=None,
                   help="epochs in the smoothed-accuracy window")


_CONFIG_FIELDS = {
    "dataset": "dataset", "layout": "layout", "kind": "kind",
    "theta_j": "theta_j", "alpha": "alpha", "cutoff": "cutoff",
    "scheme": "scheme", "theta_c": "theta_c", "theta_g": "theta_g",
    "components": "components", "train_subset": "train_subset",
    "chunk_size": "chunk_size", "realizations": "realizations",
    "jobs": "jobs", "seed": "seed", "data_dir": "data_dir",
    "out_dir": "out_dir",
}

_TRAIN_FIELDS = {
    "lr": "learning_rate", "epochs": "epochs", "batch_size": "batch_size",
    "runs": "runs", "window": "smoothing_window",
}


def build_config(args):
    """defaults < --config file < explicit flags."""
    fields = {"data_dir": "data", "cache_dir": "cache", "out_dir": "results"}
    train_fields = {}
    if args.config:
        with open(args.config) as fh:
            loaded = json.load(fh)
        train_fields.update(loaded.pop("train", {}))
        fields.update(loaded)
    for attr, field_name in _CONFIG_FIELDS.items():
        value = getattr(args, attr, None)
        if value is not None:
            fields[field_name] = value
    for attr, field_name in _TRAIN_FIELDS.items():
        value = getattr(args, attr, None)
        if value is not None:
            train_fields[field_name] = value
    if getattr(args, "cache_dir", None) is not None:
        fields["cache_dir"] = args.cache_dir
    if fields.get("cache_dir") in ("none", ""):
        fields["cache_dir"] = None
    if getattr(args, "no_entropy", False):
        fields["entropy"] = False
    if "layout" in fields:
        fields["layout"] = tuple(fields["layout"])
    fields["train"] = TrainConfig(**train_fields)
    return ExperimentConfig(**fields)


def _out_path(cfg, name):
    os.makedirs(cfg.out_dir, exist_ok=True)
    return os.path.join(cfg.out_dir, name)


def _run_result_payload(result):
    return {
        "eta": result.eta,
        "config_descriptor": result.config_descriptor,
        "final_losses": [float(v) for v in result.final_losses],
        "per_run_epoch_accuracies": result.per_run_epoch_accuracies.tolist(),
    }


def cmd_fetch(args):
    names = (sorted(datasets.CANONICAL_SHAPES)
             if args.dataset == "all" else [args.dataset])
    data_dir = args.data_dir or "data"
    for name in names:
        paths = datasets.fetch(name, data_dir, mirror_url=args.mirror)
        print(f"{name}: {len(paths)} files ready under {os.path.join(data_dir, name)}")
    return 0


def cmd_baseline_pca(args):
    cfg = build_config(args)
    started = time.perf_counter()
    result = harness.run_pca_baseline(cfg)
    wall = time.perf_counter() - started
    out = _out_path(
        cfg, f"baseline-{cfg.dataset}-k{harness.resolve_components(cfg)}.json")
    harness.write_summary(out, "baseline-pca", cfg, {"result": out}, wall,
                          extra={"result_data": _run_result_payload(result)})
    print(f"eta {result.eta:.4f}  ({result.config_descriptor})")
    print(f"summary: {out}")
    return 0


def cmd_run(args):
    cfg = build_config(args)
    started = time.perf_counter()
    result, report = harness.run_single(cfg)
    wall = time.perf_counter() - started
    payload = _run_result_payload(result)
    if report is not None:
        payload["mean_entropy_bits"] = report.mean_entropy
        payload["std_entropy_bits"] = report.std_entropy
    out = args.out or _out_path(cfg, "run.json")
    outputs = {"result": out}
    if args.epoch_csv:
        harness.write_rows_csv(args.epoch_csv, harness.epoch_rows(result),
                               harness.EPOCH_CSV_COLUMNS)
        outputs["epoch_csv"] = args.epoch_csv
    harness.write_summary(out, "run", cfg, outputs, wall,
                          extra={"result_data": payload})
    line = f"eta {result.eta:.4f}"
    if report is not None:
        line += f"  mean entropy {report.mean_entropy:.3f} bits"
    print(line)
    print(f"summary: {out}")
    return 0


def _sweep_points(cfg, args):
    family = args.family
    if family == "parallel":
        return harness.parallel_sweep_points(
            cfg, theta_c_values=args.theta_c_grid,
            connected_only=args.connected_only)
    if family == "arbitrary":
        if args.r_cross is None or args.n_a_list is None:
            raise SystemExit("arbitrary sweeps need --r-cross and --n-a-list")
        return harness.arbitrary_sweep_points(
            cfg, args.r_cross, args.n_a_list, theta_c_values=args.theta_c_grid)
    if family == "boundary":
        if args.r_cross_list is None:
            raise SystemExit("boundary sweeps need --r-cross-list")
        return harness.boundary_sweep_points(
            cfg, args.r_cross_list, theta_c_values=args.theta_c_grid)
    if family == "chain":
        if args.cutoff_list is None:
            raise SystemExit("chain sweeps need --cutoff-list")
        return harness.chain_sweep_points(
            cfg, args.cutoff_list, alpha_values=args.alpha_grid,
            theta_j_values=args.theta_j_grid)
    raise SystemExit(f"unknown sweep family {family!r}")


def cmd_sweep(args):
    cfg = build_config(args)
    points = _sweep_points(cfg, args)
    started = time.perf_counter()
    rows = harness.run_sweep(cfg, points)
    wall = time.perf_counter() - started
    out_csv = args.out or _out_path(cfg, f"sweep-{args.family}.csv")
    harness.write_rows_csv(out_csv, rows, harness.CSV_COLUMNS)
    summary = os.path.splitext(out_csv)[0] + ".json"
    harness.write_summary(summary, "sweep", cfg, {"csv": out_csv}, wall,
                          extra={"family": args.family, "points": len(rows)})
    best = max(rows, key=lambda r: r["eta"])
    print(f"{len(rows)} points, best eta {best['eta']:.4f} at {best['scheme']}")
    print(f"rows: {out_csv}")
    return 0


def cmd_cue(args):
    cfg = build_config(args)
    if cfg.kind != "cue":
        cfg = replace(cfg, kind="cue")
    started = time.perf_counter()
    rows = harness.run_cue_ensemble(cfg, args.n_ell_list)
    wall = time.perf_counter() - started
    out_csv = args.out or _out_path(cfg, "cue.csv")
    harness.write_rows_csv(out_csv, rows, harness.CSV_COLUMNS)
    summary_path = os.path.splitext(out_csv)[0] + ".json"
    stats = harness.cue_summary(rows)
    harness.write_summary(summary_path, "cue", cfg, {"csv": out_csv}, wall,
                          extra={"per_n_ell": {str(k): v for k, v in stats.items()}})
    for n_ell, s in stats.items():
        print(f"n_ell={n_ell}: mean eta {s['mean_eta']:.4f} "
              f"(std {s['std_eta']:.4f}, {s['realizations']} draws)")
    print(f"rows: {out_csv}")
    return 0


def cmd_entropy(args):
    cfg = build_config(args)
    grid = args.theta_c_grid or parse_grid("0:pi:32")
    started = time.perf_counter()
    rows = harness.run_entropy_sweep(cfg, grid)
    wall = time.perf_counter() - started
    out_csv = args.out or _out_path(cfg, "entropy.csv")
    harness.write_rows_csv(out_csv, rows, harness.ENTROPY_CSV_COLUMNS)
    summary_path = os.path.splitext(out_csv)[0] + ".json"
    harness.write_summary(summary_path, "entropy", cfg, {"csv": out_csv}, wall,
                          extra={"points": len(rows)})
    peak = max(rows, key=lambda r: r["mean_entropy_bits"])
    print(f"{len(rows)} grid points, peak mean entropy "
          f"{peak['mean_entropy_bits']:.3f} bits at theta_c={peak['theta_c']:.4f}")
    print(f"rows: {out_csv}")
    return 0


def cmd_enumerate(args):
    layout = ModuleLayout(tuple(args.layout or (5, 5)))
    if args.family == "parallel":
        schemes = enumerate_parallel_configs(layout)
        if args.connected_only:
            schemes = [s for s in schemes if s.connected]
    elif args.family == "arbitrary":
        if args.r_cross is None or args.n_a is None:
            raise SystemExit("arbitrary enumeration needs --r-cross and --n-a")
        schemes = enumerate_arbitrary_configs(layout, args.r_cross, args.n_a)
    elif args.family == "boundary":
        if args.r_cross is None:
            raise SystemExit("boundary enumeration needs --r-cross")
        edges = boundary_cross_edges(layout, args.r_cross, 0.0)
        print(len(edges))
        if args.list:
            for e in edges:
                print(f"{e.k}-{e.l}")
        return 0
    else:
        raise SystemExit(f"unknown family {args.family!r}")
    print(len(schemes))
    if args.list:
        for s in schemes:
            print(s.encode())
    return 0


def cmd_plot_data(args):
    out = args.out or os.path.join(
        os.path.dirname(os.path.abspath(args.results_csv)),
        f"plot-{args.kind.replace('_', '-')}.csv")
    rows = harness.emit_plot_data(args.results_csv, args.kind, out)
    print(f"{len(rows)} plot rows: {out}")
    return 0


def main(argv=None):
    common = _common_parser()
    parser = argparse.ArgumentParser(
        prog="mqr",
        description="modular quantum reservoir feature maps with a softmax readout")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fetch", parents=[common],
                       help="download and verify datasets")
    p.add_argument("dataset",
                   choices=sorted(datasets.CANONICAL_SHAPES) + ["all"])
    p.add_argument("--mirror", default=None, help="override the manifest mirror")
    p.set_defaults(func=cmd_fetch)

    p = sub.add_parser("baseline-pca", parents=[common],
                       help="softmax on rescaled PCA components only")
    _add_model_flags(p)
    _add_train_flags(p)
    p.set_defaults(func=cmd_baseline_pca)

    p = sub.add_parser("run", parents=[common],
                       help="full pipeline, one configuration")
    _add_model_flags(p)
    _add_train_flags(p)
    p.add_argument("--out", default=None, help="summary JSON path")
    p.add_argument("--epoch-csv", default=None,
                   help="also write per-epoch accuracy/loss rows here")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", parents=[common],
                       help="one training run per connectivity configuration")
    _add_model_flags(p)
    _add_train_flags(p)
    p.add_argument("--family", required=True,
                   choices=["parallel", "arbitrary", "boundary", "chain"])
    p.add_argument("--theta-c-grid", type=parse_grid, default=None)
    p.add_argument("--connected-only", action="store_true",
                   help="parallel family: keep configs with every pair linked")
    p.add_argument("--r-cross", type=int, default=None)
    p.add_argument("--n-a-list", type=parse_int_list, default=None)
    p.add_argument("--r-cross-list", type=parse_int_list, default=None)
    p.add_argument("--cutoff-list", type=parse_int_list, default=None)
    p.add_argument("--alpha-grid", type=parse_grid, default=None)
    p.add_argument("--theta-j-grid", type=parse_grid, default=None)
    p.add_argument("--out", default=None, help="rows CSV path")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("cue", parents=[common],
                       help="Haar-random module ensembles per edge count")
    _add_model_flags(p)
    _add_train_flags(p)
    p.add_argument("--n-ell-list", type=parse_int_list, required=True,
                   help="parallel edge counts, e.g. 0,1")
    p.add_argument("--out", default=None, help="rows CSV path")
    p.set_defaults(func=cmd_cue)

    p = sub.add_parser("entropy", parents=[common],
                       help="mean entanglement entropy over a theta_c grid")
    _add_model_flags(p)
    p.add_argument("--theta-c-grid", type=parse_grid, default=None)
    p.add_argument("--out", default=None, help="rows CSV path")
    p.set_defaults(func=cmd_entropy)

    p = sub.add_parser("enumerate", parents=[common],
                       help="count configurations without running anything")
    p.add_argument("--family", required=True,
                   choices=["parallel", "arbitrary", "boundary"])
    p.add_argument("--layout", type=parse_int_list, default=None)
    p.add_argument("--r-cross", type=int, default=None)
    p.add_argument("--n-a", type=int, default=None)
    p.add_argument("--connected-only", action="store_true")
    p.add_argument("--list", action="store_true", help="print every encoding")
    p.set_defaults(func=cmd_enumerate)

    p = sub.add_parser("plot-data", parents=[common],
                       help="reduce results CSV to series/x/y/spread rows")
    p.add_argument("results_csv")
    p.add_argument("--kind", required=True, choices=sorted(harness.PLOT_KINDS))
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_plot_data)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())

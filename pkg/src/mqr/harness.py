"""Experiment harness: one place that wires datasets, PCA, the reservoir
feature map, the softmax readout and entanglement measurement together.

Everything is seeded from a single experiment seed. Per-point training
seeds are derived from (experiment seed, point descriptor) and CUE module
seeds from (experiment seed, "cue", realization, module), so a sweep's
results do not depend on execution order or worker count.

Feature caching uses a fixed binary layout (magic MQFT): header
(version u32, n_qubits u32, n_samples u32), then the (N, 2^n) probability
matrix as little-endian float64, then N label bytes. Single runs cache
features keyed by dataset, subset, PCA fingerprint, reservoir descriptor
and split; sweep points skip the feature cache (hundreds of points at
2^n floats per sample would swamp the disk) but share the PCA cache.
"""

import csv
import hashlib
import io
import json
import os
import struct
import subprocess
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .classifier import TrainConfig, fit_standardizer, train
from .datasets import load_dataset, subset_train
from .entanglement import EntropyReport, entropy_batch
from .preprocess import (
    feature_map_batch,
    fit_pca,
    load_pca,
    pca_bytes,
    project_rescale_batch,
    save_pca,
    state_chunks,
)
from .reservoir import (
    CUEKind,
    IntraCoupling,
    ModuleLayout,
    ReservoirSpec,
    ZZKind,
    parse_scheme,
)
from .statevector import probabilities_batch
from .util import derive_seed, write_atomic

FEATURE_MAGIC = b"MQFT"
FEATURE_VERSION = 1

# learning-rate rule: the two reference scales are 20 components (lr 0.05)
# and 30 components (lr 0.002); the breakpoint sits between them
LR_SMALL = 0.05
LR_LARGE = 0.002
LR_COMPONENT_BREAK = 24

CSV_COLUMNS = [
    "config_descriptor", "dataset", "family", "scheme", "theta_c", "r_cross",
    "n_a", "n_ell", "alpha", "theta_j", "cutoff", "realization", "eta",
    "eta_star", "mean_entropy_bits", "std_entropy_bits", "mean_final_loss",
    "wall_time_s", "seed",
]

ENTROPY_CSV_COLUMNS = [
    "config_descriptor", "theta_c", "mean_entropy_bits", "std_entropy_bits",
    "n_test", "scheme", "wall_time_s", "seed",
]

EPOCH_CSV_COLUMNS = ["run", "epoch", "test_accuracy", "train_loss"]


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: str = "mnist"
    layout: tuple = (5, 5)
    kind: str = "zz"              # "zz" | "cue"
    theta_j: float = 2.0 * np.pi
    alpha: float = 1.5
    cutoff: int = None            # None: all-to-all within each module
    scheme: str = "bx:0"
    theta_c: float = np.pi / 4
    theta_g: float = np.pi / 8
    components: int = None        # None: 2 * total qubit count
    realization_index: int = 0    # CUE draw index within an ensemble
    realizations: int = 1         # CUE ensemble size
    seed: int = 0
    train: TrainConfig = field(default_factory=TrainConfig)
    train_subset: int = None
    entropy: bool = True
    chunk_size: int = 2048
    jobs: int = 1
    max_points: int = 20000
    data_dir: str = "data"
    cache_dir: str = "cache"
    out_dir: str = "results"

    def __post_init__(self):
        object.__setattr__(self, "layout", tuple(int(s) for s in self.layout))
        if self.kind not in ("zz", "cue"):
            raise ValueError(f"kind must be 'zz' or 'cue', got {self.kind!r}")
        if self.jobs < 1 or self.realizations < 1 or self.max_points < 1:
            raise ValueError("jobs, realizations and max_points must be >= 1")


def resolve_layout(cfg):
    return ModuleLayout(cfg.layout)


def resolve_components(cfg):
    return cfg.components if cfg.components is not None else 2 * sum(cfg.layout)


def resolve_spec(cfg):
    """Build the ReservoirSpec a config describes."""
    layout = resolve_layout(cfg)
    scheme = parse_scheme(cfg.scheme, cfg.theta_c)
    if cfg.kind == "zz":
        cutoff = cfg.cutoff if cfg.cutoff is not None else max(layout.sizes) - 1
        kind = ZZKind(IntraCoupling(cfg.theta_j, cfg.alpha, cutoff))
    else:
        seeds = tuple(
            derive_seed(cfg.seed, "cue", cfg.realization_index, mu)
            for mu in range(layout.m))
        kind = CUEKind(seeds)
    return ReservoirSpec(layout, kind, scheme, cfg.theta_g)


def subset_tag(cfg):
    return "all" if cfg.train_subset is None else str(cfg.train_subset)


def point_descriptor(cfg, spec):
    parts = [
        f"dataset={cfg.dataset}",
        f"subset={subset_tag(cfg)}",
        f"components={resolve_components(cfg)}",
        spec.describe(),
        f"seed={cfg.seed}",
    ]
    if cfg.kind == "cue":
        parts.append(f"realization={cfg.realization_index}")
    return ";".join(parts)


def resolve_train_config(cfg, descriptor):
    """Fill in the learning rate by feature-count rule when unset and bind
    the point-specific training seed."""
    lr = cfg.train.learning_rate
    if lr is None:
        lr = LR_SMALL if resolve_components(cfg) <= LR_COMPONENT_BREAK else LR_LARGE
    return replace(cfg.train, learning_rate=lr,
                   seed=derive_seed(cfg.seed, descriptor))


def _load_experiment_dataset(cfg):
    ds = load_dataset(cfg.dataset, cfg.data_dir)
    if cfg.train_subset is not None:
        ds = subset_train(ds, cfg.train_subset)
    return ds


def pca_cache_path(cfg):
    k = resolve_components(cfg)
    return os.path.join(
        cfg.cache_dir, f"pca-{cfg.dataset}-{subset_tag(cfg)}-k{k}.mqpc")


def pca_for(cfg, dataset):
    """Fit (or load from cache) the training-split PCA for this config."""
    k = resolve_components(cfg)
    path = pca_cache_path(cfg) if cfg.cache_dir is not None else None
    if path is not None and os.path.exists(path):
        model = load_pca(path)
        if model.k == k and model.input_dim == dataset.input_dim:
            return model
    model = fit_pca(dataset.train_images, k)
    if path is not None:
        os.makedirs(cfg.cache_dir, exist_ok=True)
        save_pca(path, model)
    return model


def pca_fingerprint(model):
    return hashlib.sha256(pca_bytes(model)).hexdigest()[:16]


def save_features(path, n_qubits, probs, labels):
    probs = np.ascontiguousarray(probs, dtype="<f8")
    labels = np.ascontiguousarray(labels, dtype=np.uint8)
    if probs.shape != (labels.size, 2 ** n_qubits):
        raise ValueError(
            f"probs shape {probs.shape} does not match {labels.size} labels "
            f"and {n_qubits} qubits")
    header = FEATURE_MAGIC + struct.pack(
        "<III", FEATURE_VERSION, n_qubits, labels.size)
    write_atomic(path, header + probs.tobytes() + labels.tobytes())


def load_features(path):
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != FEATURE_MAGIC:
        raise ValueError(f"{path}: bad magic {blob[:4]!r}")
    version, n_qubits, n_samples = struct.unpack("<III", blob[4:16])
    if version != FEATURE_VERSION:
        raise ValueError(f"{path}: unsupported version {version}")
    dim = 2 ** n_qubits
    expected = 16 + 8 * n_samples * dim + n_samples
    if len(blob) != expected:
        raise ValueError(f"{path}: {len(blob)} bytes, expected {expected}")
    probs = np.frombuffer(blob, dtype="<f8", count=n_samples * dim, offset=16)
    probs = probs.astype(np.float64).reshape(n_samples, dim)
    labels = np.frombuffer(blob, dtype=np.uint8, offset=16 + 8 * n_samples * dim)
    return n_qubits, probs, labels.astype(np.int64)


def feature_cache_path(cfg, pca_fp, spec, split):
    key = "|".join([
        str(FEATURE_VERSION), cfg.dataset, subset_tag(cfg),
        str(resolve_components(cfg)), pca_fp, spec.describe(), split,
    ])
    digest = hashlib.sha256(key.encode()).hexdigest()[:20]
    return os.path.join(cfg.cache_dir, f"feat-{digest}.mqft")


def _fused_pass(model, spec, images, chunk_size, n_a):
    """One pass over the images producing both the probability features and
    per-sample entanglement entropies."""
    n = spec.layout.n_total
    probs = np.empty((images.shape[0], 2 ** n), dtype=np.float64)
    ent = np.empty(images.shape[0], dtype=np.float64)
    for start, amps in state_chunks(model, spec, images, chunk_size):
        stop = start + amps.shape[0]
        probabilities_batch(amps, out=probs[start:stop])
        ent[start:stop] = entropy_batch(amps, n, n_a)
    return probs, ent


def _entropy_pass(model, spec, images, chunk_size, n_a):
    n = spec.layout.n_total
    ent = np.empty(images.shape[0], dtype=np.float64)
    for start, amps in state_chunks(model, spec, images, chunk_size):
        ent[start:start + amps.shape[0]] = entropy_batch(amps, n, n_a)
    return ent


def _split_features(cfg, dataset, model, spec, split, use_cache, want_entropy):
    """(features, labels, per-sample entropies or None) for one split."""
    images = dataset.train_images if split == "train" else dataset.test_images
    labels = dataset.train_labels if split == "train" else dataset.test_labels
    n = spec.layout.n_total
    n_a = spec.layout.sizes[0]
    cache_path = None
    if use_cache and cfg.cache_dir is not None:
        cache_path = feature_cache_path(cfg, pca_fingerprint(model), spec, split)
        if os.path.exists(cache_path):
            try:
                cached_n, probs, cached_labels = load_features(cache_path)
            except (ValueError, OSError, struct.error) as exc:
                warnings.warn(f"rebuilding corrupt feature cache {cache_path}: {exc}")
            else:
                if cached_n == n and cached_labels.size == labels.size:
                    ent = (_entropy_pass(model, spec, images, cfg.chunk_size, n_a)
                           if want_entropy else None)
                    return probs, labels, ent
    if want_entropy:
        probs, ent = _fused_pass(model, spec, images, cfg.chunk_size, n_a)
    else:
        probs = feature_map_batch(model, spec, images, cfg.chunk_size)
        ent = None
    if cache_path is not None:
        os.makedirs(cfg.cache_dir, exist_ok=True)
        save_features(cache_path, n, probs, labels)
    return probs, labels, ent


def _entropy_report(ent, n_a):
    return EntropyReport(
        mean_entropy=float(ent.mean()),
        std_entropy=float(ent.std()),
        per_sample=ent,
        n_a_qubits=n_a,
    )


def _run_point(cfg, dataset, model, use_cache):
    """Train one configuration, returning (RunResult, EntropyReport|None).

    Entanglement is measured over the test split across the first-module
    cut; it is only defined here for two-module layouts.
    """
    spec = resolve_spec(cfg)
    descriptor = point_descriptor(cfg, spec)
    want_entropy = cfg.entropy and spec.layout.m == 2
    train_x, train_y, _ = _split_features(
        cfg, dataset, model, spec, "train", use_cache, want_entropy=False)
    test_x, test_y, ent = _split_features(
        cfg, dataset, model, spec, "test", use_cache, want_entropy=want_entropy)
    std = fit_standardizer(train_x)
    result = train(
        std.transform(train_x), train_y, std.transform(test_x), test_y,
        resolve_train_config(cfg, descriptor),
        n_classes=dataset.n_classes, descriptor=descriptor)
    report = _entropy_report(ent, spec.layout.sizes[0]) if ent is not None else None
    return result, report


def run_single(cfg, dataset=None):
    """Full pipeline for one configuration, with feature caching."""
    if dataset is None:
        dataset = _load_experiment_dataset(cfg)
    model = pca_for(cfg, dataset)
    return _run_point(cfg, dataset, model, use_cache=True)


def run_pca_baseline(cfg, dataset=None):
    """Reference run: the rescaled principal components go straight to the
    softmax readout, no reservoir in between."""
    if dataset is None:
        dataset = _load_experiment_dataset(cfg)
    model = pca_for(cfg, dataset)
    descriptor = ";".join([
        f"dataset={cfg.dataset}", f"subset={subset_tag(cfg)}", "kind=pca_only",
        f"components={resolve_components(cfg)}", f"seed={cfg.seed}"])
    train_x = project_rescale_batch(model, dataset.train_images)
    test_x = project_rescale_batch(model, dataset.test_images)
    std = fit_standardizer(train_x)
    return train(
        std.transform(train_x), dataset.train_labels,
        std.transform(test_x), dataset.test_labels,
        resolve_train_config(cfg, descriptor),
        n_classes=dataset.n_classes, descriptor=descriptor)


def _scheme_fields(scheme):
    """family plus the family-specific count columns of a sweep row."""
    name = scheme.encode()
    if name == "none":
        return {"family": "none", "r_cross": None, "n_a": None, "n_ell": None}
    family = name.split(":", 1)[0]
    if family == "bx":
        return {"family": "bx", "r_cross": scheme.r_cross, "n_a": None, "n_ell": None}
    if family == "arb":
        return {"family": "arb", "r_cross": scheme.r_cross,
                "n_a": scheme.n_a, "n_ell": None}
    return {"family": "par", "r_cross": None, "n_a": None, "n_ell": scheme.n_ell}


def _point_row(cfg, dataset, model):
    started = time.perf_counter()
    result, report = _run_point(cfg, dataset, model, use_cache=False)
    spec = resolve_spec(cfg)
    row = {
        "config_descriptor": result.config_descriptor,
        "dataset": cfg.dataset,
        "scheme": spec.scheme.encode(),
        "theta_c": cfg.theta_c,
        "alpha": cfg.alpha if cfg.kind == "zz" else None,
        "theta_j": cfg.theta_j if cfg.kind == "zz" else None,
        "cutoff": (cfg.cutoff if cfg.cutoff is not None
                   else max(cfg.layout) - 1) if cfg.kind == "zz" else None,
        "realization": cfg.realization_index if cfg.kind == "cue" else None,
        "eta": result.eta,
        "eta_star": False,
        "mean_entropy_bits": report.mean_entropy if report else None,
        "std_entropy_bits": report.std_entropy if report else None,
        "mean_final_loss": float(result.final_losses.mean()),
        "wall_time_s": time.perf_counter() - started,
        "seed": cfg.seed,
    }
    row.update(_scheme_fields(spec.scheme))
    return row


_SHARED = {}


def _pool_init():
    try:
        from threadpoolctl import threadpool_limits
        threadpool_limits(limits=1)
    except ImportError:
        pass


def _pool_task(overrides):
    cfg = replace(_SHARED["cfg"], **overrides)
    return _point_row(cfg, _SHARED["dataset"], _SHARED["model"])


def _group_key(row):
    """Rows competing for the same best-of-count flag: same family, counts
    and shared angles; only the concrete edge choice differs."""
    return (row["family"], row["theta_c"], row["r_cross"], row["n_a"],
            row["n_ell"], row["alpha"], row["theta_j"], row["cutoff"],
            row["realization"])


def mark_eta_star(rows):
    """Set eta_star on every row attaining its group's maximum eta."""
    best = {}
    for row in rows:
        key = _group_key(row)
        if key not in best or row["eta"] > best[key]:
            best[key] = row["eta"]
    for row in rows:
        row["eta_star"] = row["eta"] == best[_group_key(row)]
    return rows


def run_sweep(cfg, points, dataset=None):
    """Run one point per override dict (fields of ExperimentConfig).
    Returns the rows sorted by config descriptor, with eta_star marked.

    With cfg.jobs > 1 points run in a process pool; results are identical
    to the sequential path because every point's seeds derive from its own
    descriptor, and the sorted merge removes any dependence on completion
    order.
    """
    points = list(points)
    if len(points) > cfg.max_points:
        raise ValueError(
            f"sweep has {len(points)} points, cap is {cfg.max_points}")
    if dataset is None:
        dataset = _load_experiment_dataset(cfg)
    model = pca_for(cfg, dataset)
    if cfg.jobs > 1:
        _SHARED["cfg"] = cfg
        _SHARED["dataset"] = dataset
        _SHARED["model"] = model
        try:
            with ProcessPoolExecutor(
                    max_workers=cfg.jobs, initializer=_pool_init) as pool:
                rows = list(pool.map(_pool_task, points, chunksize=1))
        finally:
            _SHARED.clear()
    else:
        rows = [_point_row(replace(cfg, **p), dataset, model) for p in points]
    rows.sort(key=lambda r: r["config_descriptor"])
    return mark_eta_star(rows)


def parallel_sweep_points(cfg, theta_c_values=None, connected_only=False):
    """One point per parallel mask configuration (times theta_c values)."""
    from .reservoir import enumerate_parallel_configs
    layout = resolve_layout(cfg)
    schemes = enumerate_parallel_configs(layout)
    if connected_only:
        schemes = [s for s in schemes if s.connected]
    thetas = [cfg.theta_c] if theta_c_values is None else list(theta_c_values)
    return [
        {"scheme": s.encode(), "theta_c": float(tc)}
        for tc in thetas for s in schemes
    ]


def arbitrary_sweep_points(cfg, r_cross, n_a_values, theta_c_values=None):
    """One point per way of adding n_a extra edges, for each n_a."""
    from .reservoir import enumerate_arbitrary_configs
    layout = resolve_layout(cfg)
    thetas = [cfg.theta_c] if theta_c_values is None else list(theta_c_values)
    points = []
    for tc in thetas:
        for n_a in n_a_values:
            for s in enumerate_arbitrary_configs(layout, r_cross, n_a):
                points.append({"scheme": s.encode(), "theta_c": float(tc)})
    return points


def boundary_sweep_points(cfg, r_cross_values, theta_c_values=None):
    thetas = [cfg.theta_c] if theta_c_values is None else list(theta_c_values)
    return [
        {"scheme": f"bx:{r}", "theta_c": float(tc)}
        for tc in thetas for r in r_cross_values
    ]


def chain_sweep_points(cfg, cutoff_values, alpha_values=None, theta_j_values=None):
    """Single-module range studies: vary the cutoff against either alpha or
    theta_j (grid product)."""
    alphas = [cfg.alpha] if alpha_values is None else list(alpha_values)
    thetas = [cfg.theta_j] if theta_j_values is None else list(theta_j_values)
    return [
        {"scheme": "none", "cutoff": int(r), "alpha": float(a), "theta_j": float(tj)}
        for r in cutoff_values for a in alphas for tj in thetas
    ]


def cue_sweep_points(cfg, n_ell_values):
    """CUE ensemble points: contiguous parallel masks with n_ell edges,
    cfg.realizations draws each."""
    layout = resolve_layout(cfg)
    if len(set(layout.sizes)) != 1 or layout.m != 2:
        raise ValueError("CUE ensembles use two equal-size modules")
    n0 = layout.sizes[0]
    points = []
    for n_ell in n_ell_values:
        if not 0 <= n_ell <= n0:
            raise ValueError(f"n_ell must be in 0..{n0}, got {n_ell}")
        mask = "1" * n_ell + "0" * (n0 - n_ell)
        for r in range(cfg.realizations):
            points.append({"kind": "cue", "scheme": f"par:{mask}",
                           "realization_index": r})
    return points


def run_cue_ensemble(cfg, n_ell_values, dataset=None):
    return run_sweep(cfg, cue_sweep_points(cfg, n_ell_values), dataset=dataset)


def cue_summary(rows):
    """Per-n_ell mean/std of eta over realizations."""
    groups = {}
    for row in rows:
        groups.setdefault(row["n_ell"], []).append(row["eta"])
    out = {}
    for n_ell in sorted(groups):
        etas = np.asarray(groups[n_ell])
        out[n_ell] = {
            "mean_eta": float(etas.mean()),
            "std_eta": float(etas.std()),
            "realizations": int(etas.size),
        }
    return out


def run_entropy_sweep(cfg, theta_c_values, dataset=None):
    """Mean test-set entanglement entropy per theta_c, no training."""
    layout = resolve_layout(cfg)
    if layout.m != 2:
        raise ValueError("entanglement cut needs exactly two modules")
    if dataset is None:
        dataset = _load_experiment_dataset(cfg)
    model = pca_for(cfg, dataset)
    rows = []
    for tc in theta_c_values:
        started = time.perf_counter()
        point = replace(cfg, theta_c=float(tc))
        spec = resolve_spec(point)
        ent = _entropy_pass(model, spec, dataset.test_images,
                            cfg.chunk_size, layout.sizes[0])
        rows.append({
            "config_descriptor": point_descriptor(point, spec),
            "theta_c": float(tc),
            "mean_entropy_bits": float(ent.mean()),
            "std_entropy_bits": float(ent.std()),
            "n_test": int(ent.size),
            "scheme": spec.scheme.encode(),
            "wall_time_s": time.perf_counter() - started,
            "seed": cfg.seed,
        })
    return rows


def epoch_rows(result):
    """Per-epoch accuracy/loss series of a RunResult, one row per
    (run, epoch) with epoch counting from 1."""
    rows = []
    acc = result.per_run_epoch_accuracies
    loss = result.per_run_epoch_losses
    for u in range(acc.shape[0]):
        for e in range(acc.shape[1]):
            rows.append({
                "run": u,
                "epoch": e + 1,
                "test_accuracy": float(acc[u, e]),
                "train_loss": float(loss[u, e]),
            })
    return rows


def _csv_cell(value):
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_rows_csv(path, rows, columns):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_csv_cell(row.get(c)) for c in columns])
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    write_atomic(path, buf.getvalue())


def read_rows_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def version_string():
    try:
        out = subprocess.run(
            ["git", "describe", "--tags", "--always", "--dirty"],
            cwd=os.path.dirname(os.path.abspath(__file__)),
            capture_output=True, text=True, timeout=10)
        if out.returncode == 0 and out.stdout.strip():
            return out.stdout.strip()
    except OSError:
        pass
    try:
        from importlib.metadata import version
        return version("mqr")
    except Exception:
        return "unknown"


def write_summary(path, command, cfg, outputs, wall_time_s, extra=None):
    payload = {
        "command": command,
        "version": version_string(),
        "config": asdict(cfg),
        "outputs": outputs,
        "wall_time_s": wall_time_s,
    }
    if extra:
        payload.update(extra)
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    write_atomic(path, json.dumps(payload, indent=2, default=str) + "\n")


PLOT_KINDS = {
    "acc_vs_alpha": ("alpha", "eta", None, "cutoff"),
    "acc_vs_thetaj": ("theta_j", "eta", None, "cutoff"),
    "acc_vs_thetac": ("theta_c", "eta", None, "scheme"),
    "acc_vs_nl": ("n_ell", "eta", None, "theta_c"),
    "entropy_vs_thetac": ("theta_c", "mean_entropy_bits", "std_entropy_bits", "scheme"),
    "acc_vs_entropy": ("mean_entropy_bits", "eta", None, "scheme"),
}


def emit_plot_data(results_csv, kind, out_path):
    """Reduce a results CSV to plot-ready (series, x, y, spread) rows.

    acc_vs_nl keeps only the best-of-count rows (eta_star); the others keep
    every row that has both coordinates.
    """
    if kind not in PLOT_KINDS:
        raise ValueError(f"unknown figure kind {kind!r}, expected one of "
                         f"{sorted(PLOT_KINDS)}")
    x_col, y_col, spread_col, series_col = PLOT_KINDS[kind]
    rows = read_rows_csv(results_csv)
    out = []
    for row in rows:
        if kind == "acc_vs_nl" and row.get("eta_star") != "true":
            continue
        x = row.get(x_col, "")
        y = row.get(y_col, "")
        if x == "" or y == "":
            continue
        spread = row.get(spread_col, "") if spread_col else ""
        series = row.get(series_col, "")
        out.append({"series": series, "x": float(x), "y": float(y),
                    "spread": float(spread) if spread != "" else None})
    out.sort(key=lambda r: (r["series"], r["x"]))
    write_rows_csv(out_path, out, ["series", "x", "y", "spread"])
    return out

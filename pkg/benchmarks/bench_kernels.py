"""Throughput of the batched encode -> reservoir -> measure pipeline on the
compiled kernels versus the pure-numpy fallback.

Runs the same workload through both paths (toggled at runtime, same process)
and reports samples/second plus the largest absolute deviation between the
two probability outputs.

    python benchmarks/bench_kernels.py --qubits 10 --batch 512 --repeats 5
"""

import argparse
import time

import numpy as np

from mqr._accel import HAVE_NUMBA, set_numba_enabled
from mqr.reservoir import IntraCoupling, ModuleLayout, ReservoirSpec, ZZKind, parse_scheme
from mqr.statevector import probabilities_batch, product_state_batch, rx_layer_batch
from mqr.preprocess import _factors_from_angles
from mqr.reservoir import apply_reservoir_batch


def build_workload(n_qubits, batch, seed=0):
    rng = np.random.default_rng(seed)
    half = n_qubits // 2
    layout = ModuleLayout((half, n_qubits - half) if half else (n_qubits,))
    scheme = parse_scheme("bx:1" if layout.m == 2 else "none", np.pi / 4)
    spec = ReservoirSpec(layout, ZZKind(IntraCoupling(2 * np.pi, 1.5, max(layout.sizes) - 1)),
                         scheme, np.pi / 8)
    theta = rng.uniform(0.0, np.pi, (batch, n_qubits))
    phi = rng.uniform(0.0, np.pi, (batch, n_qubits))
    return spec, theta, phi


def run_pipeline(spec, theta, phi, diag, mats):
    f0, f1 = _factors_from_angles(theta, phi)
    amps = product_state_batch(f0, f1)
    apply_reservoir_batch(amps, spec, diag=diag, mats=mats)
    return probabilities_batch(amps)


def time_path(spec, theta, phi, repeats):
    diag = spec.diagonal_phases()
    mats = spec.module_unitaries()
    run_pipeline(spec, theta, phi, diag, mats)  # warmup (JIT compile, caches)
    best = float("inf")
    probs = None
    for _ in range(repeats):
        started = time.perf_counter()
        probs = run_pipeline(spec, theta, phi, diag, mats)
        best = min(best, time.perf_counter() - started)
    return best, probs


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--qubits", type=int, default=10)
    parser.add_argument("--batch", type=int, default=512)
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()

    spec, theta, phi = build_workload(args.qubits, args.batch)
    print(f"{args.qubits} qubits, batch {args.batch}, best of {args.repeats}")

    results = {}
    for label, flag in (("numpy", False), ("numba", True)):
        if flag and not HAVE_NUMBA:
            print("numba: not installed, skipping")
            continue
        previous = set_numba_enabled(flag)
        try:
            seconds, probs = time_path(spec, theta, phi, args.repeats)
        finally:
            set_numba_enabled(previous)
        results[label] = (seconds, probs)
        print(f"{label:>6}: {seconds * 1e3:8.2f} ms  "
              f"{args.batch / seconds:10.0f} samples/s")

    if len(results) == 2:
        deviation = np.abs(results["numba"][1] - results["numpy"][1]).max()
        ratio = results["numpy"][0] / results["numba"][0]
        print(f"max |numba - numpy| deviation: {deviation:.3e}")
        print(f"speedup: {ratio:.2f}x")


if __name__ == "__main__":
    main()

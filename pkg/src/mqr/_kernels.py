"""Numba-compiled hot loops for the batched statevector pipeline.

Import this module only when numba is available (``mqr._accel.HAVE_NUMBA``).
Every kernel has a vectorized numpy twin in ``mqr.statevector``; both sides
perform the same arithmetic in the same order so the two paths agree to the
last bit in practice. Kernels mutate their array arguments in place and
assume C-contiguous complex128 input.
"""

import numpy as np
from numba import njit


@njit(cache=True)
def product_batch(f0, f1, out):
    """Expand per-qubit factors (f0[s,q], f1[s,q]) into product states.

    Qubit q is appended as the least-significant bit of the prefix built so
    far, which realizes the qubit-1-most-significant index convention.
    """
    n_samples, n_qubits = f0.shape
    for s in range(n_samples):
        row = out[s]
        row[0] = 1.0 + 0.0j
        size = 1
        for q in range(n_qubits):
            a0 = f0[s, q]
            a1 = f1[s, q]
            for i in range(size - 1, -1, -1):
                v = row[i]
                row[2 * i + 1] = v * a1
                row[2 * i] = v * a0
            size *= 2


@njit(cache=True)
def diag_mult_batch(amps, phases):
    """amps[s, z] *= phases[z] for every sample."""
    n_samples, dim = amps.shape
    for s in range(n_samples):
        for z in range(dim):
            amps[s, z] *= phases[z]


@njit(cache=True)
def rx_layer_batch(amps, n_qubits, c, ms):
    """Apply [[c, ms], [ms, c]] to every qubit of every sample.

    c = cos(theta/2) and ms = -i sin(theta/2), i.e. one Rx(theta) per qubit,
    applied from qubit 1 (most significant) down.
    """
    n_samples, dim = amps.shape
    for s in range(n_samples):
        row = amps[s]
        for q in range(n_qubits):
            stride = dim >> (q + 1)
            base = 0
            while base < dim:
                for off in range(stride):
                    i0 = base + off
                    i1 = i0 + stride
                    x0 = row[i0]
                    x1 = row[i1]
                    row[i0] = c * x0 + ms * x1
                    row[i1] = ms * x0 + c * x1
                base += 2 * stride


@njit(cache=True)
def abs2_batch(amps, out):
    """out[s, z] = |amps[s, z]|^2 without the sqrt round-trip of np.abs."""
    n_samples, dim = amps.shape
    for s in range(n_samples):
        for z in range(dim):
            v = amps[s, z]
            out[s, z] = v.real * v.real + v.imag * v.imag

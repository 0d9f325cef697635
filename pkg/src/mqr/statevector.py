"""Exact complex statevector of n qubits with the minimal gate set.

Index convention (shared by every module in this package): qubit indices are
1-based, qubit 1 is the most significant bit of the amplitude index, so basis
state z = (z_1, ..., z_n) lives at index sum_q z_q * 2^(n-q). The Pauli-Z
sign of qubit q in basis state z is s_q = 1 - 2*z_q. This makes a contiguous
block of leading qubits a contiguous row index under reshape, which is what
the bipartite entropy code relies on.

Single-state operations are pure: they validate, then return a new
StateVector. The *_batch functions are the hot path; they work on (N, 2^n)
complex128 arrays in place and dispatch between numba kernels and vectorized
numpy according to ``mqr._accel``.
"""

from dataclasses import dataclass

import numpy as np

from . import _accel

if _accel.HAVE_NUMBA:
    from . import _kernels

MAX_QUBITS = 26

UNITARY_TOL = 1e-10
PHASE_TOL = 1e-12
NORM_TOL = 1e-12


@dataclass
class StateVector:
    """n-qubit pure state as 2^n complex amplitudes."""

    n_qubits: int
    amplitudes: np.ndarray

    def __post_init__(self):
        if not 1 <= self.n_qubits <= MAX_QUBITS:
            raise ValueError(
                f"n_qubits must be in [1, {MAX_QUBITS}], got {self.n_qubits}")
        self.amplitudes = np.ascontiguousarray(self.amplitudes, dtype=np.complex128)
        if self.amplitudes.shape != (2 ** self.n_qubits,):
            raise ValueError(
                f"amplitude vector has shape {self.amplitudes.shape}, "
                f"expected ({2 ** self.n_qubits},)")

    @property
    def dim(self):
        return self.amplitudes.shape[0]

    def norm(self):
        a = self.amplitudes
        return float(np.sum(a.real * a.real + a.imag * a.imag))


def zero_state(n):
    """|0...0> on n qubits."""
    if not 1 <= n <= MAX_QUBITS:
        raise ValueError(f"n must be in [1, {MAX_QUBITS}], got {n}")
    amps = np.zeros(2 ** n, dtype=np.complex128)
    amps[0] = 1.0
    return StateVector(n, amps)


def product_state(single_qubit_states):
    """Tensor product of length-2 unit vectors, qubit 1 first (most significant)."""
    factors = [np.asarray(f, dtype=np.complex128).reshape(-1) for f in single_qubit_states]
    n = len(factors)
    if not 1 <= n <= MAX_QUBITS:
        raise ValueError(f"need between 1 and {MAX_QUBITS} factors, got {n}")
    for q, f in enumerate(factors, start=1):
        if f.shape != (2,):
            raise ValueError(f"factor {q} is not a length-2 vector")
        nrm = abs(f[0]) ** 2 + abs(f[1]) ** 2
        if abs(nrm - 1.0) > NORM_TOL:
            raise ValueError(f"factor {q} is not normalized: |f|^2 = {nrm!r}")
    f0 = np.array([f[0] for f in factors], dtype=np.complex128).reshape(1, n)
    f1 = np.array([f[1] for f in factors], dtype=np.complex128).reshape(1, n)
    return StateVector(n, product_state_batch(f0, f1)[0])


def _check_unitary(u, k):
    dim = 2 ** k
    u = np.ascontiguousarray(u, dtype=np.complex128)
    if u.shape != (dim, dim):
        raise ValueError(f"matrix has shape {u.shape}, expected ({dim}, {dim})")
    err = np.max(np.abs(u.conj().T @ u - np.eye(dim)))
    if err > UNITARY_TOL:
        raise ValueError(f"matrix is not unitary: max |u†u - I| = {err:.3e}")
    return u


def apply_single_qubit(state, q, u):
    """Apply a 2x2 unitary to qubit q (1-based), identity elsewhere."""
    n = state.n_qubits
    if not 1 <= q <= n:
        raise IndexError(f"qubit index {q} out of range 1..{n}")
    u = _check_unitary(u, 1)
    stride = 2 ** (n - q)
    t = state.amplitudes.reshape(-1, 2, stride)
    out = np.empty_like(t)
    out[:, 0, :] = u[0, 0] * t[:, 0, :] + u[0, 1] * t[:, 1, :]
    out[:, 1, :] = u[1, 0] * t[:, 0, :] + u[1, 1] * t[:, 1, :]
    return StateVector(n, out.reshape(-1))


def apply_diagonal_phase(state, phases):
    """Multiply amplitudes elementwise by unit-modulus phases."""
    phases = np.ascontiguousarray(phases, dtype=np.complex128)
    if phases.shape != (state.dim,):
        raise ValueError(
            f"phase vector has length {phases.shape}, expected ({state.dim},)")
    moduli = phases.real ** 2 + phases.imag ** 2
    err = np.max(np.abs(moduli - 1.0))
    if err > 2 * PHASE_TOL:
        raise ValueError(f"phases are not unimodular: max ||p|^2 - 1| = {err:.3e}")
    return StateVector(state.n_qubits, state.amplitudes * phases)


def apply_block_unitary(state, first_qubit, u):
    """Apply a dense 2^k x 2^k unitary to the contiguous qubits
    [first_qubit, first_qubit + k - 1]."""
    n = state.n_qubits
    u = np.ascontiguousarray(u, dtype=np.complex128)
    if u.ndim != 2 or u.shape[0] != u.shape[1] or u.shape[0] & (u.shape[0] - 1):
        raise ValueError(f"block matrix must be square power-of-two, got {u.shape}")
    k = int(u.shape[0]).bit_length() - 1
    if first_qubit < 1 or first_qubit + k - 1 > n:
        raise IndexError(
            f"block [{first_qubit}, {first_qubit + k - 1}] out of range 1..{n}")
    _check_unitary(u, k)
    amps = state.amplitudes.reshape(1, -1).copy()
    apply_block_batch(amps, first_qubit, u, n)
    return StateVector(n, amps[0])


def probabilities(state):
    """Computational-basis probabilities p_z = |a_z|^2."""
    a = state.amplitudes
    return a.real ** 2 + a.imag ** 2


# ---------------------------------------------------------------------------
# Batched hot path. All arrays are C-contiguous complex128 of shape (N, 2^n);
# operations mutate in place unless stated otherwise.
# ---------------------------------------------------------------------------

def product_state_batch(f0, f1):
    """Build N product states from per-qubit amplitudes f0[s, q], f1[s, q]."""
    f0 = np.ascontiguousarray(f0, dtype=np.complex128)
    f1 = np.ascontiguousarray(f1, dtype=np.complex128)
    n_samples, n = f0.shape
    out = np.empty((n_samples, 2 ** n), dtype=np.complex128)
    if _accel.numba_enabled():
        _kernels.product_batch(f0, f1, out)
        return out
    amps = np.ones((n_samples, 1), dtype=np.complex128)
    for q in range(n):
        fac = np.stack((f0[:, q], f1[:, q]), axis=1)
        amps = (amps[:, :, None] * fac[:, None, :]).reshape(n_samples, -1)
    out[:] = amps
    return out


def diagonal_batch(amps, phases):
    """amps[s] *= phases, in place."""
    if _accel.numba_enabled():
        _kernels.diag_mult_batch(amps, phases)
    else:
        amps *= phases[None, :]


def rx_layer_batch(amps, n_qubits, theta):
    """Apply Rx(theta) = exp(-i theta X / 2) to every qubit, in place."""
    c = float(np.cos(0.5 * theta))
    ms = -1j * float(np.sin(0.5 * theta))
    if _accel.numba_enabled():
        _kernels.rx_layer_batch(amps, n_qubits, c, ms)
        return
    n_samples, dim = amps.shape
    for q in range(n_qubits):
        stride = dim >> (q + 1)
        view = amps.reshape(n_samples, -1, 2, stride)
        x0 = view[:, :, 0, :].copy()
        x1 = view[:, :, 1, :]
        view[:, :, 0, :] = c * x0 + ms * x1
        view[:, :, 1, :] = ms * x0 + c * x1


def apply_block_batch(amps, first_qubit, u, n_qubits):
    """Apply a dense unitary to a contiguous qubit block of every sample,
    in place. Always numpy: the contraction is BLAS-bound either way."""
    n_samples, dim = amps.shape
    d = u.shape[0]
    k = int(d).bit_length() - 1
    left = 2 ** (first_qubit - 1)
    right = dim // (left * d)
    if right == 1:
        view = amps.reshape(n_samples * left, d)
        view[:] = view @ u.T
        return
    view = amps.reshape(n_samples * left, d, right)
    # out[L, a, r] = sum_b u[a, b] view[L, b, r]
    view[:] = np.swapaxes(np.tensordot(view, u, axes=([1], [1])), 1, 2)


def probabilities_batch(amps, out=None):
    """out[s, z] = |amps[s, z]|^2."""
    if out is None:
        out = np.empty(amps.shape, dtype=np.float64)
    if _accel.numba_enabled():
        _kernels.abs2_batch(amps, out)
    else:
        np.add(amps.real ** 2, amps.imag ** 2, out=out)
    return out

"""Bipartite entanglement entropy of final reservoir states.

The cut is always between the first n_a qubits and the rest, matching the
module boundary for two-module layouts. Entropy is measured in bits
(base-2 log of the squared Schmidt coefficients); spectrum terms below
1e-15 contribute zero so that product states come out exactly 0.0.
"""

from dataclasses import dataclass

import numpy as np

EIG_FLOOR = 1e-15


def _spectrum_entropy(lam2):
    """Shannon entropy in bits of one probability spectrum."""
    kept = lam2[lam2 >= EIG_FLOOR]
    if kept.size == 0:
        return 0.0
    return float(-np.sum(kept * np.log2(kept)))


def _check_cut(n_qubits, n_a):
    if not 1 <= n_a <= n_qubits - 1:
        raise IndexError(
            f"cut size must be in 1..{n_qubits - 1}, got {n_a}")


def schmidt_entropy(state, n_a):
    """Entanglement entropy across the first-n_a-qubits cut, via SVD of the
    2^n_a x 2^(n - n_a) coefficient matrix."""
    _check_cut(state.n_qubits, n_a)
    m = state.amplitudes.reshape(2 ** n_a, -1)
    lam = np.linalg.svd(m, compute_uv=False)
    return _spectrum_entropy(lam ** 2)


def reduced_density_entropy(state, n_a):
    """Same quantity from the eigenvalues of the reduced density matrix
    rho_A = M M^dagger. Kept as an independent route for cross-checks."""
    _check_cut(state.n_qubits, n_a)
    m = state.amplitudes.reshape(2 ** n_a, -1)
    rho = m @ m.conj().T
    lam2 = np.linalg.eigvalsh(rho)
    return _spectrum_entropy(lam2)


def entropy_batch(amps, n_qubits, n_a):
    """Per-sample entanglement entropies for an (N, 2^n) amplitude batch.

    Eigendecomposes the smaller Gram matrix of each sample's coefficient
    matrix (d x d with d = min(2^n_a, 2^(n-n_a))), stacked in one eigvalsh
    call per batch.
    """
    _check_cut(n_qubits, n_a)
    amps = np.asarray(amps)
    n_samples = amps.shape[0]
    da = 2 ** n_a
    db = 2 ** (n_qubits - n_a)
    m = amps.reshape(n_samples, da, db)
    if da <= db:
        gram = m @ m.conj().transpose(0, 2, 1)
    else:
        gram = m.conj().transpose(0, 2, 1) @ m
    lam2 = np.linalg.eigvalsh(gram)
    terms = np.where(lam2 >= EIG_FLOOR, -lam2 * np.log2(np.maximum(lam2, EIG_FLOOR)), 0.0)
    return terms.sum(axis=1)


@dataclass(frozen=True)
class EntropyReport:
    """Entanglement statistics over a set of states for one cut."""

    mean_entropy: float
    std_entropy: float
    per_sample: np.ndarray
    n_a_qubits: int


def average_entropy(states, n_a):
    """EntropyReport over a batch: an (N, 2^n) array or a sequence of
    StateVector instances."""
    if isinstance(states, np.ndarray):
        if states.ndim != 2:
            raise ValueError(f"expected an (N, 2^n) array, got shape {states.shape}")
        n_samples, dim = states.shape
        if n_samples == 0:
            raise ValueError("need at least one state")
        n_qubits = dim.bit_length() - 1
        if dim != 2 ** n_qubits:
            raise ValueError(f"row length {dim} is not a power of two")
        per = entropy_batch(states, n_qubits, n_a)
    else:
        states = list(states)
        if not states:
            raise ValueError("need at least one state")
        n_qubits = states[0].n_qubits
        if any(s.n_qubits != n_qubits for s in states):
            raise ValueError("all states must have the same qubit count")
        amps = np.stack([s.amplitudes for s in states])
        per = entropy_batch(amps, n_qubits, n_a)
    return EntropyReport(
        mean_entropy=float(per.mean()),
        std_entropy=float(per.std()),
        per_sample=per,
        n_a_qubits=n_a,
    )

"""Classical preprocessing and the quantum feature map.

Pipeline per image: project onto the top-k principal components (k = 2n),
rescale each component to [0, 1] using the min/max observed on the training
split, turn the 2n values into per-qubit rotation angles theta_q = pi * I_q,
phi_q = pi * I_{n+q}, build the product state

    |q> = e^{-i phi/2} cos(theta/2) |0> + e^{+i phi/2} sin(theta/2) |1>,

push it through the reservoir, and read out all 2^n basis probabilities.

PCA is fit on the training split only. Components follow the
largest-absolute-entry-positive sign convention so models are reproducible
across runs and platforms.
"""

import struct
from dataclasses import dataclass

import numpy as np

from .reservoir import apply_reservoir_batch
from .statevector import probabilities_batch, product_state_batch
from .util import write_atomic

MAX_INPUT_DIM = 3072

PCA_MAGIC = b"MQPC"
PCA_VERSION = 1


@dataclass(frozen=True)
class PcaModel:
    """Fitted projection plus the training-split component ranges."""

    mean: np.ndarray        # (D,)
    components: np.ndarray  # (k, D), orthonormal rows
    variances: np.ndarray   # (k,), descending
    train_min: np.ndarray   # (k,)
    train_max: np.ndarray   # (k,)

    @property
    def k(self):
        return self.components.shape[0]

    @property
    def input_dim(self):
        return self.components.shape[1]


def fit_pca(train, k):
    """Top-k PCA via eigendecomposition of the sample covariance (the
    1/(N-1) normalization)."""
    x = np.ascontiguousarray(train, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError(f"expected an (N, D) matrix, got shape {x.shape}")
    n_samples, input_dim = x.shape
    if input_dim > MAX_INPUT_DIM:
        raise ValueError(f"input dimension {input_dim} exceeds the {MAX_INPUT_DIM} cap")
    if not 1 <= k <= min(n_samples - 1, input_dim):
        raise ValueError(
            f"k must be in 1..min(N-1, D) = {min(n_samples - 1, input_dim)}, got {k}")
    mean = x.mean(axis=0)
    centered = x - mean
    cov = centered.T @ centered / (n_samples - 1)
    evals, evecs = np.linalg.eigh(cov)  # ascending
    top = np.arange(input_dim)[::-1][:k]
    variances = evals[top].copy()
    components = np.ascontiguousarray(evecs[:, top].T)
    floor = input_dim * np.finfo(np.float64).eps * max(evals[-1], 0.0)
    if variances[-1] <= floor:
        raise ValueError(
            f"component {k} has numerically zero variance ({variances[-1]:.3e})")
    # sign convention: the largest-magnitude entry of each component is positive
    flip = components[np.arange(k), np.argmax(np.abs(components), axis=1)] < 0
    components[flip] *= -1.0
    proj = centered @ components.T
    train_min = proj.min(axis=0)
    train_max = proj.max(axis=0)
    if np.any(train_max <= train_min):
        j = int(np.argmax(train_max <= train_min))
        raise ValueError(f"component {j + 1} is constant on the training split")
    return PcaModel(mean, components, variances, train_min, train_max)


def project_rescale(model, x):
    """Project one image and clip each component into [0, 1] using the
    training-split ranges."""
    return project_rescale_batch(model, np.asarray(x, dtype=np.float64)[None, :])[0]


def project_rescale_batch(model, x):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != model.input_dim:
        raise ValueError(
            f"expected (N, {model.input_dim}) inputs, got shape {x.shape}")
    proj = (x - model.mean) @ model.components.T
    span = model.train_max - model.train_min
    return np.clip((proj - model.train_min) / span, 0.0, 1.0)


@dataclass(frozen=True)
class EncodingAngles:
    """Per-qubit rotation angles, each in [0, pi]."""

    theta: np.ndarray
    phi: np.ndarray

    def __post_init__(self):
        theta = np.ascontiguousarray(self.theta, dtype=np.float64)
        phi = np.ascontiguousarray(self.phi, dtype=np.float64)
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "phi", phi)
        if theta.shape != phi.shape or theta.ndim != 1:
            raise ValueError(
                f"theta and phi must be equal-length vectors, got {theta.shape} and {phi.shape}")
        for name, a in (("theta", theta), ("phi", phi)):
            if a.size and (a.min() < 0.0 or a.max() > np.pi):
                raise ValueError(f"{name} angles must lie in [0, pi]")


def angles_from_components(rescaled):
    """Split 2n rescaled components into n theta angles then n phi angles."""
    rescaled = np.asarray(rescaled, dtype=np.float64)
    if rescaled.ndim != 1 or rescaled.size % 2:
        raise ValueError(f"need an even-length component vector, got shape {rescaled.shape}")
    n = rescaled.size // 2
    return EncodingAngles(np.pi * rescaled[:n], np.pi * rescaled[n:])


def _factors_from_angles(theta, phi):
    half = 0.5 * phi
    f0 = np.exp(-1j * half) * np.cos(0.5 * theta)
    f1 = np.exp(1j * half) * np.sin(0.5 * theta)
    return f0, f1


def encoding_factors(rescaled):
    """Batch single-qubit factors for (N, 2n) rescaled components: the
    (N, n) amplitude arrays (f0, f1) of each qubit's pure state."""
    rescaled = np.asarray(rescaled, dtype=np.float64)
    if rescaled.ndim != 2 or rescaled.shape[1] % 2:
        raise ValueError(f"need (N, 2n) components, got shape {rescaled.shape}")
    n = rescaled.shape[1] // 2
    return _factors_from_angles(np.pi * rescaled[:, :n], np.pi * rescaled[:, n:])


def encode(angles):
    """Product state for one image's encoding angles (qubit 1 = first entry)."""
    from .statevector import StateVector

    f0, f1 = _factors_from_angles(angles.theta[None, :], angles.phi[None, :])
    amps = product_state_batch(f0, f1)
    return StateVector(angles.theta.size, amps[0])


def _check_model_matches(model, spec):
    n = spec.layout.n_total
    if model.k != 2 * n:
        raise ValueError(
            f"PCA keeps {model.k} components but a {n}-qubit layout needs {2 * n}")


def state_chunks(model, spec, x, chunk_size=2048, diag=None, mats=None):
    """Yield (start, amps) final-state chunks for the images in x."""
    _check_model_matches(model, spec)
    rescaled = project_rescale_batch(model, x)
    if diag is None:
        diag = spec.diagonal_phases()
    if mats is None:
        mats = spec.module_unitaries()
    for start in range(0, rescaled.shape[0], chunk_size):
        block = rescaled[start:start + chunk_size]
        f0, f1 = encoding_factors(block)
        amps = product_state_batch(f0, f1)
        apply_reservoir_batch(amps, spec, diag=diag, mats=mats)
        yield start, amps


def feature_map_batch(model, spec, x, chunk_size=2048):
    """All 2^n basis probabilities for each image in x, as an (N, 2^n)
    float64 matrix."""
    x = np.asarray(x, dtype=np.float64)
    n = spec.layout.n_total
    out = np.empty((x.shape[0], 2 ** n), dtype=np.float64)
    for start, amps in state_chunks(model, spec, x, chunk_size):
        probabilities_batch(amps, out=out[start:start + amps.shape[0]])
    return out


def feature_map(model, spec, x):
    """Feature vector (length 2^n) for a single image."""
    return feature_map_batch(model, spec, np.asarray(x, dtype=np.float64)[None, :])[0]


def pca_bytes(model):
    """The fixed little-endian serialization (magic MQPC): header
    (version, D, k) then mean, components row-major, variances, train_min,
    train_max as float64."""
    parts = [PCA_MAGIC, struct.pack("<III", PCA_VERSION, model.input_dim, model.k)]
    for arr in (model.mean, model.components, model.variances,
                model.train_min, model.train_max):
        parts.append(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    return b"".join(parts)


def save_pca(path, model):
    write_atomic(path, pca_bytes(model))


def load_pca(path):
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != PCA_MAGIC:
            raise ValueError(f"bad magic {magic!r}, expected {PCA_MAGIC!r}")
        version, input_dim, k = struct.unpack("<III", fh.read(12))
        if version != PCA_VERSION:
            raise ValueError(f"unsupported version {version}")
        body = fh.read()
    expected = 8 * (input_dim + k * input_dim + 3 * k)
    if len(body) != expected:
        raise ValueError(f"payload has {len(body)} bytes, expected {expected}")
    flat = np.frombuffer(body, dtype="<f8")
    pos = 0

    def take(count, shape):
        nonlocal pos
        out = flat[pos:pos + count].astype(np.float64).reshape(shape)
        pos += count
        return out

    mean = take(input_dim, (input_dim,))
    components = take(k * input_dim, (k, input_dim))
    variances = take(k, (k,))
    train_min = take(k, (k,))
    train_max = take(k, (k,))
    return PcaModel(mean, components, variances, train_min, train_max)

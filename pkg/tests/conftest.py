"""Shared synthetic data builders for the test suite."""

import gzip
import hashlib
import struct

import numpy as np
import pytest

from mqr.datasets import Dataset


def make_synth_dataset(seed=0, n_train=300, n_test=150, input_dim=30, name="mnist"):
    """Ten noisy class centers in [0, 1]^D: linearly separable enough to
    train on, structured enough for PCA to matter."""
    rng = np.random.default_rng(seed)
    centers = rng.random((10, input_dim))

    def split(n):
        y = rng.integers(0, 10, n)
        x = np.clip(centers[y] + 0.08 * rng.standard_normal((n, input_dim)), 0.0, 1.0)
        return x, y

    train_x, train_y = split(n_train)
    test_x, test_y = split(n_test)
    return Dataset(name, train_x, train_y, test_x, test_y)


@pytest.fixture
def synth_dataset():
    return make_synth_dataset()


def write_idx_images(path, images):
    """images: (N, rows, cols) uint8."""
    n, rows, cols = images.shape
    with open(path, "wb") as fh:
        fh.write(struct.pack(">IIII", 0x00000803, n, rows, cols))
        fh.write(images.tobytes())


def write_idx_labels(path, labels):
    with open(path, "wb") as fh:
        fh.write(struct.pack(">II", 0x00000801, labels.size))
        fh.write(labels.astype(np.uint8).tobytes())


def write_cifar_batch(path, images, labels):
    """images: (N, 3072) uint8, labels: (N,)."""
    records = np.concatenate(
        [labels.astype(np.uint8)[:, None], images], axis=1)
    with open(path, "wb") as fh:
        fh.write(records.tobytes())


def gzip_file(src, dest):
    with open(src, "rb") as fh:
        data = fh.read()
    with gzip.open(dest, "wb") as out:
        out.write(data)
    return data


def md5_of(path):
    h = hashlib.md5()
    with open(path, "rb") as fh:
        h.update(fh.read())
    return h.hexdigest()

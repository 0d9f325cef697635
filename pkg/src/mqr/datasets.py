"""Dataset download, verification and loading.

Three 10-class image sets in their original binary formats: IDX for the two
28x28 grayscale sets, the 3073-byte-record binary batches for the 32x32
color set. Pixels are scaled to [0, 1] by dividing by 255; images are
flattened row-major (channel-major for the color set, matching the record
layout).

Downloads are pinned by a manifest shipped with the package (archive size +
md5, plus expected extracted sizes). fetch() is idempotent: files already
extracted with the right size are left alone.
"""

import gzip
import hashlib
import importlib.resources
import json
import os
import struct
import tarfile
import time
import urllib.error
import urllib.request
from dataclasses import dataclass

import numpy as np

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801
CIFAR_RECORD = 3073
N_CLASSES = 10

# (train count, test count, input dimension)
CANONICAL_SHAPES = {
    "mnist": (60000, 10000, 784),
    "fashion_mnist": (60000, 10000, 784),
    "cifar10": (50000, 10000, 3072),
}

_IDX_FILES = {
    "train": ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
    "test": ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
}


class TransportError(RuntimeError):
    """Download failed after retries."""


class IntegrityError(ValueError):
    """Downloaded or on-disk content does not match the manifest."""


@dataclass(frozen=True)
class Dataset:
    name: str
    train_images: np.ndarray  # (N_train, D) float64 in [0, 1]
    train_labels: np.ndarray  # (N_train,) int64
    test_images: np.ndarray
    test_labels: np.ndarray

    @property
    def input_dim(self):
        return self.train_images.shape[1]

    @property
    def n_classes(self):
        return N_CLASSES


def load_manifest():
    text = (importlib.resources.files("mqr") / "data_manifest.json").read_text()
    return json.loads(text)


def _check_name(name):
    if name not in CANONICAL_SHAPES:
        raise ValueError(
            f"unknown dataset {name!r}, expected one of {sorted(CANONICAL_SHAPES)}")


def _read_idx(path, expected_magic, n_dims):
    with open(path, "rb") as fh:
        header = fh.read(4 * (1 + n_dims))
        if len(header) != 4 * (1 + n_dims):
            raise IntegrityError(f"{path}: truncated header")
        fields = struct.unpack(f">{1 + n_dims}I", header)
        if fields[0] != expected_magic:
            raise IntegrityError(
                f"{path}: magic 0x{fields[0]:08x}, expected 0x{expected_magic:08x}")
        dims = fields[1:]
        count = int(np.prod(dims))
        body = fh.read()
    if len(body) != count:
        raise IntegrityError(f"{path}: {len(body)} data bytes, expected {count}")
    return np.frombuffer(body, dtype=np.uint8), dims


def load_idx(images_path, labels_path):
    """One IDX image/label file pair -> ((N, rows*cols) float64, (N,) int64)."""
    raw_images, dims = _read_idx(images_path, IDX_IMAGES_MAGIC, 3)
    raw_labels, (n_labels,) = _read_idx(labels_path, IDX_LABELS_MAGIC, 1)
    n_images = dims[0]
    if n_images != n_labels:
        raise IntegrityError(
            f"{n_images} images but {n_labels} labels ({images_path}, {labels_path})")
    labels = raw_labels.astype(np.int64)
    if labels.size and labels.max() >= N_CLASSES:
        raise IntegrityError(f"{labels_path}: labels outside 0..{N_CLASSES - 1}")
    images = raw_images.astype(np.float64).reshape(n_images, -1) / 255.0
    return images, labels


def load_cifar10(batch_paths):
    """Concatenate 3073-byte-record binary batches -> ((N, 3072), (N,))."""
    images = []
    labels = []
    for path in batch_paths:
        raw = np.fromfile(path, dtype=np.uint8)
        if raw.size == 0 or raw.size % CIFAR_RECORD:
            raise IntegrityError(
                f"{path}: {raw.size} bytes is not a multiple of {CIFAR_RECORD}")
        records = raw.reshape(-1, CIFAR_RECORD)
        batch_labels = records[:, 0].astype(np.int64)
        if batch_labels.max() >= N_CLASSES:
            raise IntegrityError(f"{path}: labels outside 0..{N_CLASSES - 1}")
        labels.append(batch_labels)
        images.append(records[:, 1:].astype(np.float64) / 255.0)
    return np.concatenate(images), np.concatenate(labels)


def _md5(path):
    h = hashlib.md5()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _download(url, dest, attempts=3):
    last = None
    for attempt in range(1, attempts + 1):
        try:
            with urllib.request.urlopen(url) as resp, open(dest, "wb") as out:
                while True:
                    chunk = resp.read(1 << 20)
                    if not chunk:
                        break
                    out.write(chunk)
            return
        except (urllib.error.URLError, OSError) as exc:
            last = exc
            if attempt < attempts:
                time.sleep(2.0 * attempt)
    raise TransportError(f"{url}: failed after {attempts} attempts: {last}")


def _verify_archive(path, entry):
    if os.path.getsize(path) != entry["size"]:
        raise IntegrityError(
            f"{path}: size {os.path.getsize(path)}, expected {entry['size']}")
    digest = _md5(path)
    if digest != entry["md5"]:
        raise IntegrityError(f"{path}: md5 {digest}, expected {entry['md5']}")


def _targets(entry):
    if "members" in entry:
        return [(m["extracted"], m["extracted_size"]) for m in entry["members"]]
    return [(entry["extracted"], entry["extracted_size"])]


def _extract(archive_path, entry, dataset_dir):
    if "members" in entry:
        with tarfile.open(archive_path, "r:gz") as tar:
            for member in entry["members"]:
                src = tar.extractfile(member["path"])
                if src is None:
                    raise IntegrityError(f"{archive_path}: missing {member['path']}")
                data = src.read()
                if len(data) != member["extracted_size"]:
                    raise IntegrityError(
                        f"{member['path']}: {len(data)} bytes, "
                        f"expected {member['extracted_size']}")
                with open(os.path.join(dataset_dir, member["extracted"]), "wb") as out:
                    out.write(data)
    else:
        with gzip.open(archive_path, "rb") as src:
            data = src.read()
        if len(data) != entry["extracted_size"]:
            raise IntegrityError(
                f"{archive_path}: decompressed to {len(data)} bytes, "
                f"expected {entry['extracted_size']}")
        with open(os.path.join(dataset_dir, entry["extracted"]), "wb") as out:
            out.write(data)


def fetch(name, dest_dir, mirror_url=None, manifest=None):
    """Download, verify and extract one dataset into dest_dir/name.

    Returns the list of extracted file paths. Already-extracted files that
    match their expected sizes are kept as is.
    """
    _check_name(name)
    if manifest is None:
        manifest = load_manifest()
    spec = manifest[name]
    mirror = mirror_url if mirror_url is not None else spec["mirror"]
    if not mirror.endswith("/"):
        mirror += "/"
    dataset_dir = os.path.join(dest_dir, name)
    os.makedirs(dataset_dir, exist_ok=True)
    out_paths = []
    for entry in spec["files"]:
        targets = _targets(entry)
        paths = [os.path.join(dataset_dir, t) for t, _ in targets]
        out_paths.extend(paths)
        if all(os.path.exists(p) and os.path.getsize(p) == size
               for p, (_, size) in zip(paths, targets)):
            continue
        archive_path = os.path.join(dataset_dir, entry["archive"])
        have_archive = False
        if os.path.exists(archive_path) and os.path.getsize(archive_path) == entry["size"]:
            have_archive = _md5(archive_path) == entry["md5"]
        if not have_archive:
            _download(mirror + entry["archive"], archive_path)
            _verify_archive(archive_path, entry)
        _extract(archive_path, entry, dataset_dir)
    return out_paths


def load_dataset(name, data_dir):
    """Load a fetched dataset and validate the canonical split shapes."""
    _check_name(name)
    dataset_dir = os.path.join(data_dir, name)
    if name == "cifar10":
        train_x, train_y = load_cifar10(
            [os.path.join(dataset_dir, f"data_batch_{i}.bin") for i in range(1, 6)])
        test_x, test_y = load_cifar10([os.path.join(dataset_dir, "test_batch.bin")])
    else:
        train_x, train_y = load_idx(
            *(os.path.join(dataset_dir, f) for f in _IDX_FILES["train"]))
        test_x, test_y = load_idx(
            *(os.path.join(dataset_dir, f) for f in _IDX_FILES["test"]))
    n_train, n_test, input_dim = CANONICAL_SHAPES[name]
    if train_x.shape != (n_train, input_dim) or test_x.shape != (n_test, input_dim):
        raise IntegrityError(
            f"{name}: got train {train_x.shape}, test {test_x.shape}, expected "
            f"({n_train}, {input_dim}) and ({n_test}, {input_dim})")
    return Dataset(name, train_x, train_y, test_x, test_y)


def dataset_available(name, data_dir):
    """True when every extracted file of the dataset is present with the
    manifest size."""
    _check_name(name)
    dataset_dir = os.path.join(data_dir, name)
    for entry in load_manifest()[name]["files"]:
        for target, size in _targets(entry):
            path = os.path.join(dataset_dir, target)
            if not (os.path.exists(path) and os.path.getsize(path) == size):
                return False
    return True


def subset_train(dataset, count):
    """Deterministic class-balanced training subset: the first samples of
    each class in original order. Test split is untouched."""
    if not 1 <= count <= dataset.train_labels.size:
        raise ValueError(
            f"count must be in 1..{dataset.train_labels.size}, got {count}")
    per_class = [count // N_CLASSES + (1 if c < count % N_CLASSES else 0)
                 for c in range(N_CLASSES)]
    keep = []
    for c, quota in enumerate(per_class):
        idx = np.flatnonzero(dataset.train_labels == c)
        if idx.size < quota:
            raise ValueError(f"class {c} has only {idx.size} samples, need {quota}")
        keep.append(idx[:quota])
    keep = np.sort(np.concatenate(keep))
    return Dataset(
        dataset.name,
        dataset.train_images[keep],
        dataset.train_labels[keep],
        dataset.test_images,
        dataset.test_labels,
    )

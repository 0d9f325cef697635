"""Small shared helpers: deterministic seed derivation and atomic writes."""

import hashlib
import os
import tempfile


def derive_seed(*parts):
    """Map any tuple of printable parts to a stable 64-bit RNG seed.

    Hash based so that nearby experiment seeds or config tweaks produce
    unrelated streams.
    """
    h = hashlib.blake2b(digest_size=8)
    for p in parts:
        h.update(str(p).encode())
        h.update(b"\x1f")
    return int.from_bytes(h.digest(), "little")


def write_atomic(path, data):
    """Write bytes (or text) to path via a same-directory temp file and
    rename, so readers never see a partial file."""
    directory = os.path.dirname(os.path.abspath(path))
    mode = "wb" if isinstance(data, bytes) else "w"
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-")
    try:
        with os.fdopen(fd, mode) as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise

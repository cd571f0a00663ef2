"""Shared in-memory cache with optional on-disk persistence.

Heavy reusable results (stationary states, spectral data, dense propagators)
are keyed by a content hash of their inputs. Setting DICKE_SENSE_CACHE_DIR
additionally persists entries as .npz files so repeated runs skip the solve.
"""

from __future__ import annotations

import hashlib
import os

import numpy as np
import scipy.sparse as sp

ENV_VAR = "DICKE_SENSE_CACHE_DIR"

_memory: dict[str, tuple[np.ndarray, ...]] = {}


def content_key(*parts) -> str:
    """Hash heterogeneous inputs (arrays, sparse matrices, scalars) to a hex key."""
    h = hashlib.sha256()
    for p in parts:
        if isinstance(p, np.ndarray):
            h.update(b"nd")
            h.update(str(p.shape).encode())
            h.update(np.ascontiguousarray(p).tobytes())
        elif sp.issparse(p):
            c = p.tocsr()
            h.update(b"sp")
            h.update(str(c.shape).encode())
            h.update(c.indptr.tobytes())
            h.update(c.indices.tobytes())
            h.update(np.ascontiguousarray(c.data).tobytes())
        else:
            h.update(repr(p).encode())
        h.update(b"|")
    return h.hexdigest()


def _disk_path(key: str) -> str | None:
    root = os.environ.get(ENV_VAR)
    if not root:
        return None
    os.makedirs(root, exist_ok=True)
    return os.path.join(root, key + ".npz")


def get_arrays(key: str) -> tuple[np.ndarray, ...] | None:
    hit = _memory.get(key)
    if hit is not None:
        return hit
    path = _disk_path(key)
    if path and os.path.exists(path):
        with np.load(path) as f:
            arrs = tuple(f[name] for name in sorted(f.files, key=lambda s: int(s[1:])))
        _memory[key] = arrs
        return arrs
    return None


def put_arrays(key: str, *arrays: np.ndarray) -> None:
    _memory[key] = tuple(arrays)
    path = _disk_path(key)
    if path:
        tmp = path + ".tmp.npz"
        np.savez(tmp, **{f"a{i}": a for i, a in enumerate(arrays)})
        os.replace(tmp, path)


def clear_memory() -> None:
    _memory.clear()

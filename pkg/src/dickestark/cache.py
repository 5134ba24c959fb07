"""Content-addressed on-disk cache of eigendecompositions.

Each entry is an ``.npz`` file holding the arrays plus a sha256 of their
bytes.  The cache is advisory: deleting it is always safe, a corrupted
entry is recomputed and overwritten, and an unwritable directory turns the
cache off with a warning.
"""

from __future__ import annotations

import hashlib
import io
import json
import os
import warnings
from pathlib import Path

import numpy as np

from .core import DcsBasis, ModelParams
from .spectrum import EigenDecomposition

ENV_VAR = "DICKESTARK_CACHE"
FORMAT_VERSION = 1


class CacheCorruptionError(RuntimeError):
    """Raised instead of recomputing when the cache runs in strict mode."""


def _digest(values: np.ndarray, vectors: np.ndarray, header: bytes) -> str:
    h = hashlib.sha256(header)
    h.update(np.ascontiguousarray(values).tobytes())
    h.update(np.ascontiguousarray(vectors).tobytes())
    return h.hexdigest()


class DecompositionCache:
    """Directory-backed cache keyed by a hash of (params, basis, truncation, levels).

    Parameters
    ----------
    directory : path
        Created if missing.  ``None`` falls back to ``$DICKESTARK_CACHE``.
    strict : bool
        Raise :class:`CacheCorruptionError` on a corrupted entry instead of
        warning and recomputing.
    """

    def __init__(self, directory=None, strict: bool = False):
        directory = directory or os.environ.get(ENV_VAR)
        if directory is None:
            raise ValueError(f"no cache directory given and ${ENV_VAR} is unset")
        self.directory = Path(directory)
        self.strict = strict
        self.enabled = True
        self.hits = self.misses = self.corrupted = 0
        try:
            self.directory.mkdir(parents=True, exist_ok=True)
            probe = self.directory / ".write-probe"
            probe.write_bytes(b"")
            probe.unlink()
        except OSError as exc:
            warnings.warn(f"cache directory {self.directory} unusable ({exc}); caching disabled")
            self.enabled = False

    @staticmethod
    def key(params: ModelParams, basis_kind: str, truncation: int, n_levels) -> str:
        payload = json.dumps([FORMAT_VERSION, params.fingerprint(), basis_kind, int(truncation),
                              None if n_levels is None else int(n_levels)])
        return hashlib.sha256(payload.encode()).hexdigest()[:32]

    def _path(self, key: str) -> Path:
        return self.directory / f"{key}.npz"

    def get(self, key: str) -> EigenDecomposition | None:
        if not self.enabled:
            return None
        path = self._path(key)
        if not path.exists():
            self.misses += 1
            return None
        try:
            with np.load(path, allow_pickle=False) as blob:
                values = blob["eigenvalues"]
                vectors = blob["eigenvectors"]
                header = bytes(blob["header"])
                stored = str(blob["digest"])
            meta = json.loads(header.decode())
            ok = stored == _digest(values, vectors, header) and meta["key"] == key
        except Exception:
            ok = False
        if not ok:
            self.corrupted += 1
            if self.strict:
                raise CacheCorruptionError(f"corrupted cache entry {path}")
            warnings.warn(f"corrupted cache entry {path}; recomputing")
            self.misses += 1
            return None
        self.hits += 1
        basis = DcsBasis(meta["n_atoms"], meta["k_trunc"])
        return EigenDecomposition(values, vectors, basis, meta["fingerprint"], meta["residual"],
                                  meta["orthonormality_defect"], truncation=meta["k_trunc"],
                                  complete=meta["complete"])

    def put(self, key: str, decomp: EigenDecomposition) -> None:
        if not self.enabled:
            return
        meta = {"key": key, "n_atoms": decomp.basis.n_atoms, "k_trunc": decomp.basis.k_trunc,
                "fingerprint": decomp.fingerprint, "residual": decomp.residual,
                "orthonormality_defect": decomp.orthonormality_defect, "complete": decomp.complete}
        header = json.dumps(meta, sort_keys=True).encode()
        buf = io.BytesIO()
        np.savez(buf, eigenvalues=decomp.eigenvalues, eigenvectors=decomp.eigenvectors,
                 header=np.frombuffer(header, dtype=np.uint8),
                 digest=np.array(_digest(decomp.eigenvalues, decomp.eigenvectors, header)))
        path = self._path(key)
        tmp = path.with_suffix(".tmp")
        try:
            tmp.write_bytes(buf.getvalue())
            os.replace(tmp, path)
        except OSError as exc:
            warnings.warn(f"could not write cache entry {path} ({exc}); caching disabled")
            self.enabled = False

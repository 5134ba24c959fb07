"""Validated eigendecompositions and truncation escalation."""

from __future__ import annotations

import logging
from collections import Counter
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .core import DcsBasis, ModelParams
from .hamiltonian import SymmetricMatrix, build_dcs_hamiltonian, dcs_parity_matrix

log = logging.getLogger(__name__)

K_SCHEDULE = (6, 12, 25, 50, 75, 100)

# Counts every call into the dense solver; the CLI uses it to prove cache hits.
STATS = Counter()


class SpectrumError(RuntimeError):
    """Eigensolver failure or truncation schedule exhausted."""


@dataclass
class EigenDecomposition:
    """Ascending eigenpairs of a :class:`SymmetricMatrix`.

    ``eigenvectors[:, n]`` is the n-th eigenvector in the basis of the
    source matrix.  ``complete`` is False when only the lowest levels were
    requested.
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    basis: object
    fingerprint: str
    residual: float = 0.0
    orthonormality_defect: float = 0.0
    truncation: int | None = None
    achieved_rel_error: float | None = None
    complete: bool = True
    meta: dict = field(default_factory=dict)

    @property
    def n_levels(self) -> int:
        return len(self.eigenvalues)

    def truncated(self, n_levels: int) -> "EigenDecomposition":
        """The lowest ``n_levels`` eigenpairs as a new decomposition."""
        n = min(n_levels, self.n_levels)
        return EigenDecomposition(self.eigenvalues[:n], self.eigenvectors[:, :n], self.basis,
                                  self.fingerprint, self.residual, self.orthonormality_defect,
                                  self.truncation, self.achieved_rel_error,
                                  complete=self.complete and n == self.n_levels, meta=dict(self.meta))


def _fix_signs(vectors: np.ndarray) -> None:
    """Make the first significant component of every column positive (in place)."""
    for col in range(vectors.shape[1]):
        v = vectors[:, col]
        big = np.flatnonzero(np.abs(v) > 1e-10 * np.abs(v).max())
        if big.size and v[big[0]] < 0:
            vectors[:, col] = -v


def _order_degenerate(values, vectors, parity, tol=1e-10):
    """Rotate degenerate clusters into parity eigenvectors, odd parity first."""
    n = len(values)
    start = 0
    while start < n:
        stop = start + 1
        while stop < n and abs(values[stop] - values[stop - 1]) < tol * max(1.0, abs(values[stop])):
            stop += 1
        if stop - start > 1:
            block = vectors[:, start:stop]
            p_block = block.T @ (parity @ block)
            p_vals, rot = np.linalg.eigh((p_block + p_block.T) / 2)
            vectors[:, start:stop] = block @ rot
            values[start:stop] = values[start:stop].mean()
        start = stop


def eigendecompose(H: SymmetricMatrix, n_levels: int | None = None, parity=None,
                   validate: bool = True) -> EigenDecomposition:
    """Dense symmetric eigendecomposition with residual and orthonormality checks.

    Parameters
    ----------
    H : SymmetricMatrix
        Dense real symmetric matrix.
    n_levels : int, optional
        Only compute the lowest ``n_levels`` eigenpairs (LAPACK subset
        driver).  All eigenpairs by default.
    parity : sparse or dense matrix, optional
        Conserved parity used to order degenerate levels deterministically.

    Raises
    ------
    SpectrumError
        If LAPACK fails, or the residual / orthonormality invariants are violated.
    """
    data = np.asarray(H.data if isinstance(H, SymmetricMatrix) else H)
    fingerprint = getattr(H, "fingerprint", "")
    if not np.all(np.isfinite(data)):
        raise SpectrumError(f"non-finite matrix [{fingerprint}]")
    dim = data.shape[0]
    subset = n_levels is not None and n_levels < dim
    STATS["eigendecompositions"] += 1
    try:
        if subset:
            values, vectors = sla.eigh(data, subset_by_index=[0, n_levels - 1], driver="evr")
        else:
            values, vectors = sla.eigh(data, driver="evd")
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise SpectrumError(f"eigensolver failed [{fingerprint}]: {exc}") from exc

    if parity is not None:
        _order_degenerate(values, vectors, parity)
    _fix_signs(vectors)

    residual = orth = 0.0
    if validate:
        residual = float(np.abs(data @ vectors - vectors * values).max()) if len(values) else 0.0
        orth = float(np.abs(vectors.T @ vectors - np.eye(vectors.shape[1])).max())
        scale = max(1.0, float(np.abs(values).max()))
        if residual > 1e-8 * scale or orth > 1e-10:
            raise SpectrumError(f"eigenpairs fail validation [{fingerprint}]: "
                                f"residual={residual:.2e}, orthonormality={orth:.2e}")
    return EigenDecomposition(values, vectors, getattr(H, "basis", None), fingerprint,
                              residual, orth, complete=not subset)


def dcs_decomposition(params: ModelParams, k_trunc: int, n_levels: int | None = None,
                      cache=None) -> EigenDecomposition:
    """Eigendecomposition of the DCS Hamiltonian at a fixed truncation, optionally cached."""
    key = None
    if cache is not None:
        key = cache.key(params, "dcs", k_trunc, n_levels)
        hit = cache.get(key)
        if hit is not None:
            return hit
    H = build_dcs_hamiltonian(params, k_trunc)
    parity = dcs_parity_matrix(H.basis).data
    decomp = eigendecompose(H, n_levels=n_levels, parity=parity)
    decomp.truncation = k_trunc
    if cache is not None:
        cache.put(key, decomp)
    return decomp


def relative_change(new: np.ndarray, old: np.ndarray, floor: float) -> float:
    """Max of ``|new - old| / max(|new|, floor)`` over the compared levels."""
    return float(np.max(np.abs(new - old) / np.maximum(np.abs(new), floor)))


def converged_spectrum(params: ModelParams, n_levels: int = 1, rel_tol: float = 1e-4,
                       keep_levels: int | None = None, schedule=K_SCHEDULE,
                       cache=None) -> EigenDecomposition:
    """Escalate the DCS truncation until the lowest levels stop moving.

    Returns the decomposition at the first truncation in ``schedule`` whose
    lowest ``n_levels`` eigenvalues differ from those at the previous
    truncation by less than ``rel_tol`` (relative, with ``omega`` as the
    floor of the denominator).  ``keep_levels`` limits how many eigenpairs
    are computed and returned (all by default).

    Raises
    ------
    SpectrumError
        If the schedule is exhausted without meeting the criterion.
    """
    if not rel_tol > 0:
        raise ValueError("rel_tol must be positive")
    if keep_levels is not None and keep_levels < n_levels:
        raise ValueError("keep_levels must be >= n_levels")
    previous = None
    last_error = np.inf
    for k_trunc in schedule:
        dim = DcsBasis(params.n_atoms, k_trunc).dimension
        if dim < n_levels:
            continue
        decomp = dcs_decomposition(params, k_trunc, keep_levels, cache=cache)
        if previous is not None:
            last_error = relative_change(decomp.eigenvalues[:n_levels],
                                         previous.eigenvalues[:n_levels], params.omega)
            if last_error < rel_tol:
                decomp.achieved_rel_error = last_error
                decomp.meta["previous_truncation"] = previous.truncation
                return decomp
        previous = decomp
    raise SpectrumError(f"no convergence to rel_tol={rel_tol:g} for {params} within schedule "
                        f"{tuple(schedule)} (last relative change {last_error:.2e})")

"""Dicke-Stark Hamiltonian in the displaced-Fock (DCS) and plain Fock (DFS) bases.

The DCS matrix is built in the rotated frame

    H = omega a^dag a - (Delta/2 + U/(2N) a^dag a)(J+ + J-) + (2 lam/sqrt(N))(a^dag + a) Jz

and the DFS matrix in the original frame

    H = omega a^dag a + Delta Jz + (2 lam/sqrt(N))(a^dag + a) Jx + (U/N) a^dag a Jz.

Both frames are unitarily equivalent, so the two spectra must agree; the DFS
matrix is the cross-validation oracle for the DCS assembly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .core import (DcsBasis, Direction, FockBasis, ModelParams, displaced_overlap_matrix,
                   signed_overlap_matrix, spin_lowering, spin_raising)


class AssemblyError(RuntimeError):
    """The two independent triangle assemblies of the DCS matrix disagree."""


@dataclass(frozen=True)
class SymmetricMatrix:
    """Real symmetric operator tagged with the basis it is written in.

    ``data`` is a dense ndarray for Hamiltonians and may be a scipy sparse
    matrix for the (block-)banded observables.
    """

    data: object
    basis: DcsBasis | FockBasis
    fingerprint: str = ""

    @property
    def dimension(self) -> int:
        return self.data.shape[0]

    @property
    def is_sparse(self) -> bool:
        return sp.issparse(self.data)

    def dense(self) -> np.ndarray:
        return self.data.toarray() if self.is_sparse else np.asarray(self.data)

    def symmetry_defect(self) -> float:
        diff = self.data - self.data.T
        if sp.issparse(diff):
            return float(abs(diff).max()) if diff.nnz else 0.0
        return float(np.abs(diff).max())

    def __matmul__(self, other):
        return self.data @ other


def _stark_block(S, jfac, g, params: ModelParams, k_trunc: int) -> np.ndarray:
    """Block ``<l; m_to| H |k; m_from>`` produced by one spin ladder step.

    ``S[l, k']`` is the overlap ``<l; m_to | k'; m_from>`` for ``k' = 0..K+1``
    (one column beyond the truncation so that ``a^dag a |K>`` is projected
    exactly); ``jfac`` and ``g`` belong to the source block.
    """
    N = params.n_atoms
    ks = np.arange(k_trunc + 1)
    bracket = params.delta / 2 + params.stark_u / (2 * N) * (ks + g * g)
    hop = np.sqrt(ks + 1) * S[:, 1:k_trunc + 2]
    hop[:, 1:] += np.sqrt(ks[1:]) * S[:, :k_trunc]
    return -jfac * (bracket * S[:, :k_trunc + 1] - params.stark_u / (2 * N) * g * hop)


def build_dcs_hamiltonian(params: ModelParams, k_trunc: int, self_test: bool = False) -> SymmetricMatrix:
    """Assemble the rotated-frame Hamiltonian in the displaced-Fock basis.

    The diagonal blocks are ``omega (k - g_m^2)``; the ``m -> m+1`` blocks
    carry the bias and Stark terms, and the lower triangle is filled by
    symmetry.  With ``self_test=True`` the ``m+1 -> m`` blocks are assembled
    a second time from the lowering ladder and compared entrywise.
    """
    if k_trunc < 0:
        raise ValueError("k_trunc must be >= 0")
    basis = DcsBasis(params.n_atoms, k_trunc)
    N, K = params.n_atoms, k_trunc
    j = params.j
    ms = basis.m_values
    gs = 2 * params.lam * ms / (params.omega * np.sqrt(N))
    G = params.displacement_step
    size = basis.block_size

    H = np.zeros((basis.dimension, basis.dimension))
    ks = np.arange(size)
    for b, g in enumerate(gs):
        sl = slice(b * size, (b + 1) * size)
        H[sl, sl][ks, ks] = params.omega * (ks - g * g)

    # <l; m+1 | k; m> = <l| D(-G) |k> carries the column sign (-1)^k
    kernel = displaced_overlap_matrix(G, K, K + 2)
    up = signed_overlap_matrix(kernel, Direction.UPPER_TO_LOWER)
    for b in range(N):
        block = _stark_block(up, spin_raising(ms[b], j), gs[b], params, K)
        rows = slice((b + 1) * size, (b + 2) * size)
        cols = slice(b * size, (b + 1) * size)
        H[rows, cols] = block
        H[cols, rows] = block.T

    if self_test:
        # <k; m | l; m+1> = <k| D(G) |l> carries the row sign (-1)^k
        down = signed_overlap_matrix(kernel, Direction.LOWER_TO_UPPER)
        worst = 0.0
        for b in range(N):
            block = _stark_block(down, spin_lowering(ms[b + 1], j), gs[b + 1], params, K)
            rows = slice(b * size, (b + 1) * size)
            cols = slice((b + 1) * size, (b + 2) * size)
            worst = max(worst, float(np.abs(block - H[rows, cols]).max()))
        if worst > 1e-10:
            raise AssemblyError(f"lowering-ladder blocks differ from transposed raising blocks by {worst:.3e}")

    if not np.all(np.isfinite(H)):
        raise AssemblyError("non-finite Hamiltonian entries")
    return SymmetricMatrix(H, basis, params.fingerprint() + f":dcs:{K}")


def _fock_indices(basis: FockBasis):
    size = basis.block_size
    b, n = np.divmod(np.arange(basis.dimension), size)
    return b - basis.n_atoms / 2, n


def build_dfs_hamiltonian(params: ModelParams, n_trunc: int) -> SymmetricMatrix:
    """Original-frame Hamiltonian in the plain product basis ``|m> (x) |n>``."""
    if n_trunc < 0:
        raise ValueError("n_trunc must be >= 0")
    basis = FockBasis(params.n_atoms, n_trunc)
    N = params.n_atoms
    m, n = _fock_indices(basis)
    H = np.zeros((basis.dimension, basis.dimension))
    idx = np.arange(basis.dimension)
    H[idx, idx] = params.omega * n + params.delta * m + params.stark_u / N * n * m

    coupling = 2 * params.lam / np.sqrt(N)
    size = basis.block_size
    src = idx[m < params.j]
    # |m, n> -> |m+1, n+1>
    hop = src[n[src] < n_trunc]
    vals = coupling * np.sqrt(n[hop] + 1) * spin_raising(m[hop], params.j) / 2
    H[hop + size + 1, hop] = vals
    H[hop, hop + size + 1] = vals
    # |m, n> -> |m+1, n-1>
    hop = src[n[src] > 0]
    vals = coupling * np.sqrt(n[hop]) * spin_raising(m[hop], params.j) / 2
    H[hop + size - 1, hop] = vals
    H[hop, hop + size - 1] = vals
    return SymmetricMatrix(H, basis, params.fingerprint() + f":dfs:{n_trunc}")


def parity_matrix(basis: FockBasis) -> SymmetricMatrix:
    """Diagonal parity ``(-1)^(n + m + j)`` in the original-frame product basis."""
    m, n = _fock_indices(basis)
    signs = (-1.0) ** np.rint(n + m + basis.n_atoms / 2).astype(int)
    return SymmetricMatrix(sp.diags(signs, format="csr"), basis, "parity:fock")


def dcs_parity_matrix(basis: DcsBasis) -> SymmetricMatrix:
    """Parity in the rotated frame: ``|m, k>_m -> (-1)^k |-m, k>_{-m}``."""
    size = basis.block_size
    blocks, ks = np.divmod(np.arange(basis.dimension), size)
    target = (basis.n_atoms - blocks) * size + ks
    P = sp.csr_matrix(((-1.0) ** ks, (target, np.arange(basis.dimension))),
                      shape=(basis.dimension, basis.dimension))
    return SymmetricMatrix(P, basis, "parity:dcs")

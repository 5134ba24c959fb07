"""Equilibrium observables: photon number, Gibbs states, G2(0), negativity, squeezing.

Everything is evaluated in the rotated frame the DCS Hamiltonian lives in.
The frame rotation acts only on the collective spin, so the photon number,
G2(0), the atom/field negativity and the spin-squeezing parameter are the
same in either frame.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .core import DcsBasis, ModelParams, displacement_matrix
from .hamiltonian import SymmetricMatrix
from .spectrum import K_SCHEDULE, EigenDecomposition, SpectrumError, dcs_decomposition, relative_change

MAX_N_TRUNC = 4096


class TruncationError(RuntimeError):
    """A basis conversion could not capture the requested norm."""


class UndefinedCorrelationError(ArithmeticError):
    """The G2 denominator vanishes (no thermally excited emitters)."""


class DirectionUndefinedError(ArithmeticError):
    """The mean collective spin is zero, so no perpendicular plane exists."""


@dataclass
class DensityMatrix:
    """Hermitian, unit-trace operator.

    ``basis`` is ``"eigen"`` (diagonal in the retained eigenstates),
    ``"product"`` (atom (x) field, atom index slow) or ``"atomic"`` (field
    traced out).  ``dims`` gives ``(dim_atom, dim_field)`` for the product
    basis.
    """

    data: np.ndarray
    basis: str
    dims: tuple | None = None
    meta: dict = field(default_factory=dict)

    @property
    def trace(self) -> float:
        return float(np.trace(self.data).real)

    def hermiticity_defect(self) -> float:
        return float(np.abs(self.data - self.data.conj().T).max())

    def min_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(self.data).min())

    @property
    def populations(self) -> np.ndarray:
        return np.real(np.diag(self.data))


@dataclass
class ProductBasisState:
    """Coefficient grids ``psi[m, n]`` of one or several DCS states.

    ``coefficients`` has shape ``(N+1, n_trunc+1)`` for a single state or
    ``(L, N+1, n_trunc+1)`` for a batch; ``captured_norm`` is per state.
    """

    coefficients: np.ndarray
    captured_norm: np.ndarray
    n_trunc: int
    k_trunc: int
    renormalized: bool = False

    @property
    def dims(self) -> tuple:
        return self.coefficients.shape[-2:]


def _block_g(basis: DcsBasis, params: ModelParams) -> np.ndarray:
    return 2 * params.lam * basis.m_values / (params.omega * np.sqrt(params.n_atoms))


def _block_tridiagonal(basis: DcsBasis, diag_per_block, off_per_block) -> sp.csr_matrix:
    size = basis.block_size
    diag = np.concatenate([np.full(size, d) if np.ndim(d) == 0 else d for d in diag_per_block])
    off = np.concatenate([np.append(o, 0.0) for o in off_per_block])[:-1]
    return sp.diags([off, diag, off], [-1, 0, 1], format="csr")


def photon_number_matrix(basis: DcsBasis, params: ModelParams) -> SymmetricMatrix:
    """``a^dag a`` in the DCS basis: block diagonal in m, tridiagonal in k.

    Within block m: ``(k + g_m^2)`` on the diagonal and ``-g_m sqrt(k+1)``
    between ``k`` and ``k+1``.
    """
    ks = np.arange(basis.block_size)
    gs = _block_g(basis, params)
    diag = [ks + g * g for g in gs]
    off = [-g * np.sqrt(ks[1:]) for g in gs]
    return SymmetricMatrix(_block_tridiagonal(basis, diag, off), basis, "photon_number")


def quadrature_matrix(basis: DcsBasis, params: ModelParams) -> SymmetricMatrix:
    """``a^dag + a = A_m^dag + A_m - 2 g_m`` in the DCS basis."""
    ks = np.arange(basis.block_size)
    gs = _block_g(basis, params)
    diag = [-2 * g for g in gs]
    off = [np.sqrt(ks[1:]) for _ in gs]
    return SymmetricMatrix(_block_tridiagonal(basis, diag, off), basis, "quadrature")


def atomic_quadrature_matrix(basis: DcsBasis, params: ModelParams) -> SymmetricMatrix:
    """Collective ``(J+ + J-)/sqrt(N)`` of the original frame, i.e. ``2 Jz / sqrt(N)`` here."""
    vals = np.repeat(2 * basis.m_values / np.sqrt(params.n_atoms), basis.block_size)
    return SymmetricMatrix(sp.diags(vals, format="csr"), basis, "atomic_quadrature")


def expectation(op: SymmetricMatrix, vector: np.ndarray) -> float:
    return float(vector @ (op.data @ vector))


def ground_mean_photon(params: ModelParams, rel_tol: float = 1e-4, photon_tol: float = 1e-6,
                       schedule=K_SCHEDULE, cache=None, details: bool = False,
                       require_convergence: bool = True):
    """Ground-state ``<a^dag a> / N`` with a two-truncation certificate.

    The truncation is escalated until the ground energy moves by less than
    ``rel_tol`` (relative) and ``<a^dag a>/N`` by less than ``photon_tol``
    between consecutive truncations.  With ``details=True`` returns
    ``(value, certificate_dict)``.  With ``require_convergence=False`` an
    exhausted schedule returns the last value with ``converged: False`` in
    the certificate instead of raising.
    """
    previous = None
    e_err = p_err = np.inf
    for k_trunc in schedule:
        decomp = dcs_decomposition(params, k_trunc, n_levels=1, cache=cache)
        photon = expectation(photon_number_matrix(decomp.basis, params), decomp.eigenvectors[:, 0])
        value = photon / params.n_atoms
        if previous is not None:
            e_err = relative_change(decomp.eigenvalues[:1], previous[0], params.omega)
            p_err = abs(value - previous[1])
            if e_err < rel_tol and p_err < photon_tol:
                break
        previous = (decomp.eigenvalues[:1], value)
    else:
        if require_convergence:
            raise SpectrumError(f"ground photon number not converged for {params} within {tuple(schedule)}")
    converged = e_err < rel_tol and p_err < photon_tol
    if details:
        return value, {"k_trunc": k_trunc, "energy_rel_change": e_err, "photon_change": p_err,
                       "ground_energy": float(decomp.eigenvalues[0]), "converged": converged}
    return value


def dcs_to_fock_product(coefficients: np.ndarray, params: ModelParams, k_trunc: int,
                        n_trunc: int | None = None, norm_tol: float = 1e-8,
                        weights: np.ndarray | None = None) -> ProductBasisState:
    """Re-express DCS coefficient vectors on the plain ``(m, n_photon)`` grid.

    ``psi[m, n] = sum_k C[m, k] <n | k>_m`` with ``<n|k>_m = <n| D(g_m) |k>``.
    Unless ``n_trunc`` is fixed, the photon cutoff starts at
    ``ceil(max g_m^2) + 4 K`` and doubles until the captured norm is at least
    ``1 - norm_tol`` (per state, or weighted by ``weights`` for a mixture).

    Raises
    ------
    TruncationError
        If the cutoff would exceed 4096.
    """
    basis = DcsBasis(params.n_atoms, k_trunc)
    coeffs = np.asarray(coefficients)
    single = coeffs.ndim == 1
    C = coeffs.reshape(basis.dimension, -1)
    blocks = C.T.reshape(C.shape[1], params.n_atoms + 1, basis.block_size)
    gs = _block_g(basis, params)
    input_norm = np.einsum("lmk,lmk->l", blocks, blocks)

    adaptive = n_trunc is None
    if adaptive:
        n_trunc = math.ceil(float(np.max(gs ** 2))) + 4 * k_trunc
    while True:
        grids = np.empty((blocks.shape[0], params.n_atoms + 1, n_trunc + 1))
        for b, g in enumerate(gs):
            grids[:, b, :] = blocks[:, b, :] @ displacement_matrix(g, n_trunc + 1, basis.block_size).T
        captured = np.einsum("lmn,lmn->l", grids, grids) / input_norm
        score = captured.min() if weights is None else float(np.dot(weights, captured) / np.sum(weights))
        if not adaptive or score >= 1 - norm_tol:
            break
        if 2 * n_trunc > MAX_N_TRUNC:
            raise TruncationError(f"captured norm {score:.12f} below 1-{norm_tol:g} at n_trunc={n_trunc}")
        n_trunc *= 2
    if single:
        return ProductBasisState(grids[0], captured[:1], n_trunc, k_trunc)
    return ProductBasisState(grids, captured, n_trunc, k_trunc)


def boltzmann_weights(energies: np.ndarray, T: float) -> np.ndarray:
    """Unnormalised ``exp(-(E - E_0)/T)``; the ground projector at ``T = 0``."""
    e = np.asarray(energies)
    if T == 0:
        w = np.zeros(len(e))
        w[0] = 1.0
        return w
    return np.exp(-(e - e[0]) / T)


def gibbs_state(decomp: EigenDecomposition, T: float, weight_cut: float = 1e-12) -> DensityMatrix:
    """Canonical state ``exp(-E_n/T)/Z`` over the eigenstates of ``decomp``.

    Levels are retained in energy order until their cumulative weight
    reaches ``1 - weight_cut``; the retained weights are renormalised.
    ``T = 0`` gives the ground-state projector.
    """
    if T < 0:
        raise ValueError("temperature must be >= 0")
    w = boltzmann_weights(decomp.eigenvalues, T)
    cumulative = np.cumsum(w) / w.sum()
    kept = int(np.searchsorted(cumulative, 1 - weight_cut) + 1)
    kept = min(kept, len(w))
    p = w[:kept] / w[:kept].sum()
    meta = {"retained_levels": kept, "temperature": T, "weight_cut": weight_cut,
            "discarded_weight": float(1 - cumulative[kept - 1]),
            "highest_weight_available": float(w[-1] / w.sum())}
    return DensityMatrix(np.diag(p), "eigen", meta=meta)


def thermal_decomposition(params: ModelParams, T: float, k_trunc: int = 50, weight_cut: float = 1e-12,
                          cache=None, start_levels: int = 32) -> EigenDecomposition:
    """Lowest eigenpairs of the DCS Hamiltonian covering the Gibbs weight at ``T``.

    Grows the number of computed levels until the highest one carries a
    Boltzmann weight below ``weight_cut * 1e-3`` relative to the ground
    state, or every level has been computed.
    """
    dim = DcsBasis(params.n_atoms, k_trunc).dimension
    n = min(start_levels, dim)
    while True:
        levels = None if n >= dim else n
        decomp = dcs_decomposition(params, k_trunc, n_levels=levels, cache=cache)
        e = decomp.eigenvalues
        if levels is None or T == 0 or np.exp(-(e[-1] - e[0]) / T) < weight_cut * 1e-3:
            return decomp
        n = min(2 * n, dim)


def von_neumann_entropy(rho: DensityMatrix) -> float:
    vals = np.linalg.eigvalsh(rho.data)
    vals = vals[vals > 1e-300]
    return float(-np.sum(vals * np.log(vals)))


def _transition_matrix(decomp: EigenDecomposition, op: SymmetricMatrix, n_levels: int) -> np.ndarray:
    V = decomp.eigenvectors[:, :n_levels]
    return V.T @ (op.data @ V)


def _g2_from(X: np.ndarray, energies: np.ndarray, populations: np.ndarray, gap_cut: float):
    M = len(energies)
    gap = energies[None, :] - energies[:, None]
    lowering = np.where(gap > gap_cut, gap * X, 0.0)
    lowering = np.triu(lowering, 1)
    p = np.zeros(M)
    p[:len(populations)] = populations
    once = lowering * np.sqrt(p)[None, :]
    twice = lowering @ once
    denominator = float(np.sum(once ** 2))
    numerator = float(np.sum(twice ** 2))
    return numerator, denominator


def g2_zero(decomp: EigenDecomposition, params: ModelParams, T: float, level_cut: int | None = None,
            weight_cut: float = 1e-12, gap_cut: float = 1e-10, details: bool = False):
    """Generalised zero-delay two-photon correlation in the dressed basis.

    ``X+ = -i sum_{k>j} (E_k - E_j) X_jk |j><k|`` with ``X_jk`` the
    ``(a^dag + a)`` matrix element, and
    ``G2 = <(X-)^2 (X+)^2> / <X- X+>^2`` in the Gibbs state at ``T``.  The
    phase ``-i`` cancels, so the computation is real.  ``level_cut``
    defaults to the Gibbs-retained levels; the value is certified by
    doubling it.

    Raises
    ------
    UndefinedCorrelationError
        If ``<X- X+>`` is below 1e-300.
    """
    rho = gibbs_state(decomp, T, weight_cut)
    p = rho.populations
    M = level_cut if level_cut is not None else len(p)
    M = max(min(M, decomp.n_levels), len(p))
    Q = quadrature_matrix(decomp.basis, params)

    def evaluate(levels):
        X = _transition_matrix(decomp, Q, levels)
        return _g2_from(X, decomp.eigenvalues[:levels], p, gap_cut)

    num, den = evaluate(M)
    if den < 1e-300:
        raise UndefinedCorrelationError(f"<X- X+> = {den:.3e} for {params}, T={T}")
    value = num / den ** 2
    doubled = min(2 * M, decomp.n_levels)
    num2, den2 = evaluate(doubled) if doubled > M else (num, den)
    value2 = num2 / den2 ** 2
    change = abs(value2 - value) / max(abs(value2), 1e-300)
    if change >= 1e-4:
        # keep doubling until the certificate holds or levels run out
        while change >= 1e-4 and doubled < decomp.n_levels:
            value = value2
            doubled = min(2 * doubled, decomp.n_levels)
            num2, den2 = evaluate(doubled)
            value2 = num2 / den2 ** 2
            change = abs(value2 - value) / max(abs(value2), 1e-300)
        value = value2
    if details:
        return value, {"levels": M, "certificate_levels": doubled, "relative_change": change,
                       "retained_levels": len(p)}
    return value


def product_density_matrix(decomp: EigenDecomposition, params: ModelParams, T: float,
                           weight_cut: float = 1e-12, n_trunc: int | None = None) -> DensityMatrix:
    """Gibbs state rebuilt on the atom (x) field product grid."""
    rho_eig = gibbs_state(decomp, T, weight_cut)
    p = rho_eig.populations
    L = len(p)
    state = dcs_to_fock_product(decomp.eigenvectors[:, :L], params, decomp.basis.k_trunc,
                                n_trunc=n_trunc, weights=p)
    grids = state.coefficients.reshape(L, -1)
    data = (grids.T * p) @ grids
    meta = dict(rho_eig.meta)
    meta.update(n_trunc=state.n_trunc, captured_trace=float(np.trace(data)))
    return DensityMatrix(data, "product", dims=state.dims, meta=meta)


def reduced_atomic_state(decomp: EigenDecomposition, params: ModelParams, T: float,
                         weight_cut: float = 1e-12, batch: int = 256) -> DensityMatrix:
    """Collective-spin state with the field traced out, without forming the full product matrix."""
    rho_eig = gibbs_state(decomp, T, weight_cut)
    p = rho_eig.populations
    dim_a = params.n_atoms + 1
    out = np.zeros((dim_a, dim_a))
    n_trunc = None
    for start in range(0, len(p), batch):
        stop = min(start + batch, len(p))
        state = dcs_to_fock_product(decomp.eigenvectors[:, start:stop], params, decomp.basis.k_trunc,
                                    n_trunc=n_trunc, weights=p[start:stop])
        n_trunc = state.n_trunc if n_trunc is None else n_trunc
        out += np.einsum("l,lmn,lkn->mk", p[start:stop], state.coefficients, state.coefficients)
    meta = dict(rho_eig.meta)
    meta.update(n_trunc=n_trunc, captured_trace=float(np.trace(out)))
    return DensityMatrix(out, "atomic", dims=(dim_a,), meta=meta)


def partial_transpose(rho: DensityMatrix, subsystem: str = "atom") -> np.ndarray:
    """Partial transpose of a product-basis density matrix on one factor."""
    if rho.basis != "product" or rho.dims is None:
        raise ValueError("partial transpose needs a product-basis density matrix")
    da, df = rho.dims
    r = np.asarray(rho.data).reshape(da, df, da, df)
    if subsystem == "atom":
        r = r.transpose(2, 1, 0, 3)
    elif subsystem == "field":
        r = r.transpose(0, 3, 2, 1)
    else:
        raise ValueError(f"unknown subsystem {subsystem!r}")
    return r.reshape(da * df, da * df)


def negativity(rho: DensityMatrix, details: bool = False):
    """``(||rho^T_A||_1 - 1)/2``, cross-checked against the sum of negative eigenvalues."""
    eps = np.linalg.eigvalsh(partial_transpose(rho, "atom"))
    trace_norm_form = (np.sum(np.abs(eps)) - 1) / 2
    negative_form = 0.5 * np.sum(np.abs(eps) - eps)
    if abs(trace_norm_form - negative_form) > 1e-10:
        raise ArithmeticError(f"negativity forms disagree: {trace_norm_form} vs {negative_form} "
                              f"(trace {rho.trace})")
    value = max(float(negative_form), 0.0)
    if details:
        return value, {"trace_norm_form": float(trace_norm_form), "min_eigenvalue": float(eps.min())}
    return value


def collective_spin_operators(n_atoms: int):
    """``(Jx, Jy, Jz)`` on ``|j, m>`` with m ascending from -j."""
    j = n_atoms / 2
    m = np.arange(n_atoms + 1) - j
    jp = np.diag(np.sqrt(np.maximum(j * (j + 1) - m[:-1] * (m[:-1] + 1), 0.0)), -1)
    jx = (jp + jp.T) / 2
    jy = (jp - jp.T) / 2j
    jz = np.diag(m)
    return jx, jy, jz


def _atomic_matrix(rho: DensityMatrix) -> np.ndarray:
    if rho.basis == "atomic":
        return np.asarray(rho.data)
    if rho.basis == "product" and rho.dims is not None:
        da, df = rho.dims
        return np.einsum("afbf->ab", np.asarray(rho.data).reshape(da, df, da, df))
    raise ValueError("spin squeezing needs a product-basis or atomic density matrix")


def spin_squeezing(rho: DensityMatrix, n_atoms: int, details: bool = False):
    """Kitagawa-Ueda parameter ``xi^2 = 4 min (Delta S_perp)^2 / N``.

    The minimum is over directions perpendicular to the mean spin, using the
    symmetrised covariance of the two in-plane components.

    Raises
    ------
    DirectionUndefinedError
        If the mean spin length is below 1e-12.
    """
    r = _atomic_matrix(rho)
    ops = collective_spin_operators(n_atoms)
    mean = np.array([np.trace(r @ o).real for o in ops])
    length = np.linalg.norm(mean)
    if length < 1e-12:
        raise DirectionUndefinedError("mean spin vanishes; perpendicular plane undefined")
    axis = mean / length
    trial = np.eye(3)[np.argmin(np.abs(axis))]
    n1 = np.cross(axis, trial)
    n1 /= np.linalg.norm(n1)
    n2 = np.cross(axis, n1)
    s1 = sum(c * o for c, o in zip(n1, ops))
    s2 = sum(c * o for c, o in zip(n2, ops))
    m1 = np.trace(r @ s1).real
    m2 = np.trace(r @ s2).real
    g11 = np.trace(r @ s1 @ s1).real - m1 * m1
    g22 = np.trace(r @ s2 @ s2).real - m2 * m2
    g12 = 0.5 * np.trace(r @ (s1 @ s2 + s2 @ s1)).real - m1 * m2
    min_var = (g11 + g22) / 2 - np.sqrt(((g11 - g22) / 2) ** 2 + g12 ** 2)
    xi2 = 4 * min_var / n_atoms
    if details:
        return float(xi2), {"mean_spin": mean.tolist(), "min_variance": float(min_var)}
    return float(xi2)

"""Closed photon-number dynamics and the dressed master equation.

The open-system part works entirely in the basis of the lowest ``M``
eigenstates.  Jump operators are eigenstate dyads ``|j><k|``, so the
generator acts on populations through a classical rate matrix and damps
every coherence at half the summed escape rates of its two levels.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
from scipy.sparse.csgraph import connected_components

from .core import ModelParams, vacuum_in_displaced_basis
from .hamiltonian import SymmetricMatrix, build_dcs_hamiltonian
from .observables import (DensityMatrix, atomic_quadrature_matrix, boltzmann_weights,
                          photon_number_matrix, quadrature_matrix)
from .spectrum import EigenDecomposition, dcs_decomposition

log = logging.getLogger(__name__)

GAP_CUT = 1e-10


class TruncationError(RuntimeError):
    """The initial state is not resolved by the retained eigenstates."""


class PositivityError(RuntimeError):
    """The integrated density matrix acquired a negative eigenvalue."""


class DegenerateChainError(RuntimeError):
    """The population rate matrix has a kernel of dimension other than one."""

    def __init__(self, message, components):
        super().__init__(message)
        self.components = components


def initial_overlaps(decomp: EigenDecomposition, params: ModelParams, tol: float = 1e-6):
    """Overlaps ``d_n = <phi_n | j, -j> |0>`` in the rotated frame.

    In block ``m = -j`` the photon vacuum has DCS amplitudes
    ``exp(-g^2/2) g^k / sqrt(k!)`` with ``g = g_{-j}``.

    Returns
    -------
    d : ndarray
        One overlap per eigenstate in ``decomp``.
    deficit : float
        ``1 - sum |d_n|^2``.

    Raises
    ------
    TruncationError
        If the deficit exceeds ``tol``.
    """
    basis = decomp.basis
    g = -params.lam * np.sqrt(params.n_atoms) / params.omega
    vacuum = vacuum_in_displaced_basis(-g, basis.k_trunc)
    d = vacuum @ decomp.eigenvectors[basis.block(-params.j), :]
    deficit = float(1 - d @ d)
    if deficit > tol:
        raise TruncationError(f"initial-state norm deficit {deficit:.3e} exceeds {tol:g}")
    return d, deficit


@dataclass
class ClosedDynamics:
    times: np.ndarray
    photon: np.ndarray
    energy: np.ndarray
    overlaps: np.ndarray
    deficit: float


def closed_photon_dynamics(params: ModelParams, times, k_trunc: int = 50,
                           decomp: EigenDecomposition | None = None) -> ClosedDynamics:
    """``<a^dag a>(t)/N`` from ``|j,-j>|0>`` by eigen-expansion.

    ``<N>(t) = sum_{l,n} d_l d_n <phi_l|N|phi_n> exp(i (E_l - E_n) t)``.
    The energy series is evaluated independently from the DCS matrix as a
    conservation check.
    """
    times = np.asarray(times, dtype=float)
    if decomp is None:
        decomp = dcs_decomposition(params, k_trunc)
    d, deficit = initial_overlaps(decomp, params)
    V = decomp.eigenvectors
    photon_op = photon_number_matrix(decomp.basis, params)
    photon_eig = V.T @ (photon_op.data @ V)
    H = build_dcs_hamiltonian(params, decomp.basis.k_trunc).data
    photon = np.empty(len(times))
    energy = np.empty(len(times))
    for i, t in enumerate(times):
        c = d * np.exp(-1j * decomp.eigenvalues * t)
        photon[i] = np.real(np.conj(c) @ (photon_eig @ c))
        psi = V @ c
        energy[i] = np.real(np.conj(psi) @ (H @ psi))
    return ClosedDynamics(times, photon / params.n_atoms, energy, d, deficit)


def ohmic_spectrum(gap, alpha: float, cutoff: float):
    """``gamma(D) = pi alpha D exp(-|D| / cutoff)``."""
    gap = np.asarray(gap, dtype=float)
    return np.pi * alpha * gap * np.exp(-np.abs(gap) / cutoff)


def bose_occupation(gap, T: float):
    """``1 / (exp(D/T) - 1)``; zero at ``T = 0``."""
    gap = np.asarray(gap, dtype=float)
    if T == 0:
        return np.zeros_like(gap)
    with np.errstate(over="ignore", divide="ignore"):
        return 1.0 / np.expm1(gap / T)


@dataclass
class DissipatorSpec:
    """Dressed-state rate table for one or more bath channels.

    ``rates[name][i, c]`` is the transition rate from level ``c`` to level
    ``i`` through channel ``name``; ``rate_matrix`` sums the channels.
    """

    energies: np.ndarray
    temperatures: dict
    alpha: float
    cutoff: float
    channels: tuple
    rates: dict
    couplings: dict
    meta: dict = field(default_factory=dict)

    @property
    def n_levels(self) -> int:
        return len(self.energies)

    @property
    def rate_matrix(self) -> np.ndarray:
        return sum(self.rates.values())

    @property
    def escape_rates(self) -> np.ndarray:
        return self.rate_matrix.sum(axis=0)

    @property
    def max_rate(self) -> float:
        return float(self.escape_rates.max())

    def detailed_balance_defect(self) -> float:
        """Worst relative mismatch of ``W_down / W_up`` against ``exp(D/T)``."""
        worst = 0.0
        e = self.energies
        for name, W in self.rates.items():
            T = self.temperatures[name]
            j, k = np.triu_indices(self.n_levels, 1)
            gap = e[k] - e[j]
            up, down = W[k, j], W[j, k]
            keep = (up > 0) & (gap > GAP_CUT)
            if T == 0 or not keep.any():
                continue
            ratio = down[keep] / up[keep]
            expected = np.exp(gap[keep] / T)
            worst = max(worst, float(np.max(np.abs(ratio / expected - 1))))
        return worst


def default_level_count(energies: np.ndarray, T: float, weight: float = 1e-10, minimum: int = 20) -> int:
    """Levels with Boltzmann weight ``>= weight`` relative to the ground state, at least ``minimum``."""
    w = boltzmann_weights(energies, T)
    return int(min(len(energies), max(minimum, np.count_nonzero(w >= weight))))


def _channel_operator(name, basis, params) -> SymmetricMatrix:
    if isinstance(name, SymmetricMatrix):
        return name
    if name == "field":
        return quadrature_matrix(basis, params)
    if name == "atom":
        return atomic_quadrature_matrix(basis, params)
    raise ValueError(f"unknown channel {name!r}")


def build_dressed_dissipator(decomp: EigenDecomposition, params: ModelParams, temperature,
                             alpha: float = 1e-3, cutoff: float = 10.0, channels=("field", "atom"),
                             n_levels: int | None = None) -> DissipatorSpec:
    """Rates ``gamma(D_jk) (1 + n(D_jk)) |S_jk|^2`` downward and ``gamma n |S_jk|^2`` upward.

    ``channels`` holds ``"field"`` (``a^dag + a``), ``"atom"`` (collective
    ``(J+ + J-)/sqrt(N)``) or explicit :class:`SymmetricMatrix` operators
    keyed by position.  ``temperature`` is a scalar or a mapping from
    channel name to temperature.  Pairs closer than 1e-10 in energy get no
    rate.
    """
    cutoff = cutoff * params.omega
    if n_levels is None:
        T0 = temperature if np.isscalar(temperature) else min(temperature.values())
        n_levels = default_level_count(decomp.eigenvalues, T0)
    n_levels = min(n_levels, decomp.n_levels)
    energies = decomp.eigenvalues[:n_levels]
    V = decomp.eigenvectors[:, :n_levels]
    gap = energies[None, :] - energies[:, None]
    upper = np.triu(gap > GAP_CUT, 1)

    names, rates, couplings, temps = [], {}, {}, {}
    for idx, ch in enumerate(channels):
        name = ch if isinstance(ch, str) else f"channel{idx}"
        T = temperature if np.isscalar(temperature) else temperature[name]
        if T < 0:
            raise ValueError("bath temperature must be >= 0")
        op = _channel_operator(ch, decomp.basis, params)
        S = V.T @ (op.data @ V)
        g = np.where(upper, gap, 0.0)
        strength = np.where(upper, ohmic_spectrum(g, alpha, cutoff) * S ** 2, 0.0)
        n = np.where(upper, bose_occupation(np.where(upper, gap, 1.0), T), 0.0)
        W = strength * (1 + n) + (strength * n).T
        names.append(name)
        rates[name] = W
        couplings[name] = S
        temps[name] = T
    spec = DissipatorSpec(energies, temps, alpha, cutoff, tuple(names), rates, couplings,
                          meta={"n_levels": n_levels, "truncation": decomp.truncation})
    if np.any(spec.rate_matrix < 0):
        raise ArithmeticError("negative transition rate")
    return spec


def _dissipator(rho: np.ndarray, W: np.ndarray, kappa: np.ndarray) -> np.ndarray:
    out = -0.5 * (kappa[:, None] + kappa[None, :]) * rho
    out[np.diag_indices_from(out)] += W @ np.diag(rho)
    return out


def master_rhs(rho: np.ndarray, spec: DissipatorSpec) -> np.ndarray:
    """Full Schroedinger-picture generator ``-i[H, rho] + D(rho)`` in the eigenbasis."""
    e = spec.energies
    return -1j * (e[:, None] - e[None, :]) * rho + _dissipator(rho, spec.rate_matrix, spec.escape_rates)


def trace_distance(a, b) -> float:
    """``||a - b||_1 / 2`` for Hermitian matrices or :class:`DensityMatrix` objects."""
    a = a.data if isinstance(a, DensityMatrix) else a
    b = b.data if isinstance(b, DensityMatrix) else b
    return 0.5 * float(np.sum(np.abs(np.linalg.eigvalsh(a - b))))


@dataclass
class Trajectory:
    times: np.ndarray
    states: list
    trace_drift: float
    min_eigenvalue: float
    steps: int
    max_error_estimate: float

    def populations(self) -> np.ndarray:
        return np.array([np.real(np.diag(r)) for r in self.states])


def _rk4(rho, h, W, kappa):
    k1 = _dissipator(rho, W, kappa)
    k2 = _dissipator(rho + 0.5 * h * k1, W, kappa)
    k3 = _dissipator(rho + 0.5 * h * k2, W, kappa)
    k4 = _dissipator(rho + h * k3, W, kappa)
    return rho + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)


def evolve_master(rho0, spec: DissipatorSpec, times, local_tol: float = 1e-9,
                  step_factor: float = 0.1, positivity_tol: float = 1e-6) -> Trajectory:
    """Integrate the dressed master equation with fourth-order Runge-Kutta.

    The unitary phases ``exp(-i (E_a - E_b) t)`` are factored out exactly
    (interaction picture), so the step is limited only by the rates:
    ``h <= step_factor / max_rate``.  Each step is compared against two
    half steps and halved until their difference is below ``local_tol``.
    States are returned in the Schroedinger picture at ``times``.

    Raises
    ------
    PositivityError
        If a recorded state has an eigenvalue below ``-positivity_tol``.
    """
    rho = np.array(rho0.data if isinstance(rho0, DensityMatrix) else rho0, dtype=complex)
    if rho.shape != (spec.n_levels, spec.n_levels):
        raise ValueError("initial state must live on the dissipator's levels")
    times = np.asarray(times, dtype=float)
    if np.any(np.diff(times) < 0) or times[0] < 0:
        raise ValueError("times must be non-negative and ascending")
    W, kappa = spec.rate_matrix, spec.escape_rates
    e = spec.energies
    h_max = step_factor / max(spec.max_rate, 1e-300)
    t = 0.0
    steps = 0
    worst_err = 0.0
    trace0 = float(np.real(np.trace(rho)))
    drift = 0.0
    min_eig = np.inf
    states = []
    h = h_max
    err = 0.0
    for target in times:
        while t < target:
            h = min(h, target - t)
            while True:
                full = _rk4(rho, h, W, kappa)
                half = _rk4(_rk4(rho, h / 2, W, kappa), h / 2, W, kappa)
                err = float(np.abs(full - half).max())
                if err <= local_tol or h < 1e-12 * h_max:
                    break
                h /= 2
            rho = half
            t += h
            steps += 1
            worst_err = max(worst_err, err)
            h = min(2 * h, h_max) if err < local_tol / 32 else h
        phase = np.exp(-1j * (e[:, None] - e[None, :]) * target)
        state = rho * phase
        vals = np.linalg.eigvalsh(state)
        min_eig = min(min_eig, float(vals.min()))
        drift = max(drift, abs(float(np.real(np.trace(state))) - trace0))
        if vals.min() < -positivity_tol:
            raise PositivityError(f"min eigenvalue {vals.min():.3e} at t={target:g} "
                                  f"(step {h:.3e}, local error {err:.2e})")
        states.append(state)
    return Trajectory(times, states, drift, min_eig, steps, worst_err)


def steady_state(spec: DissipatorSpec, rcond: float = 1e-10) -> DensityMatrix:
    """Null vector of the population rate matrix; coherences are zero.

    Raises
    ------
    DegenerateChainError
        If the kernel is not one-dimensional; carries the connected
        components of the rate graph.
    """
    W = spec.rate_matrix
    A = W - np.diag(spec.escape_rates)
    kernel = sla.null_space(A, rcond=rcond)
    if kernel.shape[1] != 1:
        n_comp, labels = connected_components(W + W.T > 0, directed=False)
        components = [np.flatnonzero(labels == c).tolist() for c in range(n_comp)]
        raise DegenerateChainError(f"rate-matrix kernel has dimension {kernel.shape[1]}; "
                                   f"{n_comp} connected components", components)
    p = kernel[:, 0]
    p = np.abs(p) if p.sum() >= 0 else np.abs(-p)
    p /= p.sum()
    return DensityMatrix(np.diag(p), "eigen", meta={"n_levels": spec.n_levels})


def restricted_gibbs(spec: DissipatorSpec, T: float | None = None) -> DensityMatrix:
    """Canonical state over exactly the dissipator's levels."""
    if T is None:
        T = next(iter(spec.temperatures.values()))
    w = boltzmann_weights(spec.energies, T)
    return DensityMatrix(np.diag(w / w.sum()), "eigen", meta={"n_levels": spec.n_levels, "temperature": T})

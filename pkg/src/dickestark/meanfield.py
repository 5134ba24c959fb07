"""Mean-field superradiant transition of the infinite-size model (k_B = 1).

At zero temperature the photon-vacuum energy per atom as a function of the
spin order parameter ``phi = beta^2 / N`` is

    E_G/N = Delta (phi - 1/2) - 4 lam^2 phi (1 - phi) / (omega + U (phi - 1/2)),

whose slope at ``phi = 0`` vanishes at ``lam_c = sqrt(Delta (omega - U/2) / 4)``.
At finite temperature the free energy per atom in the field displacement
``alpha`` is

    f(alpha) = omega alpha^2 - T ln[2 cosh(phi(alpha) / 2T)],
    phi(alpha) = sqrt((Delta + U alpha^2)^2 + (4 lam alpha)^2),

and its curvature at the origin changes sign at
``lam_c(T) = sqrt(Delta/4 [omega / tanh(Delta/2T) - U/2])``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import ModelParams

SCAN_POINTS = 512


class SingularInputError(ValueError):
    pass


class BracketError(RuntimeError):
    """The free-energy minimum sits at the edge of the scanned interval."""

    def __init__(self, message, landscape):
        super().__init__(message)
        self.landscape = landscape


@dataclass(frozen=True)
class CriticalPoint:
    lambda_c: float
    temperature: float
    params: ModelParams
    defined: bool = True


@dataclass(frozen=True)
class LandscapePoint:
    order_parameter: float
    value: float


def _critical(params: ModelParams, bracket: float, T: float) -> CriticalPoint:
    arg = params.delta / 4 * bracket
    if bracket < 0 or arg < 0:
        return CriticalPoint(float("nan"), T, params, defined=False)
    return CriticalPoint(float(np.sqrt(arg)), T, params)


def critical_coupling(params: ModelParams) -> CriticalPoint:
    """Zero-temperature critical coupling; undefined once ``U >= 2 omega``."""
    bracket = params.omega - params.stark_u / 2
    if bracket <= 0:
        return CriticalPoint(0.0 if bracket == 0 else float("nan"), 0.0, params, defined=False)
    return _critical(params, bracket, 0.0)


def _coth_half(delta: float, T: float) -> float:
    """``1 / tanh(delta / 2T)`` with the ``T -> 0`` limit taken exactly."""
    if T == 0:
        return float(np.sign(delta)) if delta != 0 else float("inf")
    return 1.0 / np.tanh(delta / (2 * T))


def critical_coupling_thermal(params: ModelParams, T: float) -> CriticalPoint:
    if T < 0:
        raise ValueError("temperature must be >= 0")
    bracket = params.omega * _coth_half(params.delta, T) - params.stark_u / 2
    return _critical(params, bracket, float(T))


def ground_energy_density(phi, params: ModelParams):
    """Photon-vacuum energy per atom at spin order parameter ``phi`` in [0, 1]."""
    phi = np.asarray(phi, dtype=float)
    if np.any((phi < 0) | (phi > 1)):
        raise ValueError("phi must lie in [0, 1]")
    denom = params.omega + params.stark_u * (phi - 0.5)
    if np.any(denom == 0):
        raise SingularInputError("omega + U (phi - 1/2) vanishes")
    value = params.delta * (phi - 0.5) - 4 * params.lam ** 2 * phi * (1 - phi) / denom
    return value if value.ndim else float(value)


def ground_energy_slope_at_origin(params: ModelParams) -> float:
    """Closed-form ``dE_G/dphi`` at ``phi = 0``: ``Delta - 4 lam^2 / (omega - U/2)``."""
    return params.delta - 4 * params.lam ** 2 / (params.omega - params.stark_u / 2)


def ground_state_landscape(params: ModelParams, n_points: int = SCAN_POINTS) -> list[LandscapePoint]:
    phis = np.linspace(0.0, 1.0, n_points)
    return [LandscapePoint(float(p), float(v)) for p, v in zip(phis, ground_energy_density(phis, params))]


def _log_2cosh(x):
    x = np.abs(x)
    return x + np.log1p(np.exp(-2 * x))


def free_energy_density(alpha, params: ModelParams, T: float):
    """Mean-field free energy per atom at field displacement ``alpha``."""
    if not T > 0:
        raise ValueError("temperature must be positive")
    alpha = np.asarray(alpha, dtype=float)
    a2 = alpha * alpha
    splitting = np.sqrt((params.delta + params.stark_u * a2) ** 2 + (4 * params.lam * alpha) ** 2)
    value = params.omega * a2 - T * _log_2cosh(splitting / (2 * T))
    return value if value.ndim else float(value)


def scan_bound(params: ModelParams) -> float:
    return 2 * np.sqrt(params.lam ** 2 / params.omega ** 2 + 1)


def free_energy_landscape(params: ModelParams, T: float, n_points: int = SCAN_POINTS) -> list[LandscapePoint]:
    alphas = np.linspace(0.0, scan_bound(params), n_points)
    return [LandscapePoint(float(a), float(v)) for a, v in zip(alphas, free_energy_density(alphas, params, T))]


def golden_section(func, lo: float, hi: float, tol: float = 1e-10) -> float:
    """Minimise a unimodal ``func`` on ``[lo, hi]`` to interval width ``tol``."""
    inv_phi = (np.sqrt(5) - 1) / 2
    c = hi - inv_phi * (hi - lo)
    d = lo + inv_phi * (hi - lo)
    fc, fd = func(c), func(d)
    while hi - lo > tol:
        if fc <= fd:
            hi, d, fd = d, c, fc
            c = hi - inv_phi * (hi - lo)
            fc = func(c)
        else:
            lo, c, fc = c, d, fd
            d = lo + inv_phi * (hi - lo)
            fd = func(d)
    return (lo + hi) / 2


def order_parameter(params: ModelParams, T: float, n_points: int = SCAN_POINTS) -> float:
    """Global minimiser ``alpha* >= 0`` of the free energy (0 in the normal phase).

    A coarse scan locates the basin, golden-section search refines it.

    Raises
    ------
    BracketError
        If the minimum lies at the upper end of the scan interval.
    """
    if not T > 0:
        raise ValueError("temperature must be positive")
    alphas = np.linspace(0.0, scan_bound(params), n_points)
    values = free_energy_density(alphas, params, T)
    best = int(np.argmin(values))
    if best == n_points - 1:
        landscape = list(zip(alphas.tolist(), values.tolist()))
        raise BracketError(f"free-energy minimum at scan edge alpha={alphas[-1]:.4g} for {params}, T={T}",
                           landscape)
    lo = alphas[max(best - 1, 0)]
    hi = alphas[best + 1]
    alpha = golden_section(lambda a: free_energy_density(a, params, T), lo, hi)
    f0 = values[0]
    if free_energy_density(alpha, params, T) < f0 - 1e-14 * max(1.0, abs(f0)):
        return float(alpha)
    return 0.0

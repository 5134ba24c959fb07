"""Model parameters, basis index maps and displaced-Fock overlap kernels.

Conventions used throughout the package
---------------------------------------
The displacement operator is ``D(g) = exp(g a - g a^dag)``.  In the
rotated frame the field part of spin block ``m`` is
``omega (a + g_m)^dag (a + g_m) - omega g_m^2`` with ``g_m = 2 lam m / (omega sqrt(N))``,
so block ``m`` is expanded in the displaced number states

    |k>_m = D(g_m) |k>,        annihilator  A_m = a + g_m.

With this choice

    <l; m'| k; m>  = <l| D(g_m - g_m') |k>
    <n_fock | k; m> = <n| D(g_m) |k>
    <k; m | vac>   = <k| D(-g_m) |0>

and every one of these is produced by :func:`displacement_matrix`, which is
the closed-form kernel :func:`displaced_overlap_matrix` with the
``LOWER_TO_UPPER`` sign attached by :func:`signed_overlap_matrix`.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy.special import eval_genlaguerre, gammaln


class NumericalRangeError(ArithmeticError):
    """Raised when a kernel would lose precision or overflow."""


@dataclass(frozen=True)
class ModelParams:
    """Physical parameters of the Dicke-Stark Hamiltonian.

    Energies are absolute (``omega`` defaults to 1 so they are also in units
    of the field frequency).
    """

    n_atoms: int
    lam: float
    stark_u: float = 0.0
    omega: float = 1.0
    delta: float = 1.0

    def __post_init__(self):
        if int(self.n_atoms) != self.n_atoms or self.n_atoms < 1:
            raise ValueError(f"n_atoms must be a positive integer, got {self.n_atoms!r}")
        if not self.omega > 0:
            raise ValueError(f"omega must be positive, got {self.omega!r}")
        if not self.lam >= 0:
            raise ValueError(f"coupling must be non-negative, got {self.lam!r}")
        for name in ("lam", "stark_u", "omega", "delta"):
            if not np.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        object.__setattr__(self, "n_atoms", int(self.n_atoms))

    @property
    def j(self) -> float:
        return self.n_atoms / 2

    @property
    def mean_field_valid(self) -> bool:
        """True when ``omega - U/2 > 0``, the domain of the zero-T critical coupling."""
        return self.omega - self.stark_u / 2 > 0

    @property
    def displacement_step(self) -> float:
        """Difference ``g_{m+1} - g_m = 2 lam / (omega sqrt(N))``."""
        return 2 * self.lam / (self.omega * np.sqrt(self.n_atoms))

    def replace(self, **changes) -> "ModelParams":
        values = dict(n_atoms=self.n_atoms, lam=self.lam, stark_u=self.stark_u,
                      omega=self.omega, delta=self.delta)
        values.update(changes)
        return ModelParams(**values)

    def fingerprint(self) -> str:
        text = "|".join([str(self.n_atoms)] + [float(x).hex() for x in
                        (self.lam, self.stark_u, self.omega, self.delta)])
        return hashlib.sha256(text.encode()).hexdigest()[:16]


def _check_m(m, n_atoms: int) -> int:
    """Return the integer offset ``m + j`` after validating ``m``."""
    j = n_atoms / 2
    shifted = m + j
    offset = int(round(shifted))
    if abs(shifted - offset) > 1e-9 or offset < 0 or offset > n_atoms:
        raise ValueError(f"spin projection {m} invalid for N={n_atoms}")
    return offset


@dataclass(frozen=True)
class DcsBasis:
    """Index map for the displaced-Fock basis ``|j,m>|k>_m``.

    Flat index is ``(m + j) * (k_trunc + 1) + k``, so each spin block is a
    contiguous slice.
    """

    n_atoms: int
    k_trunc: int
    kind: str = field(default="dcs", init=False)

    def __post_init__(self):
        if self.k_trunc < 0:
            raise ValueError("k_trunc must be >= 0")
        if self.n_atoms < 1:
            raise ValueError("n_atoms must be >= 1")

    @property
    def block_size(self) -> int:
        return self.k_trunc + 1

    @property
    def dimension(self) -> int:
        return (self.n_atoms + 1) * (self.k_trunc + 1)

    @property
    def m_values(self) -> np.ndarray:
        return np.arange(self.n_atoms + 1) - self.n_atoms / 2

    def index(self, m, k: int) -> int:
        if not 0 <= k <= self.k_trunc:
            raise ValueError(f"k={k} outside truncation {self.k_trunc}")
        return _check_m(m, self.n_atoms) * self.block_size + int(k)

    def quantum_numbers(self, idx: int) -> tuple[float, int]:
        if not 0 <= idx < self.dimension:
            raise IndexError(idx)
        block, k = divmod(int(idx), self.block_size)
        return block - self.n_atoms / 2, k

    def block(self, m) -> slice:
        start = _check_m(m, self.n_atoms) * self.block_size
        return slice(start, start + self.block_size)


@dataclass(frozen=True)
class FockBasis:
    """Index map for the product basis ``|j,m> (x) |n>`` (atom factor first)."""

    n_atoms: int
    n_trunc: int
    kind: str = field(default="fock", init=False)

    def __post_init__(self):
        if self.n_trunc < 0:
            raise ValueError("n_trunc must be >= 0")
        if self.n_atoms < 1:
            raise ValueError("n_atoms must be >= 1")

    @property
    def block_size(self) -> int:
        return self.n_trunc + 1

    @property
    def dimension(self) -> int:
        return (self.n_atoms + 1) * (self.n_trunc + 1)

    @property
    def m_values(self) -> np.ndarray:
        return np.arange(self.n_atoms + 1) - self.n_atoms / 2

    def index(self, m, n: int) -> int:
        if not 0 <= n <= self.n_trunc:
            raise ValueError(f"n={n} outside truncation {self.n_trunc}")
        return _check_m(m, self.n_atoms) * self.block_size + int(n)

    def quantum_numbers(self, idx: int) -> tuple[float, int]:
        if not 0 <= idx < self.dimension:
            raise IndexError(idx)
        block, n = divmod(int(idx), self.block_size)
        return block - self.n_atoms / 2, n


def spin_raising(m, j):
    """``j_m^+ = sqrt(j(j+1) - m(m+1))`` (zero at the top of the ladder)."""
    return np.sqrt(np.maximum(j * (j + 1) - m * (m + 1), 0.0))


def spin_lowering(m, j):
    """``j_m^- = sqrt(j(j+1) - m(m-1))``."""
    return np.sqrt(np.maximum(j * (j + 1) - m * (m - 1), 0.0))


def displacement_amplitude(m, params: ModelParams) -> float:
    """Block displacement ``g_m = 2 lam m / (omega sqrt(N))``."""
    _check_m(m, params.n_atoms)
    return 2 * params.lam * m / (params.omega * np.sqrt(params.n_atoms))


def displaced_overlap_matrix(G: float, k_trunc: int, n_cols: int | None = None) -> np.ndarray:
    """Closed-form kernel ``D_{l,k}`` for displacement step ``G``.

    ``D_{l,k} = exp(-G^2/2) sum_r (-1)^r sqrt(l! k!) G^(l+k-2r) / ((l-r)! (k-r)! r!)``
    with ``r = 0..min(l, k)``.  Rows run over ``l = 0..k_trunc`` and columns
    over ``k = 0..n_cols-1`` (square by default).

    The alternating sum is evaluated in its Laguerre form
    ``(-1)^s sqrt(s!/b!) G^(b-s) exp(-G^2/2) L_s^(b-s)(G^2)`` with
    ``s = min(l, k)``, ``b = max(l, k)``: the factorial ratio is accumulated
    as a log-gamma sum and exponentiated once per entry, which avoids both
    overflow and the cancellation of the raw sum at large ``G * k``.

    Raises
    ------
    NumericalRangeError
        If an entry is not representable.
    """
    if k_trunc < 0:
        raise ValueError("k_trunc must be >= 0")
    if not np.isfinite(G):
        raise NumericalRangeError("displacement step must be finite")
    n_cols = k_trunc + 1 if n_cols is None else int(n_cols)
    ls = np.arange(k_trunc + 1)[:, None]
    ks = np.arange(n_cols)[None, :]
    small = np.minimum(ls, ks)
    gap = np.abs(ls - ks)
    if G == 0.0:
        return np.where(gap == 0, (-1.0) ** small, 0.0)

    x = G * G
    if x / 2 > 700:
        raise NumericalRangeError(f"displacement step {G} underflows exp(-G^2/2)")
    lag = eval_genlaguerre(small, gap, x)
    log_pre = 0.5 * (gammaln(small + 1) - gammaln(small + gap + 1)) + gap * np.log(abs(G)) - x / 2
    with np.errstate(over="ignore", invalid="ignore"):
        out = np.exp(log_pre) * lag
    if not np.all(np.isfinite(out)):
        raise NumericalRangeError(f"overlap kernel overflows (G={G}, k_trunc={k_trunc}, n_cols={n_cols})")
    sign = (-1.0) ** small
    if G < 0:
        sign = sign * (-1.0) ** gap
    return sign * out


class Direction(Enum):
    """Which displaced basis sits in the bra of the overlap.

    ``LOWER_TO_UPPER`` carries the sign ``(-1)^l`` (row index) and equals
    ``<l| D(G) |k>``; ``UPPER_TO_LOWER`` carries ``(-1)^k`` and equals
    ``<l| D(-G) |k>``.
    """

    LOWER_TO_UPPER = "lower_to_upper"
    UPPER_TO_LOWER = "upper_to_lower"


def signed_overlap(l: int, k: int, direction: Direction, D: np.ndarray) -> float:
    """Apply the direction-dependent sign to a single kernel entry."""
    if not (0 <= l < D.shape[0] and 0 <= k < D.shape[1]):
        raise IndexError(f"({l}, {k}) outside kernel of shape {D.shape}")
    sign = (-1) ** (l if Direction(direction) is Direction.LOWER_TO_UPPER else k)
    return sign * float(D[l, k])


def signed_overlap_matrix(D: np.ndarray, direction: Direction) -> np.ndarray:
    """Vectorised :func:`signed_overlap` over the whole kernel."""
    if Direction(direction) is Direction.LOWER_TO_UPPER:
        return D * ((-1.0) ** np.arange(D.shape[0]))[:, None]
    return D * ((-1.0) ** np.arange(D.shape[1]))[None, :]


def displacement_matrix(g: float, n_rows: int, n_cols: int) -> np.ndarray:
    """Matrix elements ``<l| exp(g a - g a^dag) |k>`` for ``l < n_rows``, ``k < n_cols``.

    Equal to the kernel with the ``(-1)^l`` sign, i.e.
    ``signed_overlap_matrix(displaced_overlap_matrix(g, n_rows - 1, n_cols), LOWER_TO_UPPER)``.
    """
    if n_rows < 1 or n_cols < 1:
        raise ValueError("matrix must have at least one row and column")
    D = displaced_overlap_matrix(g, n_rows - 1, n_cols)
    return signed_overlap_matrix(D, Direction.LOWER_TO_UPPER)


def vacuum_in_displaced_basis(g: float, k_trunc: int) -> np.ndarray:
    """Amplitudes ``c_k = <k| D(g) |0> = exp(-g^2/2) (-g)^k / sqrt(k!)``.

    These expand the Fock vacuum in the basis ``D(g)^dag |k>``.  For spin
    block ``m`` of :class:`DcsBasis` pass ``g = -g_m``.
    """
    if not np.isfinite(g):
        raise NumericalRangeError("displacement must be finite")
    ks = np.arange(k_trunc + 1)
    log_mag = -g * g / 2 + ks * np.log(abs(g)) - 0.5 * gammaln(ks + 1) if g != 0 else None
    if log_mag is None:
        out = np.zeros(k_trunc + 1)
        out[0] = 1.0
        return out
    return np.exp(log_mag) * np.where((ks % 2 == 1) & (g > 0), -1.0, 1.0)

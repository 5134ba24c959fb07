"""Exact diagonalization of the Dicke model with a Stark coupling.

Displaced-Fock (DCS) Hamiltonian assembly, validated spectra, mean-field
critical couplings, equilibrium observables and dressed master-equation
dynamics.
"""

from .core import DcsBasis, FockBasis, ModelParams, NumericalRangeError
from .hamiltonian import SymmetricMatrix, build_dcs_hamiltonian, build_dfs_hamiltonian
from .spectrum import EigenDecomposition, converged_spectrum, dcs_decomposition, eigendecompose

__version__ = "0.1.0"

__all__ = [
    "DcsBasis", "FockBasis", "ModelParams", "NumericalRangeError", "SymmetricMatrix",
    "build_dcs_hamiltonian", "build_dfs_hamiltonian", "EigenDecomposition",
    "converged_spectrum", "dcs_decomposition", "eigendecompose", "__version__",
]

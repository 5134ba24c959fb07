import numpy as np
import pytest
import scipy.linalg as sla

from dickestark.core import DcsBasis, ModelParams
from dickestark.hamiltonian import build_dfs_hamiltonian
from dickestark.observables import (DensityMatrix, DirectionUndefinedError, UndefinedCorrelationError,
                                    collective_spin_operators, dcs_to_fock_product, expectation,
                                    g2_zero, gibbs_state, ground_mean_photon, negativity,
                                    partial_transpose, photon_number_matrix, product_density_matrix,
                                    quadrature_matrix, reduced_atomic_state, spin_squeezing,
                                    thermal_decomposition, von_neumann_entropy)
from dickestark.spectrum import dcs_decomposition, eigendecompose


def dfs_eigen(p, n_trunc=60):
    return eigendecompose(build_dfs_hamiltonian(p, n_trunc))


def fock_quadrature(n_atoms, n_trunc):
    a = np.diag(np.sqrt(np.arange(1, n_trunc + 1)), 1)
    return np.kron(np.eye(n_atoms + 1), a + a.T)


def fock_photon(n_atoms, n_trunc):
    return np.kron(np.eye(n_atoms + 1), np.diag(np.arange(n_trunc + 1.0)))


def g2_reference(energies, X, p):
    """Direct positive-frequency construction with explicit loops."""
    M = len(energies)
    Xp = np.zeros((M, M))
    for j in range(M):
        for k in range(j + 1, M):
            gap = energies[k] - energies[j]
            if gap > 1e-10:
                Xp[j, k] = gap * X[j, k]
    rho = np.diag(np.pad(p, (0, M - len(p))))
    Xm = Xp.T
    num = np.trace(rho @ Xm @ Xm @ Xp @ Xp)
    den = np.trace(rho @ Xm @ Xp)
    return num / den ** 2


def product_gibbs_from_dfs(p, T, n_trunc=60):
    d = dfs_eigen(p, n_trunc)
    w = np.exp(-(d.eigenvalues - d.eigenvalues[0]) / T)
    w /= w.sum()
    rho = (d.eigenvectors * w) @ d.eigenvectors.T
    return d, w, DensityMatrix(rho, "product", dims=(p.n_atoms + 1, n_trunc + 1))


def test_decoupled_operators():
    p = ModelParams(3, 0.0)
    basis = DcsBasis(3, 5)
    N = photon_number_matrix(basis, p)
    assert np.array_equal(N.dense(), np.diag(np.tile(np.arange(6.0), 4)))
    X = quadrature_matrix(basis, p).dense()
    block = X[:6, :6]
    assert np.allclose(np.diag(block), 0)
    assert np.allclose(np.diag(block, 1), np.sqrt(np.arange(1, 6)))
    assert np.abs(X[:6, 6:]).max() == 0


def test_block_structure():
    p = ModelParams(4, 0.6)
    basis = DcsBasis(4, 7)
    gs = 2 * 0.6 * basis.m_values / np.sqrt(4)
    N = photon_number_matrix(basis, p).dense()
    X = quadrature_matrix(basis, p).dense()
    for b, m in enumerate(basis.m_values):
        sl = basis.block(m)
        assert np.trace(N[sl, sl]) == pytest.approx(np.sum(np.arange(8) + gs[b] ** 2))
        assert np.allclose(np.diag(X[sl, sl]), -2 * gs[b])
    assert photon_number_matrix(basis, p).symmetry_defect() == 0


def test_ground_photon_matches_fock_oracle():
    p = ModelParams(4, 0.4, 1.0)
    d = dfs_eigen(p, 150)
    ref = d.eigenvectors[:, 0] @ fock_photon(4, 150) @ d.eigenvectors[:, 0] / 4
    assert ground_mean_photon(p) == pytest.approx(ref, abs=1e-8)
    assert ground_mean_photon(ModelParams(4, 0.0)) == pytest.approx(0.0, abs=1e-15)


def test_transition_element_matches_fock_oracle():
    p = ModelParams(2, 0.3)
    d = dcs_decomposition(p, 40, n_levels=2)
    X = quadrature_matrix(d.basis, p)
    got = d.eigenvectors[:, 0] @ (X.data @ d.eigenvectors[:, 1])
    f = dfs_eigen(p, 80)
    ref = f.eigenvectors[:, 0] @ fock_quadrature(2, 80) @ f.eigenvectors[:, 1]
    assert abs(got) == pytest.approx(abs(ref), abs=1e-8)


@pytest.mark.parametrize("lam,u", [(0.2, 0.0), (0.5, 1.0)])
def test_hellmann_feynman_photon_number(lam, u):
    h = 1e-5
    e = [dcs_decomposition(ModelParams(4, lam, u, omega=1 + s * h), 40, n_levels=1).eigenvalues[0]
         for s in (1, -1)]
    assert ground_mean_photon(ModelParams(4, lam, u)) * 4 == pytest.approx((e[0] - e[1]) / (2 * h), abs=1e-5)


def test_ground_photon_convergence_reporting():
    p = ModelParams(16, 0.8, 0.0)
    value, cert = ground_mean_photon(p, schedule=(4, 6), details=True, require_convergence=False)
    assert not cert["converged"] and value > 0
    with pytest.raises(Exception):
        ground_mean_photon(p, schedule=(4, 6))


def test_product_conversion_identity_at_zero_coupling():
    p = ModelParams(2, 0.0)
    d = dcs_decomposition(p, 6)
    state = dcs_to_fock_product(d.eigenvectors[:, 3], p, 6, n_trunc=6)
    assert state.captured_norm[0] == pytest.approx(1.0, abs=1e-15)
    assert np.allclose(state.coefficients.ravel(), d.eigenvectors[:, 3])


def test_product_conversion_preserves_photon_number():
    p = ModelParams(4, 0.7, 0.5)
    d = dcs_decomposition(p, 30, n_levels=3)
    state = dcs_to_fock_product(d.eigenvectors[:, 2], p, 30)
    assert state.captured_norm[0] >= 1 - 1e-8
    assert state.captured_norm[0] <= 1 + 1e-12
    n = np.arange(state.n_trunc + 1)
    photon = np.sum(state.coefficients ** 2 * n)
    assert photon == pytest.approx(expectation(photon_number_matrix(d.basis, p), d.eigenvectors[:, 2]), abs=1e-8)


def test_product_conversion_fixed_cutoff_reports_loss():
    p = ModelParams(4, 1.5)
    d = dcs_decomposition(p, 20, n_levels=1)
    state = dcs_to_fock_product(d.eigenvectors[:, 0], p, 20, n_trunc=3)
    assert state.captured_norm[0] < 0.999


def test_gibbs_state_limits():
    p = ModelParams(2, 0.4, 0.2)
    d = dcs_decomposition(p, 20)
    ground = gibbs_state(d, 0.0)
    assert ground.populations[0] == 1.0 and ground.data.shape == (1, 1)
    entropies = []
    for T in (0.05, 0.2, 0.5, 1.0, 2.0):
        rho = gibbs_state(d, T)
        assert rho.trace == pytest.approx(1.0, abs=1e-14)
        assert rho.meta["retained_levels"] == len(rho.populations)
        assert rho.min_eigenvalue() >= 0 and rho.hermiticity_defect() == 0
        entropies.append(von_neumann_entropy(rho))
    assert np.all(np.diff(entropies) > 0)
    with pytest.raises(ValueError):
        gibbs_state(d, -1.0)


@pytest.mark.parametrize("T", [0.5, 1.0, 2.0])
def test_thermal_oscillator_g2_is_two(T):
    p = ModelParams(1, 0.0, 0.0, delta=0.73)
    d = dcs_decomposition(p, 90)
    assert g2_zero(d, p, T) == pytest.approx(2.0, abs=1e-6)


def test_g2_matches_loop_reference():
    p = ModelParams(2, 0.5, 0.3)
    d = dcs_decomposition(p, 25)
    T = 0.4
    value, cert = g2_zero(d, p, T, details=True)
    M = cert["levels"] + 10
    X = d.eigenvectors[:, :M].T @ quadrature_matrix(d.basis, p).dense() @ d.eigenvectors[:, :M]
    p_gibbs = gibbs_state(d, T).populations
    assert value == pytest.approx(g2_reference(d.eigenvalues[:M], X, p_gibbs), rel=1e-10)
    assert cert["relative_change"] < 1e-4


def test_g2_undefined_without_excitations():
    p = ModelParams(2, 0.3)
    d = dcs_decomposition(p, 10)
    with pytest.raises(UndefinedCorrelationError):
        g2_zero(d, p, 0.0)


def bell_state():
    psi = np.array([1, 0, 0, 1]) / np.sqrt(2)
    return DensityMatrix(np.outer(psi, psi), "product", dims=(2, 2))


def test_bell_state_negativity():
    rho = bell_state()
    pt = partial_transpose(rho)
    assert np.linalg.eigvalsh(pt).min() == pytest.approx(-0.5, abs=1e-15)
    assert negativity(rho) == pytest.approx(0.5, abs=1e-10)


def test_partial_transpose_properties():
    rng = np.random.default_rng(3)
    A = rng.normal(size=(12, 12)) + 1j * rng.normal(size=(12, 12))
    rho = DensityMatrix(A @ A.conj().T / np.trace(A @ A.conj().T).real, "product", dims=(3, 4))
    pt = partial_transpose(rho)
    assert np.trace(pt) == pytest.approx(1.0)
    assert np.abs(pt - pt.conj().T).max() < 1e-15
    twice = partial_transpose(DensityMatrix(pt, "product", dims=(3, 4)))
    assert np.array_equal(twice, rho.data)
    assert np.array_equal(partial_transpose(DensityMatrix(pt, "product", dims=(3, 4)), "atom"), rho.data)
    with pytest.raises(ValueError):
        partial_transpose(DensityMatrix(np.eye(2) / 2, "eigen"))
    with pytest.raises(ValueError):
        partial_transpose(rho, "bath")


def test_product_state_has_zero_negativity():
    rng = np.random.default_rng(5)
    a = rng.normal(size=(3, 3)); a = a @ a.T; a /= np.trace(a)
    b = rng.normal(size=(4, 4)); b = b @ b.T; b /= np.trace(b)
    rho = DensityMatrix(np.kron(a, b), "product", dims=(3, 4))
    pt = partial_transpose(rho)
    assert np.allclose(np.sort(np.linalg.eigvalsh(pt)), np.sort(np.linalg.eigvalsh(rho.data)))
    assert negativity(rho) < 1e-15


def test_infinite_temperature_negativity_vanishes():
    # the residual is first order in (spectral width)/T and vanishes in the limit
    p = ModelParams(2, 0.5)
    d = dcs_decomposition(p, 8)
    values = [negativity(product_density_matrix(d, p, T)) for T in (1e6, 1e7, 1e12)]
    assert values[0] < 1e-7
    assert values[1] == pytest.approx(values[0] / 10, rel=1e-3)
    assert values[2] < 1e-13


def test_coherent_spin_state_not_squeezed():
    n = 6
    rho = np.zeros((n + 1, n + 1))
    rho[0, 0] = 1.0
    assert spin_squeezing(DensityMatrix(rho, "atomic"), n) == pytest.approx(1.0, abs=1e-12)


def test_squeezing_needs_a_mean_spin():
    with pytest.raises(DirectionUndefinedError):
        spin_squeezing(DensityMatrix(np.eye(5) / 5, "atomic"), 4)


def test_spin_operator_algebra():
    jx, jy, jz = collective_spin_operators(5)
    assert np.allclose(jx @ jy - jy @ jx, 1j * jz)
    casimir = jx @ jx + jy @ jy + jz @ jz
    assert np.allclose(casimir, 2.5 * 3.5 * np.eye(6))


@pytest.mark.parametrize("lam,u,T", [(0.3, 0.0, 0.3), (0.8, 0.5, 0.6)])
def test_frame_invariance(lam, u, T):
    """Rotated-frame DCS pipeline against original-frame Fock eigenstates."""
    p = ModelParams(2, lam, u)
    n_trunc = 60
    f, w, rho_f = product_gibbs_from_dfs(p, T, n_trunc)
    d = dcs_decomposition(p, 40)
    rho_d = product_density_matrix(d, p, T)

    assert negativity(rho_d) == pytest.approx(negativity(rho_f), abs=1e-6)
    assert spin_squeezing(rho_d, 2) == pytest.approx(spin_squeezing(rho_f, 2), abs=1e-6)
    photon_d = sum(q * expectation(photon_number_matrix(d.basis, p), v)
                   for q, v in zip(gibbs_state(d, T).populations, d.eigenvectors.T))
    photon_f = np.trace(rho_f.data @ fock_photon(2, n_trunc))
    assert photon_d == pytest.approx(photon_f, abs=1e-6)

    keep = np.count_nonzero(w > 1e-14) + 10
    X = f.eigenvectors[:, :keep].T @ fock_quadrature(2, n_trunc) @ f.eigenvectors[:, :keep]
    ref = g2_reference(f.eigenvalues[:keep], X, w[w > 1e-14] / w[w > 1e-14].sum())
    assert g2_zero(d, p, T) == pytest.approx(ref, rel=1e-6)


def test_reduced_atomic_state_matches_partial_trace():
    p = ModelParams(3, 0.6, -0.3)
    d = dcs_decomposition(p, 25)
    full = product_density_matrix(d, p, 0.4)
    da, df = full.dims
    traced = np.einsum("afbf->ab", full.data.reshape(da, df, da, df))
    reduced = reduced_atomic_state(d, p, 0.4)
    assert np.allclose(reduced.data, traced, atol=1e-12)
    assert spin_squeezing(reduced, 3) == pytest.approx(spin_squeezing(full, 3), abs=1e-12)


def test_thermal_decomposition_grows_until_weight_negligible():
    p = ModelParams(4, 0.5)
    d = thermal_decomposition(p, 0.3, k_trunc=20, start_levels=4)
    e = d.eigenvalues
    assert np.exp(-(e[-1] - e[0]) / 0.3) < 1e-15 or d.complete
    full = dcs_decomposition(p, 20)
    assert np.allclose(e, full.eigenvalues[:len(e)], atol=1e-10)

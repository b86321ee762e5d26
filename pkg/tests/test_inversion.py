import numpy as np
import pytest

from memkernel.bath import (
    BathStatistics,
    EtaTable,
    InfluenceTable,
    bath_influence,
    eta_coefficients,
    influence_table,
    ohmic,
)
from memkernel.errors import ValidationError
from memkernel.gqme import build_kernels_dyck, ttm_extract
from memkernel.inversion import (
    DephasingDegeneracy,
    cosine_coefficients,
    default_omega_grid,
    dephasing_eta_real,
    dephasing_extract,
    dephasing_spectral_density,
    divide_known_bath,
    eta_from_influence,
    forward_spectrum,
    invert_I0,
    invert_I_general,
    invert_influence_series,
    nodal_mask,
    spectral_density_from_eta,
)
from memkernel.pathsum import exact_propagators
from memkernel.system import SIGMA_Z, SystemHamiltonian, bare_full_step, bare_half_step, liouvillian_step

from conftest import BETA, OMEGA_C, ohmic_table, spin_boson_ops

DT = 0.1
BOSE = BathStatistics("boson", BETA)


def unit_table(depth):
    return InfluenceTable(DT, np.array([1.0, -1.0]), np.ones(4, complex), np.ones((depth + 1, 4, 4), complex))


@pytest.fixture(scope="module")
def kernels():
    _, G, F, L = spin_boson_ops(DT)
    I = ohmic_table(0.5, 1.0, DT, 6)
    return I, build_kernels_dyck(G, F, L, I, 5)


def test_I0_is_one_without_coupling():
    _, G, F, L = spin_boson_ops(DT)
    I0, resid = invert_I0((F - L) / DT**2, G, L, DT)
    np.testing.assert_allclose(I0, 1.0, atol=1e-12)
    assert resid < 1e-10


def test_I0_round_trip(kernels):
    _, G, F, L = spin_boson_ops(DT)
    I, K = kernels
    I0, resid = invert_I0(K[0], G, L, DT)
    np.testing.assert_allclose(I0, I.I0, atol=1e-10)
    assert resid < 1e-10


def test_first_order_explicit(kernels):
    _, G, F, L = spin_boson_ops(DT)
    I, K = kernels
    Gi = np.linalg.inv(G)
    expected = (DT**2 * Gi @ K[1] @ Gi) / (I.I0[:, None] * F * I.I0[None, :])
    tilde, _ = invert_I_general(K, G, F, I, 1)
    np.testing.assert_allclose(tilde, expected, atol=1e-10)
    np.testing.assert_allclose(tilde, I.I_tilde[1], atol=1e-10)


def test_second_order_explicit(kernels):
    _, G, F, L = spin_boson_ops(DT)
    I, K = kernels
    Gi = np.linalg.inv(G)
    I0, I1, T1 = I.I0, I.I[1], I.I_tilde[1]
    dashed = np.einsum("jk,kn,jk,kn,j,k,n->jn", F, F, T1, T1, I0, I0, I0)
    den = np.einsum("jk,kn,jk,kn,j,k,n->jn", F, F, I1, I1, I0, I0, I0)
    expected = (DT**2 * Gi @ K[2] @ Gi - dashed) / den
    tilde, d = invert_I_general(K, G, F, I, 2)
    np.testing.assert_allclose(d, den, atol=1e-12)
    np.testing.assert_allclose(tilde, expected, atol=1e-10)
    np.testing.assert_allclose(tilde, I.I_tilde[2], atol=1e-9)


def test_dyck_and_cumulant_routes_agree(kernels):
    _, G, F, L = spin_boson_ops(DT)
    I, K = kernels
    for N in range(1, 6):
        a, _ = invert_I_general(K, G, F, I, N, method="dyck")
        b, _ = invert_I_general(K, G, F, I, N, L=L, method="cumulant")
        np.testing.assert_allclose(a, b, atol=1e-10)


def test_series_inversion_recovers_table():
    sysm, G, F, L = spin_boson_ops(DT)
    I = ohmic_table(0.1, 1.0, DT, 9)
    K = ttm_extract(exact_propagators(G, F, I, 9), L)
    tab, residuals = invert_influence_series(K, G, F, L, sysm.s_eigs, 8)
    np.testing.assert_allclose(tab.I[1:9], I.I[1:9], atol=1e-9)
    assert residuals.max() < 1e-9


def test_unknown_method_and_missing_orders_rejected(kernels):
    _, G, F, L = spin_boson_ops(DT)
    I, K = kernels
    with pytest.raises(ValidationError):
        invert_I_general(K, G, F, I, 2, method="magic")
    with pytest.raises(ValidationError):
        invert_I_general(K, G, F, I, 7)
    shallow = InfluenceTable(DT, I.s_eigs, I.I0, I.I[:2])
    with pytest.raises(ValidationError):
        invert_I_general(K, G, F, shallow, 3)


def test_eta_of_unit_influence_is_zero():
    eta = eta_from_influence(unit_table(5))
    assert np.all(eta.eta == 0)


def test_eta_forward_inverse_round_trip():
    table = ohmic_table(0.5, 0.5, DT, 8)
    back = eta_from_influence(table)
    exact = eta_coefficients(ohmic(0.5, 0.5, OMEGA_C), BOSE, DT, 8)
    # Im eta_0 drops out of I for s = +-1
    assert abs(back.eta[0].real - exact.eta[0].real) < 1e-12
    assert np.max(np.abs(back.eta[1:] - exact.eta[1:])) < 1e-12
    np.testing.assert_allclose(influence_table(back, (1.0, -1.0)).I, table.I, atol=1e-12)


def test_eta_round_trip_asymmetric_levels(rng):
    s = (1.0, 0.0, -0.5)
    vals = 0.05 * (rng.standard_normal(6) + 1j * rng.standard_normal(6))
    vals[0] = abs(vals[0].real) + 1j * vals[0].imag
    table = influence_table(EtaTable(DT, vals), s)
    np.testing.assert_allclose(eta_from_influence(table).eta, vals, atol=1e-12)


def test_zero_eta_gives_zero_density():
    spec = spectral_density_from_eta(EtaTable(DT, np.zeros(6, complex)), BOSE)
    assert np.all(spec.J[~spec.mask] == 0)


def test_nodal_points_vanish_and_are_masked():
    n = np.arange(1, 6)
    nodes = 2 * np.pi * n / DT
    F = forward_spectrum(ohmic(0.5, 1.0, OMEGA_C), BOSE, DT, nodes)
    assert np.all(np.abs(F) < 1e-10)
    grid = np.linspace(0, nodes[-1], 2001)
    mask = nodal_mask(grid, DT)
    for w in np.concatenate([[0.0], nodes]):
        assert mask[np.argmin(np.abs(grid - w))]
    spec = spectral_density_from_eta(eta_from_influence(ohmic_table(0.1, 1.0, DT, 4)), BOSE, grid)
    assert np.all(np.isnan(spec.J[spec.mask]))


def test_forward_map_matches_series_for_ohmic_bath():
    eta = eta_from_influence(ohmic_table(0.1, 1.0, DT, 12))
    J = ohmic(0.1, 1.0, OMEGA_C)
    spec = spectral_density_from_eta(eta, BOSE)
    w = spec.omega[(~spec.mask) & (spec.omega > 1) & (spec.omega < 10)]
    fw = forward_spectrum(J, BOSE, DT, w)
    series = spec.F[np.isin(spec.omega, w)]
    assert np.linalg.norm(series - fw) / np.linalg.norm(fw) < 0.05


def test_dephasing_zero_real_eta():
    assert np.all(dephasing_extract(np.zeros(8), DT) == 0)


def test_cosine_round_trip(rng):
    r = rng.standard_normal(10)
    F_e = dephasing_extract(r, DT, default_omega_grid(DT, 64))
    np.testing.assert_allclose(cosine_coefficients(F_e, DT, 9), r, atol=1e-12)


def test_dephasing_real_eta_from_coherence():
    sysm = SystemHamiltonian(0.7 * SIGMA_Z)
    G = bare_half_step(sysm, DT)
    I = ohmic_table(0.5, 1.0, DT, 6)
    U = exact_propagators(G, bare_full_step(G), I, 6)
    r = dephasing_eta_real(U, sysm.s_eigs)
    exact = eta_coefficients(ohmic(0.5, 1.0, OMEGA_C), BOSE, DT, 6).eta.real
    np.testing.assert_allclose(r, exact[: r.shape[0]], atol=1e-12)


def test_dephasing_spectral_density_order_16():
    J = ohmic(0.1, 1.0, OMEGA_C)
    r = eta_coefficients(J, BOSE, 0.05, 16).eta.real
    assert dephasing_spectral_density(r, 0.05, BOSE).relative_error(J) < 0.05


def test_diagonal_hamiltonian_raises_degeneracy():
    sysm = SystemHamiltonian(0.7 * SIGMA_Z)
    G = bare_half_step(sysm, DT)
    F, L = bare_full_step(G), liouvillian_step(sysm, DT)
    I = ohmic_table(0.5, 1.0, DT, 3)
    K = build_kernels_dyck(G, F, L, I, 2)
    with pytest.raises(DephasingDegeneracy):
        invert_I_general(K, G, F, I, 2)


def test_divide_known_bath_identity_and_algebra():
    a, b = ohmic_table(0.1, 1.0, DT, 5), ohmic_table(0.5, 0.5, DT, 5)
    same = divide_known_bath(a, a)
    assert np.allclose(same.I, 1) and np.allclose(same.I0, 1)
    back = divide_known_bath(a * b, b)
    np.testing.assert_allclose(back.I, a.I, atol=1e-14)
    np.testing.assert_allclose(back.I0, a.I0, atol=1e-14)


def test_two_bath_extraction_through_kernels():
    dt = 0.05
    sysm, G, F, L = spin_boson_ops(dt)
    J1, J2 = ohmic(0.1, 1.0, OMEGA_C), ohmic(0.05, 1.0, OMEGA_C)
    a, b = bath_influence(J1, BOSE, dt, 13), bath_influence(J2, BOSE, dt, 13)
    K = ttm_extract(exact_propagators(G, F, a * b, 13), L)
    total, _ = invert_influence_series(K, G, F, L, sysm.s_eigs, 12)
    known = InfluenceTable(dt, b.s_eigs, b.I0, b.I[:13])
    eta = eta_from_influence(divide_known_bath(total, known))
    assert spectral_density_from_eta(eta, BOSE).relative_error(J1) < 0.05

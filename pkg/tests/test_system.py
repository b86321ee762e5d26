import numpy as np
import pytest
from scipy.linalg import expm

from memkernel.errors import ValidationError
from memkernel.system import (
    IDENTITY2,
    REFERENCE_STATES,
    SIGMA_X,
    SIGMA_Y,
    SIGMA_Z,
    SystemHamiltonian,
    bare_full_step,
    bare_half_step,
    commutator_superop,
    liouvillian_step,
    pair_swap,
    trace_distance,
    unvec,
    vec,
)


def superop_expm(H, tau):
    """exp(-i [H, .] tau) acting on row-major vec(rho)."""
    d = H.shape[0]
    gen = np.kron(H, np.eye(d)) - np.kron(np.eye(d), H.T)
    return expm(-1j * gen * tau)


def test_half_step_zero_hamiltonian_is_identity():
    G = bare_half_step(np.zeros((2, 2)), 0.1)
    np.testing.assert_allclose(G, np.eye(4), atol=1e-15)


def test_half_step_diagonal_phases():
    eps, dt = 0.7, 0.1
    G = bare_half_step(eps * SIGMA_Z, dt)
    e = np.array([eps, -eps])
    expected = np.array([np.exp(-1j * (e[a] - e[b]) * dt / 2) for a in range(2) for b in range(2)])
    np.testing.assert_allclose(G, np.diag(expected), atol=1e-14)


def test_half_step_matches_dense_expm():
    np.testing.assert_allclose(bare_half_step(SIGMA_X, 0.1), superop_expm(SIGMA_X, 0.05), atol=1e-12)


def test_full_step_identity_and_expm():
    np.testing.assert_allclose(bare_full_step(np.eye(4)), np.eye(4))
    H = 0.3 * SIGMA_Z + 1.1 * SIGMA_X
    np.testing.assert_allclose(bare_full_step(bare_half_step(H, 0.2)), superop_expm(H, 0.2), atol=1e-12)


def test_full_step_rabi_entry():
    F = bare_full_step(bare_half_step(SIGMA_X, 0.1))
    assert F[0, 0] == pytest.approx(np.cos(0.1) ** 2, abs=1e-14)


def test_liouvillian_step_zero_and_commutator():
    np.testing.assert_allclose(liouvillian_step(np.zeros((2, 2)), 0.1), np.eye(4))
    # hand-built commutator of sigma_x in row-major pair space
    # ([H, rho])_ab = sum_c H_ac rho_cb - rho_ac H_cb
    C = np.array([[0, -1, 1, 0], [-1, 0, 0, 1], [1, 0, 0, -1], [0, 1, -1, 0]], dtype=complex)
    np.testing.assert_allclose(commutator_superop(SIGMA_X), C)
    np.testing.assert_allclose(liouvillian_step(SIGMA_X, 0.1), np.eye(4) - 0.1j * C)


def test_liouvillian_second_order_gap():
    H = SIGMA_Z + SIGMA_X
    gaps = [np.linalg.norm(liouvillian_step(H, dt) - bare_full_step(bare_half_step(H, dt))) for dt in (0.1, 0.05, 0.025)]
    ratios = [gaps[0] / gaps[1], gaps[1] / gaps[2]]
    assert all(3.8 < r < 4.2 for r in ratios), ratios


def test_full_step_unitary_and_deterministic():
    H = 0.4 * SIGMA_Z + SIGMA_X
    F = bare_full_step(bare_half_step(H, 0.1))
    np.testing.assert_allclose(F @ F.conj().T, np.eye(4), atol=1e-12)
    assert np.array_equal(F, bare_full_step(bare_half_step(H, 0.1)))


def test_trace_preserved_by_F():
    F = bare_full_step(bare_half_step(SIGMA_Z + SIGMA_X, 0.1))
    for rho in REFERENCE_STATES:
        assert np.trace(unvec(F @ vec(rho))) == pytest.approx(1.0, abs=1e-12)


def test_non_hermitian_rejected():
    with pytest.raises(ValidationError):
        SystemHamiltonian(np.array([[0, 1], [0, 0]], dtype=complex))


def test_non_diagonal_coupling_rejected_by_eigenvalue_count():
    with pytest.raises(ValidationError):
        SystemHamiltonian(SIGMA_Z, s_eigs=(1.0, -1.0, 0.0))


def test_drive_is_validated_at_sample_times():
    sysm = SystemHamiltonian(SIGMA_Z, drive=lambda t: 1j * np.sin(t) * IDENTITY2)
    with pytest.raises(ValidationError):
        sysm.at(0.5)


def test_pair_swap_and_trace_distance():
    perm = pair_swap(2)
    assert list(perm) == [0, 2, 1, 3]
    a, b = REFERENCE_STATES[0], REFERENCE_STATES[1]
    assert trace_distance(a, b) == pytest.approx(1.0)
    assert trace_distance(a, a) == 0.0


def test_reference_states_are_independent():
    P0 = np.array([vec(r) for r in REFERENCE_STATES]).T
    assert np.linalg.matrix_rank(P0) == 4
    rho4 = REFERENCE_STATES[3]
    np.testing.assert_allclose(rho4, 0.5 * (IDENTITY2 + SIGMA_X + SIGMA_Y + SIGMA_Z))

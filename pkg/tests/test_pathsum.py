import numpy as np
import pytest

from memkernel.bath import InfluenceTable
from memkernel.errors import ResourceError
from memkernel.pathsum import exact_propagators, iterative_quapi
from memkernel.system import REFERENCE_STATES, SIGMA_Z, pair_swap, unvec, vec

from conftest import ohmic_table, spin_boson_ops

DT = 0.1


def unit_table(depth):
    return InfluenceTable(DT, np.array([1.0, -1.0]), np.ones(4, complex), np.ones((depth + 1, 4, 4), complex))


def test_zero_coupling_is_bare_dynamics():
    _, G, F, _ = spin_boson_ops(DT)
    U = exact_propagators(G, F, unit_table(5), 6)
    np.testing.assert_allclose(U[0], np.eye(4))
    for n in range(7):
        np.testing.assert_allclose(U[n], np.linalg.matrix_power(F, n), atol=1e-12)


def test_first_propagator_structure():
    _, G, F, _ = spin_boson_ops(DT)
    I = ohmic_table(0.5, 1.0, DT, 4)
    U = exact_propagators(G, F, I, 1)
    np.testing.assert_allclose(U[1], G @ np.diag(I.I0) @ G, atol=1e-15)


def test_memoryless_quapi():
    _, G, F, _ = spin_boson_ops(DT)
    I = ohmic_table(0.5, 1.0, DT, 4)
    U = iterative_quapi(G, F, I, 0, 6)
    step = G @ np.diag(I.I0) @ G
    for n in range(7):
        np.testing.assert_allclose(U[n], np.linalg.matrix_power(step, n), atol=1e-13)


def test_full_memory_quapi_is_exact():
    _, G, F, _ = spin_boson_ops(DT)
    I = ohmic_table(0.1, 1.0, DT, 8)
    exact = exact_propagators(G, F, I, 8)
    np.testing.assert_allclose(iterative_quapi(G, F, I, 7, 8).U, exact.U, atol=1e-12)
    rho0 = vec(REFERENCE_STATES[0])
    sz = lambda ser: [np.real(np.trace(unvec(r) @ SIGMA_Z)) for r in ser.apply(rho0)]
    np.testing.assert_allclose(sz(iterative_quapi(G, F, I, 7, 8)), sz(exact), atol=1e-12)


def test_tensor_and_enumeration_agree():
    _, G, F, _ = spin_boson_ops(DT)
    I = ohmic_table(0.5, 0.5, DT, 7)
    a = exact_propagators(G, F, I, 7, method="tensor")
    b = exact_propagators(G, F, I, 7, method="enumerate")
    np.testing.assert_allclose(a.U, b.U, atol=1e-12)


def test_budget_guard():
    _, G, F, _ = spin_boson_ops(DT)
    I = ohmic_table(0.1, 1.0, DT, 8)
    with pytest.raises(ResourceError):
        exact_propagators(G, F, I, 8, method="tensor", budget=4**5)
    with pytest.raises(ResourceError):
        exact_propagators(G, F, I, 8, enumeration_budget=4**5, budget=4**5)


def test_trace_and_hermiticity_preserved():
    _, G, F, _ = spin_boson_ops(DT)
    I = ohmic_table(0.5, 1.0, DT, 8)
    U = exact_propagators(G, F, I, 8)
    swap = pair_swap(2)
    for n in range(9):
        for rho in REFERENCE_STATES:
            out = U[n] @ vec(rho)
            assert abs(np.trace(unvec(out)) - 1) < 1e-10
            np.testing.assert_allclose(out[swap], out.conj(), atol=1e-12)


def test_truncation_converges_monotonically():
    _, G, F, _ = spin_boson_ops(DT)
    I = ohmic_table(0.1, 1.0, DT, 8)
    rho0 = vec(REFERENCE_STATES[0])
    ref = iterative_quapi(G, F, I, 8, 40).apply(rho0)
    errs = []
    for k in (2, 4, 6):
        traj = iterative_quapi(G, F, I, k, 40).apply(rho0)
        errs.append(max(np.abs(a - b).max() for a, b in zip(traj, ref)))
    assert errs[0] > errs[1] > errs[2]

import mpmath as mp
import numpy as np
import pytest

from memkernel import bath
from memkernel.bath import (
    BathStatistics,
    EtaTable,
    brownian_peak,
    eta_coefficients,
    eval_spectral_density,
    fermionic_flat_band,
    influence_table,
    lorentzian_peak,
    ohmic,
    sum_of,
    tabulated,
)
from memkernel.errors import NumericalError, RangeError, ValidationError

from conftest import ohmic_table

DT = 0.1


def mp_eta(xi, s, wc, beta, dt, k):
    """Unfolded eta integrals over the whole real line, 30 digits."""
    mp.mp.dps = 30
    xi, s, wc, beta, dt = map(mp.mpf, (xi, s, wc, beta, dt))

    def J(w):
        return mp.sign(w) * mp.pi / 2 * xi * wc ** (1 - s) * abs(w) ** s * mp.exp(-abs(w) / wc)

    def w_stat(w):
        return mp.exp(beta * w / 2) / mp.sinh(beta * w / 2)

    if k == 0:
        f = lambda w: J(w) / w**2 * w_stat(w) * (1 - mp.exp(-1j * w * dt)) / (2 * mp.pi)
    else:
        f = lambda w: 2 / mp.pi * J(w) / w**2 * w_stat(w) * mp.sin(w * dt / 2) ** 2 * mp.exp(-1j * w * dt * k)
    top = 60 * wc
    edges = [-top] + [-x for x in (30 * wc, 10 * wc, 3 * wc, wc, 1)] + [0] + [1, wc, 3 * wc, 10 * wc, 30 * wc, top]
    return complex(mp.quad(f, edges))


def test_ohmic_value_at_cutoff():
    assert eval_spectral_density(ohmic(0.1, 1, 7.5), 7.5) == pytest.approx(0.1 * np.pi / 2 * 7.5 * np.exp(-1))


def test_ohmic_zero_frequency():
    assert eval_spectral_density(ohmic(0.1, 1, 7.5), 0.0) == 0.0


def test_two_lorentzian_value_at_peak():
    g, w0 = np.pi, 5.0
    Jb = sum_of(lorentzian_peak(g, w0), lorentzian_peak(g, 3 * w0))
    assert Jb(w0) == pytest.approx(g / g**2 + g / ((2 * w0) ** 2 + g**2), rel=1e-14)


def test_builtin_densities_nonnegative():
    w = np.linspace(1e-6, 300, 4001)
    for J in (ohmic(0.5, 0.5, 7.5), brownian_peak(3.0, 5.0), lorentzian_peak(np.pi, 5.0, True),
              fermionic_flat_band(1.0, 0.1, 10.0)):
        assert np.all(J(w) >= 0)


def test_tabulated_interpolation_and_range():
    J = tabulated([0, 1, 2], [0, 2, 0])
    assert J(0.5) == pytest.approx(1.0)
    with pytest.raises(RangeError):
        J(2.5)
    with pytest.raises(ValidationError):
        tabulated([0, 0, 1], [1, 2, 3])


def test_bad_parameters_rejected():
    with pytest.raises(ValidationError):
        ohmic(-0.1, 1.0, 7.5)
    with pytest.raises(ValidationError):
        BathStatistics("anyon", 1.0)
    with pytest.raises(ValidationError):
        eta_coefficients(ohmic(0.1), BathStatistics(), -0.1, 2)


def test_zero_coupling_gives_zero_eta():
    eta = eta_coefficients(ohmic(0.0, 1, 7.5), BathStatistics("boson", 5.0), DT, 4)
    assert np.all(eta.eta == 0)


@pytest.mark.parametrize("k", [0, 1])
def test_eta_matches_high_precision_oracle(k):
    eta = eta_coefficients(ohmic(0.1, 1, 7.5), BathStatistics("boson", 5.0), DT, 1)
    ref = mp_eta(0.1, 1, 7.5, 5.0, DT, k)
    assert abs(eta.eta[k] - ref) <= 1e-9 * abs(ref)


def test_eta_subohmic_matches_oracle():
    eta = eta_coefficients(ohmic(0.5, 0.5, 7.5), BathStatistics("boson", 5.0), DT, 3)
    ref = mp_eta(0.5, 0.5, 7.5, 5.0, DT, 3)
    assert abs(eta.eta[3] - ref) <= 1e-9 * abs(ref)


def test_spin_effective_integrand_carries_tanh():
    J = ohmic(0.1, 1, 7.5)
    w = np.linspace(0.05, 40, 200)
    boson = bath._Integrands(J, BathStatistics("boson", 5.0), DT)
    spin = bath._Integrands(J, BathStatistics("spin", 5.0), DT)
    np.testing.assert_allclose(spin.re_dense(w) / boson.re_dense(w), np.tanh(2.5 * w), rtol=1e-13)
    np.testing.assert_allclose(spin.im_dense(w) / boson.im_dense(w), np.tanh(2.5 * w), rtol=1e-13)


def test_fermion_weight_is_cosh_form():
    st = BathStatistics("fermion", 2.0, 0.3)
    w = np.linspace(-5, 5, 41)
    expected = np.exp(st.beta * (w - st.mu) / 2) / np.cosh(st.beta * (w - st.mu) / 2)
    np.testing.assert_allclose(st.weight(w), expected, rtol=1e-13)


def test_lorentzian_with_finite_zero_value_raises_for_bosons():
    with pytest.raises(NumericalError) as err:
        eta_coefficients(lorentzian_peak(np.pi, 5.0), BathStatistics("boson", 5.0), DT, 2)
    assert "J(0+)" in err.value.diagnostics


def test_boson_real_eta0_positive_and_negative_lag_conjugates():
    for xi, s in ((0.1, 1.0), (0.5, 0.5)):
        eta = eta_coefficients(ohmic(xi, s, 7.5), BathStatistics("boson", 5.0), DT, 3)
        assert eta.eta[0].real >= 0
        assert eta.lag(-2) == np.conj(eta.eta[2])


def test_doubling_depth_leaves_entries_unchanged():
    st = BathStatistics("boson", 5.0)
    a = eta_coefficients(ohmic(0.1, 1, 7.5), st, DT, 6)
    b = eta_coefficients(ohmic(0.1, 1, 7.5), st, DT, 12)
    np.testing.assert_allclose(b.eta[:7], a.eta, atol=1e-12, rtol=0)


def test_refining_tolerance_stays_within_error_estimate(monkeypatch):
    st = BathStatistics("boson", 5.0)
    base = eta_coefficients(ohmic(0.1, 1, 7.5), st, DT, 5)
    monkeypatch.setattr(bath, "EPSABS", bath.EPSABS / 2)
    monkeypatch.setattr(bath, "EPSREL", bath.EPSREL / 2)
    fine = eta_coefficients(ohmic(0.1, 1, 7.5), st, DT, 5)
    assert np.all(np.abs(fine.eta - base.eta) <= base.errors + 1e-15)


def test_influence_table_trivial_and_diagonal_rows():
    zero = influence_table(EtaTable(DT, np.zeros(4)), (1.0, -1.0))
    assert np.all(zero.I == 1) and np.all(zero.I0 == 1) and np.all(zero.I_tilde == 0)
    I = ohmic_table(0.5, 1.0, DT, 4)
    for a in (0, 3):  # x+ = x-
        assert np.allclose(I.I[1:, a, :], 1.0)
        assert I.I0[a] == 1.0


def test_influence_matches_scalar_exponent():
    eta = eta_coefficients(ohmic(0.1, 1, 7.5), BathStatistics("boson", 5.0), DT, 3)
    I = influence_table(eta, (1.0, -1.0))
    s = (1.0, -1.0)
    for k in (1, 2, 3):
        for a in range(4):
            for b in range(4):
                ap, am = s[a // 2], s[a % 2]
                bp, bm = s[b // 2], s[b % 2]
                val = np.exp(-(ap - am) * (eta.eta[k] * bp - np.conj(eta.eta[k]) * bm))
                assert I.I[k, a, b] == pytest.approx(val, rel=1e-15, abs=1e-15)


def test_influence_norm_decays_after_first_order():
    norms = ohmic_table(0.1, 1.0, DT, 12).norms()
    assert np.all(np.diff(norms[1:]) < 0)


def test_product_of_tables_and_truncation():
    a, b = ohmic_table(0.1, 1.0, DT, 4), ohmic_table(0.5, 1.0, DT, 4)
    prod = a * b
    np.testing.assert_allclose(prod.I, a.I * b.I)
    t = a.truncated(2)
    assert np.all(t.I[3:] == 1) and np.array_equal(t.I[:3], a.I[:3])

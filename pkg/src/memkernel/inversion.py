"""Inverse chain: kernels -> influence functions -> eta -> spectral density.

The order-N influence factor enters the order-N kernel only through the
single maximal-height (crest) term, whose other factors form the denominator
D_N (all pairs except the outermost one). Removing the non-crest terms and
dividing by D_N isolates I_N - 1.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .bath import BathStatistics, EtaTable, InfluenceTable, influence_table
from .dyck import bath_sum
from .errors import ConditioningError, DataError, NumericalError, ValidationError
from .gqme import KernelSeries, TrajectoryEnsemble, propagators_from_trajectories, ttm_extract
from .pathsum import PropagatorSeries, auxiliary_sums, half_step_source
from .system import SystemHamiltonian, bare_full_step, bare_half_step, liouvillian_step

DENOMINATOR_THRESHOLD = 1e-12
CUMULANT_ABOVE = 10


class DephasingDegeneracy(NumericalError):
    """The crest denominator vanishes because the system Hamiltonian is diagonal."""


def _inv(m, what):
    cond = np.linalg.cond(m)
    if not np.isfinite(cond) or cond > 1e12:
        raise ConditioningError(f"{what} is singular (condition number {cond:.3e})", {"cond": cond})
    return np.linalg.inv(m)


def invert_I0(K0, G, L, dt: float):
    """I_0 from the zeroth kernel; returns (I0, off-diagonal residual)."""
    Gi = _inv(G, "half-step propagator G")
    M = Gi @ (dt**2 * np.asarray(K0) + L) @ Gi
    I0 = np.diag(M).copy()
    resid = float(np.max(np.abs(M - np.diag(I0)))) if M.size else 0.0
    return I0, resid


def _noncrest_dyck(F, I_ext: InfluenceTable, N: int):
    return bath_sum(F, I_ext, N, hmax=N - 1, denominator=True)


def _noncrest_cumulant(G, L, I_ext: InfluenceTable, N: int):
    """Non-crest part from model propagators with I_N set to one."""
    gs = half_step_source(G)
    tilde = auxiliary_sums(gs, I_ext, N + 1, skip_outer=True)
    D = I_ext.D
    U = np.empty((N + 2, D, D), dtype=complex)
    U[0] = np.eye(D)
    for n in range(1, N + 2):
        U[n] = G @ tilde[n - 1] @ G
    Khat = ttm_extract(PropagatorSeries(I_ext.dt, U), L)
    Gi = _inv(G, "half-step propagator G")
    return I_ext.dt**2 * Gi @ Khat.K[N] @ Gi, tilde[N]


def invert_I_general(
    K: KernelSeries,
    G,
    F,
    I_partial: InfluenceTable,
    N: int,
    *,
    L=None,
    method: str = "dyck",
    threshold: float = DENOMINATOR_THRESHOLD,
):
    """I_N - 1 from the order-N kernel given influence orders 0..N-1.

    ``method`` selects how the non-crest terms are summed: ``dyck`` uses the
    height-capped Dyck sum directly, ``cumulant`` recovers them from model
    propagators (needs ``L``). Returns (I_N - 1, crest denominator).
    """
    if N < 1:
        raise ValidationError("general inversion starts at order 1")
    if N > K.r_max:
        raise ValidationError(f"kernel order {N} not available (have {K.r_max})")
    if I_partial.k_max < N - 1:
        raise ValidationError(f"need influence orders up to {N - 1}")
    I_ext = InfluenceTable(I_partial.dt, I_partial.s_eigs, I_partial.I0, I_partial.I[:N]).extended(N)
    if method == "dyck":
        noncrest, den = _noncrest_dyck(F, I_ext, N)
    elif method == "cumulant":
        if L is None:
            raise ValidationError("the cumulant route needs the first-order step L")
        noncrest, den = _noncrest_cumulant(G, L, I_ext, N)
    else:
        raise ValidationError(f"unknown inversion method {method!r}")
    Gi = _inv(G, "half-step propagator G")
    lhs = K.dt**2 * Gi @ K.K[N] @ Gi
    scale = np.max(np.abs(den))
    small = np.abs(den) <= threshold * scale
    if np.any(small):
        if np.allclose(F, np.diag(np.diag(F))):
            raise DephasingDegeneracy(
                "crest denominator vanishes for a diagonal system Hamiltonian; "
                "only Re eta is recoverable, use the dephasing branch",
                {"order": N},
            )
        raise NumericalError(
            "crest denominator below threshold: the kernel input looks corrupted",
            {"order": N, "min_ratio": float(np.min(np.abs(den)) / scale)},
        )
    return (lhs - noncrest) / den, den


# -- eta from influence -------------------------------------------------------
def _pair_coords(s_eigs):
    s = np.asarray(s_eigs, dtype=float)
    d = s.shape[0]
    sp, sm = np.repeat(s, d), np.tile(s, d)
    return sp - sm, sp + sm


def _fit_eta(logI: np.ndarray, delta: np.ndarray, sigma: np.ndarray) -> complex:
    """Least-squares (u, v) in log I[a, b] = -da (u db + i v sb).

    A vector ``logI`` is the same-time form log I0[a] = -da (u da + i v sa).
    """
    if logI.ndim == 1:
        ca, cb = -delta * delta, -delta * sigma
    else:
        ca = -delta[:, None] * delta[None, :]
        cb = -delta[:, None] * sigma[None, :]
    den_u = np.sum(ca**2)
    den_v = np.sum(cb**2)
    if den_u == 0:
        raise ValidationError("coupling operator needs at least two distinct eigenvalues")
    u = np.sum(ca * logI.real) / den_u
    # symmetric spectra (s^2 equal for all levels) leave Im eta_0 unobservable
    v = np.sum(cb * logI.imag) / den_v if den_v > 0 else 0.0
    return complex(u, v)


def _safe_log(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=complex)
    if not np.all(np.isfinite(x)) or np.any(np.abs(x) < 1e-300):
        raise DataError("influence entries must be finite and non-zero to take logarithms")
    return np.log(x)


def eta_from_influence(I: InfluenceTable, s_eigs=None) -> EtaTable:
    """eta_k, k = 0..k_max, by inverting the pairwise exponential form."""
    s = I.s_eigs if s_eigs is None else np.asarray(s_eigs, float)
    if len(np.unique(s)) < 2:
        raise ValidationError("coupling operator needs at least two distinct eigenvalues")
    delta, sigma = _pair_coords(s)
    eta = np.zeros(I.k_max + 1, dtype=complex)
    l0 = _safe_log(I.I0)
    eta[0] = _fit_eta(l0, delta, sigma)
    for k in range(1, I.k_max + 1):
        eta[k] = _fit_eta(_safe_log(I.I[k]), delta, sigma)
    return EtaTable(I.dt, eta)


def refit_residual(I: InfluenceTable, eta: EtaTable) -> np.ndarray:
    """max |I_k - I_k(eta)| per order; zero for exactly pairwise-separable input."""
    ref = influence_table(eta, I.s_eigs)
    out = np.zeros(I.k_max + 1)
    out[0] = np.max(np.abs(I.I0 - ref.I0))
    for k in range(1, I.k_max + 1):
        out[k] = np.max(np.abs(I.I[k] - ref.I[k]))
    return out


# -- spectral density -----------------------------------------------------------
def default_omega_grid(dt: float, n: int = 512) -> np.ndarray:
    return np.arange(n) * (2.0 * np.pi / dt / n)


def nodal_mask(omega: np.ndarray, dt: float, radius: int = 3) -> np.ndarray:
    """True where omega lies within ``radius`` grid steps of omega dt / 2 = n pi."""
    omega = np.asarray(omega, dtype=float)
    period = 2.0 * np.pi / dt
    step = np.min(np.diff(omega)) if omega.size > 1 else period
    dist = np.abs(omega - period * np.round(omega / period))
    return dist <= radius * step + 1e-12 * period


def fourier_series(eta: EtaTable, omega: np.ndarray) -> np.ndarray:
    """F(omega) = dt/(2 pi) [2 Re eta_0 + 2 sum_k Re(eta_k e^{i omega k dt})]."""
    omega = np.asarray(omega, dtype=float)
    dt = eta.dt
    k = np.arange(1, eta.k_max + 1)
    phase = np.exp(1j * np.outer(omega, k) * dt)
    series = 2.0 * eta.eta[0].real + 2.0 * np.real(phase @ eta.eta[1:])
    return dt / (2.0 * np.pi) * series


def forward_spectrum(J, stats: BathStatistics, dt: float, omega) -> np.ndarray:
    """F(omega) = (2/pi) J(omega)/omega^2 w(omega) sin^2(omega dt/2) for omega > 0.

    Vanishes at the nodes omega dt/2 = n pi, n >= 1. The truncated Fourier
    series cannot reproduce this: it is periodic and returns the omega -> 0
    limit there.
    """
    w = np.asarray(omega, dtype=float)
    if np.any(w <= 0):
        raise ValidationError("forward spectrum is defined here for omega > 0")
    jw = stats.effective_density(J, w)
    return 2.0 / np.pi * jw / w**2 * stats.weight(w) * np.sin(0.5 * w * dt) ** 2


def _division_kernel(omega, dt, stats: BathStatistics, even_only: bool):
    w = np.asarray(omega, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        s2 = np.sin(0.5 * w * dt) ** 2
        weight = stats.weight_parts(w)[0] if even_only else stats.weight(w)
        if stats.kind == "spin":
            weight = weight * np.tanh(0.5 * stats.beta * w)
        return np.pi * w**2 / (2.0 * weight * s2)


@dataclass(frozen=True)
class SpectralEstimate:
    omega: np.ndarray
    J: np.ndarray
    mask: np.ndarray
    F: np.ndarray

    def relative_error(self, J_ref, lo: float = 0.5, hi: float = 15.0) -> float:
        """Relative L2 error over unmasked grid points in [lo, hi]."""
        sel = (~self.mask) & (self.omega >= lo) & (self.omega <= hi)
        ref = np.asarray(J_ref(self.omega[sel]), dtype=float)
        return float(np.linalg.norm(self.J[sel] - ref) / np.linalg.norm(ref))

    def max_relative_error(self, J_ref, lo: float = 0.5, hi: float = 15.0) -> float:
        sel = (~self.mask) & (self.omega >= lo) & (self.omega <= hi)
        ref = np.asarray(J_ref(self.omega[sel]), dtype=float)
        return float(np.max(np.abs(self.J[sel] - ref) / np.abs(ref)))


def _finish(F, omega, dt, stats, even_only, mask_radius):
    mask = nodal_mask(omega, dt, mask_radius)
    if np.all(mask):
        raise ValidationError("omega grid contains only masked nodal points")
    kern = _division_kernel(omega, dt, stats, even_only)
    J = np.where(mask, np.nan, F * np.where(mask, 0.0, kern))
    return SpectralEstimate(np.asarray(omega, float), J, mask, F)


def spectral_density_from_eta(
    eta: EtaTable, stats: BathStatistics, omega=None, mask_radius: int = 3
) -> SpectralEstimate:
    """J(omega) from the Fourier series of eta; masked points hold NaN."""
    omega = default_omega_grid(eta.dt) if omega is None else np.asarray(omega, float)
    return _finish(fourier_series(eta, omega), omega, eta.dt, stats, False, mask_radius)


def dephasing_extract(eta_real, dt: float, omega=None) -> np.ndarray:
    """Cosine series F_e(omega) of Re eta (index 0 holds Re eta_0)."""
    r = np.asarray(eta_real, dtype=float)
    omega = default_omega_grid(dt) if omega is None else np.asarray(omega, float)
    k = np.arange(1, r.shape[0])
    series = 2.0 * r[0] + 2.0 * np.cos(np.outer(omega, k) * dt) @ r[1:]
    return dt / (2.0 * np.pi) * series


def cosine_coefficients(F_e, dt: float, k_max: int) -> np.ndarray:
    """Inverse of ``dephasing_extract`` on the uniform grid [0, 2 pi/dt)."""
    F_e = np.asarray(F_e, dtype=float)
    M = F_e.shape[0]
    omega = default_omega_grid(dt, M)
    k = np.arange(k_max + 1)
    c = (2.0 * np.pi / (dt * M)) * (np.cos(np.outer(k, omega) * dt) @ F_e)
    c[0] *= 0.5
    return c


def dephasing_spectral_density(
    eta_real, dt: float, stats: BathStatistics, omega=None, mask_radius: int = 3
) -> SpectralEstimate:
    omega = default_omega_grid(dt) if omega is None else np.asarray(omega, float)
    return _finish(dephasing_extract(eta_real, dt, omega), omega, dt, stats, True, mask_radius)


def dephasing_eta_real(U: PropagatorSeries, s_eigs) -> np.ndarray:
    """Re eta_0..Re eta_{Nmax-1} from coherence decay under a diagonal Hamiltonian."""
    s = np.asarray(s_eigs, dtype=float)
    d = s.shape[0]
    i, j = int(np.argmax(s)), int(np.argmin(s))
    delta = s[i] - s[j]
    if delta == 0:
        raise ValidationError("coupling operator needs at least two distinct eigenvalues")
    a = i * d + j
    mag = np.abs(U.U[:, a, a])
    if np.any(mag <= 0):
        raise DataError("coherence vanished; logarithm undefined")
    ell = np.log(mag)
    second = ell[2:] - 2.0 * ell[1:-1] + ell[:-2]
    r = np.empty(U.n_max)
    r[0] = -ell[1] / delta**2
    r[1:] = -second / delta**2
    return r


# -- multi-bath ---------------------------------------------------------------------
def divide_known_bath(I_total: InfluenceTable, I_known: InfluenceTable) -> InfluenceTable:
    """Remove a known bath from a product of independent influence tables."""
    if I_total.I.shape != I_known.I.shape or not np.isclose(I_total.dt, I_known.dt):
        raise ValidationError("influence tables must share dt and shape")
    if np.min(np.abs(I_known.I)) < 1e-300 or np.min(np.abs(I_known.I0)) < 1e-300:
        raise DataError("known influence table has vanishing entries")
    return InfluenceTable(I_total.dt, I_total.s_eigs, I_total.I0 / I_known.I0, I_total.I / I_known.I)


# -- pipelines ------------------------------------------------------------------------
@dataclass
class ExtractionReport:
    influence: InfluenceTable | None
    eta: EtaTable
    spectrum: SpectralEstimate
    residuals: np.ndarray
    order: int
    branch: str = "general"
    notes: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "order": self.order,
            "branch": self.branch,
            "residuals": [float(r) for r in self.residuals],
            "eta_real": [float(e.real) for e in self.eta.eta],
            "eta_imag": [float(e.imag) for e in self.eta.eta],
            **self.notes,
        }


def invert_influence_series(
    K: KernelSeries,
    G,
    F,
    L,
    s_eigs,
    order: int,
    *,
    method: str = "auto",
    threshold: float = DENOMINATOR_THRESHOLD,
):
    """Recover I_0..I_order order by order; returns (table, per-order residuals)."""
    if order > K.r_max:
        raise ValidationError(f"requested order {order} exceeds kernel series {K.r_max}")
    I0, res0 = invert_I0(K.K[0], G, L, K.dt)
    D = I0.shape[0]
    Itab = np.ones((order + 1, D, D), dtype=complex)
    table = InfluenceTable(K.dt, s_eigs, I0, Itab)
    residuals = np.zeros(order + 1)
    residuals[0] = res0
    for N in range(1, order + 1):
        m = method if method != "auto" else ("dyck" if N <= CUMULANT_ABOVE else "cumulant")
        tilde, _ = invert_I_general(K, G, F, table, N, L=L, method=m, threshold=threshold)
        Itab[N] = 1.0 + tilde
        table = InfluenceTable(K.dt, s_eigs, I0, Itab)
    eta = eta_from_influence(table)
    fit = refit_residual(table, eta)
    residuals = np.maximum(residuals, fit)
    return table, residuals


def extract_from_trajectories(
    T: TrajectoryEnsemble,
    system: SystemHamiltonian,
    stats: BathStatistics,
    order: int,
    *,
    omega=None,
    method: str = "auto",
) -> ExtractionReport:
    """Trajectories -> propagators -> kernels -> influence -> eta -> J."""
    U = propagators_from_trajectories(T)
    dt = T.dt
    G = bare_half_step(system, dt)
    if np.allclose(system.H, np.diag(np.diag(system.H))):
        if U.n_max < order + 1:
            raise ValidationError(f"need {order + 1} steps of trajectory data")
        r = dephasing_eta_real(PropagatorSeries(dt, U.U[: order + 2]), system.s_eigs)
        eta = EtaTable(dt, r.astype(complex))
        spec = dephasing_spectral_density(r, dt, stats, omega)
        return ExtractionReport(None, eta, spec, np.zeros(order + 1), order, "dephasing")
    if U.n_max < order + 1:
        raise ValidationError(f"need {order + 1} steps of trajectory data for order {order}")
    F = bare_full_step(G)
    L = liouvillian_step(system, dt)
    K = ttm_extract(PropagatorSeries(dt, U.U[: order + 2]), L)
    table, residuals = invert_influence_series(K, G, F, L, system.s_eigs, order, method=method)
    eta = eta_from_influence(table)
    spec = spectral_density_from_eta(eta, stats, omega)
    return ExtractionReport(table, eta, spec, residuals, order, "general")

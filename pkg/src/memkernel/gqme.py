"""Discrete memory kernels: Dyck construction, transfer-tensor extraction and
propagation of the discrete generalized master equation

    rho_N = L rho_{N-1} + dt^2 sum_{m=1}^{N} K_{N-m} rho_{m-1}.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bath import InfluenceTable
from .dyck import bath_sum
from .errors import ConditioningError, ValidationError
from .pathsum import PropagatorSeries


@dataclass(frozen=True)
class KernelSeries:
    dt: float
    K: np.ndarray
    origin: str = "dyck-built"

    def __post_init__(self):
        object.__setattr__(self, "K", np.asarray(self.K, dtype=complex))

    @property
    def r_max(self) -> int:
        return self.K.shape[0] - 1

    def __getitem__(self, n):
        return self.K[n]

    def __len__(self):
        return self.K.shape[0]

    def norms(self) -> np.ndarray:
        return np.array([np.linalg.norm(k, 2) for k in self.K])


def kernel_zero(G, I: InfluenceTable, L) -> np.ndarray:
    return (G @ np.diag(I.I0) @ G - L) / I.dt**2


def kernel_dyck(G, F, I: InfluenceTable, N: int, hmax: int | None = None) -> np.ndarray:
    """Order-N kernel from the Dyck sum (N >= 1)."""
    return G @ bath_sum(F, I, N, hmax) @ G / I.dt**2


def crest_kernel(G, F, I: InfluenceTable, N: int) -> np.ndarray:
    """The single maximal-height term of the order-N kernel."""
    _, den = bath_sum(F, I, N, hmax=N - 1, denominator=True)
    return G @ ((I.I[N] - 1.0) * den) @ G / I.dt**2


def build_kernels_dyck(G, F, L, I: InfluenceTable, r_max: int, crest_pad: int = 0) -> KernelSeries:
    """K_0..K_{r_max} from Dyck sums, plus ``crest_pad`` crest-only orders."""
    if r_max + crest_pad > I.k_max:
        raise ValidationError(f"order {r_max + crest_pad} exceeds influence table depth {I.k_max}")
    D = I.D
    K = np.zeros((r_max + crest_pad + 1, D, D), dtype=complex)
    K[0] = kernel_zero(G, I, L)
    for N in range(1, r_max + 1):
        K[N] = kernel_dyck(G, F, I, N)
    for N in range(r_max + 1, r_max + crest_pad + 1):
        K[N] = crest_kernel(G, F, I, N)
    return KernelSeries(I.dt, K, "dyck-built")


def ttm_extract(U: PropagatorSeries, L) -> KernelSeries:
    """K_0..K_{Nmax-1} from U_0..U_Nmax by the transfer-tensor recursion."""
    dt = U.dt
    n = U.n_max
    K = np.zeros((n,) + U.U.shape[1:], dtype=complex)
    for N in range(1, n + 1):
        acc = (U[N] - L @ U[N - 1]) / dt**2
        for m in range(2, N + 1):
            acc = acc - K[N - m] @ U[m - 1]
        K[N - 1] = acc
    return KernelSeries(dt, K, "ttm-extracted")


@dataclass(frozen=True)
class TrajectoryEnsemble:
    """Density-vector trajectories: ``series[j, n]`` is trajectory j at step n."""

    dt: float
    series: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.series, dtype=complex)
        if s.ndim != 3:
            raise ValidationError("series must have shape (trajectories, steps, D)")
        object.__setattr__(self, "series", s)

    @property
    def initial(self) -> np.ndarray:
        return self.series[:, 0, :]

    @classmethod
    def from_propagators(cls, U: PropagatorSeries, states) -> "TrajectoryEnsemble":
        rho0 = np.array([np.asarray(r, dtype=complex).reshape(-1) for r in states])
        return cls(U.dt, np.einsum("nij,sj->sni", U.U, rho0))


def propagators_from_trajectories(T: TrajectoryEnsemble, rcond: float = 1e-10) -> PropagatorSeries:
    """U_n = P_n P_0^+ with P_n stacking trajectory columns."""
    P0 = T.initial.T  # (D, n_traj)
    D = P0.shape[0]
    sv = np.linalg.svd(P0, compute_uv=False)
    if sv.size < D or sv[-1] <= rcond * sv[0] or (sv.size >= D and sv[D - 1] <= rcond * sv[0]):
        raise ConditioningError(
            "initial states are not linearly independent", {"singular_values": sv.tolist()}
        )
    pinv = np.linalg.pinv(P0) if P0.shape[1] != D else np.linalg.inv(P0)
    U = np.einsum("sni,sj->nij", T.series, pinv)
    return PropagatorSeries(T.dt, U)


def propagate_gqme(
    K: KernelSeries, L, rho0, N_steps: int, r_trunc: int | None = None
) -> np.ndarray:
    """Density vectors rho_0..rho_{N_steps}; kernels beyond r_trunc are zero."""
    r = K.r_max if r_trunc is None else r_trunc
    if r > K.r_max:
        raise ValidationError(f"truncation order {r} exceeds available kernels {K.r_max}")
    dt2 = K.dt**2
    rho = np.zeros((N_steps + 1, K.K.shape[1]), dtype=complex)
    rho[0] = np.asarray(rho0, dtype=complex).reshape(-1)
    for N in range(1, N_steps + 1):
        acc = L @ rho[N - 1]
        for m in range(max(1, N - r), N + 1):
            acc = acc + dt2 * (K.K[N - m] @ rho[m - 1])
        rho[N] = acc
    return rho

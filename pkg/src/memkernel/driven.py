"""Time-dependent Hamiltonians: two-time kernels from bath-only T tensors.

Half step m uses H_S(m dt / 2). For the kernel K_{s+N, s} the input half step
is G_{2s}, the links are F_k = G_{2k+2} G_{2k+1} for k = s..s+N-1 and the
output half step is G_{2(s+N)+1}. The bath part T_N (Dyck weight times I0
factors over N + 1 time points) does not depend on s.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np

from . import _kernels
from .bath import InfluenceTable
from .dyck import contract_chain
from .errors import ValidationError
from .gqme import KernelSeries
from .pathsum import PropagatorSeries, exact_propagators, iterative_quapi
from .system import (
    SIGMA_X,
    SIGMA_Y,
    SIGMA_Z,
    SystemHamiltonian,
    half_step_from_matrix,
    liouvillian_step,
)

PAULI = {"x": SIGMA_X, "y": SIGMA_Y, "z": SIGMA_Z}


@dataclass(frozen=True)
class SineChannel:
    """amplitude * sin(frequency * t + phase) multiplying a Pauli matrix."""

    axis: str
    amplitude: float
    frequency: float = 1.0
    phase: float = 0.0

    def __call__(self, t: float) -> np.ndarray:
        return self.amplitude * np.sin(self.frequency * t + self.phase) * PAULI[self.axis]


def sine_drive(channels: Sequence[SineChannel]) -> Callable[[float], np.ndarray]:
    chans = tuple(channels)
    for c in chans:
        if c.axis not in PAULI:
            raise ValidationError(f"unknown drive axis {c.axis!r}")

    def drive(t):
        out = np.zeros((2, 2), dtype=complex)
        for c in chans:
            out = out + c(t)
        return out

    return drive


def tabulated_drive(times: Sequence[float], matrices: Sequence[np.ndarray]) -> Callable:
    """Piecewise-linear interpolation of sampled drive matrices."""
    ts = np.asarray(times, dtype=float)
    ms = np.asarray(matrices, dtype=complex)

    def drive(t):
        if t < ts[0] - 1e-12 or t > ts[-1] + 1e-12:
            raise ValidationError(f"drive queried at t={t} outside the tabulated range")
        i = int(np.clip(np.searchsorted(ts, t) - 1, 0, len(ts) - 2))
        w = (t - ts[i]) / (ts[i + 1] - ts[i])
        return (1 - w) * ms[i] + w * ms[i + 1]

    return drive


def half_steps(system: SystemHamiltonian, dt: float, count: int) -> list:
    """G_m for m = 0..count-1 with H_S sampled at m dt / 2."""
    return [half_step_from_matrix(system.at(0.5 * m * dt), dt) for m in range(count)]


def step_liouvillians(system: SystemHamiltonian, dt: float, count: int) -> list:
    """L_n for the step n -> n + 1, with H_S taken at the step midpoint."""
    return [liouvillian_step(system.at((n + 0.5) * dt), dt) for n in range(count)]


@dataclass(frozen=True)
class TTensor:
    """Bath weight over N + 1 time points (position 0 latest), no propagators."""

    order: int
    weights: np.ndarray
    crest_only: bool = False


def build_T(I: InfluenceTable, N: int, crest_only: bool = False) -> TTensor:
    if N < 0:
        raise ValidationError("order must be non-negative")
    if I.k_max < N:
        raise ValidationError(f"influence table depth {I.k_max} below order {N}")
    D = I.D
    if N == 0:
        return TTensor(0, I.I0.copy(), crest_only)
    out = np.zeros(D ** (N + 1), dtype=complex)
    Itab = np.ascontiguousarray(I.I[: N + 1])
    if crest_only:
        _kernels.all_pair_weights(np.ascontiguousarray(I.I0), Itab, N, 1, out)
    else:
        _kernels.dyck_weights(np.ascontiguousarray(I.I0), Itab, N, N, out)
    return TTensor(N, out.reshape((D,) * (N + 1)), crest_only)


def _link(gs: Sequence[np.ndarray], k: int) -> np.ndarray:
    return gs[2 * k + 2] @ gs[2 * k + 1]


def kernel_from_T(T: TTensor, gs: Sequence[np.ndarray], s: int, dt: float, L_s=None) -> np.ndarray:
    """K_{s+N, s} by contracting T_N with the propagators of its window."""
    N = T.order
    G_in, G_out = gs[2 * s], gs[2 * (s + N) + 1]
    if N == 0:
        if L_s is None:
            raise ValidationError("order-zero kernel needs the step Liouvillian")
        return (G_out @ np.diag(T.weights) @ G_in - L_s) / dt**2
    links = np.array([_link(gs, s + N - 1 - a) for a in range(N)])
    inner = contract_chain(T.weights, links)
    return G_out @ inner @ G_in / dt**2


@dataclass
class DrivenKernels:
    """K[s, N] = K_{s+N, s}; orders above ``r_full`` are crest-only terms."""

    dt: float
    K: np.ndarray
    r_full: int

    @property
    def r_max(self) -> int:
        return self.K.shape[1] - 1

    def at(self, n: int, m: int) -> np.ndarray:
        return self.K[m, n - m]


def driven_kernels(
    system: SystemHamiltonian,
    I: InfluenceTable,
    dt: float,
    n_windows: int,
    r_max: int,
    crest_pad: int = 0,
    T: Mapping[int, TTensor] | None = None,
) -> DrivenKernels:
    """K_{s+N, s} for s = 0..n_windows-1 and N = 0..r_max + crest_pad."""
    top = r_max + crest_pad
    if I.k_max < top:
        raise ValidationError(f"influence table depth {I.k_max} below order {top}")
    tens = dict(T or {})
    for N in range(top + 1):
        if N not in tens:
            tens[N] = build_T(I, N, crest_only=N > r_max)
    gs = half_steps(system, dt, 2 * (n_windows + top) + 2)
    Ls = step_liouvillians(system, dt, n_windows)
    D = I.D
    K = np.zeros((n_windows, top + 1, D, D), dtype=complex)
    for s in range(n_windows):
        for N in range(top + 1):
            K[s, N] = kernel_from_T(tens[N], gs, s, dt, Ls[s])
    return DrivenKernels(dt, K, r_max)


def driven_propagate(
    kernels: DrivenKernels,
    Ls: Sequence[np.ndarray],
    rho0,
    N_steps: int,
    r_trunc: int | None = None,
    crest_pad: int = 0,
) -> np.ndarray:
    """rho_N = L_{N-1} rho_{N-1} + dt^2 sum_m K_{N-1, m-1} rho_{m-1}, truncated in span."""
    r = kernels.r_full if r_trunc is None else r_trunc
    span = r + crest_pad
    if span > kernels.r_max:
        raise ValidationError(f"kernels available to span {kernels.r_max}, need {span}")
    if kernels.K.shape[0] < N_steps:
        raise ValidationError("not enough kernel windows for the requested horizon")
    dt2 = kernels.dt**2
    rho = np.zeros((N_steps + 1, kernels.K.shape[-1]), dtype=complex)
    rho[0] = np.asarray(rho0, dtype=complex).reshape(-1)
    for N in range(1, N_steps + 1):
        acc = Ls[N - 1] @ rho[N - 1]
        for m in range(max(1, N - span), N + 1):
            acc = acc + dt2 * (kernels.K[m - 1, N - m] @ rho[m - 1])
        rho[N] = acc
    return rho


def two_time_propagators(
    system: SystemHamiltonian,
    I: InfluenceTable,
    dt: float,
    n_windows: int,
    span: int,
    *,
    k_max: int | None = None,
) -> np.ndarray:
    """U_{m+j, m} for m < n_windows, j = 0..span (fresh bath at time m).

    Exact when ``k_max`` is None, otherwise QUAPI-truncated.
    """
    gs = half_steps(system, dt, 2 * (n_windows + span) + 2)
    D = I.D
    U = np.zeros((n_windows, span + 1, D, D), dtype=complex)
    for m in range(n_windows):
        shifted = gs[2 * m :]
        if k_max is None:
            ser = exact_propagators(None, None, I, span, half_steps=shifted)
        else:
            ser = iterative_quapi(None, None, I, k_max, span, half_steps=shifted)
        U[m] = ser.U
    return U


def driven_ttm_extract(U: np.ndarray, Ls: Sequence[np.ndarray], dt: float) -> DrivenKernels:
    """Two-time kernels from fresh-start propagators U[m, j] = U_{m+j, m}.

    K_{n-1, m} = [U_{n,m} - L_{n-1} U_{n-1,m}]/dt^2 - sum_{j=m+2}^{n} K_{n-1, j-1} U_{j-1, m}.
    """
    n_win, span1 = U.shape[:2]
    span = span1 - 1
    D = U.shape[-1]
    K = np.zeros((n_win, span, D, D), dtype=complex)
    for length in range(span):  # length = (n - 1) - m
        for m in range(n_win):
            n = m + length + 1
            if n - 1 - m >= span or (n - 1) >= n_win + span:
                continue
            acc = (U[m, n - m] - Ls[n - 1] @ U[m, n - 1 - m]) / dt**2
            for j in range(m + 2, n + 1):
                s = j - 1
                if s >= n_win:
                    acc = None
                    break
                acc = acc - K[s, n - 1 - s] @ U[m, j - 1 - m]
            if acc is not None:
                K[m, length] = acc
    return DrivenKernels(dt, K, span - 1)


def static_series(kernels: DrivenKernels, s: int = 0) -> KernelSeries:
    return KernelSeries(kernels.dt, kernels.K[s].copy(), "dyck-built")


def driven_oracle(
    system: SystemHamiltonian, I: InfluenceTable, dt: float, N_steps: int, k_max: int
) -> PropagatorSeries:
    """QUAPI path sum with time-indexed half steps (exact if k_max >= N_steps - 1)."""
    gs = half_steps(system, dt, 2 * N_steps + 2)
    if k_max >= N_steps - 1:
        return exact_propagators(None, None, I, N_steps, half_steps=gs)
    return iterative_quapi(None, None, I, k_max, N_steps, half_steps=gs)

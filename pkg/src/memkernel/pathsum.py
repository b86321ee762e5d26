"""Influence-functional path sums: exact full-memory and QUAPI-truncated.

Half step m propagates the system over [m dt/2, (m+1) dt/2]. Bath point k
(k = 0, 1, ...) sits between half steps 2k and 2k+1, so the link from point k
to point k+1 is G_{2k+2} G_{2k+1}, and U_n = G_{2n-1} ... G_0 with influence
factors attached to the n bath points in between.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import _kernels
from .bath import InfluenceTable
from .errors import ResourceError, ValidationError

DEFAULT_AMPLITUDE_BUDGET = 4**12
# enumeration is memory-free but costs ~D**N; 4**17 is a few minutes
DEFAULT_ENUMERATION_BUDGET = 4**17


@dataclass(frozen=True)
class PropagatorSeries:
    """U_0..U_Nmax on the pair space; U_0 is the identity."""

    dt: float
    U: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "U", np.asarray(self.U, dtype=complex))

    @property
    def n_max(self) -> int:
        return self.U.shape[0] - 1

    def __getitem__(self, n):
        return self.U[n]

    def __len__(self):
        return self.U.shape[0]

    def apply(self, rho0: np.ndarray) -> np.ndarray:
        """Density vectors rho_n = U_n rho_0 for n = 0..Nmax."""
        return np.einsum("nij,j->ni", self.U, np.asarray(rho0, dtype=complex).reshape(-1))


def half_step_source(G=None, half_steps=None) -> Callable[[int], np.ndarray]:
    """Uniform accessor m -> G_m for static or time-indexed half steps."""
    if half_steps is None:
        if G is None:
            raise ValidationError("need either G or a half-step sequence")
        G = np.asarray(G, dtype=complex)
        return lambda m: G
    if callable(half_steps):
        return half_steps
    seq = list(half_steps)
    return lambda m: seq[m]


def _extend(link: np.ndarray, tensor: np.ndarray) -> np.ndarray:
    """new[y, x, ...] = link[y, x] * tensor[x, ...] (history is kept)."""
    D = link.shape[0]
    flat = tensor.reshape(1, D, -1)
    return (link[:, :, None] * flat).reshape((D,) + tensor.shape)


def _pair_weight(I: InfluenceTable, t: int, ndim_after: int, k_max: int):
    """Product over k = 1..min(t, k_max) of I_k between the new axis 0 and axis k."""
    D = I.D
    w = I.I0.reshape((D,) + (1,) * (ndim_after - 1))
    for k in range(1, min(t, k_max) + 1):
        if k >= ndim_after:
            break
        shape = [1] * ndim_after
        shape[0] = D
        shape[k] = D
        w = w * I.I[k].reshape(shape)
    return w


def _links(gs, n_points: int) -> np.ndarray:
    if n_points <= 1:
        return np.zeros((1, 1, 1), dtype=complex)
    return np.ascontiguousarray(
        np.array([gs(2 * k + 2) @ gs(2 * k + 1) for k in range(n_points - 1)], dtype=complex)
    )


def auxiliary_sums(gs, I: InfluenceTable, n_points: int, skip_outer: bool = False) -> np.ndarray:
    """Tilde-U for 1..n_points bath points, (n_points, D, D), by enumeration."""
    D = I.D
    out = np.zeros((n_points, D, D), dtype=complex)
    Itab = np.ascontiguousarray(I.extended(max(n_points - 1, 1)).I)
    _kernels.history_sums(_links(gs, n_points), np.ascontiguousarray(I.I0), Itab, n_points, skip_outer, out)
    return out


def _is_diagonal(m: np.ndarray) -> bool:
    return not np.any(m - np.diag(np.diag(m)))


def exact_propagators(
    G,
    F,
    I: InfluenceTable,
    N_max: int,
    *,
    half_steps: Sequence[np.ndarray] | Callable | None = None,
    method: str = "auto",
    budget: int = DEFAULT_AMPLITUDE_BUDGET,
    enumeration_budget: int = DEFAULT_ENUMERATION_BUDGET,
) -> PropagatorSeries:
    """Exact U_0..U_Nmax with no memory truncation.

    ``tensor`` keeps the full path-history tensor (D**Nmax amplitudes, bounded
    by ``budget``). ``enumerate`` walks paths depth first with constant
    memory; its cost D**Nmax is bounded by ``enumeration_budget`` unless every
    propagator link is diagonal, in which case only constant paths survive.
    """
    gs = half_step_source(G, half_steps)
    D = I.D
    if N_max < 0:
        raise ValidationError("N_max must be non-negative")
    if N_max > 1 and I.k_max < N_max - 1:
        raise ValidationError(f"influence table depth {I.k_max} below N_max - 1 = {N_max - 1}")
    U = np.zeros((N_max + 1, D, D), dtype=complex)
    U[0] = np.eye(D)
    if N_max == 0:
        return PropagatorSeries(I.dt, U)
    cost = D ** max(N_max, 1)
    if method == "auto":
        diag = all(_is_diagonal(gs(m)) for m in range(2 * N_max))
        method = "enumerate" if diag or cost > budget else "tensor"
        if not diag and cost > enumeration_budget:
            raise ResourceError(
                f"exact path sum over {D}**{N_max} paths exceeds the budget; "
                "use iterative_quapi with a finite memory length"
            )
    if method == "enumerate":
        tilde = auxiliary_sums(gs, I, N_max)
        for n in range(1, N_max + 1):
            U[n] = gs(2 * n - 1) @ tilde[n - 1] @ gs(0)
        return PropagatorSeries(I.dt, U)
    if method != "tensor":
        raise ValidationError(f"unknown path-sum method {method!r}")
    if cost > budget:
        raise ResourceError(
            f"exact path sum needs {D}**{N_max} amplitudes (budget {budget}); "
            "use iterative_quapi with a finite memory length"
        )
    phi = I.I0.copy()  # axes: newest point first
    U[1] = gs(1) @ np.diag(phi) @ gs(0)
    for n in range(2, N_max + 1):
        link = gs(2 * n - 2) @ gs(2 * n - 3)
        t = phi.ndim
        phi = _extend(link, phi)
        phi = phi * _pair_weight(I, n - 1, t + 1, n - 1)
        inner = phi.reshape(D, -1, D).sum(axis=1)
        U[n] = gs(2 * n - 1) @ inner @ gs(0)
    return PropagatorSeries(I.dt, U)


def iterative_quapi(
    G,
    F,
    I: InfluenceTable,
    k_max: int,
    N_max: int,
    *,
    half_steps: Sequence[np.ndarray] | Callable | None = None,
    budget: int = 4**13,
) -> PropagatorSeries:
    """Propagators with influence factors beyond lag ``k_max`` set to one.

    The augmented tensor keeps the ``max(k_max, 1)`` most recent bath points
    and the input pair index.
    """
    if k_max < 0:
        raise ValidationError("k_max must be non-negative")
    gs = half_step_source(G, half_steps)
    D = I.D
    window = max(k_max, 1)
    if D ** (window + 2) > budget:
        raise ResourceError(f"memory window {k_max} needs {D}**{window + 2} amplitudes (budget {budget})")
    if k_max > I.k_max and N_max > I.k_max + 1:
        raise ValidationError(f"influence table depth {I.k_max} below k_max {k_max}")
    U = np.zeros((N_max + 1, D, D), dtype=complex)
    U[0] = np.eye(D)
    if N_max == 0:
        return PropagatorSeries(I.dt, U)
    A = I.I0[:, None] * gs(0)  # axes: (newest, ..., oldest kept, input)
    U[1] = gs(1) @ A
    for n in range(2, N_max + 1):
        link = gs(2 * n - 2) @ gs(2 * n - 3)
        t = A.ndim
        A = _extend(link, A)
        A = A * _pair_weight(I, n - 1, t, k_max)[..., None]
        if A.ndim - 1 > window:
            A = A.sum(axis=A.ndim - 2)
        inner = A.reshape(D, -1, D).sum(axis=1)
        U[n] = gs(2 * n - 1) @ inner
    return PropagatorSeries(I.dt, U)

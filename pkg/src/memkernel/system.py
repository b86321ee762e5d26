"""System Hamiltonians and bare Liouville-space propagators.

Pair index convention: the density entry rho[x+, x-] lives at x+ * d + x-
(row-major ``rho.reshape(-1)``). Superoperators act as (out, in) matrices.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import ValidationError

SIGMA_X = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)
SIGMA_Y = np.array([[0.0, -1.0j], [1.0j, 0.0]], dtype=complex)
SIGMA_Z = np.array([[1.0, 0.0], [0.0, -1.0]], dtype=complex)
IDENTITY2 = np.eye(2, dtype=complex)

HERMITIAN_TOL = 1e-12


def _check_hermitian(h: np.ndarray, what: str = "H_S") -> np.ndarray:
    h = np.asarray(h, dtype=complex)
    if h.ndim != 2 or h.shape[0] != h.shape[1]:
        raise ValidationError(f"{what} must be a square matrix, got shape {h.shape}")
    if not np.all(np.isfinite(h)):
        raise ValidationError(f"{what} has non-finite entries")
    dev = np.max(np.abs(h - h.conj().T)) if h.size else 0.0
    if dev >= HERMITIAN_TOL:
        raise ValidationError(f"{what} is not Hermitian (max |H - H^dag| = {dev:.3e})")
    return h


@dataclass(frozen=True)
class SystemHamiltonian:
    """d-level system Hamiltonian with a diagonal coupling operator.

    ``drive`` optionally maps t to a Hermitian matrix that is *added* to ``H``.
    ``s_eigs`` are the eigenvalues of the coupling operator, in the
    computational basis.
    """

    H: np.ndarray
    s_eigs: Sequence[float] = (1.0, -1.0)
    drive: Optional[Callable[[float], np.ndarray]] = field(default=None, compare=False)

    def __post_init__(self):
        h = _check_hermitian(self.H)
        s = np.asarray(self.s_eigs, dtype=float).reshape(-1)
        if s.shape[0] != h.shape[0]:
            raise ValidationError(
                f"coupling eigenvalues ({s.shape[0]}) do not match dimension {h.shape[0]}"
            )
        object.__setattr__(self, "H", h)
        object.__setattr__(self, "s_eigs", s)

    @property
    def d(self) -> int:
        return self.H.shape[0]

    @property
    def is_driven(self) -> bool:
        return self.drive is not None

    def at(self, t: float) -> np.ndarray:
        """H_S(t); validated Hermitian for every sampled t."""
        if self.drive is None:
            return self.H
        return _check_hermitian(self.H + np.asarray(self.drive(t), dtype=complex), "H_S(t)")

    def coupling_matrix(self) -> np.ndarray:
        return np.diag(self.s_eigs).astype(complex)


def spin_boson(epsilon: float = 0.0, delta: float = 1.0) -> SystemHamiltonian:
    """H_S = epsilon sigma_z + delta sigma_x coupled through sigma_z."""
    return SystemHamiltonian(epsilon * SIGMA_Z + delta * SIGMA_X, (1.0, -1.0))


def _unitary(h: np.ndarray, tau: float) -> np.ndarray:
    """exp(-i h tau) through the Hermitian eigendecomposition."""
    w, v = np.linalg.eigh(h)
    return (v * np.exp(-1j * w * tau)) @ v.conj().T


def half_step_from_matrix(h: np.ndarray, dt: float) -> np.ndarray:
    if not dt > 0:
        raise ValidationError(f"time step must be positive, got {dt}")
    v = _unitary(_check_hermitian(h), dt / 2.0)
    # G[(x+,x-),(y+,y-)] = V[x+,y+] * conj(V[x-,y-])
    return np.kron(v, v.conj())


def bare_half_step(system: SystemHamiltonian | np.ndarray, dt: float) -> np.ndarray:
    """Half-step propagator G, so that G @ vec(rho) = vec(V rho V^dag)."""
    h = system.H if isinstance(system, SystemHamiltonian) else system
    return half_step_from_matrix(h, dt)


def bare_full_step(G: np.ndarray) -> np.ndarray:
    return G @ G


def commutator_superop(h: np.ndarray) -> np.ndarray:
    """Matrix of rho -> [h, rho] in the row-major pair basis."""
    h = np.asarray(h, dtype=complex)
    eye = np.eye(h.shape[0])
    return np.kron(h, eye) - np.kron(eye, h.T)


def liouvillian_step(system: SystemHamiltonian | np.ndarray, dt: float) -> np.ndarray:
    """First-order step L = 1 - i dt [H, .]."""
    if not dt > 0:
        raise ValidationError(f"time step must be positive, got {dt}")
    h = system.H if isinstance(system, SystemHamiltonian) else _check_hermitian(system)
    D = h.shape[0] ** 2
    return np.eye(D, dtype=complex) - 1j * dt * commutator_superop(h)


def vec(rho: np.ndarray) -> np.ndarray:
    return np.asarray(rho, dtype=complex).reshape(-1)


def unvec(v: np.ndarray, d: int | None = None) -> np.ndarray:
    v = np.asarray(v)
    d = d or int(round(np.sqrt(v.shape[-1])))
    return v.reshape(v.shape[:-1] + (d, d))


def trace_of_vec(v: np.ndarray, d: int | None = None) -> complex:
    return np.trace(unvec(v, d), axis1=-2, axis2=-1)


def pair_swap(d: int) -> np.ndarray:
    """Permutation (x+, x-) -> (x-, x+); vec(rho^dag) = P conj(vec(rho))."""
    idx = np.arange(d * d).reshape(d, d).T.reshape(-1)
    return idx


def trace_distance(rho_a: np.ndarray, rho_b: np.ndarray) -> float:
    """Half the trace norm of the difference of two density matrices."""
    diff = np.asarray(rho_a) - np.asarray(rho_b)
    diff = 0.5 * (diff + diff.conj().T)
    return 0.5 * float(np.sum(np.abs(np.linalg.eigvalsh(diff))))


def expectation(rho: np.ndarray, op: np.ndarray) -> float:
    return float(np.real(np.trace(np.asarray(op) @ np.asarray(rho))))


# Initial states of the four reference trajectories (linearly independent).
REFERENCE_STATES = (
    0.5 * (IDENTITY2 + SIGMA_Z),
    0.5 * (IDENTITY2 - SIGMA_Z),
    0.5 * (IDENTITY2 + SIGMA_X),
    0.5 * (IDENTITY2 + SIGMA_X + SIGMA_Y + SIGMA_Z),
)

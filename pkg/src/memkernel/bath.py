"""Spectral densities, discretized eta coefficients and influence tables.

Frequencies are folded onto [0, W]. A statistics weight w(omega) is split
into even and odd parts; the odd (boson, spin) or even (fermion) extension of
J decides which part multiplies the cosine and which the sine transform.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy import integrate, special

from .errors import NumericalError, RangeError, ValidationError

EPSABS = 1e-11
EPSREL = 1e-9

_KINDS = (
    "ohmic",
    "brownian",
    "lorentzian",
    "fermionic-flat-band",
    "tabulated",
    "sum",
)

_REQUIRED = {
    "ohmic": ("xi", "s", "omega_c"),
    "brownian": ("gamma", "omega0"),
    "lorentzian": ("gamma", "omega0"),
    "fermionic-flat-band": ("gamma", "nu", "omega_c"),
}


@dataclass(frozen=True)
class SpectralDensity:
    """A bath spectral density J(omega) on omega >= 0.

    Kinds: ``ohmic`` (xi, s, omega_c), ``brownian`` (gamma, omega0),
    ``lorentzian`` (gamma, omega0, optional ``antisymmetric``),
    ``fermionic-flat-band`` (gamma, nu, omega_c), ``tabulated`` (grid, values)
    and ``sum`` (components).
    """

    kind: str
    params: Mapping[str, float] = field(default_factory=dict)
    components: tuple = ()
    grid: np.ndarray | None = None
    values: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValidationError(f"unknown spectral density kind {self.kind!r}")
        for name in _REQUIRED.get(self.kind, ()):
            if name not in self.params:
                raise ValidationError(f"spectral density {self.kind!r} needs parameter {name!r}")
        p = self.params
        if self.kind == "ohmic":
            if p["xi"] < 0 or p["s"] <= 0 or p["omega_c"] <= 0:
                raise ValidationError("ohmic needs xi >= 0, s > 0, omega_c > 0")
        if self.kind in ("brownian", "lorentzian", "fermionic-flat-band"):
            if p["gamma"] < 0:
                raise ValidationError("gamma must be non-negative")
        if self.kind == "tabulated":
            g = np.asarray(self.grid, dtype=float)
            v = np.asarray(self.values, dtype=float)
            if g.ndim != 1 or g.shape != v.shape or g.size < 2 or np.any(np.diff(g) <= 0):
                raise ValidationError("tabulated density needs an increasing grid matching values")
            object.__setattr__(self, "grid", g)
            object.__setattr__(self, "values", v)
        if self.kind == "sum":
            if not self.components:
                raise ValidationError("sum density needs at least one component")
            object.__setattr__(self, "components", tuple(self.components))

    # -- evaluation ---------------------------------------------------------
    def __call__(self, omega):
        return eval_spectral_density(self, omega)

    def window(self) -> float:
        """Upper quadrature limit W."""
        p = self.params
        if self.kind == "ohmic":
            return 40.0 * p["omega_c"]
        if self.kind in ("brownian", "lorentzian"):
            return 400.0 * (p["omega0"] + p["gamma"] + 1.0)
        if self.kind == "fermionic-flat-band":
            return p["omega_c"] + 40.0 / p["nu"]
        if self.kind == "tabulated":
            return float(self.grid[-1])
        return max(c.window() for c in self.components)

    def breakpoints(self) -> list[float]:
        """Frequencies where the integrand has structure worth splitting at."""
        p = self.params
        if self.kind in ("brownian", "lorentzian"):
            return [p["omega0"]]
        if self.kind == "fermionic-flat-band":
            return [p["omega_c"]]
        if self.kind == "sum":
            return sorted({b for c in self.components for b in c.breakpoints()})
        return []

    def value_at_zero(self) -> float:
        """lim J(omega) as omega -> 0+."""
        if self.kind == "tabulated":
            return float(self.values[0])
        if self.kind == "sum":
            return sum(c.value_at_zero() for c in self.components)
        return float(eval_spectral_density(self, np.array([1e-300]))[0])


def ohmic(xi: float, s: float = 1.0, omega_c: float = 7.5) -> SpectralDensity:
    return SpectralDensity("ohmic", {"xi": xi, "s": s, "omega_c": omega_c})


def brownian_peak(gamma: float, omega0: float) -> SpectralDensity:
    return SpectralDensity("brownian", {"gamma": gamma, "omega0": omega0})


def lorentzian_peak(gamma: float, omega0: float, antisymmetric: bool = False) -> SpectralDensity:
    return SpectralDensity(
        "lorentzian", {"gamma": gamma, "omega0": omega0, "antisymmetric": float(antisymmetric)}
    )


def fermionic_flat_band(gamma: float = 1.0, nu: float = 0.1, omega_c: float = 10.0) -> SpectralDensity:
    return SpectralDensity("fermionic-flat-band", {"gamma": gamma, "nu": nu, "omega_c": omega_c})


def tabulated(grid: Sequence[float], values: Sequence[float]) -> SpectralDensity:
    return SpectralDensity("tabulated", grid=np.asarray(grid), values=np.asarray(values))


def sum_of(*components: SpectralDensity) -> SpectralDensity:
    return SpectralDensity("sum", components=tuple(components))


def eval_spectral_density(J: SpectralDensity, omega) -> np.ndarray:
    """Pointwise J(omega) for omega >= 0 (vectorized)."""
    w = np.asarray(omega, dtype=float)
    p = J.params
    if J.kind == "ohmic":
        xi, s, wc = p["xi"], p["s"], p["omega_c"]
        with np.errstate(divide="ignore", invalid="ignore"):
            out = 0.5 * np.pi * xi * wc ** (1.0 - s) * np.power(np.abs(w), s) * np.exp(-np.abs(w) / wc)
        return out
    if J.kind == "brownian":
        g, w0 = p["gamma"], p["omega0"]
        return g * w * w0**2 / ((w**2 - w0**2) ** 2 + g**2 * w**2)
    if J.kind == "lorentzian":
        g, w0 = p["gamma"], p["omega0"]
        out = g / ((w - w0) ** 2 + g**2)
        if p.get("antisymmetric", 0.0):
            out = out - g / ((w + w0) ** 2 + g**2)
        return out
    if J.kind == "fermionic-flat-band":
        g, nu, wc = p["gamma"], p["nu"], p["omega_c"]
        return g / ((1.0 + np.exp(nu * (w - wc))) * (1.0 + np.exp(-nu * (w + wc))))
    if J.kind == "tabulated":
        lo, hi = J.grid[0], J.grid[-1]
        if np.any(w < lo - 1e-12) or np.any(w > hi + 1e-12):
            raise RangeError(f"tabulated density queried outside [{lo}, {hi}]")
        return np.interp(w, J.grid, J.values)
    return sum(eval_spectral_density(c, w) for c in J.components)


# -- statistics -------------------------------------------------------------
@dataclass(frozen=True)
class BathStatistics:
    """Bath statistics: ``boson`` (beta), ``fermion`` (beta, mu) or ``spin`` (beta)."""

    kind: str = "boson"
    beta: float = 5.0
    mu: float = 0.0

    def __post_init__(self):
        if self.kind not in ("boson", "fermion", "spin"):
            raise ValidationError(f"unknown bath statistics {self.kind!r}")
        if not self.beta > 0:
            raise ValidationError("beta must be positive")

    @property
    def extension(self) -> str:
        return "even" if self.kind == "fermion" else "odd"

    def effective_density(self, J: SpectralDensity, omega) -> np.ndarray:
        """J, renormalized by tanh(beta omega / 2) for spin baths."""
        val = eval_spectral_density(J, omega)
        if self.kind == "spin":
            val = val * np.tanh(0.5 * self.beta * np.asarray(omega))
        return val

    def weight(self, omega) -> np.ndarray:
        """Full weight w(omega) multiplying J in the bath correlation spectrum."""
        w = np.asarray(omega, dtype=float)
        if self.kind == "fermion":
            return 2.0 * special.expit(self.beta * (w - self.mu))
        with np.errstate(divide="ignore"):
            return 1.0 + 1.0 / np.tanh(0.5 * self.beta * w)

    def weight_parts(self, omega):
        """(cosine weight, sine weight) for omega > 0 after folding."""
        w = np.asarray(omega, dtype=float)
        b = self.beta
        if self.kind == "fermion":
            tm = np.tanh(0.5 * b * (w - self.mu))
            tp = np.tanh(0.5 * b * (w + self.mu))
            even = 1.0 + 0.5 * (tm - tp)
            odd = 0.5 * (tm + tp)
            return even, odd
        with np.errstate(divide="ignore"):
            odd = 1.0 / np.tanh(0.5 * b * w)
        return odd, np.ones_like(w)


# -- eta coefficients -----------------------------------------------------
@dataclass(frozen=True)
class EtaTable:
    """eta[k] for lag k = 0..k_max at step dt; negative lags by conjugation."""

    dt: float
    eta: np.ndarray
    errors: np.ndarray | None = None

    def __post_init__(self):
        e = np.asarray(self.eta, dtype=complex).reshape(-1)
        if not np.all(np.isfinite(e)):
            raise NumericalError("eta table has non-finite entries")
        object.__setattr__(self, "eta", e)

    @property
    def k_max(self) -> int:
        return self.eta.shape[0] - 1

    def lag(self, k: int) -> complex:
        return self.eta[k] if k >= 0 else np.conj(self.eta[-k])

    def truncated(self, k_max: int) -> "EtaTable":
        return EtaTable(self.dt, self.eta[: k_max + 1].copy())


def _prefactor(dt: float):
    # sin^2(w dt/2)/w^2 written through sinc so that w = 0 is regular
    half = 0.5 * dt
    return lambda w: (half * np.sinc(w * dt / (2.0 * np.pi))) ** 2


class _Integrands:
    def __init__(self, J: SpectralDensity, stats: BathStatistics, dt: float):
        self.J, self.stats, self.dt = J, stats, dt
        self.pref = _prefactor(dt)
        j0 = J.value_at_zero()
        if stats.kind == "boson" and abs(j0) > 1e-14:
            raise NumericalError(
                "bosonic eta integrals diverge: J(0+) != 0 makes the odd extension "
                "discontinuous (use an antisymmetric form of the density)",
                {"J(0+)": j0},
            )

    def _cos_weight(self, w):
        a, _ = self.stats.weight_parts(w)
        jw = self.stats.effective_density(self.J, w)
        if self.stats.kind != "fermion":
            # J * coth(beta w / 2) -> 2 J / (beta w) at small w
            with np.errstate(invalid="ignore", divide="ignore"):
                out = jw * a
            return np.where(w == 0, 0.0, out)
        return jw * a

    def _sin_weight(self, w):
        _, b = self.stats.weight_parts(w)
        return self.stats.effective_density(self.J, w) * b

    def re_dense(self, w):  # multiplies cos(w tau)
        return self._cos_weight(w) * self.pref(w)

    def im_dense(self, w):  # multiplies sin(w tau)
        return self._sin_weight(w) * self.pref(w)


def _quad(f, a, b, weight=None, wvar=None, points=None):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        if weight is None:
            pts = [p for p in (points or []) if a < p < b] or None
            val, err = integrate.quad(f, a, b, epsabs=EPSABS, epsrel=EPSREL, limit=500, points=pts)[:2]
        else:
            val, err = integrate.quad(
                f, a, b, weight=weight, wvar=wvar, epsabs=EPSABS, epsrel=EPSREL, limit=500
            )[:2]
    return val, err


def _oscillatory(f, tau, kind, W, points):
    """int_0^W f(w) trig(w tau) dw, plain near zero, QAWO further out."""
    trig = np.cos if kind == "cos" else np.sin
    if tau == 0.0:
        if kind == "sin":
            return 0.0, 0.0
        return _quad(f, 0.0, W, points=points)
    a = min(1.0 / tau, W)
    v1, e1 = _quad(lambda w: f(w) * trig(w * tau), 0.0, a, points=points)
    if a >= W:
        return v1, e1
    edges = [a] + [p for p in points if a < p < W] + [W]
    val, err = v1, e1
    for lo, hi in zip(edges[:-1], edges[1:]):
        v, e = _quad(f, lo, hi, weight=kind, wvar=tau)
        val += v
        err += e
    return val, err


def eta_coefficients(
    J: SpectralDensity,
    stats: BathStatistics,
    dt: float,
    k_max: int,
    *,
    tolerance_factor: float = 100.0,
) -> EtaTable:
    """Discretized eta_k, k = 0..k_max, by adaptive quadrature on [0, W].

    Raises NumericalError when a quadrature error estimate exceeds
    ``tolerance_factor`` times the requested tolerance.
    """
    if not dt > 0:
        raise ValidationError("time step must be positive")
    if k_max < 0:
        raise ValidationError("k_max must be non-negative")
    fn = _Integrands(J, stats, dt)
    W = J.window()
    pts = J.breakpoints()
    eta = np.zeros(k_max + 1, dtype=complex)
    errs = np.zeros(k_max + 1)

    def check(k, val, err):
        if err > tolerance_factor * max(EPSABS, EPSREL * abs(val)):
            raise NumericalError(
                f"eta quadrature did not converge at lag {k}",
                {"lag": k, "value": val, "error_estimate": err},
            )

    # lag 0: (1/pi) int [2 A sin^2/w^2 J + i B J sin(w dt)/w^2]
    re0, er0 = _quad(lambda w: 2.0 * fn.re_dense(w), 0.0, W, points=pts)

    def sin_dt(w):  # J B sin(w dt) / w^2
        safe = np.where(w == 0, 1.0, w)
        return fn._sin_weight(w) * dt * np.sinc(w * dt / np.pi) / safe

    im0, ei0 = _quad(sin_dt, 0.0, W, points=pts)
    check(0, re0, er0)
    check(0, im0, ei0)
    eta[0] = (re0 + 1j * im0) / np.pi
    errs[0] = (er0 + ei0) / np.pi
    for k in range(1, k_max + 1):
        tau = k * dt
        rv, re_ = _oscillatory(fn.re_dense, tau, "cos", W, pts)
        iv, ie = _oscillatory(fn.im_dense, tau, "sin", W, pts)
        check(k, rv, re_)
        check(k, iv, ie)
        eta[k] = 4.0 / np.pi * (rv - 1j * iv)
        errs[k] = 4.0 / np.pi * (re_ + ie)
    return EtaTable(dt, eta, errs)


# -- influence tables -----------------------------------------------------
def _pair_coords(s_eigs):
    s = np.asarray(s_eigs, dtype=float)
    d = s.shape[0]
    return np.repeat(s, d), np.tile(s, d)


def influence_exponent(eta: complex, s_eigs) -> np.ndarray:
    """Exponent matrix E[a, b] with a the later and b the earlier pair index."""
    sp, sm = _pair_coords(s_eigs)
    return -(sp - sm)[:, None] * (eta * sp[None, :] - np.conj(eta) * sm[None, :])


def diagonal_exponent(eta0: complex, s_eigs) -> np.ndarray:
    sp, sm = _pair_coords(s_eigs)
    return -(sp - sm) * (eta0 * sp - np.conj(eta0) * sm)


@dataclass(frozen=True)
class InfluenceTable:
    """I0 (vector over pair index) and I[k] (pair x pair), k = 1..k_max.

    ``I[0]`` is an all-ones placeholder so that ``I[k]`` indexes by lag.
    """

    dt: float
    s_eigs: np.ndarray
    I0: np.ndarray
    I: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "s_eigs", np.asarray(self.s_eigs, dtype=float))
        object.__setattr__(self, "I0", np.asarray(self.I0, dtype=complex))
        object.__setattr__(self, "I", np.asarray(self.I, dtype=complex))

    @property
    def k_max(self) -> int:
        return self.I.shape[0] - 1

    @property
    def D(self) -> int:
        return self.I0.shape[0]

    @property
    def I_tilde(self) -> np.ndarray:
        return self.I - 1.0

    def truncated(self, k_max: int) -> "InfluenceTable":
        """Table with I_k set to 1 beyond ``k_max`` (storage depth unchanged)."""
        I = self.I.copy()
        I[k_max + 1 :] = 1.0
        return InfluenceTable(self.dt, self.s_eigs, self.I0.copy(), I)

    def extended(self, depth: int) -> "InfluenceTable":
        """Same table padded with unit factors up to lag ``depth``."""
        if depth <= self.k_max:
            return self
        pad = np.ones((depth - self.k_max,) + self.I.shape[1:], dtype=complex)
        return InfluenceTable(self.dt, self.s_eigs, self.I0, np.concatenate([self.I, pad]))

    def __mul__(self, other: "InfluenceTable") -> "InfluenceTable":
        """Influence table of two independent baths acting together."""
        if self.I.shape != other.I.shape or not np.isclose(self.dt, other.dt):
            raise ValidationError("influence tables must share dt and shape to combine")
        return InfluenceTable(self.dt, self.s_eigs, self.I0 * other.I0, self.I * other.I)

    def norms(self) -> np.ndarray:
        """Operator 2-norms of I_tilde_k, k = 1..k_max (index 0 is 0)."""
        out = np.zeros(self.k_max + 1)
        for k in range(1, self.k_max + 1):
            out[k] = np.linalg.norm(self.I[k] - 1.0, 2)
        return out


def influence_table(eta: EtaTable, s_eigs, k_max: int | None = None) -> InfluenceTable:
    """Exponentiated influence functions for a diagonal coupling with eigenvalues s."""
    k_max = eta.k_max if k_max is None else k_max
    if k_max > eta.k_max:
        raise ValidationError(f"k_max={k_max} exceeds eta depth {eta.k_max}")
    D = len(s_eigs) ** 2
    I = np.ones((k_max + 1, D, D), dtype=complex)
    for k in range(1, k_max + 1):
        I[k] = np.exp(influence_exponent(eta.eta[k], s_eigs))
    I0 = np.exp(diagonal_exponent(eta.eta[0], s_eigs))
    return InfluenceTable(eta.dt, np.asarray(s_eigs, float), I0, I)


def bath_influence(
    J: SpectralDensity, stats: BathStatistics, dt: float, k_max: int, s_eigs=(1.0, -1.0)
) -> InfluenceTable:
    return influence_table(eta_coefficients(J, stats, dt, k_max), s_eigs)


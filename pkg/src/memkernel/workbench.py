"""Configuration, experiment orchestration, data export and the command line.

A config is a YAML mapping. Every output file starts with a header that
carries the library version and a SHA-256 of the validated config, so a
figure can always be traced back to the parameters that produced it.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Callable, Sequence

import numpy as np
import yaml

from . import __version__
from .bath import (
    BathStatistics,
    InfluenceTable,
    SpectralDensity,
    bath_influence,
    brownian_peak,
    eval_spectral_density,
    fermionic_flat_band,
    lorentzian_peak,
    ohmic,
    sum_of,
    tabulated,
)
from .driven import (
    SineChannel,
    driven_kernels,
    driven_oracle,
    driven_propagate,
    sine_drive,
    step_liouvillians,
)
from .dyck import ORDER_CAP, catalan, recipes
from .errors import MemkernelError, NumericalError, ResourceError, ValidationError
from .gqme import (
    TrajectoryEnsemble,
    build_kernels_dyck,
    crest_kernel,
    propagate_gqme,
    ttm_extract,
)
from .inversion import (
    default_omega_grid,
    eta_from_influence,
    extract_from_trajectories,
    invert_influence_series,
    spectral_density_from_eta,
)
from .pathsum import exact_propagators, iterative_quapi
from .system import (
    REFERENCE_STATES,
    SIGMA_X,
    SIGMA_Z,
    SystemHamiltonian,
    bare_full_step,
    bare_half_step,
    expectation,
    liouvillian_step,
    unvec,
    vec,
)

log = logging.getLogger("memkernel")

TASKS = ("propagate", "kernels", "invert", "extract-jw", "dyck")
PROPAGATION_METHODS = ("gqme", "quapi", "exact")
EXTRACTION_ROUTES = ("pipeline", "direct")
BATH_KINDS = ("ohmic", "brownian", "lorentzian", "fermionic-flat-band", "tabulated", "sum")


# -- configuration ---------------------------------------------------------------------
@dataclass
class DriveChannel:
    axis: str
    amplitude: float
    frequency: float = 1.0
    phase: float = 0.0


@dataclass
class SystemConfig:
    """Two-level defaults: H = epsilon sigma_z + delta sigma_x unless ``hamiltonian`` is set.

    ``hamiltonian`` is a nested list of real numbers or ``[re, im]`` pairs.
    ``initial`` is an index into the four reference states or a density matrix.
    """

    epsilon: float = 0.0
    delta: float = 1.0
    hamiltonian: list | None = None
    s_eigs: list = field(default_factory=lambda: [1.0, -1.0])
    drive: list = field(default_factory=list)
    initial: Any = 0


@dataclass
class BathConfig:
    kind: str = "ohmic"
    params: dict = field(default_factory=dict)
    statistics: str = "boson"
    beta: float = 5.0
    mu: float = 0.0
    components: list = field(default_factory=list)
    grid: list | None = None
    values: list | None = None


@dataclass
class DiscretizationConfig:
    dt: float = 0.1
    n_steps: int = 100
    order: int = 4
    crest_pad: int = 0
    orders: list | None = None
    method: str = "gqme"
    k_max: int | None = None
    route: str = "pipeline"
    verify: bool = False
    omega_points: int = 512


@dataclass
class OutputConfig:
    dir: str = "out"
    prefix: str = ""


@dataclass
class ExperimentConfig:
    task: str = "propagate"
    system: SystemConfig = field(default_factory=SystemConfig)
    baths: list = field(default_factory=lambda: [BathConfig()])
    discretization: DiscretizationConfig = field(default_factory=DiscretizationConfig)
    output: OutputConfig = field(default_factory=OutputConfig)
    seed: int = 0
    noise: float = 0.0
    order_cap: int = ORDER_CAP
    allow_large_order: bool = False

    def sweep(self) -> list:
        d = self.discretization
        return sorted({int(o) for o in d.orders}) if d.orders else [int(d.order)]

    def hash(self) -> str:
        """SHA-256 of the canonical parameter set (output location excluded)."""
        payload = asdict(self)
        payload.pop("output")
        text = json.dumps(payload, sort_keys=True, separators=(",", ":"), default=str)
        return hashlib.sha256(text.encode()).hexdigest()


def _fail(path: str, msg: str):
    raise ValidationError(f"{path}: {msg}")


def _section(raw, path, cls, allowed_extra=()):
    if raw is None:
        return cls()
    if not isinstance(raw, dict):
        _fail(path, "expected a mapping")
    known = set(cls.__dataclass_fields__) | set(allowed_extra)
    for key in raw:
        if key not in known:
            _fail(f"{path}.{key}", "unknown field")
    return cls(**{k: v for k, v in raw.items() if k in cls.__dataclass_fields__})


def _number(value, path, *, positive=False, nonneg=False, integer=False):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        _fail(path, f"expected a number, got {value!r}")
    if integer and int(value) != value:
        _fail(path, f"expected an integer, got {value!r}")
    if positive and not value > 0:
        _fail(path, "must be positive")
    if nonneg and value < 0:
        _fail(path, "must be non-negative")
    if not np.isfinite(value):
        _fail(path, "must be finite")
    return int(value) if integer else float(value)


def _bath(raw, path) -> BathConfig:
    b = _section(raw, path, BathConfig)
    if b.kind not in BATH_KINDS:
        _fail(f"{path}.kind", f"must be one of {', '.join(BATH_KINDS)}")
    if b.statistics not in ("boson", "fermion", "spin"):
        _fail(f"{path}.statistics", "must be boson, fermion or spin")
    b.beta = _number(b.beta, f"{path}.beta", positive=True)
    b.mu = _number(b.mu, f"{path}.mu")
    if not isinstance(b.params, dict):
        _fail(f"{path}.params", "expected a mapping")
    for k, v in b.params.items():
        b.params[k] = _number(v, f"{path}.params.{k}")
    if b.kind == "sum":
        if not b.components:
            _fail(f"{path}.components", "a sum needs at least one component")
        b.components = [
            _bath({**c, "statistics": b.statistics, "beta": b.beta, "mu": b.mu}, f"{path}.components[{i}]")
            for i, c in enumerate(b.components)
        ]
    return b


def parse_config(raw: dict) -> ExperimentConfig:
    """Validate a raw mapping; errors name the offending field path."""
    if not isinstance(raw, dict):
        raise ValidationError("config: top level must be a mapping")
    top = set(ExperimentConfig.__dataclass_fields__)
    for key in raw:
        if key not in top:
            _fail(key, "unknown field")
    cfg = ExperimentConfig(
        task=raw.get("task", "propagate"),
        system=_section(raw.get("system"), "system", SystemConfig),
        baths=[_bath(b, f"baths[{i}]") for i, b in enumerate(raw.get("baths", [{}]))],
        discretization=_section(raw.get("discretization"), "discretization", DiscretizationConfig),
        output=_section(raw.get("output"), "output", OutputConfig),
        seed=raw.get("seed", 0),
        noise=raw.get("noise", 0.0),
        order_cap=raw.get("order_cap", ORDER_CAP),
        allow_large_order=bool(raw.get("allow_large_order", False)),
    )
    validate(cfg)
    return cfg


def validate(cfg: ExperimentConfig) -> ExperimentConfig:
    if cfg.task not in TASKS:
        _fail("task", f"must be one of {', '.join(TASKS)}")
    cfg.seed = _number(cfg.seed, "seed", integer=True, nonneg=True)
    cfg.noise = _number(cfg.noise, "noise", nonneg=True)
    cfg.order_cap = _number(cfg.order_cap, "order_cap", integer=True, positive=True)
    s = cfg.system
    s.epsilon = _number(s.epsilon, "system.epsilon")
    s.delta = _number(s.delta, "system.delta")
    s.s_eigs = [_number(x, f"system.s_eigs[{i}]") for i, x in enumerate(s.s_eigs)]
    for i, ch in enumerate(s.drive):
        if not isinstance(ch, dict) or "axis" not in ch or "amplitude" not in ch:
            _fail(f"system.drive[{i}]", "needs axis and amplitude")
        if ch["axis"] not in ("x", "y", "z"):
            _fail(f"system.drive[{i}].axis", "must be x, y or z")
    if isinstance(s.initial, bool) or not isinstance(s.initial, (int, list)):
        _fail("system.initial", "expected a reference-state index or a matrix")
    if isinstance(s.initial, int) and not 0 <= s.initial < len(REFERENCE_STATES):
        _fail("system.initial", f"index must be in 0..{len(REFERENCE_STATES) - 1}")
    d = cfg.discretization
    d.dt = _number(d.dt, "discretization.dt", positive=True)
    d.n_steps = _number(d.n_steps, "discretization.n_steps", integer=True, nonneg=True)
    d.order = _number(d.order, "discretization.order", integer=True, nonneg=True)
    d.crest_pad = _number(d.crest_pad, "discretization.crest_pad", integer=True, nonneg=True)
    d.omega_points = _number(d.omega_points, "discretization.omega_points", integer=True, positive=True)
    if d.k_max is not None:
        d.k_max = _number(d.k_max, "discretization.k_max", integer=True, nonneg=True)
    if d.orders is not None:
        if not isinstance(d.orders, list) or not d.orders:
            _fail("discretization.orders", "expected a non-empty list")
        d.orders = [
            _number(o, f"discretization.orders[{i}]", integer=True, nonneg=True)
            for i, o in enumerate(d.orders)
        ]
    if d.method not in PROPAGATION_METHODS:
        _fail("discretization.method", f"must be one of {', '.join(PROPAGATION_METHODS)}")
    if d.route not in EXTRACTION_ROUTES:
        _fail("discretization.route", f"must be one of {', '.join(EXTRACTION_ROUTES)}")
    if not cfg.baths:
        _fail("baths", "at least one bath is required")
    if not cfg.allow_large_order:
        # The direct I -> eta -> J route is polynomial in the order, so it is exempt.
        exempt = cfg.task == "extract-jw" and d.route == "direct"
        if not exempt:
            for o in cfg.sweep() + [d.order + d.crest_pad]:
                if o > cfg.order_cap:
                    _fail(
                        "discretization.order",
                        f"order {o} exceeds the hard cap {cfg.order_cap} (use --allow-large-order)",
                    )
    return cfg


def _read_yaml(path: str | Path):
    try:
        return yaml.safe_load(Path(path).read_text())
    except yaml.YAMLError as exc:
        raise ValidationError(f"config: not valid YAML ({exc})") from exc
    except OSError as exc:
        raise ValidationError(f"config: cannot read {path} ({exc})") from exc


def load_config(path: str | Path) -> ExperimentConfig:
    return parse_config(_read_yaml(path) or {})


# -- model construction ------------------------------------------------------------------
def _matrix(raw, path) -> np.ndarray:
    try:
        rows = [[complex(*x) if isinstance(x, list) else complex(x) for x in row] for row in raw]
        return np.array(rows, dtype=complex)
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"{path}: malformed matrix ({exc})") from exc


def build_system(s: SystemConfig) -> SystemHamiltonian:
    if s.hamiltonian is not None:
        H = _matrix(s.hamiltonian, "system.hamiltonian")
    else:
        H = s.epsilon * SIGMA_Z + s.delta * SIGMA_X
    drive = None
    if s.drive:
        drive = sine_drive([SineChannel(**ch) for ch in s.drive])
    return SystemHamiltonian(H, s_eigs=tuple(s.s_eigs), drive=drive)


def build_density(b: BathConfig) -> SpectralDensity:
    p = b.params
    try:
        if b.kind == "ohmic":
            return ohmic(p.get("xi", 0.1), p.get("s", 1.0), p.get("omega_c", 7.5))
        if b.kind == "brownian":
            return brownian_peak(p["gamma"], p["omega0"])
        if b.kind == "lorentzian":
            return lorentzian_peak(p["gamma"], p["omega0"], bool(p.get("antisymmetric", 0.0)))
        if b.kind == "fermionic-flat-band":
            return fermionic_flat_band(p.get("gamma", 1.0), p.get("nu", 0.1), p.get("omega_c", 10.0))
        if b.kind == "tabulated":
            return tabulated(b.grid, b.values)
    except KeyError as exc:
        raise ValidationError(f"bath {b.kind}: missing parameter {exc.args[0]!r}") from exc
    return sum_of(*(build_density(c) for c in b.components))


def build_statistics(b: BathConfig) -> BathStatistics:
    return BathStatistics(b.statistics, b.beta, b.mu)


def build_influence(cfg: ExperimentConfig, depth: int) -> InfluenceTable:
    """Product of the influence tables of all configured baths."""
    dt = cfg.discretization.dt
    table = None
    for b in cfg.baths:
        t = bath_influence(build_density(b), build_statistics(b), dt, depth, cfg.system.s_eigs)
        table = t if table is None else table * t
    return table


def initial_state(s: SystemConfig) -> np.ndarray:
    if isinstance(s.initial, int):
        return vec(REFERENCE_STATES[s.initial])
    rho = _matrix(s.initial, "system.initial")
    if not np.isclose(np.trace(rho), 1.0):
        raise ValidationError("system.initial: density matrix must have unit trace")
    return vec(rho)


# -- output ------------------------------------------------------------------------------
def _fmt(x: float) -> str:
    return repr(float(x))


class Writer:
    """Writes CSV and JSON artifacts with a provenance header."""

    def __init__(self, out_dir: str | Path, config_hash: str, label: str, prefix: str = ""):
        self.dir = Path(out_dir)
        self.hash = config_hash
        self.label = label
        self.prefix = prefix
        self.paths: list[str] = []

    def _path(self, name: str) -> Path:
        self.dir.mkdir(parents=True, exist_ok=True)
        p = self.dir / f"{self.prefix}{name}"
        self.paths.append(str(p))
        return p

    def meta(self) -> dict:
        return {"library": "memkernel", "version": __version__, "config_sha256": self.hash, "label": self.label}

    def csv(self, name: str, columns: Sequence[str], rows) -> Path:
        p = self._path(name)
        lines = [f"# memkernel {__version__} config_sha256={self.hash} {self.label}", ",".join(columns)]
        for row in rows:
            lines.append(",".join(_fmt(v) for v in row))
        p.write_text("\n".join(lines) + "\n")
        return p

    def json(self, name: str, payload: dict) -> Path:
        p = self._path(name)
        p.write_text(dumps({"meta": self.meta(), **payload}) + "\n")
        return p


def dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2, default=_jsonable)


def _jsonable(x):
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.floating):
        return float(x)
    if isinstance(x, np.ndarray):
        return x.tolist()
    raise TypeError(f"not serializable: {type(x)}")


def trajectory_rows(rho: np.ndarray, dt: float):
    for n, r in enumerate(rho):
        row = [n * dt]
        for z in r:
            row.extend((z.real, z.imag))
        yield row


def trajectory_columns(d: int) -> list[str]:
    cols = ["t"]
    for a in range(d):
        for b in range(d):
            cols.extend((f"re_rho{a}{b}", f"im_rho{a}{b}"))
    return cols


def sigma_z_series(rho: np.ndarray) -> np.ndarray:
    return np.array([expectation(unvec(r), SIGMA_Z) for r in rho])


def _matrix_json(m: np.ndarray) -> dict:
    return {"re": np.real(m).tolist(), "im": np.imag(m).tolist()}


# -- tasks -------------------------------------------------------------------------------
def _static_ops(system: SystemHamiltonian, dt: float):
    G = bare_half_step(system, dt)
    return G, bare_full_step(G), liouvillian_step(system, dt)


def task_propagate(cfg: ExperimentConfig, w: Writer) -> dict:
    d = cfg.discretization
    system = build_system(cfg.system)
    rho0 = initial_state(cfg.system)
    depth = max(d.order + d.crest_pad, d.k_max or 0, 1)
    I = build_influence(cfg, depth)
    if d.method == "gqme":
        if system.is_driven:
            Kd = driven_kernels(system, I, d.dt, d.n_steps, d.order, d.crest_pad)
            Ls = step_liouvillians(system, d.dt, d.n_steps)
            rho = driven_propagate(Kd, Ls, rho0, d.n_steps, d.order, d.crest_pad)
        else:
            G, F, L = _static_ops(system, d.dt)
            K = build_kernels_dyck(G, F, L, I, d.order, d.crest_pad)
            rho = propagate_gqme(K, L, rho0, d.n_steps, d.order + d.crest_pad)
    elif d.method == "quapi":
        k = d.k_max if d.k_max is not None else d.order
        if system.is_driven:
            rho = driven_oracle(system, I, d.dt, d.n_steps, k).apply(rho0)
        else:
            G, F, _ = _static_ops(system, d.dt)
            rho = iterative_quapi(G, F, I, k, d.n_steps).apply(rho0)
    else:
        I = build_influence(cfg, max(d.n_steps - 1, 1))
        if system.is_driven:
            rho = driven_oracle(system, I, d.dt, d.n_steps, d.n_steps).apply(rho0)
        else:
            G, F, _ = _static_ops(system, d.dt)
            rho = exact_propagators(G, F, I, d.n_steps).apply(rho0)
    w.csv("trajectory.csv", trajectory_columns(system.d), trajectory_rows(rho, d.dt))
    trace_err = float(np.max(np.abs([np.trace(unvec(r)) - 1.0 for r in rho])))
    return {"steps": d.n_steps, "method": d.method, "max_trace_error": trace_err,
            "final_sigma_z": float(sigma_z_series(rho[-1:])[0]) if system.d == 2 else None}


def task_kernels(cfg: ExperimentConfig, w: Writer) -> dict:
    d = cfg.discretization
    system = build_system(cfg.system)
    G, F, L = _static_ops(system, d.dt)
    I = build_influence(cfg, max(d.order, 1))
    K = build_kernels_dyck(G, F, L, I, d.order)
    knorm = K.norms()
    inorm = I.norms()
    crest = [0.0] + [np.linalg.norm(crest_kernel(G, F, I, N), 2) for N in range(1, d.order + 1)]
    rows = [(N, N * d.dt, knorm[N], inorm[N], crest[N]) for N in range(d.order + 1)]
    w.csv("kernels.csv", ["N", "t", "norm_K", "norm_I_tilde", "norm_crest"], rows)
    summary = {"order": d.order}
    if d.verify:
        U = exact_propagators(G, F, I.extended(d.order + 1), d.order + 1)
        ref = ttm_extract(U, L)
        summary["max_abs_diff_vs_ttm"] = float(np.max(np.abs(ref.K[: d.order + 1] - K.K)))
    w.json("kernels.json", {"dt": d.dt, "kernels": [_matrix_json(k) for k in K.K], **summary})
    return summary


def task_invert(cfg: ExperimentConfig, w: Writer) -> dict:
    d = cfg.discretization
    system = build_system(cfg.system)
    G, F, L = _static_ops(system, d.dt)
    I = build_influence(cfg, max(d.order, 1))
    K = build_kernels_dyck(G, F, L, I, d.order)
    rec, residuals = invert_influence_series(K, G, F, L, system.s_eigs, d.order)
    errs = [float(np.max(np.abs(rec.I0 - I.I0)))] + [
        float(np.max(np.abs(rec.I[N] - I.I[N]))) for N in range(1, d.order + 1)
    ]
    rn, an = rec.norms(), I.norms()
    rows = [(N, N * d.dt, rn[N], an[N], errs[N]) for N in range(d.order + 1)]
    w.csv("inversion.csv", ["N", "t", "norm_I_tilde_recovered", "norm_I_tilde_exact", "max_abs_error"], rows)
    eta = eta_from_influence(rec)
    w.json("inversion.json", {
        "eta_re": eta.eta.real.tolist(), "eta_im": eta.eta.imag.tolist(),
        "residuals": residuals.tolist(), "max_abs_error": errs,
    })
    return {"order": d.order, "max_abs_error": max(errs)}


def synthetic_trajectories(cfg: ExperimentConfig, n_steps: int) -> TrajectoryEnsemble:
    """Exact path-sum trajectories from the reference states, plus optional seeded noise."""
    d = cfg.discretization
    system = build_system(cfg.system)
    G, F, _ = _static_ops(system, d.dt)
    I = build_influence(cfg, max(n_steps - 1, 1))
    U = exact_propagators(G, F, I, n_steps)
    T = TrajectoryEnsemble.from_propagators(U, REFERENCE_STATES)
    if cfg.noise > 0:
        rng = np.random.default_rng(cfg.seed)
        series = T.series.copy()
        shape = series[:, 1:].shape
        series[:, 1:] += cfg.noise * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))
        T = TrajectoryEnsemble(T.dt, series)
    return T


def _reference_density(cfg: ExperimentConfig, omega: np.ndarray) -> np.ndarray:
    return sum(eval_spectral_density(build_density(b), omega) for b in cfg.baths)


def _reference(cfg: ExperimentConfig):
    return lambda om: _reference_density(cfg, om)


def task_extract(cfg: ExperimentConfig, w: Writer) -> dict:
    d = cfg.discretization
    if len(cfg.baths) != 1:
        raise ValidationError("baths: extraction expects exactly one bath")
    orders = cfg.sweep()
    stats = build_statistics(cfg.baths[0])
    omega = default_omega_grid(d.dt, d.omega_points)
    J_ref = _reference_density(cfg, omega)
    system = build_system(cfg.system)
    estimates, reports = {}, {}
    if d.route == "pipeline":
        T = synthetic_trajectories(cfg, max(orders) + 1)
        for o in orders:
            rep = extract_from_trajectories(T, system, stats, o, omega=omega)
            estimates[o] = rep.spectrum
            reports[o] = rep.to_dict()
    else:
        I = build_influence(cfg, max(orders))
        for o in orders:
            eta = eta_from_influence(I.truncated(o)).truncated(o)
            estimates[o] = spectral_density_from_eta(eta, stats, omega)
            reports[o] = {"order": o, "branch": "direct"}
    errors = {}
    for o in orders:
        est = estimates[o]
        rows = ((wv, 0.0 if m else j, int(m)) for wv, j, m in zip(omega, est.J, est.mask))
        w.csv(f"jw_order{o:02d}.csv", ["omega", "J", "masked"], rows)
        errors[o] = {
            "relative_l2": est.relative_error(_reference(cfg)),
            "max_relative": est.max_relative_error(_reference(cfg)),
        }
        reports[o].update(errors[o])
    w.csv("jw_reference.csv", ["omega", "J"], zip(omega, J_ref))
    w.json("extraction.json", {"route": d.route, "orders": orders, "reports": {str(o): reports[o] for o in orders}})
    return {"orders": orders, "relative_l2": {str(o): errors[o]["relative_l2"] for o in orders}}


def dyck_payload(order: int, cap: int = ORDER_CAP) -> dict:
    if order > cap:
        raise ResourceError(f"order {order} exceeds the hard cap {cap}")
    terms = [r.to_dict() for r in recipes(order)]
    return {"order": order, "count": len(terms), "catalan": catalan(order), "recipes": terms}


def task_dyck(cfg: ExperimentConfig, w: Writer) -> dict:
    payload = dyck_payload(cfg.discretization.order, cfg.order_cap if not cfg.allow_large_order else 10**9)
    w.json("dyck.json", payload)
    return {"order": payload["order"], "count": payload["count"]}


TASK_RUNNERS: dict[str, Callable[[ExperimentConfig, Writer], dict]] = {
    "propagate": task_propagate,
    "kernels": task_kernels,
    "invert": task_invert,
    "extract-jw": task_extract,
    "dyck": task_dyck,
}


def run(cfg: ExperimentConfig, out_dir: str | Path | None = None) -> tuple[int, dict]:
    """Execute one task; returns (exit status, summary)."""
    validate(cfg)
    h = cfg.hash()
    w = Writer(out_dir or cfg.output.dir, h, f"task={cfg.task}", cfg.output.prefix)
    t0 = time.perf_counter()
    summary = TASK_RUNNERS[cfg.task](cfg, w)
    return 0, {
        "status": "ok",
        "task": cfg.task,
        "config_sha256": h,
        "version": __version__,
        "outputs": w.paths,
        "seconds": round(time.perf_counter() - t0, 3),
        **summary,
    }


# -- figure reproduction -----------------------------------------------------------------
FIG2_SETS = {"a": (0.1, 1.0), "b": (0.5, 1.0), "c": (0.5, 0.5)}


def _ohmic_config(task: str, xi: float, s: float, dt: float, **disc) -> ExperimentConfig:
    return validate(ExperimentConfig(
        task=task,
        baths=[BathConfig("ohmic", {"xi": xi, "s": s, "omega_c": 7.5}, "boson", 5.0)],
        discretization=DiscretizationConfig(dt=dt, **disc),
    ))


def _writer(out, cfg: ExperimentConfig, figure: str) -> Writer:
    return Writer(out, cfg.hash(), f"figure={figure}", f"{figure}_")


def _fig2(panel: str, out, order: int | None) -> dict:
    xi, s = FIG2_SETS[panel]
    N = order or 10
    cfg = _ohmic_config("invert", xi, s, 0.1, order=N)
    w = _writer(out, cfg, f"fig2{panel}")
    system = build_system(cfg.system)
    G, F, L = _static_ops(system, 0.1)
    I = build_influence(cfg, N)
    K = build_kernels_dyck(G, F, L, I, N)
    rec, _ = invert_influence_series(K, G, F, L, system.s_eigs, N)
    kn, an, rn = K.norms(), I.norms(), rec.norms()
    rows = [(n, n * 0.1, kn[n], an[n], rn[n]) for n in range(N + 1)]
    w.csv("norms.csv", ["N", "t", "norm_K", "norm_I_tilde_exact", "norm_I_tilde_recovered"], rows)
    err = max(float(np.max(np.abs(rec.I[n] - I.I[n]))) for n in range(1, N + 1))
    return {"outputs": w.paths, "max_abs_error": err}


def _fig3_dynamics(panel: str, out, order: int | None) -> dict:
    xi, s = FIG2_SETS[panel]
    top = order or 12
    orders = [r for r in (2, 4, 6, 8, 10, 12, 14, 16) if r <= top]
    cfg = _ohmic_config("propagate", xi, s, 0.1, n_steps=150, order=top, orders=orders, k_max=10)
    w = _writer(out, cfg, f"fig3{panel}")
    system = build_system(cfg.system)
    G, F, L = _static_ops(system, 0.1)
    I = build_influence(cfg, max(top, 10))
    rho0 = vec(REFERENCE_STATES[0])
    oracle = sigma_z_series(iterative_quapi(G, F, I, 10, 150).apply(rho0))
    K = build_kernels_dyck(G, F, L, I, top)
    cols, series = ["t", "oracle_sigma_z"], [np.arange(151) * 0.1, oracle]
    deviation = {}
    for r in orders:
        z = sigma_z_series(propagate_gqme(K, L, rho0, 150, r))
        cols.append(f"gqme_r{r:02d}_sigma_z")
        series.append(z)
        deviation[str(r)] = float(np.max(np.abs(z - oracle)))
    w.csv("dynamics.csv", cols, zip(*series))
    return {"outputs": w.paths, "max_sigma_z_deviation": deviation}


def _sweep_rows(omega, J_ref, estimates):
    mask = np.zeros_like(omega, dtype=bool)
    for est in estimates:
        mask |= est.mask
    for i, wv in enumerate(omega):
        yield [wv, J_ref[i]] + [0.0 if mask[i] else est.J[i] for est in estimates] + [int(mask[i])]


def _extraction_sweep(figure: str, cfg: ExperimentConfig, out, pipeline_max: int) -> dict:
    """Full pipeline for orders <= pipeline_max, direct I -> eta -> J above."""
    w = _writer(out, cfg, figure)
    d = cfg.discretization
    orders = cfg.sweep()
    low = [o for o in orders if o <= pipeline_max]
    high = [o for o in orders if o > pipeline_max]
    stats = build_statistics(cfg.baths[0])
    omega = default_omega_grid(d.dt, d.omega_points)
    J_ref = _reference_density(cfg, omega)
    system = build_system(cfg.system)
    est, routes = {}, {}
    if low:
        T = synthetic_trajectories(cfg, max(low) + 1)
        for o in low:
            est[o] = extract_from_trajectories(T, system, stats, o, omega=omega).spectrum
            routes[o] = "pipeline"
    if high:
        I = build_influence(cfg, max(high))
        for o in high:
            eta = eta_from_influence(I.truncated(o)).truncated(o)
            est[o] = spectral_density_from_eta(eta, stats, omega)
            routes[o] = "direct"
    cols = ["omega", "J_exact"] + [f"J_order{o:02d}" for o in orders] + ["masked"]
    w.csv("spectral_density.csv", cols, _sweep_rows(omega, J_ref, [est[o] for o in orders]))
    report = {
        str(o): {"route": routes[o], "relative_l2": est[o].relative_error(_reference(cfg)),
                 "max_relative": est[o].max_relative_error(_reference(cfg))}
        for o in orders
    }
    w.json("report.json", {"orders": orders, "errors": report})
    return {"outputs": w.paths, "errors": report}


def _fig3_extraction(panel: str, out, order: int | None) -> dict:
    xi, s = FIG2_SETS[panel]
    top = order or 16
    orders = [o for o in (8, 12, 16) if o <= top] or [top]
    cfg = _ohmic_config("extract-jw", xi, s, 0.05, order=max(orders), orders=orders)
    return _extraction_sweep(f"fig3{panel}2", cfg, out, pipeline_max=ORDER_CAP)


STRUCTURED_ORDERS = (8, 12, 16, 20, 30, 40)


def _structured(panel: str, out, order: int | None) -> dict:
    xi = 2.0
    g, w0 = xi * np.pi / 2, 5.0
    brown = lambda om: {"kind": "brownian", "params": {"gamma": g, "omega0": om}}
    lor = lambda om: {"kind": "lorentzian", "params": {"gamma": g, "omega0": om, "antisymmetric": 1.0}}
    comps = {"a": [brown(w0), brown(2 * w0)], "b": [lor(w0), lor(3 * w0)], "c": [brown(w0), lor(3 * w0)]}[panel]
    top = order or max(STRUCTURED_ORDERS)
    orders = [o for o in STRUCTURED_ORDERS if o <= top] or [top]
    cfg = ExperimentConfig(
        task="extract-jw",
        baths=[_bath({"kind": "sum", "components": comps, "statistics": "boson", "beta": 5.0}, "baths[0]")],
        discretization=DiscretizationConfig(dt=0.05, order=max(orders), orders=orders, route="direct"),
        allow_large_order=True,
    )
    validate(cfg)
    res = _extraction_sweep(f"structured-{panel}", cfg, out, pipeline_max=12)
    return res


def _ferm(out, order: int | None) -> dict:
    top = order or max(STRUCTURED_ORDERS)
    orders = [o for o in STRUCTURED_ORDERS if o <= top] or [top]
    cfg = ExperimentConfig(
        task="extract-jw",
        baths=[BathConfig("fermionic-flat-band", {"gamma": 1.0, "nu": 0.1, "omega_c": 10.0}, "fermion", 50.0, 0.0)],
        discretization=DiscretizationConfig(dt=0.05, order=max(orders), orders=orders, route="direct"),
        allow_large_order=True,
    )
    validate(cfg)
    return _extraction_sweep("ferm-jw", cfg, out, pipeline_max=12)


def _driven(panel: str, out, order: int | None) -> dict:
    r = order or 4
    drive = [{"axis": "z", "amplitude": -1.0}] if panel == "a" else [{"axis": "x", "amplitude": 1.0}]
    cfg = ExperimentConfig(
        task="propagate",
        system=SystemConfig(epsilon=1.0, delta=1.0 if panel == "a" else 0.0, drive=drive),
        baths=[BathConfig("ohmic", {"xi": 0.1, "s": 1.0, "omega_c": 7.5}, "boson", 5.0)],
        discretization=DiscretizationConfig(dt=0.1, n_steps=100, order=r, crest_pad=2, k_max=10),
    )
    validate(cfg)
    w = _writer(out, cfg, f"driven-{panel}")
    system = build_system(cfg.system)
    I = build_influence(cfg, max(r + 2, 10))
    rho0 = vec(REFERENCE_STATES[0])
    oracle = sigma_z_series(driven_oracle(system, I, 0.1, 100, 10).apply(rho0))
    Kd = driven_kernels(system, I, 0.1, 100, r, crest_pad=2)
    Ls = step_liouvillians(system, 0.1, 100)
    plain = sigma_z_series(driven_propagate(Kd, Ls, rho0, 100, r, 0))
    padded = sigma_z_series(driven_propagate(Kd, Ls, rho0, 100, r, 2))
    cols = ["t", "oracle_sigma_z", f"dyck_r{r}_sigma_z", f"dyck_r{r}_crest{r + 2}_sigma_z"]
    w.csv("dynamics.csv", cols, zip(np.arange(101) * 0.1, oracle, plain, padded))
    return {
        "outputs": w.paths,
        "max_deviation_truncated": float(np.max(np.abs(plain - oracle))),
        "max_deviation_crest_padded": float(np.max(np.abs(padded - oracle))),
    }


FIGURES: dict[str, Callable[[str | Path, int | None], dict]] = {
    **{f"fig2{p}": (lambda out, order, p=p: _fig2(p, out, order)) for p in "abc"},
    **{f"fig3{p}": (lambda out, order, p=p: _fig3_dynamics(p, out, order)) for p in "abc"},
    **{f"fig3{p}2": (lambda out, order, p=p: _fig3_extraction(p, out, order)) for p in "abc"},
    **{f"driven-{p}": (lambda out, order, p=p: _driven(p, out, order)) for p in "ab"},
    **{f"structured-{p}": (lambda out, order, p=p: _structured(p, out, order)) for p in "abc"},
    "ferm-jw": _ferm,
}


def reproduce(figure: str, out: str | Path = "out", order: int | None = None) -> dict:
    """Regenerate the data behind one figure panel; ``order`` caps the sweep."""
    if figure not in FIGURES:
        raise ValidationError(f"figure: unknown id {figure!r} (choose from {', '.join(sorted(FIGURES))})")
    t0 = time.perf_counter()
    res = FIGURES[figure](out, order)
    return {"status": "ok", "figure": figure, "version": __version__,
            "seconds": round(time.perf_counter() - t0, 3), **res}


# -- command line ------------------------------------------------------------------------
EXIT_VALIDATION, EXIT_NUMERICAL, EXIT_RESOURCE, EXIT_OTHER = 2, 3, 4, 1


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="memkernel", description="Memory kernels and influence functions via Dyck paths.")
    p.add_argument("task", choices=TASKS + ("reproduce",))
    p.add_argument("figure", nargs="?", help="figure id for the reproduce task")
    p.add_argument("--config", help="YAML experiment config")
    p.add_argument("--out", help="output directory (overrides output.dir)")
    p.add_argument("--order", type=int, help="override discretization.order")
    p.add_argument("--seed", type=int, help="override the noise seed")
    p.add_argument("--dump", action="store_true", help="dyck: print recipes as JSON on stdout")
    p.add_argument("--allow-large-order", action="store_true", help="lift the hard order cap")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def _config_from_args(args) -> ExperimentConfig:
    if args.config:
        raw = _read_yaml(args.config) or {}
        if not isinstance(raw, dict):
            raise ValidationError("config: top level must be a mapping")
        if "task" in raw and raw["task"] != args.task:
            raise ValidationError(f"task: config says {raw['task']!r} but the command line asks for {args.task!r}")
        raw["task"] = args.task
    elif args.task == "dyck":
        raw = {"task": "dyck"}
    else:
        raise ValidationError("--config: required for this task")
    if args.order is not None:
        raw.setdefault("discretization", {})
        raw["discretization"]["order"] = args.order
        raw["discretization"].pop("orders", None)
    if args.seed is not None:
        raw["seed"] = args.seed
    if args.allow_large_order:
        raw["allow_large_order"] = True
    return parse_config(raw)


def main(argv: Sequence[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        if args.task == "reproduce":
            if not args.figure:
                raise ValidationError("figure: reproduce needs a figure id")
            summary = reproduce(args.figure, args.out or "out", args.order)
        elif args.task == "dyck" and args.dump:
            cfg = _config_from_args(args)
            cap = 10**9 if cfg.allow_large_order else cfg.order_cap
            print(dumps(dyck_payload(cfg.discretization.order, cap)))
            return 0
        else:
            _, summary = run(_config_from_args(args), args.out)
    except ValidationError as exc:
        print(json.dumps({"status": "error", "kind": "validation", "message": str(exc)}), file=sys.stderr)
        return EXIT_VALIDATION
    except NumericalError as exc:
        print(json.dumps({"status": "error", "kind": "numerical", "message": str(exc),
                          "diagnostics": exc.diagnostics}, default=str), file=sys.stderr)
        return EXIT_NUMERICAL
    except ResourceError as exc:
        print(json.dumps({"status": "error", "kind": "resource", "message": str(exc)}), file=sys.stderr)
        return EXIT_RESOURCE
    except (MemkernelError, yaml.YAMLError, OSError) as exc:
        print(json.dumps({"status": "error", "kind": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return EXIT_OTHER
    print(json.dumps(summary, sort_keys=True, default=_jsonable))
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())

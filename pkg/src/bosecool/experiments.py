"""Configuration-driven experiments shared by the command line and the demos."""
from __future__ import annotations

import itertools
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .bath_rates import BathSpec, compute_rates
from .coarse_dynamics import (CoarseModel, CoarseProjector, CoarseState, evolve_coarse,
                              random_coarse_state, stationary_json, stationary_populations)
from .fock_basis import build_basis
from .liouville import (DENSE_SUPEROP_MAX_DIM, EvolutionConfig, Generator, evolve, pure_state,
                        steady_state, thermal_state)
from .operators import check_algebra
from .tables import write_csv, write_json
from .vacua import (VacuumLabel, VacuumStructure, closed_form_vacuum, overlap_with_span,
                    recurrence_vacuum, vacuum_counts, vacuum_table)

WORKERS_ENV = "BOSECOOL_WORKERS"
COMPARE_TOL = 0.05


class ConfigError(ValueError):
    pass


class InvariantViolation(RuntimeError):
    pass


@dataclass
class RunConfig:
    N: int = 3
    L_max: int = 8
    eta: float = 0.1
    beta_hw: float = math.log(2)
    beta_mu: float = 0.0
    dispersion: str = "massive"
    gamma_down_target: float | None = 1.0
    kappa_scale: float = 1.0
    terms: list = field(default_factory=lambda: ["L0", "L11", "L12"])
    dt: float | None = None
    t_final: float | None = None
    record_every: int = 20
    initial_state: dict = field(default_factory=lambda: {"vacuum": "2.1.1"})
    seed: int = 0
    output_dir: str = "out"
    format: str = "csv"
    max_leak: float | None = 1e-6
    fast_window: list = field(default_factory=lambda: [0.5, 4.0])
    slow_window: list = field(default_factory=lambda: [1.0, 3.0])
    slow_horizon: float = 3.0
    compare_tol: float = COMPARE_TOL
    grid: dict = field(default_factory=dict)
    sweep_fits: bool = False

    def __post_init__(self):
        self.validate()

    def validate(self):
        if int(self.N) != self.N or self.N < 1:
            raise ConfigError("N must be a positive integer")
        if int(self.L_max) != self.L_max or self.L_max < 0:
            raise ConfigError("L_max must be a non-negative integer")
        if self.beta_mu > 0:
            raise ConfigError("beta_mu must be <= 0")
        if not self.eta > 0 or not self.beta_hw > 0:
            raise ConfigError("eta and beta_hw must be > 0")
        if self.format not in ("csv", "json"):
            raise ConfigError("format must be csv or json")
        bad = set(self.terms) - {"L0", "L11", "L12", "exact"}
        if bad:
            raise ConfigError(f"unknown terms {sorted(bad)}")
        bad = set(self.grid) - {"eta", "beta_hw", "beta_mu", "N"}
        if bad:
            raise ConfigError(f"sweep grid may only vary eta, beta_hw, beta_mu, N (got {sorted(bad)})")
        if int(self.record_every) != self.record_every or self.record_every < 1:
            raise ConfigError("record_every must be a positive integer")

    @property
    def warnings(self) -> list[str]:
        out = []
        if self.eta * math.sqrt(2) >= 1:
            out.append("eta*sqrt(2) >= 1: Lamb-Dicke expansion not valid")
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys {sorted(unknown)}")
        data = {k: _decode_special(v) for k, v in data.items()}
        try:
            return cls(**data)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    def to_dict(self) -> dict:
        return {k: _encode_special(v) for k, v in asdict(self).items()}

    def replace(self, **changes) -> "RunConfig":
        d = asdict(self)
        d.update(changes)
        return RunConfig.from_dict(d)


def _decode_special(v):
    if isinstance(v, str) and v in ("inf", "Infinity"):
        return math.inf
    return v


def _encode_special(v):
    if isinstance(v, float) and math.isinf(v):
        return "inf"
    return v


def load_config(path=None, overrides=()) -> RunConfig:
    """Read a JSON config and apply ``key=value`` overrides (values parsed as JSON)."""
    data = {}
    if path is not None:
        try:
            data = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, raw = item.split("=", 1)
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        target = data
        parts = key.split(".")
        for p in parts[:-1]:
            target = target.setdefault(p, {})
        target[parts[-1]] = value
    return RunConfig.from_dict(data)


# --- building blocks ---------------------------------------------------------

def make_spec(cfg: RunConfig) -> BathSpec:
    spec = BathSpec(cfg.N, cfg.eta, cfg.beta_hw, cfg.beta_mu, cfg.kappa_scale, cfg.dispersion)
    if cfg.gamma_down_target is not None:
        spec = spec.with_gamma_down(cfg.gamma_down_target)
    return spec


@dataclass
class Setup:
    cfg: RunConfig
    spec: BathSpec
    rates: object
    basis: object
    structure: VacuumStructure
    projector: CoarseProjector
    model: CoarseModel

    @classmethod
    def build(cls, cfg: RunConfig) -> "Setup":
        spec = make_spec(cfg)
        rates = compute_rates(spec)
        basis = build_basis(cfg.N, cfg.L_max)
        structure = VacuumStructure(basis)
        projector = CoarseProjector(structure)
        model = CoarseModel.from_structure(structure, rates)
        return cls(cfg, spec, rates, basis, structure, projector, model)

    def generator(self, terms=None) -> Generator:
        terms = self.cfg.terms if terms is None else terms
        return Generator(self.structure.ops, self.rates, terms, spec=self.spec)


def _parse_label(text) -> VacuumLabel:
    try:
        return VacuumLabel.parse(text)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad vacuum label {text!r}") from exc


def _parse_pair(text):
    a, b = str(text).split("|")
    return tuple(sorted((_parse_label(a), _parse_label(b))))


def initial_coarse_state(setup: Setup) -> tuple[CoarseState, float]:
    """Coarse description of the configured initial state and the ladder temperature to lift at.

    Only vacuum and ladder-thermal initial states have one.
    """
    init = setup.cfg.initial_state
    beta = setup.rates.beta_e
    if "vacuum" in init:
        return CoarseState.single(_parse_label(init["vacuum"])), math.inf
    if "ladder_thermal" in init:
        spec = init["ladder_thermal"]
        pops = {_parse_label(k): float(v) for k, v in spec.get("n", {}).items()}
        coh = {}
        for k, v in spec.get("r", {}).items():
            re, im = (v, 0.0) if not isinstance(v, (list, tuple)) else v
            coh[_parse_pair(k)] = complex(re, im)
        b = spec.get("beta_e")
        return CoarseState(pops, coh), (beta if b is None else float(_decode_special(b)))
    if "random_coarse" in init:
        rng = np.random.default_rng(setup.cfg.seed)
        return random_coarse_state(setup.projector.labels, rng), beta
    raise ConfigError("initial state has no coarse description (use vacuum, ladder-thermal or random_coarse)")


def initial_density(setup: Setup) -> np.ndarray:
    init = setup.cfg.initial_state
    if not isinstance(init, dict) or len(init) != 1 and not ("ladder" in init and "k" in init):
        raise ConfigError(f"bad initial_state {init!r}")
    b = setup.basis
    try:
        if "occupations" in init:
            return pure_state(b.basis_vector(init["occupations"]))
        if "ladder" in init:
            return pure_state(setup.structure.ladder(_parse_label(init["ladder"]))[int(init["k"])])
        if "thermal" in init:
            beta = init["thermal"]
            return thermal_state(b, setup.cfg.beta_hw if beta is None else float(_decode_special(beta)))
        cs, beta = initial_coarse_state(setup)
        return setup.projector.lift(cs, beta, tail_tol=None)
    except (KeyError, IndexError) as exc:
        raise ConfigError(f"initial state {init!r} not in the basis") from exc


def evolution_config(setup: Setup, t_final: float) -> EvolutionConfig:
    return EvolutionConfig(t_final=t_final, dt=setup.cfg.dt, record_every=setup.cfg.record_every,
                           max_leak=setup.cfg.max_leak)


def slow_time(setup: Setup) -> float:
    rate = setup.model.slow_rate()
    return 1.0 / rate if rate > 0 else math.inf


def fast_rate_predicted(rates) -> float:
    return 2.0 * (rates.gamma_down - rates.gamma_up)


def fit_relaxation_rate(t, y, window) -> float:
    """Least-squares slope of ``log|y|`` over ``window[0] <= t <= window[1]``, negated."""
    t = np.asarray(t)
    y = np.abs(np.asarray(y))
    m = (t >= window[0]) & (t <= window[1]) & (y > 0)
    if m.sum() < 3:
        return math.nan
    return float(-np.polyfit(t[m], np.log(y[m]), 1)[0])


def ladder_excitation(projector: CoarseProjector, rho: np.ndarray, beta_e: float) -> tuple[float, float]:
    """Mean ladder index ``<k>`` and its value if every ladder were thermal at ``beta_e``."""
    diag = np.real(np.diag(projector.to_ladder(rho)))
    q = qk = 0.0
    for w in projector.labels:
        o, K = projector.offsets[w], projector.kmax[w]
        p = diag[o:o + K + 1]
        ks = np.arange(K + 1)
        q += float(ks @ p)
        g = projector.geometric_weights(K, beta_e)
        qk += float(p.sum() * (ks @ g))
    return q, qk


def _initial_derivative_norm(gen: Generator, rho: np.ndarray, band: int | None = None) -> float:
    """Largest entry of ``d rho/dt`` at ``t = 0``, optionally only on shells ``l <= L_max - band``."""
    d = gen.apply(rho)
    if band is not None:
        m = gen.basis.guard_mask(band)
        d = d[np.ix_(m, m)]
    return float(np.abs(d).max())


# --- commands ----------------------------------------------------------------

def run_check_algebra(cfg: RunConfig) -> dict:
    if cfg.L_max < 4:
        raise ConfigError("check-algebra needs L_max >= 4 (guard band empty)")
    rep = check_algebra(build_basis(cfg.N, cfg.L_max))
    return rep.as_dict()


def run_vacua(cfg: RunConfig) -> dict:
    basis = build_basis(cfg.N, cfg.L_max)
    structure = VacuumStructure(basis)
    vacuum_counts(cfg.N, cfg.L_max, structure)
    table = vacuum_table(structure)
    checks = {}
    for l in range(cfg.L_max + 1):
        if not (l == 0 or 2 <= l <= cfg.N):
            continue
        entry = {"recurrence_overlap": overlap_with_span(recurrence_vacuum(cfg.N, l).coefficients,
                                                         structure.kernels[l])}
        entry["recurrence_in_kernel"] = entry["recurrence_overlap"] > 1 - 1e-10
        if l in (2, 3, 4):
            ov = overlap_with_span(closed_form_vacuum(cfg.N, l).coefficients, structure.kernels[l])
            entry["closed_form_overlap"] = ov
            entry["closed_form_in_kernel"] = ov > 1 - 1e-10
        checks[str(l)] = entry
    table["explicit_vacuum_checks"] = checks
    table["dim"] = basis.dim
    return table


def run_rates(cfg: RunConfig) -> dict:
    spec = make_spec(cfg)
    rates = compute_rates(spec)
    out = rates.as_dict()
    out.update({"z": spec.z, "kappa_scale": spec.kappa_scale, "ld_valid": spec.ld_valid(),
                "gamma_up_over_down": rates.gamma_up / rates.gamma_down,
                "gamma1_up_over_down": rates.gamma1_up / rates.gamma1_down,
                "gamma1_down_over_gamma_down": rates.gamma1_down / rates.gamma_down})
    return out


def run_evolve(cfg: RunConfig, setup: Setup | None = None) -> dict:
    setup = Setup.build(cfg) if setup is None else setup
    gen = setup.generator()
    rho0 = initial_density(setup)
    t_final = cfg.t_final if cfg.t_final is not None else 10.0 / setup.rates.gamma_down
    traj = evolve(rho0, evolution_config(setup, t_final), gen)
    final = setup.projector.project(traj.final)
    summary = {
        "status": traj.status, "message": traj.message,
        "rates": setup.rates.as_dict(),
        "beta_e": setup.rates.beta_e, "beta_e_prime": setup.rates.beta_e_prime,
        "dim": setup.basis.dim, "dt": traj.dt, "t_final": float(traj.times[-1]),
        "final_populations": {str(w): final.n(w) for w in setup.projector.labels},
        "max_trace_drift": float(traj.trace_drift.max()),
        "max_leak_top2": float(traj.leak_top2.max()),
        "min_eigenvalue": float(np.nanmin(traj.min_eig)),
        "positivity_violations": traj.positivity_violations,
        "initial_derivative_norm": _initial_derivative_norm(gen, rho0),
        "initial_derivative_guard_band": _initial_derivative_norm(gen, rho0, band=2),
        "warnings": cfg.warnings,
    }
    return {"summary": summary, "trajectory": traj, "setup": setup}


def run_coarse(cfg: RunConfig, setup: Setup | None = None) -> dict:
    setup = Setup.build(cfg) if setup is None else setup
    cs0, _ = initial_coarse_state(setup)
    tau = slow_time(setup)
    t_final = cfg.t_final if cfg.t_final is not None else cfg.slow_horizon * tau
    traj = evolve_coarse(setup.model, cs0, t_final, n_samples=201)
    stat = stationary_populations(setup.model, cs0)
    summary = {
        "status": "ok",
        "rates": setup.rates.as_dict(),
        "beta_e": setup.rates.beta_e, "beta_e_prime": setup.rates.beta_e_prime,
        "slow_time": tau, "t_final": t_final,
        "final_populations": {str(w): float(traj.n[-1, i]) for i, w in enumerate(setup.model.labels)},
        "stationary": stationary_json(setup.model, stat),
        "max_mass_drift": float(np.abs(traj.n.sum(axis=1) - traj.n[0].sum()).max()),
    }
    return {"summary": summary, "trajectory": traj, "stationary": stat, "setup": setup}


def run_compare(cfg: RunConfig, setup: Setup | None = None) -> dict:
    """Full master equation against the rate equations from the same initial state."""
    setup = Setup.build(cfg) if setup is None else setup
    cs0, beta0 = initial_coarse_state(setup)
    rho0 = setup.projector.lift(cs0, beta0, tail_tol=None)
    tau = slow_time(setup)
    t_final = cfg.t_final if cfg.t_final is not None else cfg.slow_horizon * tau
    gen = setup.generator()
    traj = evolve(rho0, evolution_config(setup, t_final), gen)
    model, P = setup.model, setup.projector
    coarse = evolve_coarse(model, cs0, 0.0, times=traj.times)
    full_n = np.array([[P.project(s).n(w) for w in model.labels] for s in traj.states])
    dev = np.abs(full_n - coarse.n)

    # fast: ladder excitation relative to its instantaneous thermal value, window in units of 1/Gamma_down
    exc = np.array([ladder_excitation(P, s, setup.rates.beta_e) for s in traj.states])
    gd = setup.rates.gamma_down
    fast = fit_relaxation_rate(traj.times, exc[:, 0] - exc[:, 1],
                               [cfg.fast_window[0] / gd, cfg.fast_window[1] / gd])
    # slow: lowest label of the initial family, window in units of the predicted slow time
    stat = stationary_populations(model, cs0)
    fam = max(cs0.family_masses().items(), key=lambda kv: kv[1])[0]
    w0 = min(w for w in model.labels if w.family == fam)
    i0 = model.index[w0]
    slow = fit_relaxation_rate(traj.times, full_n[:, i0] - stat.n(w0),
                               [cfg.slow_window[0] * tau, cfg.slow_window[1] * tau])
    pred_fast = fast_rate_predicted(setup.rates)
    pred_slow = 1.0 / tau if tau > 0 else math.nan
    ratio = fast / slow if slow else math.nan
    pred_ratio = pred_fast / pred_slow
    summary = {
        "status": traj.status, "message": traj.message,
        "rates": setup.rates.as_dict(),
        "beta_e": setup.rates.beta_e, "beta_e_prime": setup.rates.beta_e_prime,
        "dim": setup.basis.dim, "dt": traj.dt, "t_final": float(traj.times[-1]),
        "max_deviation": float(dev.max()),
        "final_populations_full": {str(w): float(full_n[-1, i]) for i, w in enumerate(model.labels)},
        "final_populations_coarse": {str(w): float(coarse.n[-1, i]) for i, w in enumerate(model.labels)},
        "fast_rate_fit": fast, "slow_rate_fit": slow,
        "fast_time_fit": 1 / fast if fast else math.nan, "slow_time_fit": 1 / slow if slow else math.nan,
        "fast_rate_predicted": pred_fast, "slow_rate_predicted": pred_slow,
        "time_ratio_fit": ratio, "time_ratio_predicted": pred_ratio,
        "time_ratio_rel_error": abs(ratio / pred_ratio - 1) if pred_ratio else math.nan,
        "slow_fit_label": str(w0),
        "max_trace_drift": float(traj.trace_drift.max()),
        "max_leak_top2": float(traj.leak_top2.max()),
        "min_eigenvalue": float(np.nanmin(traj.min_eig)),
        "positivity_violations": traj.positivity_violations,
        "warnings": cfg.warnings,
    }
    return {"summary": summary, "trajectory": traj, "coarse": coarse, "deviation": dev,
            "full_n": full_n, "setup": setup}


# --- sweep -------------------------------------------------------------------

SWEEP_COLUMNS = ["eta", "beta_hw", "beta_mu", "N", "status", "gamma_down", "gamma_up", "gamma1_down",
                 "gamma1_up", "beta_e", "beta_e_prime", "ladder_ratio", "ladder_ratio_expected",
                 "fast_time_fit", "slow_time_fit", "time_ratio_fit", "time_ratio_predicted", "max_deviation"]


def grid_points(cfg: RunConfig) -> list[dict]:
    keys = [k for k in ("eta", "beta_hw", "beta_mu", "N") if k in cfg.grid]
    values = [list(cfg.grid[k]) for k in keys]
    return [dict(zip(keys, combo)) for combo in itertools.product(*values)]


def sweep_point(cfg_dict: dict, point: dict) -> dict:
    row = {k: cfg_dict.get(k) for k in ("eta", "beta_hw", "beta_mu", "N")}
    row.update(point)
    try:
        cfg = RunConfig.from_dict({**cfg_dict, **point, "grid": {}})
        setup = Setup.build(cfg)
        r = setup.rates
        row.update({k: getattr(r, k) for k in ("gamma_down", "gamma_up", "gamma1_down", "gamma1_up",
                                               "beta_e", "beta_e_prime")})
        row["ladder_ratio_expected"] = math.exp(-r.beta_e)
        if setup.basis.dim <= DENSE_SUPEROP_MAX_DIM:
            gen = setup.generator(["L0"])
            rho = steady_state(thermal_state(setup.basis, cfg.beta_hw), gen)
            lad = setup.structure.ladder((0, 0, 1))
            p = [float(np.real(v @ rho @ v)) for v in lad.vectors[:2]]
            row["ladder_ratio"] = p[1] / p[0]
        if cfg.sweep_fits:
            res = run_compare(cfg, setup)["summary"]
            row.update({k: res[k] for k in ("fast_time_fit", "slow_time_fit", "time_ratio_fit",
                                            "time_ratio_predicted", "max_deviation")})
        row["status"] = "ok"
    except Exception as exc:  # recorded per point, never fatal
        row["status"] = f"error: {type(exc).__name__}: {exc}".replace("\n", " ")
    return row


def run_sweep(cfg: RunConfig, workers: int | None = None) -> list[dict]:
    if not cfg.grid:
        raise ConfigError("sweep needs a non-empty grid")
    points = grid_points(cfg)
    workers = workers if workers is not None else int(os.environ.get(WORKERS_ENV, "1") or 1)
    cfg_dict = cfg.to_dict()
    if workers <= 1:
        rows = [sweep_point(cfg_dict, p) for p in points]
    else:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            rows = list(ex.map(sweep_point, [cfg_dict] * len(points), points))
    return rows


def write_sweep(rows, path):
    return write_csv(path, SWEEP_COLUMNS, [[row.get(c, math.nan) for c in SWEEP_COLUMNS] for row in rows])


def write_table(path: Path, header, rows, format: str):
    if format == "csv":
        return write_csv(path.with_suffix(".csv"), header, rows)
    return write_json(path.with_suffix(".json"), {"columns": list(header), "rows": [list(r) for r in rows]})

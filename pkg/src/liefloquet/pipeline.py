"""Run configurations, the staged run pipeline, sweeps and deterministic output.

A run goes through the stages ``validation -> integration -> recombination ->
reduction -> oracle-branch``.  Failures are reported with the stage tag in the
record instead of as exceptions, so sweeps can keep going.
"""

from __future__ import annotations

import copy
import csv
import inspect
import io
import json
import math
import time
import warnings
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from .drive import DriveSpec, DriveTerm
from .factorization import FactorizationError, alpha_flow
from .lie_core import AlgebraError, LieAlgebraSpec, adjoint_rep, m_a, validate_algebra
from .models import (PRESETS, ModelPreset, ReductionStep, build_preset, paul_trap,
                     paul_trap_observables)
from .oracle import OracleError, compare_forms
from .recombination import RecombinationError, recombine, reduce_quadratic_form

__all__ = [
    "ConfigError",
    "normalize_config",
    "build_model",
    "validate_model",
    "run_pipeline",
    "run_sweep",
    "sweep_grid",
    "to_json",
    "rows_to_csv",
    "record_to_row",
    "PAUL_SWEEP_COLUMNS",
    "EXIT_OK",
    "EXIT_PARSE",
    "EXIT_VALIDATION",
    "EXIT_NUMERICAL",
]

EXIT_OK, EXIT_PARSE, EXIT_VALIDATION, EXIT_NUMERICAL = 0, 1, 2, 3
SCHEMA_VERSION = 1
ORACLE_TOL = 1e-7

PAUL_SWEEP_COLUMNS = (
    "omega0_over_omega", "Omega_over_omega_exact", "Omega_over_omega_approx",
    "M_over_m_exact", "M_over_m_approx", "stability", "status", "error",
)

PAUL_DEFAULTS = {k: float(p.default) for k, p in inspect.signature(paul_trap).parameters.items()}

_DEFAULTS = {
    "schema": SCHEMA_VERSION,
    "mode": "run",
    "model": None,
    "tolerances": {"alpha": 1e-12, "lambda": 1e-12},
    "recombination": {"method": "eigenbasis", "checkpoints": 4},
    "oracle": {"enabled": None, "target": 1e-9, "max_steps": 2**20},
    "output": {"path": None, "format": None, "timings": False},
    "sweep": {"parameter": None, "from": None, "to": None, "points": 50, "jobs": 1},
}


class ConfigError(ValueError):
    """Malformed or inconsistent run configuration (exit status 1)."""


class _StageError(Exception):
    def __init__(self, stage: str, message: str):
        super().__init__(message)
        self.stage = stage


# -- configuration -------------------------------------------------------------

def normalize_config(raw: dict) -> dict:
    """Fill defaults and check types; the result is echoed in every record."""
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    if raw.get("schema", SCHEMA_VERSION) != SCHEMA_VERSION:
        raise ConfigError(f"unsupported config schema {raw.get('schema')!r}; expected 1")
    unknown = set(raw) - set(_DEFAULTS)
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    cfg = copy.deepcopy(_DEFAULTS)
    for key, value in raw.items():
        if isinstance(cfg.get(key), dict):
            if not isinstance(value, dict):
                raise ConfigError(f"config key {key!r} must be an object")
            extra = set(value) - set(cfg[key])
            if extra:
                raise ConfigError(f"unknown keys in {key!r}: {sorted(extra)}")
            cfg[key].update(value)
        else:
            cfg[key] = copy.deepcopy(value)
    if cfg["mode"] not in ("validate", "run", "sweep"):
        raise ConfigError(f"mode must be validate, run or sweep, got {cfg['mode']!r}")
    model = cfg["model"]
    if not isinstance(model, dict):
        raise ConfigError("config needs a model: {'preset': name, 'params': {...}} or {'custom': {...}}")
    if ("preset" in model) == ("custom" in model):
        raise ConfigError("model must have exactly one of 'preset' and 'custom'")
    if "preset" in model:
        if model["preset"] not in PRESETS:
            raise ConfigError(f"unknown preset {model['preset']!r}; choose from {sorted(PRESETS)}")
        params = model.setdefault("params", {})
        if not isinstance(params, dict):
            raise ConfigError("model.params must be an object")
        for k, v in params.items():
            params[k] = _number(v, f"model.params.{k}")
        if set(model) - {"preset", "params"}:
            raise ConfigError(f"unknown keys in model: {sorted(set(model) - {'preset', 'params'})}")
    for key in ("alpha", "lambda"):
        tol = _number(cfg["tolerances"][key], f"tolerances.{key}")
        if not 1e-14 <= tol <= 1e-2:
            raise ConfigError(f"tolerances.{key} must lie in [1e-14, 1e-2], got {tol}")
        cfg["tolerances"][key] = tol
    rec = cfg["recombination"]
    if rec["method"] not in ("eigenbasis", "shooting"):
        raise ConfigError(f"recombination.method must be eigenbasis or shooting, got {rec['method']!r}")
    if not isinstance(rec["checkpoints"], int) or rec["checkpoints"] < 1:
        raise ConfigError("recombination.checkpoints must be a positive integer")
    fmt = cfg["output"]["format"]
    if fmt not in (None, "json", "csv"):
        raise ConfigError(f"output.format must be json or csv, got {fmt!r}")
    sw = cfg["sweep"]
    if not isinstance(sw["points"], int) or sw["points"] < 2:
        raise ConfigError("sweep.points must be an integer >= 2")
    if not isinstance(sw["jobs"], int) or sw["jobs"] < 1:
        raise ConfigError("sweep.jobs must be a positive integer")
    return cfg


def _number(value, name: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{name} must be a number, got {value!r}")
    value = float(value)
    if not math.isfinite(value):
        raise ConfigError(f"{name} must be finite")
    return value


def _matrix(value, name: str) -> np.ndarray:
    try:
        if isinstance(value, dict):
            re = np.asarray(value["re"], dtype=float)
            im = np.asarray(value.get("im", np.zeros_like(re)), dtype=float)
            return re + 1j * im
        return np.asarray(value, dtype=complex)
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"{name} is not a matrix ({exc})") from None


def build_model(model_cfg: dict) -> ModelPreset:
    """Preset or custom model from the ``model`` section of a normalized config.

    Raises :class:`ConfigError` for unusable parameters and
    :class:`AlgebraError` for malformed structure constants.
    """
    if "preset" in model_cfg:
        params = dict(model_cfg.get("params", {}))
        if model_cfg["preset"] == "paul-trap" and "omega0_over_omega" in params:
            ratio = params.pop("omega0_over_omega")
            params["omega0"] = ratio * params.get("omega", 10.0)
        try:
            return build_preset(model_cfg["preset"], params)
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from None
    return _custom_model(model_cfg["custom"])


def _custom_model(c: dict) -> ModelPreset:
    if not isinstance(c, dict):
        raise ConfigError("model.custom must be an object")
    allowed = {"n", "labels", "constants", "rep", "drive", "omega", "reduction"}
    if set(c) - allowed:
        raise ConfigError(f"unknown keys in model.custom: {sorted(set(c) - allowed)}")
    for key in ("n", "constants", "drive", "omega"):
        if key not in c:
            raise ConfigError(f"model.custom needs {key!r}")
    n = c["n"]
    if not isinstance(n, int) or n < 1:
        raise ConfigError("model.custom.n must be a positive integer")
    try:
        entries = [(int(i), int(j), int(k), float(v)) for i, j, k, v in c["constants"]]
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"model.custom.constants must be [i, j, k, c] entries ({exc})") from None
    omega = _number(c["omega"], "model.custom.omega")
    if omega <= 0:
        raise ConfigError("model.custom.omega must be positive")
    drive_cfg = c["drive"]
    if not isinstance(drive_cfg, list) or len(drive_cfg) != n:
        raise ConfigError(f"model.custom.drive needs one term list per generator ({n})")
    try:
        terms = tuple(tuple(DriveTerm(t["kind"], _number(t["amplitude"], "drive amplitude"),
                                      int(t.get("harmonic", 1))) for t in gen)
                      for gen in drive_cfg)
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"malformed drive term ({exc})") from None
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    algebra = LieAlgebraSpec(n, tuple(entries), tuple(c.get("labels") or ()))
    reps = {"adjoint": adjoint_rep(algebra).matrices}
    designated = "adjoint"
    if c.get("rep") is not None:
        if not isinstance(c["rep"], list):
            raise ConfigError("model.custom.rep must be a list of matrices")
        reps["config"] = tuple(_matrix(m, f"model.custom.rep[{i}]") for i, m in enumerate(c["rep"]))
        designated = "config"
    try:
        reduction = tuple(ReductionStep(int(g), int(a), int(b), float(f))
                          for g, a, b, f in c.get("reduction", ()))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"model.custom.reduction must be [generator, num, den, factor] ({exc})") from None
    return ModelPreset("custom", algebra, DriveSpec(terms, omega), {"omega": omega},
                       reps=reps, designated_rep=designated, reduction=reduction)


def validate_model(model: ModelPreset):
    """Validation reports of the algebra with each of its representations."""
    return {name: validate_algebra(model.algebra.with_rep(rep)) for name, rep in model.reps.items()}


# -- run -------------------------------------------------------------------------

def _vec(x) -> list:
    return [float(v) for v in np.asarray(x, dtype=float).ravel()]


def _observables(model: ModelPreset, he: np.ndarray, reduced: np.ndarray | None, beta):
    if model.name == "paul-trap":
        obs = paul_trap_observables(beta, model)
        return {
            "Omega_over_omega_exact": obs.Omega_over_omega,
            "Omega_over_omega_approx": obs.approx_Omega_over_omega,
            "M_over_m_exact": obs.M_over_m,
            "M_over_m_approx": obs.approx_M_over_m,
            "stability": obs.stability,
            "discriminant": obs.discriminant,
        }
    if model.name == "optical-lattice":
        return {"hopping": float(he[2]), "non_hopping_max": float(max(abs(he[0]), abs(he[1])))}
    if model.name == "kapitza":
        return {
            "constant_shift": float(reduced[0]) if reduced is not None else math.nan,
            "constant_shift_closed_form": model.references["constant_shift"],
        }
    return {}


def _oracle_reps(model: ModelPreset):
    """(name, matrices, note) for the designated rep plus any faithful extra."""
    out = []
    center = adjoint_rep(model.algebra).center
    for name in [model.designated_rep] + [r for r in ("affine",) if r in model.reps
                                           and r != model.designated_rep]:
        note = None
        if name == "adjoint" and center.shape[1]:
            dirs = ", ".join(model.algebra.labels[int(np.argmax(np.abs(center[:, r])))]
                             for r in range(center.shape[1]))
            note = f"adjoint representation is not faithful; central part ({dirs}) is invisible"
        out.append((name, model.reps[name], note))
    return out


def run_pipeline(cfg: dict, model: ModelPreset | None = None) -> dict:
    """Execute one run and return its RunRecord (``status`` is "ok" or "error")."""
    clock = {}
    t_start = time.perf_counter()
    record: dict = {"schema": SCHEMA_VERSION, "status": "ok", "config": cfg}
    caught: list[str] = []
    try:
        with warnings.catch_warnings(record=True) as wlist:
            warnings.simplefilter("always")
            _run_stages(cfg, model, record, clock)
            caught = [str(w.message) for w in wlist]
    except _StageError as exc:
        record["status"] = "error"
        record["error"] = {"stage": exc.stage, "message": str(exc)}
    record["warnings"] = sorted(set(caught))
    if cfg["output"].get("timings"):
        clock["total"] = time.perf_counter() - t_start
        record["timings"] = clock
    return record


def _run_stages(cfg, model, record, clock):
    t0 = time.perf_counter()
    if model is None:
        try:
            model = build_model(cfg["model"])
        except (ConfigError, AlgebraError) as exc:
            raise _StageError("validation", str(exc)) from None
    record["model"] = model.name
    record["labels"] = list(model.algebra.labels)
    record["params"] = {k: float(v) for k, v in model.params.items()}
    record["period"] = model.T
    bad = {name: rpt for name, rpt in validate_model(model).items() if not rpt.ok}
    if bad:
        raise _StageError("validation", "; ".join(f"{name}: {rpt.summary()}" for name, rpt in bad.items()))
    clock["validation"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    tol = cfg["tolerances"]["alpha"]
    try:
        traj = alpha_flow(model.algebra, model.drive, rel_tol=tol, abs_tol=tol)
    except FactorizationError as exc:
        raise _StageError("integration", str(exc)) from None
    record["alpha_T"] = _vec(traj.alpha_T)
    record["residuals"] = {"u_max": traj.u_max, "nu_cond_max": traj.nu_cond_max}
    clock["integration"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    rec = cfg["recombination"]
    try:
        res = recombine(traj, rec["method"], rec["checkpoints"], cfg["tolerances"]["lambda"])
    except RecombinationError as exc:
        raise _StageError("recombination", str(exc)) from None
    beta = res.beta
    T = model.T
    he = beta / T
    bnorm = float(np.linalg.norm(beta))
    record.update({
        "method": res.method,
        "beta": _vec(beta),
        "gamma": None if res.gamma is None else _vec(res.gamma),
        "eigenspace_dim": res.eigenspace_dim,
        "he_coeffs": _vec(he),
    })
    eig_abs = float(np.linalg.norm(m_a(model.algebra, traj.alpha_T).T @ beta - beta))
    record["residuals"].update({
        "lambda_roundtrip": res.lambda_residual,
        "eigenrelation": res.eigen_residual,
        "eigenrelation_relative": eig_abs / bnorm if bnorm > 0 else eig_abs,
    })
    record["diagnostics"] = list(res.diagnostics)
    clock["recombination"] = time.perf_counter() - t0

    reduced = None
    if model.reduction:
        try:
            reduced, applied = reduce_quadratic_form(model.algebra, he, model.reduction)
        except ZeroDivisionError as exc:
            raise _StageError("reduction", str(exc)) from None
        record["reduced_he_coeffs"] = _vec(reduced)
        record["reduction_parameters"] = [[k, th] for k, th in applied]
    else:
        record["reduced_he_coeffs"] = None
        record["reduction_parameters"] = []
    record["observables"] = _observables(model, he, reduced, beta)

    enabled = cfg["oracle"]["enabled"]
    if enabled is None:
        enabled = cfg["mode"] != "sweep"
    if not enabled:
        record["oracle"] = None
        return
    t0 = time.perf_counter()
    reports = []
    failures = []
    for name, rep, note in _oracle_reps(model):
        try:
            rpt = compare_forms(rep, traj.alpha_T, beta, model.drive, T, note,
                                cfg["oracle"]["target"], cfg["oracle"]["max_steps"])
        except (OracleError, OverflowError) as exc:
            raise _StageError("oracle-branch", f"{name}: {exc}") from None
        entry = {"rep": name, **rpt.as_dict()}
        reports.append(entry)
        if rpt.ua_vs_ub > ORACLE_TOL or rpt.trotter_vs_ub > max(ORACLE_TOL, rpt.richardson_estimate):
            failures.append(f"{name}: ua_vs_ub {rpt.ua_vs_ub:.3e}, trotter_vs_ub {rpt.trotter_vs_ub:.3e}")
    record["oracle"] = reports
    clock["oracle"] = time.perf_counter() - t0
    if failures:
        raise _StageError("oracle-branch", "propagators disagree: " + "; ".join(failures))


# -- sweeps ----------------------------------------------------------------------

def sweep_grid(start: float, stop: float, points: int) -> np.ndarray:
    return np.linspace(float(start), float(stop), int(points))


def _sweep_parameter_names(cfg: dict) -> tuple[str, ...]:
    model = cfg["model"]
    if "custom" in model:
        return ("omega",)
    names = PRESETS[model["preset"]][1]
    return names + (("omega0_over_omega",) if model["preset"] == "paul-trap" else ())


def _point_config(cfg: dict, parameter: str, value: float) -> dict:
    point = copy.deepcopy(cfg)
    model = point["model"]
    if "custom" in model:
        model["custom"]["omega"] = float(value)
    else:
        params = model.setdefault("params", {})
        if parameter == "omega0":
            params.pop("omega0_over_omega", None)
        params[parameter] = float(value)
    point["sweep"] = {"parameter": parameter, "value": float(value)}
    return point


def _sweep_point(args):
    cfg, parameter, value = args
    return record_to_row(run_pipeline(_point_config(cfg, parameter, value)), cfg, parameter, value)


def record_to_row(record: dict, cfg: dict, parameter: str, value: float) -> dict:
    ok = record["status"] == "ok"
    err = "" if ok else f"{record['error']['stage']}: {record['error']['message']}"
    status = "ok" if ok else f"failed:{record['error']['stage']}"
    if "preset" in cfg["model"] and cfg["model"]["preset"] == "paul-trap":
        params = {**PAUL_DEFAULTS, **cfg["model"].get("params", {})}
        params.pop("omega0_over_omega", None)
        params[parameter] = value
        if parameter == "omega0_over_omega":
            ratio = value
        else:
            ratio = params["omega0"] / params["omega"]
        obs = record.get("observables") or {}
        approx = ratio**2 / math.sqrt(2)
        row = {}
        if parameter != "omega0_over_omega":
            row[parameter] = value
        row.update({
            "omega0_over_omega": ratio,
            "Omega_over_omega_exact": obs.get("Omega_over_omega_exact", math.nan),
            "Omega_over_omega_approx": obs.get("Omega_over_omega_approx", approx),
            "M_over_m_exact": obs.get("M_over_m_exact", math.nan),
            "M_over_m_approx": obs.get("M_over_m_approx", 1.0),
            "stability": obs.get("stability", "unknown"),
            "status": status,
            "error": err,
        })
        return row
    row = {parameter: value}
    labels = record.get("labels") or []
    he = record.get("he_coeffs") or [math.nan] * len(labels)
    for label, c in zip(labels, he):
        row[f"he_{label}"] = c
    row["status"] = status
    row["error"] = err
    return row


def run_sweep(cfg: dict) -> list[dict]:
    """Rows of the sweep table in grid order; ``jobs > 1`` uses worker processes."""
    sw = cfg["sweep"]
    parameter = sw["parameter"]
    allowed = _sweep_parameter_names(cfg)
    if parameter not in allowed:
        raise ConfigError(f"sweep parameter {parameter!r} is not a model parameter; "
                          f"choose from {list(allowed)}")
    if sw["from"] is None or sw["to"] is None:
        raise ConfigError("sweep needs 'from' and 'to'")
    grid = sweep_grid(_number(sw["from"], "sweep.from"), _number(sw["to"], "sweep.to"), sw["points"])
    tasks = [(cfg, parameter, float(v)) for v in grid]
    if sw["jobs"] == 1:
        return [_sweep_point(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=sw["jobs"]) as pool:
        return list(pool.map(_sweep_point, tasks))


# -- serialization ---------------------------------------------------------------

def _fmt_float(x: float) -> str:
    return format(x, ".17g")


def to_json(obj, indent: int = 2) -> str:
    """JSON with 17 significant digits per float; NaN and infinities become null."""
    return _dump(obj, indent, 0) + "\n"


def _dump(obj, indent, level) -> str:
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if obj is None or isinstance(obj, bool):
        return json.dumps(obj)
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return _fmt_float(x) if math.isfinite(x) else "null"
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {_dump(v, indent, level + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        seq = list(obj)
        if not seq:
            return "[]"
        if all(isinstance(v, (int, float, np.number)) and not isinstance(v, bool) for v in seq):
            return "[" + ", ".join(_dump(v, indent, level + 1) for v in seq) + "]"
        return "[\n" + ",\n".join(pad + _dump(v, indent, level + 1) for v in seq) + "\n" + end + "]"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def rows_to_csv(rows: list[dict]) -> str:
    """Header plus one line per row; floats with 17 significant digits."""
    if not rows:
        return ""
    columns = list(rows[0])
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_fmt_float(float(v)) if isinstance(v, (float, np.floating)) else v
                         for v in (row.get(c, "") for c in columns)])
    return buf.getvalue()

"""Command line front end: ``liefloquet {validate,run,sweep} [config.json] [options]``.

Exit status: 0 ok, 1 usage or parse error, 2 algebra validation failure,
3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import sys

from .lie_core import AlgebraError
from .pipeline import (EXIT_NUMERICAL, EXIT_OK, EXIT_PARSE, EXIT_VALIDATION, ConfigError,
                       build_model, normalize_config, rows_to_csv, run_pipeline, run_sweep,
                       to_json, validate_model)


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage errors exit with 1, not argparse's 2
        raise _UsageError(f"{self.prog}: error: {message}")


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("config", nargs="?", help="JSON run configuration (schema 1)")
    common.add_argument("--model", help="preset name (overrides the config model)")
    common.add_argument("--param", action="append", default=[], metavar="KEY=VALUE",
                        help="preset parameter; repeatable")
    common.add_argument("--tol", type=float, help="alpha-flow tolerance (rel and abs)")
    common.add_argument("--lambda-tol", type=float, help="lambda-flow tolerance")
    common.add_argument("--method", choices=("eigenbasis", "shooting"))
    common.add_argument("--checkpoints", type=int, help="initial continuation subdivision")
    common.add_argument("--out", help="output file (default: standard output)")
    common.add_argument("--format", choices=("json", "csv"))
    common.add_argument("--timings", action="store_true", help="add wall-clock timings")
    oracle = common.add_mutually_exclusive_group()
    oracle.add_argument("--oracle", dest="oracle", action="store_true", default=None,
                        help="run the brute-force propagator comparison")
    oracle.add_argument("--no-oracle", dest="oracle", action="store_false")

    parser = _Parser(prog="liefloquet", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="mode", required=True, parser_class=_Parser)
    sub.add_parser("validate", parents=[common], help="check structure constants and representations")
    sub.add_parser("run", parents=[common], help="compute the effective Hamiltonian")
    sw = sub.add_parser("sweep", parents=[common], help="run over a parameter grid")
    sw.add_argument("--parameter", help="model parameter to sweep (paul-trap: omega0_over_omega)")
    sw.add_argument("--from", dest="start", type=float)
    sw.add_argument("--to", dest="stop", type=float)
    sw.add_argument("--points", type=int)
    sw.add_argument("--jobs", type=int, help="worker processes")
    return parser


def _load(path: str) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path!r}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path!r} is not valid JSON: {exc}") from None


def _parse_param(item: str) -> tuple[str, float]:
    key, sep, value = item.partition("=")
    if not sep or not key:
        raise ConfigError(f"--param expects KEY=VALUE, got {item!r}")
    try:
        return key.strip(), float(value)
    except ValueError:
        raise ConfigError(f"--param {key}: {value!r} is not a number") from None


def build_config(args) -> dict:
    raw = _load(args.config) if args.config else {}
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    raw = dict(raw)
    raw["mode"] = args.mode
    if args.model:
        raw["model"] = {"preset": args.model, "params": {}}
    if args.param:
        model = raw.get("model")
        if not isinstance(model, dict) or "preset" not in model:
            raise ConfigError("--param needs a preset model")
        model = {**model, "params": dict(model.get("params", {}))}
        model["params"].update(_parse_param(p) for p in args.param)
        raw["model"] = model

    def put(section, key, value):
        if value is not None:
            raw[section] = {**raw.get(section, {}), key: value}

    if args.tol is not None:
        put("tolerances", "alpha", args.tol)
    put("tolerances", "lambda", args.lambda_tol)
    put("recombination", "method", args.method)
    put("recombination", "checkpoints", args.checkpoints)
    put("oracle", "enabled", args.oracle)
    put("output", "path", args.out)
    put("output", "format", args.format)
    if args.timings:
        put("output", "timings", True)
    if args.mode == "sweep":
        put("sweep", "parameter", args.parameter)
        put("sweep", "from", args.start)
        put("sweep", "to", args.stop)
        put("sweep", "points", args.points)
        put("sweep", "jobs", args.jobs)
    return normalize_config(raw)


def _emit(text: str, path: str | None):
    if path:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _record_csv(record: dict) -> str:
    row = {"model": record.get("model", ""), "status": record["status"]}
    for key in ("alpha_T", "beta", "he_coeffs", "reduced_he_coeffs"):
        for label, v in zip(record.get("labels", []), record.get(key) or []):
            row[f"{key}[{label}]"] = float(v)
    for key, v in (record.get("residuals") or {}).items():
        row[key] = float(v)
    for key, v in (record.get("observables") or {}).items():
        row[key] = v
    if record["status"] != "ok":
        row["error"] = f"{record['error']['stage']}: {record['error']['message']}"
    return rows_to_csv([row])


def _cmd_validate(cfg) -> int:
    fmt = cfg["output"]["format"] or "json"
    try:
        model = build_model(cfg["model"])
    except AlgebraError as exc:
        report = {"status": "fail", "reps": {}, "error": str(exc)}
        _emit(to_json(report) if fmt == "json" else f"fail: {exc}\n", cfg["output"]["path"])
        return EXIT_VALIDATION
    reports = validate_model(model)
    ok = all(r.ok for r in reports.values())
    if fmt == "json":
        body = {"status": "pass" if ok else "fail", "model": model.name, "reps": {
            name: {"ok": r.ok, "jacobi_max": r.jacobi_max, "rep_max": r.rep_max,
                   "violations": [{"kind": v.kind, "indices": list(v.indices),
                                   "residual": v.residual} for v in r.violations]}
            for name, r in reports.items()}}
        text = to_json(body)
    else:
        text = "".join(f"{model.name} [{name}]: {r.summary()}\n" for name, r in reports.items())
    _emit(text, cfg["output"]["path"])
    return EXIT_OK if ok else EXIT_VALIDATION


def _cmd_run(cfg) -> int:
    try:
        model = build_model(cfg["model"])
    except AlgebraError:
        model = None  # reported by the validation stage
    record = run_pipeline(cfg, model)
    fmt = cfg["output"]["format"] or "json"
    _emit(to_json(record) if fmt == "json" else _record_csv(record), cfg["output"]["path"])
    if record["status"] == "ok":
        return EXIT_OK
    if record["error"]["stage"] == "validation":
        print(f"validation failed: {record['error']['message']}", file=sys.stderr)
        return EXIT_VALIDATION
    print(f"{record['error']['stage']} failed: {record['error']['message']}", file=sys.stderr)
    return EXIT_NUMERICAL


def _cmd_sweep(cfg) -> int:
    try:
        model = build_model(cfg["model"])
    except AlgebraError as exc:
        print(f"validation failed: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    bad = [f"{n}: {r.summary()}" for n, r in validate_model(model).items() if not r.ok]
    if bad:
        print("validation failed: " + "; ".join(bad), file=sys.stderr)
        return EXIT_VALIDATION
    rows = run_sweep(cfg)
    fmt = cfg["output"]["format"] or "csv"
    if fmt == "csv":
        text = rows_to_csv(rows)
    else:
        text = to_json({"schema": 1, "config": cfg, "columns": list(rows[0]), "rows": rows})
    _emit(text, cfg["output"]["path"])
    return EXIT_OK


def main(argv=None) -> int:
    try:
        args = _parser().parse_args(argv)
        cfg = build_config(args)
        return {"validate": _cmd_validate, "run": _cmd_run, "sweep": _cmd_sweep}[cfg["mode"]](cfg)
    except _UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_PARSE
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except SystemExit as exc:  # --help
        return int(exc.code or 0)


if __name__ == "__main__":
    sys.exit(main())

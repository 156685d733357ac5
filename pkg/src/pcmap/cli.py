"""Command line front end: ``pcmap analyze | sweep | witness | canonicalize | replay``.

Exit codes: 0 pass or consistent, 1 violation or failed replay, 2 usage error.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys

import numpy as np

from . import contractivity as ct
from . import entanglement as en
from . import maps as mp
from . import operators as ops
from . import positivity as pos
from . import serialization as ser
from .errors import InvalidInput

EXIT_OK, EXIT_VIOLATION, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


# ---------------------------------------------------------------------------
# Specs
# ---------------------------------------------------------------------------

def _parse_kv(spec: str) -> tuple[str, dict]:
    name, _, rest = spec.partition(":")
    params = {}
    if rest:
        for item in rest.split(","):
            key, eq, val = item.partition("=")
            if not eq or not key:
                raise UsageError(f"cannot parse parameter {item!r} in {spec!r}")
            try:
                params[key.strip()] = float(val)
            except ValueError:
                raise UsageError(f"parameter {key!r} in {spec!r} is not a number") from None
    return name.strip(), params


def _int_param(params, key, default=None):
    val = params.get(key, default)
    if val is None:
        raise UsageError(f"missing parameter {key!r}")
    if float(val) != int(val) or val < 1:
        raise UsageError(f"parameter {key!r} must be a positive integer")
    return int(val)


def parse_map_spec(spec: str) -> mp.QuantumMap:
    name, params = _parse_kv(spec)
    try:
        if name == "lambda":
            return mp.lambda_family(params["a"])
        if name == "omega":
            return mp.omega_family(params["eps"])
        if name == "phi_p":
            return mp.phi_p_family(_int_param(params, "d"), params["p"])
        if name == "transpose":
            return mp.transposition(_int_param(params, "d", 2))
        if name == "identity":
            return mp.identity_map(_int_param(params, "d", 2))
        if name == "reduction":
            return mp.reduction_map(_int_param(params, "d", 2))
    except KeyError as exc:
        raise UsageError(f"missing parameter {exc.args[0]!r} in map spec {spec!r}") from None
    except InvalidInput as exc:
        raise UsageError(f"invalid map spec {spec!r}: {exc}") from None
    raise UsageError(f"unknown map family {name!r}")


def parse_state_spec(spec: str) -> en.BipartiteState:
    name, params = _parse_kv(spec)
    if name != "iso":
        raise UsageError(f"unknown state family {name!r}")
    try:
        return en.isotropic_state(_int_param(params, "d", 2), params["f"])
    except KeyError:
        raise UsageError(f"missing parameter 'f' in state spec {spec!r}") from None
    except InvalidInput as exc:
        raise UsageError(f"invalid state spec {spec!r}: {exc}") from None


def _load_map(args) -> mp.QuantumMap:
    if args.map_file:
        return ser.map_from_json(ser.read_json(args.map_file))
    if not args.spec:
        raise UsageError("a map spec or --map-file is required")
    return parse_map_spec(args.spec)


def _load_state(args) -> en.BipartiteState:
    if args.state_file:
        files = args.state_file
        if len(files) != 1:
            raise UsageError("witness takes exactly one --state-file")
        return ser.state_from_json(ser.read_json(files[0]))
    if not args.spec:
        raise UsageError("a state spec or --state-file is required")
    return parse_state_spec(args.spec)


# ---------------------------------------------------------------------------
# Output
# ---------------------------------------------------------------------------

def _config(args, **extra) -> dict:
    cfg = {"seed": args.seed, "restarts": args.restarts, "iters": args.iters, "workers_independent": True}
    if args.tol is not None:
        cfg["tol"] = args.tol
    cfg.update(extra)
    return cfg


def _csv_text(rows: list[dict]) -> str:
    if not rows:
        return ""
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})
    return buf.getvalue()


def _emit(args, doc: dict, rows: list[dict] | None = None) -> None:
    if args.format == "csv":
        text = _csv_text(rows if rows is not None else [_flatten(doc)])
    else:
        text = ser.dumps(doc)
    if args.out:
        ser.write_atomic(args.out, text)
    else:
        sys.stdout.write(text)


def _flatten(doc: dict, prefix: str = "") -> dict:
    out = {}
    for key, val in doc.items():
        name = f"{prefix}{key}"
        if isinstance(val, dict):
            out.update(_flatten(val, name + "."))
        elif not isinstance(val, list):
            out[name] = val
    return out


def _float(x):
    return None if x is None else float(x)


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def cmd_analyze(args) -> int:
    phi = _load_map(args)
    tol = pos.VIOLATION_TOL if args.tol is None else args.tol
    cfg = _config(args, p_grid_size=args.grid)
    certs = []
    results: dict = {"map": phi.label, "dim": phi.dim}

    cp = pos.is_completely_positive(phi, tol)
    results["completely_positive"] = {"verdict": str(cp.kind), "lambda_min": cp.value}
    certs.append(ser.positivity_certificate(cp, phi, cfg))
    posv = pos.is_positive(phi, restarts=args.restarts, seed=args.seed, tol=tol, workers=args.workers)
    results["positive"] = {"verdict": str(posv.kind), "value": posv.value}
    certs.append(ser.positivity_certificate(posv, phi, cfg))
    for k in range(2, phi.dim):
        kp = pos.k_positivity_search(phi, k, restarts=args.restarts, seed=args.seed, tol=tol, workers=args.workers)
        results[f"{k}_positive"] = {"verdict": str(kp.kind), "value": kp.value}
        certs.append(ser.positivity_certificate(kp, phi, cfg))
    sw = pos.schwarz_check(phi, seed=args.seed)
    results["schwarz"] = {"verdict": str(sw.kind), "value": sw.value}
    certs.append(ser.positivity_certificate(sw, phi, cfg))
    if mp.is_unital(phi):
        kd = pos.kadison_check(phi, seed=args.seed)
        results["kadison"] = {"verdict": str(kd.kind), "value": kd.value}
        certs.append(ser.positivity_certificate(kd, phi, cfg))
    if mp.is_trace_preserving(phi) and mp.is_hermiticity_preserving(phi):
        scan = ct.hierarchy_scan(phi, restarts=args.restarts, iters=args.iters, seed=args.seed,
                                 p_grid_size=args.grid, workers=args.workers)
        levels = {}
        for k, cert in scan:
            levels[f"C_{k}"] = {"verdict": str(cert.verdict), "lhs": _float(cert.lhs), "rhs": _float(cert.rhs)}
            if "min_margin" in cert.details:
                levels[f"C_{k}"]["min_margin"] = cert.details["min_margin"]
            certs.append(ser.contractivity_certificate(cert, phi, cfg))
        results["partial_contractivity"] = levels
    else:
        results["partial_contractivity"] = "skipped: map is not trace and Hermiticity preserving"
    doc = {"schema_version": ser.SCHEMA_VERSION, "command": "analyze", "config": cfg, "results": results,
           "certificates": certs}
    _emit(args, doc)
    return EXIT_OK


def _family(name: str, param: str, value: float, dim: int):
    if name == "lambda" and param == "a":
        return mp.lambda_family(value)
    if name == "omega" and param == "eps":
        return mp.omega_family(value)
    if name == "phi_p" and param == "p":
        return mp.trace_normalized(mp.phi_p_family(dim, value))
    raise UsageError(f"unknown family/parameter pair {name!r}/{param!r}")


def _parse_range(text: str) -> tuple[float, float]:
    lo, sep, hi = text.partition("..")
    try:
        lo, hi = float(lo), float(hi)
    except ValueError:
        raise UsageError(f"cannot parse range {text!r} (expected lo..hi)") from None
    if not sep or not hi > lo:
        raise UsageError(f"empty range {text!r}")
    return lo, hi


def _bisect_flag(fn, lo, hi, width):
    """Boundary of a boolean ``fn`` with ``fn(lo) != fn(hi)``."""
    flo = fn(lo)
    while hi - lo > width:
        mid = (lo + hi) / 2
        if fn(mid) == flo:
            lo = mid
        else:
            hi = mid
    return (lo + hi) / 2


def cmd_sweep(args) -> int:
    lo, hi = _parse_range(args.range)
    grid = np.linspace(lo, hi, args.grid)
    rows, summary = [], {}
    if args.family == "iso-witness":
        if args.param != "f":
            raise UsageError("iso-witness sweeps the fidelity f")
        phi = parse_map_spec(args.map or "lambda:a=0.6")
        d = phi.dim
        if lo < 0 or hi > 1:
            raise UsageError("fidelity range must lie in [0, 1]")
        for f in grid:
            lam = en.witness_with_map(en.isotropic_state(d, float(f)), phi)
            rows.append({"f": float(f), "lambda_min": lam, "psd": lam >= -en.WITNESS_TOL})
        fn = lambda f: en.witness_with_map(en.isotropic_state(d, f), phi) >= 0  # noqa: E731
        summary["psd_boundaries"] = _boundaries(grid, [fn(float(f)) for f in grid], fn, 1e-8)
        summary["map"] = phi.label
    else:
        p_grid = args.p_grid
        # trace-preserving qubit families get the level-3 column
        level3 = args.family in ("lambda", "omega")

        def is_cp(x):
            return ops.lambda_min(_family(args.family, args.param, x, args.dim).choi) >= -pos.VIOLATION_TOL

        def c3_margin(x):
            phi = _family(args.family, args.param, x, args.dim)
            return min(ct.extension_feasibility(ct.canonical_restriction(phi, p)).best_lambda_min
                       for p in ct.chebyshev_grid(p_grid))

        for x in grid:
            x = float(x)
            try:
                phi = _family(args.family, args.param, x, args.dim)
            except InvalidInput as exc:
                raise UsageError(str(exc)) from None
            row = {args.param: x, "choi_lambda_min": ops.lambda_min(phi.choi)}
            row["cp"] = row["choi_lambda_min"] >= -pos.VIOLATION_TOL
            pv = pos.is_positive(phi, restarts=args.restarts, seed=args.seed, workers=args.workers)
            row["positive"] = str(pv.kind)
            row["positivity_value"] = pv.value
            if level3:
                sw = pos.schwarz_check(phi, samples=2000, seed=args.seed)
                row["schwarz"] = str(sw.kind)
                row["schwarz_value"] = sw.value
                row["c3_extension_margin"] = c3_margin(x)
                row["c3_extension_feasible"] = row["c3_extension_margin"] >= -ct.FEASIBILITY_TOL
            rows.append(row)
        summary["cp_boundaries"] = _boundaries(grid, [r["cp"] for r in rows], is_cp, 1e-8)
        if level3:
            summary["c3_extension_boundaries"] = _boundaries(
                grid, [r["c3_extension_feasible"] for r in rows],
                lambda x: c3_margin(x) >= -ct.FEASIBILITY_TOL, 1e-4)
            summary["c3_p_grid_size"] = p_grid
    cfg = _config(args, grid=args.grid, range=[lo, hi], family=args.family, param=args.param)
    summary_doc = {"schema_version": ser.SCHEMA_VERSION, "command": "sweep", "config": cfg, "summary": summary}
    if args.format == "csv":
        _emit(args, summary_doc, rows)
        if args.out:
            ser.write_json(args.out + ".summary.json", summary_doc)
        else:
            sys.stderr.write(ser.dumps(summary_doc))
    else:
        _emit(args, {**summary_doc, "rows": rows})
    return EXIT_OK


def _boundaries(grid, flags, fn, width):
    out = []
    for i in range(len(grid) - 1):
        if flags[i] != flags[i + 1]:
            x = _bisect_flag(fn, float(grid[i]), float(grid[i + 1]), width)
            out.append({"location": x, "left": bool(flags[i]), "right": bool(flags[i + 1])})
    return out


def cmd_witness(args) -> int:
    state = _load_state(args)
    cfg = _config(args)
    report = en.schmidt_number_bounds(state, seed=args.seed)
    results = {
        "state": state.label,
        "schmidt_number": {"lower_bound": report.lower_bound, "upper_bound": report.upper_bound,
                           "upper_bound_method": report.upper_bound_method,
                           "witnesses": [{"map": lbl, "lambda_min": lam} for lbl, lam in report.witnesses]},
    }
    certs = []
    outside = report.lower_bound > 1
    if state.dims == (2, 2):
        bank = en.default_contractive_bank(args.seed)
        classes = en.classify_new_hierarchy(state, bank)
        results["new_hierarchy"] = {f"E_{k}": v for k, v in classes.items()}
        results["bank"] = [{"map": e.map.label, "level": e.level} for e in bank]
        for e in bank:
            certs.append(ser.witness_certificate(state, e.map, en.witness_with_map(state, e.map), cfg))
        outside = outside or any(v == en.OUTSIDE for v in classes.values())
    doc = {"schema_version": ser.SCHEMA_VERSION, "command": "witness", "config": cfg, "results": results,
           "certificates": certs}
    _emit(args, doc)
    return EXIT_VIOLATION if outside else EXIT_OK


def cmd_canonicalize(args) -> int:
    files = list(args.files) + list(args.state_file or [])
    if len(files) != 3:
        raise UsageError("canonicalize needs exactly three density-operator files")
    rhos = [ser.density_from_json(ser.read_json(f)) for f in files]
    triple = ct.canonicalize_triple(*rhos)
    cfg = _config(args)
    doc = {"schema_version": ser.SCHEMA_VERSION, "command": "canonicalize", "config": cfg,
           "results": {"p": triple.p, "U": ser.encode_array(triple.U),
                       "span_residual": ct.span_residual(rhos, triple.basis)},
           "certificates": [ser.canonical_certificate(np.array(rhos), triple, cfg)]}
    _emit(args, doc)
    return EXIT_OK


def cmd_replay(args) -> int:
    try:
        doc = ser.read_json(args.file)
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read {args.file}: {exc}") from None
    tol = ser.REPLAY_TOL if args.tol is None else args.tol
    try:
        results = ser.replay_document(doc, tol)
    except InvalidInput as exc:
        sys.stderr.write(f"replay failed: {exc}\n")
        return EXIT_VIOLATION
    ok = all(r.passed for r in results)
    lines = [f"{'PASS' if r.passed else 'FAIL'} {r.operation} max_error={r.max_error!r} {r.message}".rstrip()
             for r in results]
    text = "\n".join(lines) + "\n"
    if args.out:
        ser.write_atomic(args.out, text)
    else:
        sys.stdout.write(text)
    return EXIT_OK if ok else EXIT_VIOLATION


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

def _default_seed() -> int:
    raw = os.environ.get("PCMAP_SEED")
    if raw is None:
        return 0
    try:
        return int(raw)
    except ValueError:
        raise UsageError(f"PCMAP_SEED must be an integer, got {raw!r}") from None


def _positive_int(text):
    val = int(text)
    if val < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return val


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="master seed (default: $PCMAP_SEED or 0)")
    common.add_argument("--restarts", type=_positive_int, default=16)
    common.add_argument("--iters", type=_positive_int, default=150)
    common.add_argument("--tol", type=float, default=None)
    common.add_argument("--out", default=None, help="output file (written atomically); default stdout")
    common.add_argument("--format", choices=("json", "csv"), default="json")
    common.add_argument("--workers", type=_positive_int, default=1)

    parser = argparse.ArgumentParser(prog="pcmap", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analyze", parents=[common], help="verdicts for one map")
    p.add_argument("spec", nargs="?", help="lambda:a=0.6 | omega:eps=0.55 | phi_p:d=3,p=1.5 | transpose:d=2")
    p.add_argument("--map-file")
    p.add_argument("--grid", type=_positive_int, default=41, help="p-grid size for level-3 certification")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("sweep", parents=[common], help="verdicts along a parameter range")
    p.add_argument("family", choices=("lambda", "omega", "phi_p", "iso-witness"))
    p.add_argument("param")
    p.add_argument("range", help="lo..hi")
    p.add_argument("--grid", type=_positive_int, default=101)
    p.add_argument("--p-grid", type=_positive_int, default=11, help="p-grid size of the level-3 column")
    p.add_argument("--dim", type=_positive_int, default=3, help="dimension for phi_p")
    p.add_argument("--map", help="witness map for iso-witness sweeps")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("witness", parents=[common], help="classify a bipartite state")
    p.add_argument("spec", nargs="?", help="iso:d=2,f=0.8")
    p.add_argument("--state-file", action="append")
    p.set_defaults(func=cmd_witness)

    p = sub.add_parser("canonicalize", parents=[common], help="canonical (U, p) of three qubit states")
    p.add_argument("files", nargs="*")
    p.add_argument("--state-file", action="append")
    p.set_defaults(func=cmd_canonicalize)

    p = sub.add_parser("replay", parents=[common], help="re-evaluate a certificate or report")
    p.add_argument("file")
    p.set_defaults(func=cmd_replay)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    try:
        if args.seed is None:
            args.seed = _default_seed()
        return args.func(args)
    except UsageError as exc:
        sys.stderr.write(f"pcmap: {exc}\n")
        return EXIT_USAGE
    except InvalidInput as exc:
        sys.stderr.write(f"pcmap: invalid input: {exc}\n")
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())

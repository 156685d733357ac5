"""JSON encoding of matrices, maps, states and replayable certificates.

Matrices are nested row-major lists of ``[re, im]`` pairs. Floats are
written with Python's shortest round-trip repr, so a reloaded matrix is
bit-identical. Certificates carry every input needed to re-evaluate the
recorded values without random numbers.
"""
from __future__ import annotations

import json
import os
import tempfile
from dataclasses import dataclass

import numpy as np

from . import contractivity as ct
from . import entanglement as en
from . import maps as mp
from . import operators as ops
from . import positivity as pos
from .errors import InvalidInput

SCHEMA_VERSION = "1"
REPLAY_TOL = 1e-8
CERTIFICATE_FIELDS = {"schema_version", "operation", "inputs", "verdict", "witness", "values", "config"}


# ---------------------------------------------------------------------------
# Matrices
# ---------------------------------------------------------------------------

def encode_array(a) -> list:
    """Nested list with ``[re, im]`` pairs at the leaves."""
    a = np.asarray(a, dtype=complex)
    pairs = np.stack([a.real, a.imag], axis=-1)
    return pairs.tolist()


def decode_array(data) -> np.ndarray:
    arr = np.asarray(data, dtype=float)
    if arr.ndim == 0 or arr.shape[-1] != 2:
        raise InvalidInput("expected [re, im] pairs")
    return arr[..., 0] + 1j * arr[..., 1]


def _check_fields(obj: dict, allowed: set, required: set, what: str):
    if not isinstance(obj, dict):
        raise InvalidInput(f"{what} must be a JSON object")
    unknown = set(obj) - allowed
    if unknown:
        raise InvalidInput(f"unknown fields in {what}: {sorted(unknown)}")
    missing = required - set(obj)
    if missing:
        raise InvalidInput(f"missing fields in {what}: {sorted(missing)}")


def map_to_json(phi: mp.QuantumMap) -> dict:
    return {"dim": phi.dim, "superop": encode_array(phi.superop), "label": phi.label}


def map_from_json(obj: dict) -> mp.QuantumMap:
    _check_fields(obj, {"dim", "superop", "label"}, {"dim", "superop"}, "map")
    return mp.QuantumMap(int(obj["dim"]), decode_array(obj["superop"]), obj.get("label", ""))


def state_to_json(state: en.BipartiteState) -> dict:
    return {"dims": list(state.dims), "rho": encode_array(state.rho), "label": state.label}


def state_from_json(obj: dict) -> en.BipartiteState:
    _check_fields(obj, {"dims", "rho", "label"}, {"dims", "rho"}, "state")
    return en.BipartiteState(tuple(obj["dims"]), decode_array(obj["rho"]), label=obj.get("label", ""))


def density_from_json(obj) -> np.ndarray:
    """A single density operator: either a bare matrix or ``{"rho": matrix}``."""
    if isinstance(obj, dict):
        _check_fields(obj, {"rho", "label"}, {"rho"}, "density operator")
        obj = obj["rho"]
    return ops.as_density(decode_array(obj))


# ---------------------------------------------------------------------------
# Files
# ---------------------------------------------------------------------------

def dumps(obj) -> str:
    return json.dumps(obj, indent=1, sort_keys=True) + "\n"


def write_atomic(path, text: str) -> None:
    """Write through a temporary file in the target directory, then rename."""
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_json(path, obj) -> None:
    write_atomic(path, dumps(obj))


def read_json(path):
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


# ---------------------------------------------------------------------------
# Certificates
# ---------------------------------------------------------------------------

def make_certificate(operation: str, inputs: dict, verdict: str, witness: dict | None, values: dict,
                     config: dict) -> dict:
    if "seed" not in config:
        raise InvalidInput("config snapshot must record the seed")
    return {
        "schema_version": SCHEMA_VERSION,
        "operation": operation,
        "inputs": inputs,
        "verdict": str(verdict),
        "witness": witness,
        "values": values,
        "config": config,
    }


CONTRACTION_OPERATIONS = {
    "violation_search", "lemma3s_condition_B", "certify_c3_covariant", "positivity_transfer",
    "qubit_positivity", "choi_psd", "propagated",
}


def contractivity_certificate(cert: ct.ContractivityCertificate, phi: mp.QuantumMap, config: dict) -> dict:
    op = cert.provenance.get("operation", "propagated")
    inputs = {"map": map_to_json(phi), "k": cert.k}
    if cert.violated:
        witness = {"rhos": encode_array(cert.witness["rhos"]), "coeffs": encode_array(cert.witness["coeffs"])}
        return make_certificate(op, inputs, cert.verdict, witness, {"lhs": cert.lhs, "rhs": cert.rhs}, config)
    if cert.member and op == "certify_c3_covariant":
        inputs["p_points"] = list(cert.provenance["p_points"])
        witness = {"free_images": encode_array(cert.provenance["free_images"])}
        return make_certificate(op, inputs, cert.verdict, witness, {"margins": list(cert.provenance["margins"])},
                                config)
    if cert.member and op in ("choi_psd", "qubit_positivity"):
        return make_certificate(op, inputs, cert.verdict, None, {"lambda_min": cert.provenance["lambda_min"]},
                                config)
    values = {} if cert.lhs is None else {"lhs": cert.lhs, "rhs": cert.rhs}
    return make_certificate(op, inputs, cert.verdict, None, values, config)


def positivity_certificate(verdict: pos.PositivityVerdict, phi: mp.QuantumMap, config: dict) -> dict:
    witness = None
    if verdict.witness is not None:
        witness = {key: encode_array(val) for key, val in verdict.witness.items()}
    return make_certificate(verdict.operation, {"map": map_to_json(phi)}, verdict.kind, witness,
                            {"value": verdict.value}, {**config, "budget": verdict.budget})


def witness_certificate(state: en.BipartiteState, phi: mp.QuantumMap, value: float, config: dict) -> dict:
    witness = None
    verdict = pos.Verdict.NO_VIOLATION_FOUND
    if value < -en.WITNESS_TOL:
        verdict = pos.Verdict.CERTIFIED_VIOLATION
        _, vecs = ops.eigh(en.apply_local(state, phi), 1e-10)
        witness = {"vector": encode_array(vecs[:, 0])}
    return make_certificate("witness_with_map", {"state": state_to_json(state), "map": map_to_json(phi)},
                            verdict, witness, {"lambda_min": value}, config)


def canonical_certificate(rhos, triple: ct.CanonicalTriple, config: dict) -> dict:
    return make_certificate("canonicalize_triple", {"rhos": encode_array(rhos)}, pos.Verdict.CERTIFIED_MEMBER,
                            {"U": encode_array(triple.U)}, {"p": triple.p}, config)


# ---------------------------------------------------------------------------
# Replay
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ReplayResult:
    passed: bool
    operation: str
    recorded: dict
    recomputed: dict
    max_error: float
    message: str = ""


def _compare(recorded: dict, recomputed: dict) -> float:
    err = 0.0
    for key, val in recomputed.items():
        rec = np.asarray(recorded[key], dtype=float)
        new = np.asarray(val, dtype=float)
        if rec.shape != new.shape:
            return np.inf
        finite = np.isfinite(rec) & np.isfinite(new)
        if np.any(np.isfinite(rec) != np.isfinite(new)) or np.any(rec[~finite] != new[~finite]):
            return np.inf
        if finite.any():
            err = max(err, float(np.max(np.abs(rec[finite] - new[finite]))))
    return err


def _replay_contraction(cert):
    phi = map_from_json(cert["inputs"]["map"])
    verdict = cert["verdict"]
    if verdict == "CERTIFIED_VIOLATION":
        rhos = decode_array(cert["witness"]["rhos"])
        coeffs = decode_array(cert["witness"]["coeffs"])
        if len(rhos) != cert["inputs"]["k"]:
            return {}, "witness size does not match the level"
        for R in rhos:
            ops.as_density(R)
        if ops.gram_min_singular(rhos) <= ct.INDEPENDENCE_TOL:
            return {}, "witness density operators are linearly dependent"
        lhs, rhs = ct.contraction_sides(phi, rhos, coeffs)
        note = "" if lhs > rhs + ct.VIOLATION_TOL else "replayed witness does not violate"
        return {"lhs": lhs, "rhs": rhs}, note
    op = cert["operation"]
    if op == "certify_c3_covariant" and verdict == "CERTIFIED_MEMBER":
        images = decode_array(cert["witness"]["free_images"])
        margins = [ct.extension_margin(ct.canonical_restriction(phi, p), Y)
                   for p, Y in zip(cert["inputs"]["p_points"], images)]
        note = "" if min(margins) >= -ct.FEASIBILITY_TOL else "a recorded extension is not completely positive"
        return {"margins": margins}, note
    if op == "choi_psd" and verdict == "CERTIFIED_MEMBER":
        value = ops.lambda_min(phi.choi)
        return {"lambda_min": value}, "" if value >= -ct.VIOLATION_TOL else "Choi matrix is not PSD"
    if op == "qubit_positivity" and verdict == "CERTIFIED_MEMBER":
        c = ct.certify_membership(phi, cert["inputs"]["k"])
        return {"lambda_min": c.provenance["lambda_min"]}, "" if c.member else "positivity check failed"
    return {}, ""


def _replay_positivity(cert):
    phi = map_from_json(cert["inputs"]["map"])
    op, w = cert["operation"], cert["witness"]
    if op == "is_completely_positive":
        value = ops.lambda_min(phi.choi)
    elif w is None:
        return {}, ""
    elif op in ("k_positivity_search",):
        value = pos.choi_expectation(phi, decode_array(w["psi"]))
    elif op == "schwarz_check":
        value = float(pos.schwarz_gaps(phi, decode_array(w["X"])[None])[0])
    elif op == "kadison_check":
        value = float(pos.kadison_gaps(phi, decode_array(w["X"])[None])[0])
    elif op == "contraction_check":
        value = float(pos.contraction_gaps(phi, decode_array(w["X"])[None])[0])
    elif op == "check_covariance":
        value = ct.covariance_residual(phi, decode_array(w["U"]))[0]
    else:
        raise InvalidInput(f"no replay rule for {op!r}")
    return {"value": value}, ""


def _replay_witness(cert):
    state = state_from_json(cert["inputs"]["state"])
    phi = map_from_json(cert["inputs"]["map"])
    note = ""
    if cert["witness"] is not None:
        v = decode_array(cert["witness"]["vector"])
        v = v / np.linalg.norm(v)
        if np.real(v.conj() @ en.apply_local(state, phi) @ v) >= -en.WITNESS_TOL:
            note = "recorded vector does not witness a negative eigenvalue"
    return {"lambda_min": en.witness_with_map(state, phi)}, note


def _replay_canonical(cert):
    rhos = decode_array(cert["inputs"]["rhos"])
    triple = ct.canonicalize_triple(*rhos)
    recorded = ct.CanonicalTriple(decode_array(cert["witness"]["U"]), cert["values"]["p"])
    res = ct.span_residual(rhos, recorded.basis)
    return {"p": triple.p}, "" if res < 1e-10 else f"recorded (U, p) does not span the triple ({res:.2e})"


REPLAY_RULES = {op: _replay_contraction for op in CONTRACTION_OPERATIONS}
REPLAY_RULES.update({
    op: _replay_positivity for op in (
        "is_completely_positive", "k_positivity_search", "schwarz_check", "kadison_check",
        "contraction_check", "check_covariance",
    )
})
REPLAY_RULES["witness_with_map"] = _replay_witness
REPLAY_RULES["canonicalize_triple"] = _replay_canonical


def validate_certificate(cert: dict) -> None:
    _check_fields(cert, CERTIFICATE_FIELDS, CERTIFICATE_FIELDS, "certificate")
    if cert["schema_version"] != SCHEMA_VERSION:
        raise InvalidInput(f"unsupported schema version {cert['schema_version']!r}")
    if cert["operation"] not in REPLAY_RULES:
        raise InvalidInput(f"unknown operation {cert['operation']!r}")
    if cert["verdict"] not in {v.value for v in pos.Verdict}:
        raise InvalidInput(f"unknown verdict {cert['verdict']!r}")
    if not isinstance(cert["config"], dict) or "seed" not in cert["config"]:
        raise InvalidInput("certificate config must record the seed")
    if cert["verdict"] == "CERTIFIED_VIOLATION" and cert["witness"] is None:
        raise InvalidInput("a violation certificate must carry a witness")


def replay(cert: dict, tol: float = REPLAY_TOL) -> ReplayResult:
    """Re-evaluate a certificate from its recorded inputs and witness."""
    validate_certificate(cert)
    recomputed, note = REPLAY_RULES[cert["operation"]](cert)
    recorded = cert["values"]
    missing = set(recomputed) - set(recorded)
    if missing:
        return ReplayResult(False, cert["operation"], recorded, recomputed, np.inf,
                            f"recorded values lack {sorted(missing)}")
    err = _compare(recorded, recomputed)
    passed = err <= tol and not note
    message = note or ("" if passed else f"values differ by {err:.3e}")
    return ReplayResult(passed, cert["operation"], recorded, recomputed, err, message)


def replay_document(doc: dict, tol: float = REPLAY_TOL) -> list[ReplayResult]:
    """Replay a single certificate or every certificate embedded in a report."""
    if not isinstance(doc, dict):
        raise InvalidInput("expected a JSON object")
    if "certificates" in doc:
        _check_fields(doc, {"schema_version", "command", "config", "results", "summary", "certificates"},
                      {"schema_version", "certificates"}, "report")
        if doc["schema_version"] != SCHEMA_VERSION:
            raise InvalidInput(f"unsupported schema version {doc['schema_version']!r}")
        return [replay(c, tol) for c in doc["certificates"]]
    return [replay(doc, tol)]

import copy
import json

import numpy as np
import pytest

from pcmap import contractivity as ct
from pcmap import entanglement as ent
from pcmap import maps as mp
from pcmap import operators as ops
from pcmap import positivity as pos
from pcmap import serialization as ser
from pcmap.errors import InvalidInput

CFG = {"seed": 0}


def test_array_round_trip_is_exact():
    a = ops.ginibre(ops.make_rng(3), 3, 4)
    text = json.dumps(ser.encode_array(a))
    assert np.array_equal(ser.decode_array(json.loads(text)), a)
    assert ser.encode_array(np.array([[1 + 2j]])) == [[[1.0, 2.0]]]
    with pytest.raises(InvalidInput):
        ser.decode_array([1.0, 2.0, 3.0])


def test_map_and_state_round_trip():
    phi = mp.omega_family(0.55)
    back = ser.map_from_json(json.loads(ser.dumps(ser.map_to_json(phi))))
    assert np.array_equal(back.superop, phi.superop) and back.label == phi.label
    st = ent.isotropic_state(2, 0.3)
    back = ser.state_from_json(json.loads(ser.dumps(ser.state_to_json(st))))
    assert np.array_equal(back.rho, st.rho) and back.dims == (2, 2)


def test_unknown_fields_rejected():
    obj = ser.map_to_json(mp.transposition(2))
    obj["extra"] = 1
    with pytest.raises(InvalidInput):
        ser.map_from_json(obj)
    cert = ser.positivity_certificate(pos.is_completely_positive(mp.lambda_family(0.6)), mp.lambda_family(0.6), CFG)
    cert["note"] = "x"
    with pytest.raises(InvalidInput):
        ser.replay(cert)


def test_certificate_requires_seed():
    with pytest.raises(InvalidInput):
        ser.make_certificate("choi_psd", {}, "CERTIFIED_MEMBER", None, {}, {})


def test_write_atomic(tmp_path):
    path = tmp_path / "sub" / "out.json"
    ser.write_json(path, {"b": 1, "a": [1.5]})
    assert ser.read_json(path) == {"a": [1.5], "b": 1}
    assert [p.name for p in path.parent.iterdir()] == ["out.json"]


def _replays(cert):
    text = ser.dumps(cert)
    res = ser.replay(json.loads(text))
    assert res.passed, res.message
    return res


def test_violation_certificate_replays():
    T = mp.transposition(2)
    c = ct.lemma3s_condition_B(T, 0.75, B=ct.TRANSPOSITION_WITNESS_B)
    cert = ser.contractivity_certificate(c, T, CFG)
    res = _replays(cert)
    assert res.max_error < 1e-12
    lhs, rhs = (0.75 + np.sqrt(0.0625 + 16), 0.25 + np.sqrt(0.5625 + 16))
    assert abs(cert["values"]["lhs"] - lhs) < 1e-9 and abs(cert["values"]["rhs"] - rhs) < 1e-9


def test_tampered_witness_fails():
    T = mp.transposition(2)
    cert = json.loads(ser.dumps(ser.contractivity_certificate(ct.violation_search(T, 3), T, CFG)))
    bad = copy.deepcopy(cert)
    bad["witness"]["coeffs"][0][0][0][0] += 1e-6
    assert not ser.replay(bad).passed
    bad = copy.deepcopy(cert)
    bad["values"]["lhs"] += 1e-6
    assert not ser.replay(bad).passed
    bad = copy.deepcopy(cert)
    bad["schema_version"] = "2"
    with pytest.raises(InvalidInput):
        ser.replay(bad)
    bad = copy.deepcopy(cert)
    bad["witness"] = None
    with pytest.raises(InvalidInput):
        ser.replay(bad)


def test_member_certificates_replay():
    lam = mp.lambda_family(0.6)
    _replays(ser.contractivity_certificate(ct.certify_c3_covariant(lam, p_grid_size=11), lam, CFG))
    cp = mp.lambda_family(0.3)
    _replays(ser.contractivity_certificate(ct.certify_membership(cp, 4), cp, CFG))
    T = mp.transposition(2)
    _replays(ser.contractivity_certificate(ct.certify_membership(T, 2), T, CFG))


def test_member_certificate_with_wrong_map_fails():
    lam = mp.lambda_family(0.6)
    cert = json.loads(ser.dumps(ser.contractivity_certificate(ct.certify_c3_covariant(lam, p_grid_size=11), lam,
                                                               CFG)))
    cert["inputs"]["map"] = ser.map_to_json(mp.lambda_family(0.7))
    assert not ser.replay(cert).passed


def test_positivity_certificates_replay():
    phi = mp.phi_p_family(3, 1.5)
    lam, T, rand = mp.lambda_family(0.8), mp.transposition(2), mp.sample_tp_map(2, seed=1)
    cases = [
        (pos.is_completely_positive(phi), phi),
        (pos.k_positivity_search(phi, 2), phi),
        (pos.schwarz_check(lam), lam),
        (pos.kadison_check(T), T),
        (ct.check_covariance(rand), rand),
    ]
    for v, m in cases:
        _replays(ser.positivity_certificate(v, m, CFG))


def test_witness_and_canonical_certificates_replay():
    st = ent.isotropic_state(2, 0.8)
    lam = mp.lambda_family(2 / 3)
    cert = ser.witness_certificate(st, lam, ent.witness_with_map(st, lam), CFG)
    assert cert["verdict"] == "CERTIFIED_VIOLATION"
    _replays(cert)
    rhos = np.array([ops.sample_density(2, seed=i) for i in range(3)])
    _replays(ser.canonical_certificate(rhos, ct.canonicalize_triple(*rhos), CFG))


def test_hierarchy_certificates_replay():
    T = mp.transposition(2)
    for _, c in ct.hierarchy_scan(T, p_grid_size=11):
        _replays(ser.contractivity_certificate(c, T, CFG))


def test_report_replay():
    lam = mp.lambda_family(0.6)
    doc = {"schema_version": "1", "command": "test", "config": CFG,
           "certificates": [ser.contractivity_certificate(ct.certify_membership(lam, 4), lam, CFG)]}
    assert all(r.passed for r in ser.replay_document(json.loads(ser.dumps(doc))))
    doc["extra"] = {}
    with pytest.raises(InvalidInput):
        ser.replay_document(doc)

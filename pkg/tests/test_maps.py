import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pcmap import maps as mp
from pcmap import operators as ops
from pcmap.errors import DependentBasis, DimensionMismatch, InvalidInput


def test_apply_examples():
    X = ops.sample_hermitian(2, seed=0)
    assert np.abs(mp.apply(mp.identity_map(2), X) - X).max() < 1e-15
    assert np.abs(mp.apply(mp.lambda_family(1), ops.SIGMA_3) + ops.SIGMA_3).max() < 1e-15
    assert np.abs(mp.apply(mp.transposition(2), ops.SIGMA_2) + ops.SIGMA_2).max() < 1e-15
    M = np.array([[1, 2], [3, 4]], dtype=complex)
    assert np.abs(mp.apply(mp.transposition(2), M) - M.T).max() < 1e-15
    with pytest.raises(DimensionMismatch):
        mp.apply(mp.identity_map(2), np.eye(3))


def test_vec_convention():
    A, X, B = (ops.ginibre(ops.make_rng(1, i), 3, 3) for i in range(3))
    assert np.abs(mp.vec(A @ X @ B) - np.kron(B.T, A) @ mp.vec(X)).max() < 1e-12
    assert np.abs(mp.unvec(mp.vec(X), 3) - X).max() == 0


def test_compose_and_tensor():
    T = mp.transposition(2)
    assert np.abs(mp.compose(T, T).superop - np.eye(4)).max() < 1e-15
    assert np.abs(mp.tensor_with_identity(mp.identity_map(2), 3).superop - np.eye(36)).max() < 1e-15
    assert mp.tensor_with_identity(T, 1) is T
    out = mp.apply(mp.tensor_with_identity(T, 2), ops.max_entangled_projector(2))
    assert abs(ops.lambda_min(out) + 0.5) < 1e-12


def test_tensor_with_identity_agrees_with_blockwise():
    phi = mp.sample_tp_map(2, seed=3)
    Y = ops.sample_hermitian(6, seed=4)
    lifted = mp.tensor_with_identity(phi, 3)
    assert np.abs(mp.apply(lifted, Y) - mp.apply_id_tensor(phi, Y, 3)).max() < 1e-12


def test_choi_examples():
    lam = np.linalg.eigvalsh(mp.choi(mp.lambda_family(0.5)))
    assert abs(lam[0]) < 1e-15
    C = mp.choi(mp.identity_map(2))
    assert np.abs(C - ops.max_entangled_projector(2)).max() < 1e-15
    assert np.linalg.matrix_rank(C) == 1
    om = mp.omega_family(0.3)
    assert np.abs(mp.map_from_choi(mp.choi(om)).superop - om.superop).max() < 1e-12


def test_lambda_choi_spectrum():
    for a in np.linspace(0, 1.5, 13):
        lam = np.linalg.eigvalsh(mp.choi(mp.lambda_family(a)))
        expect = np.sort([(1 - 2 * a) / (2 * (2 - a))] + [1 / (2 * (2 - a))] * 3)
        assert np.abs(lam - expect).max() < 1e-12


def test_choi_partial_trace_tracks_tp():
    for phi in (mp.lambda_family(0.7), mp.omega_family(0.2), mp.sample_cptp(3, seed=1)):
        d = phi.dim
        assert np.abs(ops.partial_trace(phi.choi, (d, d), keep=0) - np.eye(d) / d).max() < 1e-10
    double = mp.from_function(lambda X: 2 * X, 2)
    assert np.abs(ops.partial_trace(double.choi, (2, 2), keep=0) - np.eye(2) / 2).max() > 0.1


def test_predicates():
    for a in (0, 0.3, 1.0, 1.7):
        assert mp.is_trace_preserving(mp.lambda_family(a))
    assert mp.is_unital(mp.omega_family(0.4))
    assert not mp.is_trace_preserving(mp.from_function(lambda X: 2 * X, 2))
    assert mp.is_hermiticity_preserving(mp.transposition(3))
    assert not mp.is_hermiticity_preserving(mp.from_function(lambda X: 1j * X, 2))


def test_family_identities():
    assert np.abs(mp.lambda_family(0).superop - mp.completely_depolarizing(2).superop).max() < 1e-15
    assert np.abs(mp.omega_family(1).superop - mp.completely_depolarizing(2).superop).max() < 1e-15
    # Lambda_1 = reduction map / (2 - 1)
    assert np.abs(mp.lambda_family(1).superop - mp.reduction_map(2).superop).max() < 1e-15
    a = 0.4
    scaled = mp.phi_p_family(2, 1 / a).superop * a / (2 - a)
    assert np.abs(mp.lambda_family(a).superop - scaled).max() < 1e-12
    with pytest.raises(InvalidInput):
        mp.lambda_family(2)


def test_restrict():
    r = mp.restrict(mp.identity_map(2), [ops.SIGMA_1])
    assert np.abs(r.images[0] - ops.SIGMA_1).max() == 0
    a, p = 0.6, 0.3
    X3 = np.diag([p, 1 - p])
    r = mp.restrict(mp.lambda_family(a), [ops.SIGMA_1, ops.SIGMA_2, X3])
    assert np.abs(r.images[0] + a / (2 - a) * ops.SIGMA_1).max() < 1e-15
    assert np.abs(r.images[1] + a / (2 - a) * ops.SIGMA_2).max() < 1e-15
    assert np.abs(r.images[2] - (np.eye(2) - a * X3) / (2 - a)).max() < 1e-15
    with pytest.raises(DependentBasis):
        mp.restrict(mp.identity_map(2), [ops.SIGMA_1, ops.SIGMA_1])


def test_choi_application_identity():
    for i in range(20):
        phi = mp.sample_tp_map(3, seed=i)
        X = ops.ginibre(ops.make_rng(i), 3, 3)
        # Phi[X] = d Tr_1[(X^T (x) 1) C]
        via_choi = 3 * ops.partial_trace(np.kron(X.T, np.eye(3)) @ phi.choi, (3, 3), keep=1)
        assert np.abs(mp.apply(phi, X) - via_choi).max() < 1e-12


def test_compose_associative():
    f, g, h = (mp.sample_tp_map(2, seed=i) for i in range(3))
    left = mp.compose(mp.compose(f, g), h).superop
    right = mp.compose(f, mp.compose(g, h)).superop
    assert np.abs(left - right).max() < 1e-12
    one = mp.identity_map(2)
    assert np.abs(mp.compose(f, one).superop - f.superop).max() < 1e-15


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2**31))
def test_tp_preserves_trace(seed):
    phi = mp.sample_tp_map(3, seed=seed)
    X = ops.sample_hermitian(3, seed=seed)
    assert abs(np.trace(mp.apply(phi, X)) - np.trace(X)) < 1e-10
    Y = mp.apply(phi, X)
    assert np.abs(Y - Y.conj().T).max() < 1e-10


def test_data_processing_cptp():
    for i in range(200):
        phi = mp.sample_cptp(2 + i % 2, seed=(21, i))
        d = phi.dim
        rho, sigma = ops.sample_density(d, seed=(22, i)), ops.sample_density(d, seed=(23, i))
        before = ops.relative_entropy(rho, sigma)
        after = ops.relative_entropy(mp.apply(phi, rho), mp.apply(phi, sigma))
        assert after <= before + 1e-8


def test_data_processing_ptp_sampled():
    # conjecture-level check for positive (not completely positive) maps
    for i in range(100):
        phi = mp.sample_ptp(2, seed=(24, i))
        rho, sigma = ops.sample_density(2, seed=(25, i)), ops.sample_density(2, seed=(26, i))
        before = ops.relative_entropy(rho, sigma)
        after = ops.relative_entropy(mp.apply(phi, rho), mp.apply(phi, sigma))
        assert after <= before + 1e-8


def test_sample_cptp_is_cptp():
    for i in range(10):
        phi = mp.sample_cptp(3, seed=i)
        assert mp.is_trace_preserving(phi)
        assert ops.lambda_min(phi.choi) > -1e-12

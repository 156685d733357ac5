import numpy as np
import pytest

from pcmap import contractivity as ct
from pcmap import entanglement as ent
from pcmap import maps as mp
from pcmap import operators as ops
from pcmap.entanglement import CONSISTENT, OUTSIDE
from pcmap.errors import DimensionMismatch, InvalidInput, PreconditionFailed


def test_schmidt_rank_examples():
    prod = np.kron([1, 0], [0, 1]).astype(complex)
    assert ent.schmidt_rank(prod, (2, 2)) == 1
    bell = np.array([1, 0, 0, 1]) / np.sqrt(2)
    assert ent.schmidt_rank(bell, (2, 2)) == 2
    skew = np.array([np.sqrt(0.99), 0, 0, np.sqrt(0.01)])
    assert ent.schmidt_rank(skew, (2, 2)) == 2
    with pytest.raises(InvalidInput):
        ent.schmidt_rank(bell)


def test_isotropic_state_examples():
    for d in (2, 3):
        rho = ent.isotropic_state(d, 1 / d**2).rho
        assert np.abs(rho - np.eye(d * d) / d**2).max() < 1e-15
        assert np.abs(ent.isotropic_state(d, 1).rho - ops.max_entangled_projector(d)).max() < 1e-15
    lam = np.linalg.eigvalsh(ent.isotropic_state(2, 0.8).rho)
    assert np.abs(lam - np.r_[[0.2 / 3] * 3, 0.8]).max() < 1e-12
    with pytest.raises(InvalidInput):
        ent.isotropic_state(2, 1.2)


def test_isotropic_fidelity_roundtrip():
    assert abs(ent.isotropic_fidelity(ent.isotropic_state(3, 0.37)) - 0.37) < 1e-12
    assert ent.isotropic_fidelity(ent.sample_separable((2, 2), seed=1)) is None


def test_bipartite_state_validation():
    with pytest.raises(DimensionMismatch):
        ent.BipartiteState((2, 3), np.eye(4) / 4)
    with pytest.raises(InvalidInput):
        ent.BipartiteState((2, 2), np.eye(4))


def test_isotropic_closed_form_matrix():
    worst = 0.0
    for a in np.linspace(0, 1, 5):
        for f in np.linspace(0, 1, 5):
            out = ent.apply_local(ent.isotropic_state(2, f), mp.lambda_family(a))
            worst = max(worst, np.abs(out - ent.lambda_isotropic_closed_form(a, f)).max())
    assert worst < 1e-12


def test_isotropic_thresholds():
    # the boundary sits at f = 1 / (2a) for Lambda_a and at f = 1/2 + eps / (4 (1 - eps)) for Omega_eps
    for a in (0.55, 0.6, 0.65, 2 / 3):
        assert abs(ent.isotropic_threshold(mp.lambda_family(a)) - 1 / (2 * a)) < 1e-8
    for eps in (0.5, 0.55, 0.6):
        assert abs(ent.isotropic_threshold(mp.omega_family(eps)) - (0.5 + eps / (4 * (1 - eps)))) < 1e-8
    # at the edge of the certified ranges both give 3/4
    assert abs(ent.isotropic_threshold(mp.lambda_family(2 / 3)) - 0.75) < 1e-8
    assert abs(ent.isotropic_threshold(mp.omega_family(0.5)) - 0.75) < 1e-8


def test_psd_boundary_needs_sign_change():
    with pytest.raises(InvalidInput):
        ent.psd_boundary(lambda f: 1.0, 0, 1)


def test_witness_examples():
    prod = ent.BipartiteState((2, 2), np.kron(ops.sample_density(2, seed=1), ops.sample_density(2, seed=2)))
    for entry in ent.default_positive_bank(2):
        assert ent.witness_with_map(prod, entry.map) >= -1e-9
    assert ent.witness_with_map(ent.isotropic_state(2, 0.8), mp.transposition(2)) < -1e-9
    with pytest.raises(DimensionMismatch):
        ent.witness_with_map(prod, mp.transposition(3))


def test_separable_states_never_witnessed():
    bank = ent.default_positive_bank(2) + list(ent.default_contractive_bank())
    for i in range(500):
        state = ent.sample_separable((2, 2), seed=(61, i))
        for entry in bank:
            assert ent.witness_with_map(state, entry.map) >= -1e-9


def test_schmidt_number_examples():
    rep = ent.schmidt_number_bounds(ent.isotropic_state(3, 0.6))
    assert rep.lower_bound >= 2
    assert 1 <= rep.lower_bound <= rep.upper_bound <= 3
    pure = ent.BipartiteState((3, 3), ops.max_entangled_projector(3))
    rep = ent.schmidt_number_bounds(pure)
    assert rep.lower_bound == rep.upper_bound == 3
    sep = ent.sample_separable((3, 3), seed=4)
    rep = ent.schmidt_number_bounds(sep)
    assert rep.upper_bound == 1 and rep.upper_bound_method == "recorded decomposition"
    with pytest.raises(InvalidInput):
        ent.schmidt_number_bounds(ent.sample_separable((2, 3), seed=0))


def test_schmidt_number_fidelity_rule():
    d = 3
    for f in (0.2, 0.34, 0.5, 0.67, 0.9):
        rep = ent.schmidt_number_bounds(ent.isotropic_state(d, f), search=False)
        assert rep.lower_bound >= min(int(np.ceil(f * d - 1e-12)), d)


def test_decomposition_search_reconstructs():
    state = ent.isotropic_state(2, 0.4)
    parts = ent.decomposition_search(state, 1, seed=0)
    assert parts is not None
    rec = sum(w * psi.projector() for w, psi in parts)
    assert np.abs(rec - state.rho).max() < 1e-8
    assert all(ent.schmidt_rank(psi) == 1 for _, psi in parts)
    # an entangled pure state has no rank-1 decomposition
    bell = ent.BipartiteState((2, 2), ops.max_entangled_projector(2))
    assert ent.decomposition_search(bell, 1, seed=0, restarts=1, iters=200) is None


def test_classify_examples():
    bank = list(ent.default_contractive_bank())
    assert all(v == CONSISTENT for v in ent.classify_new_hierarchy(ent.isotropic_state(2, 0.4), bank).values())
    mid = ent.classify_new_hierarchy(ent.isotropic_state(2, 0.6), bank)
    assert mid[1] == mid[2] == OUTSIDE and mid[3] == CONSISTENT
    high = ent.classify_new_hierarchy(ent.isotropic_state(2, 0.8), bank)
    assert high[1] == high[2] == high[3] == OUTSIDE and high[4] == CONSISTENT


def test_classify_with_lambda_06_bank():
    lam = mp.lambda_family(0.6)
    bank = [ent.BankEntry(lam, 3, ct.certify_c3_covariant(lam, p_grid_size=21))]
    # Lambda_0.6 only excludes f > 5/6
    assert ent.classify_new_hierarchy(ent.isotropic_state(2, 0.8), bank)[3] == CONSISTENT
    assert ent.classify_new_hierarchy(ent.isotropic_state(2, 0.9), bank)[3] == OUTSIDE


def test_classify_is_monotone():
    bank = list(ent.default_contractive_bank())
    for f in np.linspace(0.25, 1, 16):
        verdicts = ent.classify_new_hierarchy(ent.isotropic_state(2, f), bank)
        levels = sorted(verdicts)
        for k in levels:
            if verdicts[k] == OUTSIDE:
                assert all(verdicts[j] == OUTSIDE for j in levels if j <= k)


def test_classify_rejects_uncertified():
    with pytest.raises(PreconditionFailed):
        ent.classify_new_hierarchy(ent.isotropic_state(2, 0.5), [ent.BankEntry(mp.transposition(2), 2)])

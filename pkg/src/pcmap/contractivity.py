"""k-partial contractivity.

A trace- and Hermiticity-preserving map ``Phi`` is k-partially contractive
when ``||(id (x) Phi)[X]||_tr <= ||X||_tr`` for every Hermitian ``X`` in
``B_H (x) span{rho_1, ..., rho_k}`` and every linearly independent family of
density operators. Level 1 is positivity, level ``d^2`` complete positivity.

For qubits every 3-dimensional span of density operators is a unitary
rotation of ``span{sigma_1, sigma_2, diag(p, 1 - p)}``. For unitarily
covariant maps this reduces level 3 to a one-parameter family of canonical
subspaces, and a CPTP extension of the map restricted to each canonical
subspace certifies membership.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize, minimize_scalar

from . import maps as mp
from . import operators as ops
from . import positivity as pos
from ._parallel import run_indexed
from .errors import DegenerateTriple, DependentBasis, InvalidInput, PreconditionFailed
from .positivity import PositivityVerdict, Verdict

VIOLATION_TOL = 1e-9
FEASIBILITY_TOL = 1e-9
INDEPENDENCE_TOL = 1e-8

# B_1, B_2, B_3 of the transposition counterexample
TRANSPOSITION_WITNESS_B = (
    ops.SIGMA_1.copy(),
    np.array([[0, 1j], [-1j, 0]], dtype=complex),
    np.diag([1.0, 0.0]).astype(complex),
)


def x3(p: float) -> np.ndarray:
    return np.diag([p, 1.0 - p]).astype(complex)


def canonical_basis(p: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    return ops.SIGMA_1, ops.SIGMA_2, x3(p)


# ---------------------------------------------------------------------------
# Canonical triples
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class CanonicalTriple:
    U: np.ndarray
    p: float

    @property
    def basis(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """``U X_k U^dag`` for the canonical ``X_1, X_2, X_3``."""
        return tuple(self.U @ X @ self.U.conj().T for X in canonical_basis(self.p))

    @property
    def densities(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Three density operators spanning the same subspace as :attr:`basis`."""
        t = self.spread
        X3 = x3(self.p)
        rhos = (X3 + t * ops.SIGMA_1, X3 + t * ops.SIGMA_2, X3)
        return tuple(self.U @ R @ self.U.conj().T for R in rhos)

    @property
    def spread(self) -> float:
        # X_3 + t sigma_j stays positive while t^2 <= p (1 - p)
        return 0.5 * np.sqrt(self.p * (1 - self.p))


def orthocomplement_generator(basis) -> np.ndarray:
    """Unit Hilbert-Schmidt normal of a codimension-one family of Hermitian matrices."""
    basis = np.asarray(basis, dtype=complex)
    d = basis.shape[-1]
    if len(basis) != d * d - 1:
        raise InvalidInput(f"need {d * d - 1} operators, got {len(basis)}")
    _, s, Vt = np.linalg.svd(ops.real_coords(basis))
    if s[-1] <= 1e-10:
        raise DependentBasis("family is linearly dependent")
    return ops.from_real_coords(Vt[-1])


def span_residual(A, B) -> float:
    """Largest distance from a unit-normalized member of one span to the other span."""
    CA = ops.real_coords(np.asarray(A))
    CB = ops.real_coords(np.asarray(B))
    QA = np.linalg.qr(CA.T)[0]
    QB = np.linalg.qr(CB.T)[0]
    rA = CA / np.linalg.norm(CA, axis=1, keepdims=True)
    rB = CB / np.linalg.norm(CB, axis=1, keepdims=True)
    res_a = rA.T - QB @ (QB.T @ rA.T)
    res_b = rB.T - QA @ (QA.T @ rB.T)
    return float(max(np.abs(res_a).max(), np.abs(res_b).max()))


def canonicalize_triple(rho1, rho2, rho3) -> CanonicalTriple:
    """Canonical ``(U, p)`` of three linearly independent qubit density operators.

    The span is the Hilbert-Schmidt orthocomplement of a single Hermitian
    ``W = U diag(mu_1, mu_2) U^dag``. ``W`` is indefinite and the span
    contains ``U sigma_1 U^dag``, ``U sigma_2 U^dag`` and ``U diag(p, 1-p) U^dag``
    with ``p = -mu_2 / (mu_1 - mu_2)``.
    """
    rhos = [ops.as_density(r) for r in (rho1, rho2, rho3)]
    if any(r.shape != (2, 2) for r in rhos):
        raise InvalidInput("canonicalization is defined for qubit density operators")
    if ops.gram_min_singular(rhos) <= 1e-10:
        raise DependentBasis("density operators are linearly dependent")
    W = orthocomplement_generator(rhos)
    # W and -W span the same normal; fix the sign by orientation, which
    # unitary conjugation preserves
    if np.linalg.det(ops.real_coords(np.array(rhos + [W]))) > 0:
        W = -W
    mu, V = np.linalg.eigh((W + W.conj().T) / 2)
    mu2, mu1 = mu
    if mu1 < 1e-12 or mu2 > -1e-12:
        raise DegenerateTriple(f"orthocomplement generator is not indefinite (eigenvalues {mu2:.3e}, {mu1:.3e})")
    U = V[:, ::-1]
    p = float(-mu2 / (mu1 - mu2))
    if not 1e-12 < p < 1 - 1e-12:
        raise DegenerateTriple(f"canonical parameter p={p!r} is at the boundary")
    return CanonicalTriple(U, p)


# ---------------------------------------------------------------------------
# Certificates and the contraction objective
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ContractivityCertificate:
    verdict: Verdict
    k: int
    lhs: float | None = None
    rhs: float | None = None
    witness: dict | None = None
    provenance: dict = field(default_factory=dict)
    details: dict = field(default_factory=dict)

    @property
    def violated(self) -> bool:
        return self.verdict is Verdict.CERTIFIED_VIOLATION

    @property
    def member(self) -> bool:
        return self.verdict is Verdict.CERTIFIED_MEMBER


def assemble(coeffs, ops_right) -> np.ndarray:
    """``sum_j A_j (x) R_j``; works on stacks with shape ``(..., k, d, d)``."""
    A = np.asarray(coeffs, dtype=complex)
    R = np.asarray(ops_right, dtype=complex)
    d1, d2 = A.shape[-1], R.shape[-1]
    out = np.einsum("...kab,...kcd->...acbd", A, R)
    return out.reshape(out.shape[:-4] + (d1 * d2, d1 * d2))


def contraction_sides(phi: mp.QuantumMap, rhos, coeffs) -> tuple[float, float]:
    """``(||sum A_j (x) Phi[rho_j]||_tr, ||sum A_j (x) rho_j||_tr)``."""
    rhos = np.asarray(rhos, dtype=complex)
    X = assemble(coeffs, rhos)
    Y = assemble(coeffs, mp.apply(phi, rhos))
    return ops.trace_norm((Y + Y.conj().T) / 2), ops.trace_norm((X + X.conj().T) / 2)


def _project_on_span(X, rhos) -> np.ndarray:
    """Coefficients of the Hilbert-Schmidt projection of ``X`` onto ``B_H (x) span(rhos)``."""
    rhos = np.asarray(rhos, dtype=complex)
    d = rhos.shape[-1]
    C = np.einsum("acbd,mdc->mab", np.asarray(X, dtype=complex).reshape(d, d, d, d), ops.hermitian_basis(d))
    A = np.einsum("mab,mj->jab", C, np.linalg.pinv(ops.real_coords(rhos)))
    return (A + ops.dagger(A)) / 2


def decompose_on_span(X, rhos, tol: float = 1e-9) -> np.ndarray:
    """Hermitian ``A_j`` with ``X = sum_j A_j (x) rho_j``; raises if ``X`` is outside the span."""
    A = _project_on_span(X, rhos)
    if np.max(np.abs(assemble(A, rhos) - X)) > tol:
        raise InvalidInput("operator does not lie in B_H (x) span(rhos)")
    return A


def density_basis(d: int) -> list[np.ndarray]:
    """``d^2`` linearly independent pure density operators."""
    out = []
    for j in range(d):
        v = np.zeros(d, dtype=complex)
        v[j] = 1
        out.append(np.outer(v, v))
    for j in range(d):
        for k in range(j + 1, d):
            for phase in (1, 1j):
                v = np.zeros(d, dtype=complex)
                v[j], v[k] = 1 / np.sqrt(2), phase / np.sqrt(2)
                out.append(np.outer(v, v.conj()))
    return out


def extend_witness(rhos, coeffs, k: int, exact: bool = True) -> tuple[np.ndarray, np.ndarray]:
    """Re-express a witness on exactly ``k`` linearly independent density operators.

    The operator ``X = sum A_j (x) rho_j`` is unchanged, so a violation at one
    level is a violation at every higher level.
    """
    rhos = list(np.asarray(rhos, dtype=complex))
    X = assemble(coeffs, rhos)
    d = rhos[0].shape[0]
    chosen: list[np.ndarray] = []
    for R in rhos + density_basis(d):
        if len(chosen) == k:
            break
        if ops.gram_min_singular(chosen + [R]) > INDEPENDENCE_TOL:
            chosen.append(R)
    if len(chosen) < k:
        raise InvalidInput(f"cannot find {k} independent density operators in dimension {d}")
    chosen = np.array(chosen)
    if exact:
        return chosen, decompose_on_span(X, chosen)
    # nearly dependent input: keep the closest operator in the new span
    return chosen, _project_on_span(X, chosen)


def _ascend(objective, theta: np.ndarray, iters: int, h: float = 1e-6):
    """Maximize a batched objective by central-difference gradient steps.

    Each iteration probes a geometric ladder of step lengths along the
    gradient and keeps the best, which tolerates the kinks of trace norms.
    """
    P = theta.size
    eye = np.eye(P)
    ladder = 2.0 ** -np.arange(0, 30)
    f = float(objective(theta[None])[0])
    step = 1.0
    stalls = 0
    for _ in range(iters):
        vals = objective(np.concatenate([theta + h * eye, theta - h * eye]))
        grad = (vals[:P] - vals[P:]) / (2 * h)
        gnorm = np.linalg.norm(grad)
        if not np.isfinite(gnorm) or gnorm < 1e-14:
            break
        cands = theta + (step * ladder)[:, None] * (grad / gnorm)
        cv = objective(cands)
        j = int(np.nanargmax(cv))
        if not cv[j] > f:
            break
        gain = cv[j] - f
        theta, f = cands[j], float(cv[j])
        step = min(4 * step * ladder[j], 10.0)
        stalls = stalls + 1 if gain < 1e-13 else 0
        if stalls >= 5:
            break
    return theta, f


def _unpack_search(theta: np.ndarray, k: int, d: int):
    n = theta.shape[0]
    t = theta.reshape(n, k, 3, d * d)
    G = (t[:, :, 0] + 1j * t[:, :, 1]).reshape(n, k, d, d)
    rho = G @ ops.dagger(G)
    rho = rho / np.trace(rho, axis1=-2, axis2=-1).real[..., None, None]
    A = ops.from_real_coords(t[:, :, 2])
    return rho, A


def _ratio(phi: mp.QuantumMap, rho: np.ndarray, A: np.ndarray) -> np.ndarray:
    X = assemble(A, rho)
    Y = assemble(A, mp.apply(phi, rho))
    Y = (Y + ops.dagger(Y)) / 2
    rhs = ops.trace_norms_hermitian(X)
    return np.where(rhs > 1e-300, ops.trace_norms_hermitian(Y) / np.maximum(rhs, 1e-300), -np.inf)


def _require_tp_hp(phi):
    if not mp.is_trace_preserving(phi):
        raise PreconditionFailed("map is not trace preserving")
    if not mp.is_hermiticity_preserving(phi):
        raise PreconditionFailed("map is not Hermiticity preserving")


def _violation_restart(phi, k, iters, seed, r):
    d = phi.dim
    rng = ops.make_rng(seed, r)
    for _ in range(100):
        theta = rng.standard_normal(k * 3 * d * d)
        rho, _ = _unpack_search(theta[None], k, d)
        if ops.gram_min_singular(rho[0]) > INDEPENDENCE_TOL:
            break
    if r % 2 == 1:
        # odd restarts start from the projection of a locally rotated, nearly
        # maximally entangled projector, away from the flat region of
        # sign-definite X where random starts tend to stall
        rho, _ = _unpack_search(theta[None], k, d)
        U, V = ops.sample_unitary(d, (seed, r, 1)), ops.sample_unitary(d, (seed, r, 2))
        s = 1 + 0.3 * rng.random(d)
        psi = np.kron(U, V) @ (np.eye(d) * s / np.linalg.norm(s)).reshape(-1)
        A = _project_on_span(np.outer(psi, psi.conj()), rho[0])
        theta = theta.reshape(k, 3, d * d)
        theta[:, 2] = ops.real_coords(A)
        theta = theta.reshape(-1)
    theta, f = _ascend(lambda th: _ratio(phi, *_unpack_search(th, k, d)), theta, iters)
    rho, A = _unpack_search(theta[None], k, d)
    return f, rho[0], A[0]


def _normalized_certificate(phi, k, rhos, coeffs, provenance, details=None) -> ContractivityCertificate:
    rhos = np.asarray(rhos)
    if ops.gram_min_singular(rhos) <= INDEPENDENCE_TOL:
        rhos, coeffs = extend_witness(rhos, coeffs, k, exact=False)
    lhs, rhs = contraction_sides(phi, rhos, coeffs)
    coeffs = np.asarray(coeffs) / rhs
    lhs, rhs = contraction_sides(phi, rhos, coeffs)
    verdict = Verdict.CERTIFIED_VIOLATION if lhs > rhs + VIOLATION_TOL else Verdict.NO_VIOLATION_FOUND
    witness = {"rhos": rhos, "coeffs": coeffs} if verdict is Verdict.CERTIFIED_VIOLATION else None
    return ContractivityCertificate(verdict, k, lhs, rhs, witness, provenance, details or {})


def violation_search(
    phi: mp.QuantumMap,
    k: int,
    restarts: int = 16,
    iters: int = 150,
    seed: int = 0,
    workers: int = 1,
    chunk: int = 4,
) -> ContractivityCertificate:
    """Search for ``X`` in ``B_H (x) span{rho_1..rho_k}`` that ``id (x) phi`` expands.

    Maximizes ``||(id (x) phi)[X]||_tr / ||X||_tr`` over unconstrained
    parametrizations ``rho_j = G_j G_j^dag / Tr(G_j G_j^dag)`` and Hermitian
    ``A_j``. Restarts run in fixed chunks and the search stops after the first
    chunk containing a violation, so the result does not depend on ``workers``.
    """
    d = phi.dim
    if not 1 <= k <= d * d:
        raise InvalidInput(f"k must lie in [1, {d * d}], got {k}")
    _require_tp_hp(phi)
    provenance = {"operation": "violation_search", "restarts": restarts, "iters": iters, "seed": seed}
    best = None
    for start in range(0, restarts, chunk):
        idx = range(start, min(start + chunk, restarts))
        results = run_indexed(lambda r: _violation_restart(phi, k, iters, seed, r), idx, workers)
        for r, res in zip(idx, results):
            if best is None or res[0] > best[1][0]:
                best = (r, res)
        if best[1][0] > 1 + VIOLATION_TOL:
            break
    r, (f, rho, A) = best
    return _normalized_certificate(phi, k, rho, A, provenance, {"restart": r, "ratio": f})


def positivity_to_contractivity(verdict: PositivityVerdict, phi: mp.QuantumMap, k: int = 1) -> ContractivityCertificate:
    """Turn a positivity witness into a level-``k`` contraction witness.

    With ``X = |x><x|`` the input state of the positivity witness,
    ``||Phi[X]||_tr > 1 = ||X||_tr`` because ``Phi[X]`` has unit trace and a
    negative eigenvalue.
    """
    if not verdict.violated:
        raise InvalidInput("positivity verdict carries no violation")
    X, _ = pos.positivity_witness_state(verdict, phi.dim)
    E00 = np.zeros((phi.dim, phi.dim), dtype=complex)
    E00[0, 0] = 1
    rhos, coeffs = extend_witness([X], [E00], k)
    return _normalized_certificate(phi, k, rhos, coeffs, {"operation": "positivity_transfer"})


# ---------------------------------------------------------------------------
# Covariance
# ---------------------------------------------------------------------------

def pauli_transfer_matrix(phi: mp.QuantumMap) -> np.ndarray:
    """``R_ij = Tr(sigma_i Phi[sigma_j]) / 2`` for a qubit map."""
    images = mp.apply(phi, np.array(ops.PAULIS))
    return np.real(np.einsum("iab,jba->ij", np.array(ops.PAULIS), images)) / 2


def _rotation_of(U: np.ndarray) -> np.ndarray:
    P = np.array(ops.PAULIS[1:])
    return np.real(np.einsum("iab,bc,jcd,da->ij", P, U, P, U.conj().T)) / 2


def _kabsch(src: np.ndarray, dst: np.ndarray) -> np.ndarray:
    """Rotation ``O`` in SO(3) minimizing ``||O src - dst||_F``."""
    Um, _, Vh = np.linalg.svd(dst @ src.T)
    D = np.diag([1.0, 1.0, np.sign(np.linalg.det(Um @ Vh))])
    return Um @ D @ Vh


def unitary_from_rotation(O: np.ndarray) -> np.ndarray:
    """A qubit unitary ``V`` with ``V sigma_j V^dag = sum_i O_ij sigma_i``."""
    R = np.eye(4)
    R[1:, 1:] = O
    P = np.array(ops.PAULIS)
    channel = mp.from_function(lambda X: np.einsum("ij,iab,j->ab", R, P, np.einsum("jba,ab->j", P, X) / 2), 2)
    lam, vecs = np.linalg.eigh(channel.choi)
    return mp.unvec(np.sqrt(2) * vecs[:, -1], 2)


def covariance_residual(phi: mp.QuantumMap, U) -> tuple[float, np.ndarray]:
    """Residual of ``Phi[U X U^dag] = V Phi[X] V^dag`` for the best unitary ``V``."""
    U = ops.as_unitary(U)
    R = pauli_transfer_matrix(phi)
    OU = _rotation_of(U)
    r0, t, M = R[0, 1:], R[1:, 0], R[1:, 1:]
    src = np.column_stack([t, M])
    dst = np.column_stack([t, M @ OU])
    OV = _kabsch(src, dst)
    V = unitary_from_rotation(OV)
    P = np.array(ops.PAULIS)
    lhs = mp.apply(phi, U @ P @ U.conj().T)
    rhs = V @ mp.apply(phi, P) @ V.conj().T
    residual = max(float(np.abs(r0 @ OU - r0).max()), float(np.abs(lhs - rhs).max()))
    return residual, V


def check_covariance(phi: mp.QuantumMap, trials: int = 32, seed: int = 0, tol: float = 1e-8) -> PositivityVerdict:
    """Sampled test of unitary covariance ``Phi[U X U^dag] = V Phi[X] V^dag``."""
    if phi.dim != 2:
        raise InvalidInput("covariance check is implemented for qubit maps")
    worst, worst_U, Vs = -1.0, None, []
    for i in range(trials):
        U = ops.sample_unitary(2, (seed, i))
        res, V = covariance_residual(phi, U)
        Vs.append(V)
        if res > worst:
            worst, worst_U = res, U
    budget = {"trials": trials}
    if worst > tol:
        return PositivityVerdict(Verdict.CERTIFIED_VIOLATION, worst, "check_covariance", {"U": worst_U},
                                 budget, seed)
    return PositivityVerdict(Verdict.NO_VIOLATION_FOUND, worst, "check_covariance", None, budget, seed,
                             {"V": Vs[:4]})


# ---------------------------------------------------------------------------
# Canonical condition (B)
# ---------------------------------------------------------------------------

def _lemma_certificate(phi, p, B, provenance, normalize):
    triple = CanonicalTriple(np.eye(2, dtype=complex), p)
    t = triple.spread
    B1, B2, B3 = (np.asarray(b, dtype=complex) for b in B)
    # B1 (x) s1 + B2 (x) s2 + B3 (x) X3 = A1 (x) (X3 + t s1) + A2 (x) (X3 + t s2) + A3 (x) X3
    coeffs = np.array([B1 / t, B2 / t, B3 - (B1 + B2) / t])
    rhos = np.array(triple.densities)
    X = assemble(B, canonical_basis(p))
    Y = assemble(B, mp.apply(phi, np.array(canonical_basis(p))))
    lhs, rhs = ops.trace_norm((Y + Y.conj().T) / 2), ops.trace_norm(X)
    if normalize:
        coeffs = coeffs / rhs
        B = tuple(b / rhs for b in (B1, B2, B3))
        lhs, rhs = lhs / rhs, 1.0
    verdict = Verdict.CERTIFIED_VIOLATION if lhs > rhs + VIOLATION_TOL else Verdict.NO_VIOLATION_FOUND
    witness = {"rhos": rhos, "coeffs": coeffs} if verdict is Verdict.CERTIFIED_VIOLATION else None
    return ContractivityCertificate(verdict, 3, lhs, rhs, witness, provenance, {"p": p, "B": tuple(B)})


def lemma3s_condition_B(
    phi: mp.QuantumMap,
    p: float,
    restarts: int = 16,
    iters: int = 200,
    seed: int = 0,
    B=None,
    workers: int = 1,
) -> ContractivityCertificate:
    """Check ``||sum B_k (x) Phi[X_k]||_tr <= ||sum B_k (x) X_k||_tr`` on the canonical basis.

    With ``B`` given the inequality is evaluated for that choice only;
    otherwise the Hermitian ``B_k`` are searched. A violation is reported
    as a witness on the density operators ``X_3 + t sigma_1, X_3 + t sigma_2,
    X_3`` spanning the same subspace.
    """
    if phi.dim != 2:
        raise InvalidInput("canonical condition is defined for qubit maps")
    if not 0 < p < 1:
        raise InvalidInput(f"p must lie in (0, 1), got {p!r}")
    provenance = {"operation": "lemma3s_condition_B", "p": p, "seed": seed}
    if B is not None:
        return _lemma_certificate(phi, p, B, provenance, normalize=False)
    basis = np.array(canonical_basis(p))
    images = mp.apply(phi, basis)

    def objective(theta):
        Bs = ops.from_real_coords(theta.reshape(len(theta), 3, 4))
        X = assemble(Bs, np.broadcast_to(basis, Bs.shape))
        Y = assemble(Bs, np.broadcast_to(images, Bs.shape))
        Y = (Y + ops.dagger(Y)) / 2
        return ops.trace_norms_hermitian(Y) / np.maximum(ops.trace_norms_hermitian(X), 1e-300)

    def restart(r):
        theta = ops.make_rng(seed, r).standard_normal(12)
        return _ascend(objective, theta, iters)

    results = run_indexed(restart, range(restarts), workers)
    best = max(range(restarts), key=lambda r: (results[r][1], -r))
    Bs = ops.from_real_coords(results[best][0].reshape(3, 4))
    provenance.update(restarts=restarts, iters=iters)
    return _lemma_certificate(phi, p, tuple(Bs), provenance, normalize=True)


# ---------------------------------------------------------------------------
# CPTP extension of a restricted map
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ExtensionSearchResult:
    """Outcome of the search for a CPTP extension of a map known on a 3-dim subspace.

    ``r_interval`` is the exact set of ``r`` for which the diagonal extension
    ``sigma_3 -> r sigma_3`` (in the canonical frame) is completely positive
    at this ``p``. ``uniform_r_interval`` is the set of ``r`` that works at
    both endpoints ``p = 0`` and ``p = 1`` of the source map's canonical
    family; it is the same for every ``p``.
    """

    feasible: bool
    best_lambda_min: float
    free_image: np.ndarray
    extension: mp.QuantumMap
    orthocomplement: np.ndarray
    r_interval: tuple[float, float] | None = None
    uniform_r_interval: tuple[float, float] | None = None
    minors: dict | None = None

    @property
    def r_interval_nonempty(self) -> bool | None:
        if self.r_interval is None:
            return None
        return _interval_nonempty(self.r_interval)

    @property
    def uniform_interval_nonempty(self) -> bool | None:
        if self.uniform_r_interval is None:
            return None
        return _interval_nonempty(self.uniform_r_interval)


def _interval_nonempty(iv, tol: float = FEASIBILITY_TOL) -> bool:
    return iv[0] <= iv[1] + tol


def canonical_restriction(phi: mp.QuantumMap, p: float, U=None) -> mp.RestrictedMap:
    U = np.eye(2, dtype=complex) if U is None else ops.as_unitary(U)
    triple = CanonicalTriple(U, float(p))
    return mp.restrict(phi, triple.basis, canonical=triple)


def _extension_superop(domain: np.ndarray, images: np.ndarray) -> np.ndarray:
    return mp.vec(images).T @ np.linalg.inv(mp.vec(domain).T)


def _lower_bound(u0, u1, v0, v1, s2):
    """Least ``r`` with ``[[u0 + u1 r, s], [s*, v0 + v1 r]] >= 0`` for slopes ``u1, v1 >= 0``.

    Returns ``-inf`` if every ``r`` works and ``inf`` if none does.
    """
    a = u1 * v1
    if a > 1e-300:
        b = u0 * v1 + u1 * v0
        c = u0 * v0 - s2
        disc = max((u0 * v1 - u1 * v0) ** 2 + 4 * a * s2, 0.0)
        return (-b + np.sqrt(disc)) / (2 * a)
    if u1 == 0 and v1 == 0:
        return -np.inf if (u0 >= 0 and v0 >= 0 and u0 * v0 >= s2) else np.inf
    if u1 == 0:
        u0, u1, v0, v1 = v0, v1, u0, u1
    # now v1 == 0: second diagonal is the constant v0
    if v0 < 0 or (v0 == 0 and s2 > 0):
        return np.inf
    return (s2 / v0 - u0) / u1 if v0 > 0 else -u0 / u1


def _diagonal_structure(restricted: mp.RestrictedMap, tol: float = 1e-10):
    """``(alpha_1, alpha_2, y0, y1)`` when the images are diagonal in the canonical frame."""
    triple = restricted.canonical
    if not isinstance(triple, CanonicalTriple):
        return None
    U = triple.U
    for B, X in zip(restricted.domain_basis, triple.basis):
        if np.max(np.abs(B - X)) > tol:
            return None
    Y1, Y2, Y3 = (U.conj().T @ Y @ U for Y in restricted.images)
    a1 = np.trace(ops.SIGMA_1 @ Y1).real / 2
    a2 = np.trace(ops.SIGMA_2 @ Y2).real / 2
    if (np.max(np.abs(Y1 - a1 * ops.SIGMA_1)) > tol or np.max(np.abs(Y2 - a2 * ops.SIGMA_2)) > tol
            or abs(Y3[0, 1]) > tol or abs(Y3[1, 0]) > tol):
        return None
    return a1, a2, Y3[0, 0].real, Y3[1, 1].real


def _diagonal_blocks(a1, a2, y0, y1, p):
    """Linear pieces of the two 2x2 Choi blocks (scaled by 2) as functions of ``r``."""
    s = (a1 + a2) / 2
    t = (a1 - a2) / 2
    block1 = (y0, 1 - p, y1, p, s * s)          # increasing in r
    block2 = (y1, -(1 - p), y0, -p, t * t)      # decreasing in r
    return block1, block2, s, t


def diagonal_r_interval(a1, a2, y0, y1, p) -> tuple[float, float]:
    """Exact ``r`` range making the diagonal extension completely positive."""
    (u0, u1, v0, v1, s2), (w0, w1, z0, z1, t2), _, _ = _diagonal_blocks(a1, a2, y0, y1, p)
    lo = _lower_bound(u0, u1, v0, v1, s2)
    hi = -_lower_bound(w0, -w1, z0, -z1, t2)
    return float(lo), float(hi)


def _diagonal_minors(a1, a2, y0, y1, p, r) -> dict:
    _, _, s, t = _diagonal_blocks(a1, a2, y0, y1, p)
    c_p, c_q = y0 + (1 - p) * r, y1 + p * r
    b_p, b_q = y0 - p * r, y1 - (1 - p) * r
    return {
        "r": float(r), "c_p": c_p, "c_1mp": c_q, "b_p": b_p, "b_1mp": b_q,
        "det_A": c_p * c_q - s * s, "det_B": b_p * b_q - t * t,
    }


def _diagonal_lambda(a1, a2, y0, y1, p, r) -> float:
    _, _, s, t = _diagonal_blocks(a1, a2, y0, y1, p)
    m = _diagonal_minors(a1, a2, y0, y1, p, r)
    l1 = np.linalg.eigvalsh(np.array([[m["c_p"], s], [s, m["c_1mp"]]]))[0]
    l2 = np.linalg.eigvalsh(np.array([[m["b_1mp"], t], [t, m["b_p"]]]))[0]
    return min(l1, l2) / 2


def _uniform_interval(restricted: mp.RestrictedMap):
    src, triple = restricted.source, restricted.canonical
    if src is None:
        return None
    lo, hi = -np.inf, np.inf
    for p_end in (0.0, 1.0):
        basis = (triple.U @ X @ triple.U.conj().T for X in canonical_basis(p_end))
        end = mp.RestrictedMap(tuple(basis), tuple(mp.apply(src, X) for X in
                                                   (triple.U @ Z @ triple.U.conj().T for Z in canonical_basis(p_end))),
                               CanonicalTriple(triple.U, p_end))
        st = _diagonal_structure(end)
        if st is None:
            return None
        l, h = diagonal_r_interval(*st, p_end)
        lo, hi = max(lo, l), min(hi, h)
    return float(lo), float(hi)


def extension_feasibility(restricted: mp.RestrictedMap, target_trace: float | None = None,
                          maxiter: int = 4000) -> ExtensionSearchResult:
    """Best completely positive extension of a qubit map known on a 3-dim subspace.

    The domain is completed by its Hilbert-Schmidt normal ``X_4``; the image
    ``Y`` of ``X_4`` has trace ``target_trace`` (default ``Tr X_4``, which
    makes the extension trace preserving) and three free coordinates along
    ``sigma_1, sigma_2, sigma_3``. The smallest Choi eigenvalue is maximized
    by Nelder-Mead from eight fixed starts followed by a coordinate polish.
    """
    if restricted.dim != 2 or len(restricted.domain_basis) != 3:
        raise InvalidInput("extension search needs a qubit map restricted to a 3-dimensional subspace")
    domain = np.array(restricted.domain_basis)
    W = orthocomplement_generator(domain)
    trace = float(np.trace(W).real) if target_trace is None else float(target_trace)
    full = np.concatenate([domain, W[None]])
    fixed = np.array(restricted.images)
    paulis = np.array(ops.PAULIS[1:])

    def extension(t):
        Y = trace / 2 * np.eye(2) + np.einsum("i,iab->ab", t, paulis)
        return _extension_superop(full, np.concatenate([fixed, Y[None]]))

    def choi_of(t):
        C = extension(t).reshape(2, 2, 2, 2).transpose(3, 1, 2, 0).reshape(4, 4) / 2
        return (C + C.conj().T) / 2

    # the Choi matrix is affine in t
    C0 = choi_of(np.zeros(3))
    dC = [choi_of(e) - C0 for e in np.eye(3)]

    def neg_lambda(t):
        return -np.linalg.eigvalsh(C0 + t[0] * dC[0] + t[1] * dC[1] + t[2] * dC[2])[0]

    w = np.real(np.einsum("iab,ba->i", paulis, W)) / 2
    starts = [np.zeros(3)] + [s * 0.5 * e for e in np.eye(3) for s in (1, -1)] + [w]
    best_t, best_f = None, np.inf
    for t0 in starts:
        res = minimize(neg_lambda, t0, method="Nelder-Mead",
                       options={"xatol": 1e-13, "fatol": 1e-15, "maxiter": maxiter, "maxfev": maxiter})
        if res.fun < best_f:
            best_t, best_f = res.x, float(res.fun)
    best_t, best_f = _polish(neg_lambda, best_t, best_f)
    res = minimize(neg_lambda, best_t, method="Nelder-Mead",
                   options={"xatol": 1e-14, "fatol": 1e-16, "maxiter": maxiter, "maxfev": maxiter})
    if res.fun < best_f:
        best_t, best_f = _polish(neg_lambda, res.x, float(res.fun))

    S = extension(best_t)
    Y = trace / 2 * np.eye(2) + np.einsum("i,iab->ab", best_t, paulis)
    best_lambda = -best_f
    r_interval = uniform = minors = None
    structure = _diagonal_structure(restricted)
    if structure is not None:
        p = restricted.canonical.p
        r_interval = diagonal_r_interval(*structure, p)
        lo, hi = r_interval
        if np.isfinite(lo) and np.isfinite(hi):
            a, b = min(lo, hi) - 1.0, max(lo, hi) + 1.0
        else:
            a, b = -10.0, 10.0
        opt = minimize_scalar(lambda r: -_diagonal_lambda(*structure, p, r), bounds=(a, b), method="bounded",
                              options={"xatol": 1e-13})
        minors = _diagonal_minors(*structure, p, opt.x)
        minors["lambda_min"] = -float(opt.fun)
        uniform = _uniform_interval(restricted)
    return ExtensionSearchResult(
        feasible=bool(best_lambda >= -FEASIBILITY_TOL),
        best_lambda_min=float(best_lambda),
        free_image=Y,
        extension=mp.QuantumMap(2, S, "extension"),
        orthocomplement=W,
        r_interval=r_interval,
        uniform_r_interval=uniform,
        minors=minors,
    )


def extension_margin(restricted: mp.RestrictedMap, free_image) -> float:
    """``lambda_min`` of the Choi matrix of the extension sending ``X_4`` to ``free_image``."""
    domain = np.array(restricted.domain_basis)
    W = orthocomplement_generator(domain)
    S = _extension_superop(np.concatenate([domain, W[None]]),
                           np.concatenate([np.array(restricted.images), np.asarray(free_image)[None]]))
    return ops.lambda_min(mp.QuantumMap(2, S).choi)


def _polish(f, x, fx):
    x = np.array(x, dtype=float)
    h = 1e-2
    while h > 1e-14:
        improved = True
        while improved:
            improved = False
            for i in range(len(x)):
                for sgn in (1.0, -1.0):
                    y = x.copy()
                    y[i] += sgn * h
                    fy = f(y)
                    if fy < fx:
                        x, fx, improved = y, fy, True
        h /= 4
    return x, fx


# ---------------------------------------------------------------------------
# Level-3 certification for covariant qubit maps
# ---------------------------------------------------------------------------

def chebyshev_grid(n: int) -> np.ndarray:
    i = np.arange(1, n + 1)
    return np.sort((1 - np.cos((2 * i - 1) * np.pi / (2 * n))) / 2)


def certify_c3_covariant(
    phi: mp.QuantumMap,
    p_grid_size: int = 41,
    restarts: int = 16,
    seed: int = 0,
    iters: int = 200,
    workers: int = 1,
    refine_margin: float = 1e-6,
) -> ContractivityCertificate:
    """Level-3 verdict for a unitarily covariant qubit map.

    Membership: the canonical restriction admits a CPTP extension at every
    point of a Chebyshev grid in ``p`` (refined next to small margins).
    Violation: condition (B) fails for some ``p`` at which no extension was
    found. Membership therefore rests on grid coverage and on covariance.
    """
    if phi.dim != 2:
        raise InvalidInput("level-3 certification is implemented for qubit maps")
    _require_tp_hp(phi)
    cov = check_covariance(phi, seed=seed)
    if cov.violated:
        raise PreconditionFailed(f"map is not unitarily covariant (residual {cov.value:.3e})")
    if pos.is_positive(phi, restarts=16, seed=seed).violated:
        raise PreconditionFailed("map is not positive")

    def feasibility(p):
        return extension_feasibility(canonical_restriction(phi, p))

    grid = list(chebyshev_grid(p_grid_size))
    found = dict(zip(grid, run_indexed(lambda i: feasibility(grid[i]), range(len(grid)), workers)))
    margins = {p: r.best_lambda_min for p, r in found.items()}
    near = [p for p in grid if abs(margins[p]) < refine_margin]
    if near:
        ordered = sorted(grid)
        extra = set()
        for p in near:
            i = ordered.index(p)
            lo = ordered[i - 1] if i > 0 else 0.0
            hi = ordered[i + 1] if i + 1 < len(ordered) else 1.0
            extra.update(((lo + p) / 2, (p + hi) / 2))
        extra = sorted(extra - set(margins))
        for p, r in zip(extra, run_indexed(lambda i: feasibility(extra[i]), range(len(extra)), workers)):
            found[p], margins[p] = r, r.best_lambda_min
    points = sorted(margins)
    provenance = {
        "operation": "certify_c3_covariant", "p_grid_size": p_grid_size, "seed": seed,
        "p_points": points, "margins": [margins[p] for p in points],
        "free_images": [found[p].free_image for p in points],
        "covariance_residual": cov.value,
        "basis": "membership rests on a finite p-grid plus sampled unitary covariance; "
                 "positivity of the map was checked before certification",
    }
    infeasible = sorted((p for p in points if margins[p] < -FEASIBILITY_TOL), key=lambda p: margins[p])
    if not infeasible:
        return ContractivityCertificate(Verdict.CERTIFIED_MEMBER, 3, provenance=provenance,
                                        details={"min_margin": min(margins.values())})
    for j, p in enumerate(infeasible[:6]):
        cert = lemma3s_condition_B(phi, p, restarts=restarts, iters=iters, seed=seed + j, workers=workers)
        if cert.violated:
            return ContractivityCertificate(Verdict.CERTIFIED_VIOLATION, 3, cert.lhs, cert.rhs, cert.witness,
                                            provenance, {**cert.details, "min_margin": margins[infeasible[0]]})
    return ContractivityCertificate(Verdict.NO_VIOLATION_FOUND, 3, provenance=provenance,
                                    details={"min_margin": margins[infeasible[0]], "infeasible_p": infeasible})


# ---------------------------------------------------------------------------
# Full hierarchy
# ---------------------------------------------------------------------------

def _cp_certificate(phi: mp.QuantumMap) -> ContractivityCertificate:
    d = phi.dim
    cp = pos.is_completely_positive(phi)
    k = d * d
    if cp.kind is Verdict.CERTIFIED_MEMBER:
        return ContractivityCertificate(Verdict.CERTIFIED_MEMBER, k, provenance={"operation": "choi_psd",
                                                                                 "lambda_min": cp.value})
    # (id (x) Phi)[P+] = C(Phi) has unit trace and a negative eigenvalue
    rhos = np.array(density_basis(d))
    coeffs = decompose_on_span(ops.max_entangled_projector(d), rhos)
    return _normalized_certificate(phi, k, rhos, coeffs, {"operation": "choi_psd", "lambda_min": cp.value})


def hierarchy_scan(
    phi: mp.QuantumMap,
    restarts: int = 16,
    iters: int = 150,
    seed: int = 0,
    p_grid_size: int = 41,
    workers: int = 1,
) -> list[tuple[int, ContractivityCertificate]]:
    """Verdicts at every level ``k = 1 .. d^2``, made monotone.

    Level ``d^2`` uses the exact Choi test, level 3 of a covariant qubit map
    the extension certification, other levels the violation search. A
    violation is propagated to every higher level with the same operator
    ``X``; membership is propagated to every lower level.
    """
    _require_tp_hp(phi)
    d = phi.dim
    top = d * d
    certs: dict[int, ContractivityCertificate] = {top: _cp_certificate(phi)}
    if certs[top].member:
        for k in range(1, top):
            certs[k] = ContractivityCertificate(Verdict.CERTIFIED_MEMBER, k, provenance={"implied_by": top})
        return [(k, certs[k]) for k in range(1, top + 1)]

    covariant = d == 2 and not check_covariance(phi, seed=seed).violated
    for k in range(1, top):
        if d == 2 and k == 3 and covariant:
            cert = certify_c3_covariant(phi, p_grid_size=p_grid_size, restarts=restarts, seed=seed,
                                        workers=workers)
        elif k == 1:
            pv = pos.is_positive(phi, seed=seed, workers=workers)
            cert = positivity_to_contractivity(pv, phi, 1) if pv.violated else \
                violation_search(phi, 1, restarts, iters, seed, workers)
        else:
            cert = violation_search(phi, k, restarts, iters, seed + k, workers)
        certs[k] = cert
        if cert.violated:
            for kk in range(k + 1, top + 1):
                if kk == top and certs[top].violated:
                    continue
                rhos, coeffs = extend_witness(cert.witness["rhos"], cert.witness["coeffs"], kk)
                lhs, rhs = contraction_sides(phi, rhos, coeffs)
                certs[kk] = ContractivityCertificate(Verdict.CERTIFIED_VIOLATION, kk, lhs, rhs,
                                                     {"rhos": rhos, "coeffs": coeffs},
                                                     {"propagated_from": k})
            break

    for k in range(top, 0, -1):
        if certs[k].member:
            for kk in range(1, k):
                if certs[kk].violated:
                    raise RuntimeError(f"inconsistent hierarchy: member at {k}, violation at {kk}")
                if not certs[kk].member:
                    certs[kk] = ContractivityCertificate(Verdict.CERTIFIED_MEMBER, kk,
                                                         provenance={"implied_by": k})
            break
    return [(k, certs[k]) for k in range(1, top + 1)]


def _qubit_positivity_certificate(phi: mp.QuantumMap, k: int, grid: int = 64) -> ContractivityCertificate:
    """Minimum of ``lambda_min(Phi[|psi><psi|])`` over the Bloch sphere (grid plus local polish)."""
    theta = np.linspace(0, np.pi, grid + 1)
    phase = np.linspace(0, 2 * np.pi, 2 * grid, endpoint=False)
    th, ph = np.meshgrid(theta, phase, indexing="ij")

    def states(th, ph):
        v = np.stack([np.cos(th / 2), np.exp(1j * ph) * np.sin(th / 2)], axis=-1)
        return np.einsum("...a,...b->...ab", v, v.conj())

    vals = np.linalg.eigvalsh(mp.apply(phi, states(th, ph)))[..., 0]
    idx = int(np.argmin(vals))
    best, best_x = float(vals.flat[idx]), np.array([th.flat[idx], ph.flat[idx]])
    for idx in np.argsort(vals, axis=None)[:4]:
        x0 = np.array([th.flat[idx], ph.flat[idx]])
        res = minimize(lambda x: np.linalg.eigvalsh(mp.apply(phi, states(*x)))[0], x0, method="Nelder-Mead",
                       options={"xatol": 1e-12, "fatol": 1e-15})
        if res.fun < best:
            best, best_x = float(res.fun), res.x
    provenance = {"operation": "qubit_positivity", "grid": grid, "lambda_min": best,
                  "basis": "positivity on a Bloch-sphere grid with local polish; "
                           "for qubits every positive trace-preserving map is 2-partially contractive"}
    if best >= -VIOLATION_TOL:
        return ContractivityCertificate(Verdict.CERTIFIED_MEMBER, k, provenance=provenance)
    # Phi[|psi><psi|] has unit trace and a negative eigenvalue, so its trace norm exceeds 1
    E00 = np.diag([1.0, 0.0]).astype(complex)
    rhos, coeffs = extend_witness([states(*best_x)], [E00], k)
    return _normalized_certificate(phi, k, rhos, coeffs, provenance)


def certify_membership(phi: mp.QuantumMap, k: int, seed: int = 0, p_grid_size: int = 41) -> ContractivityCertificate:
    """Membership certificate for level ``k`` where a certification route exists.

    Routes: the Choi test at ``k = d^2``, the covariant extension route at
    ``k = 3`` for qubits, and qubit positivity for ``k <= 2``.
    """
    _require_tp_hp(phi)
    d = phi.dim
    if k == d * d:
        return _cp_certificate(phi)
    if d == 2 and k == 3:
        return certify_c3_covariant(phi, p_grid_size=p_grid_size, seed=seed)
    if d == 2 and k in (1, 2):
        return _qubit_positivity_certificate(phi, k)
    raise PreconditionFailed(f"no membership certification route for level {k} in dimension {d}")

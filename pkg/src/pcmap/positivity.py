"""Positivity, k-positivity, complete positivity, Schwarz and Kadison checks.

Every check returns a :class:`PositivityVerdict`. Exact criteria (the Choi
test for complete positivity) may return ``CERTIFIED_MEMBER``; sampling and
local-search checks only ever report ``NO_VIOLATION_FOUND`` on success, and a
``CERTIFIED_VIOLATION`` always carries a witness whose replay reproduces the
recorded value.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from . import maps as mp
from . import operators as ops
from ._parallel import run_indexed
from .errors import InvalidInput, PreconditionFailed

VIOLATION_TOL = 1e-9


class Verdict(str, enum.Enum):
    CERTIFIED_VIOLATION = "CERTIFIED_VIOLATION"
    NO_VIOLATION_FOUND = "NO_VIOLATION_FOUND"
    CERTIFIED_MEMBER = "CERTIFIED_MEMBER"

    def __str__(self):
        return self.value


@dataclass(frozen=True)
class PositivityVerdict:
    kind: Verdict
    value: float
    operation: str
    witness: dict | None = None
    budget: dict = field(default_factory=dict)
    seed: int | None = None
    details: dict = field(default_factory=dict)

    @property
    def violated(self) -> bool:
        return self.kind is Verdict.CERTIFIED_VIOLATION


# ---------------------------------------------------------------------------
# Pure evaluators (used by the searches and by certificate replay)
# ---------------------------------------------------------------------------

def choi_expectation(phi: mp.QuantumMap, psi) -> float:
    psi = np.asarray(psi, dtype=complex).reshape(-1)
    psi = psi / np.linalg.norm(psi)
    return float(np.real(psi.conj() @ phi.choi @ psi))


def schwarz_gaps(phi: mp.QuantumMap, X) -> np.ndarray:
    """``lambda_min(||Phi(1)|| Phi[X^dag X] - Phi[X^dag] Phi[X])`` for a stack of ``X``."""
    X = np.asarray(X, dtype=complex)
    norm_one = ops.operator_norm(mp.apply(phi, np.eye(phi.dim)))
    Xd = ops.dagger(X)
    G = norm_one * mp.apply(phi, Xd @ X) - mp.apply(phi, Xd) @ mp.apply(phi, X)
    return np.linalg.eigvalsh((G + ops.dagger(G)) / 2)[..., 0]


def kadison_gaps(phi: mp.QuantumMap, X) -> np.ndarray:
    """``lambda_min(Phi[X^2] - Phi[X]^2)`` for a stack of Hermitian ``X``."""
    X = np.asarray(X, dtype=complex)
    Y = mp.apply(phi, X)
    G = mp.apply(phi, X @ X) - Y @ Y
    return np.linalg.eigvalsh((G + ops.dagger(G)) / 2)[..., 0]


def contraction_gaps(phi: mp.QuantumMap, X) -> np.ndarray:
    """``||Phi[X]||_tr - ||X||_tr`` for a stack of Hermitian ``X``."""
    X = np.asarray(X, dtype=complex)
    Y = mp.apply(phi, X)
    Y = (Y + ops.dagger(Y)) / 2
    return ops.trace_norms_hermitian(Y) - ops.trace_norms_hermitian(X)


# ---------------------------------------------------------------------------
# Complete positivity and k-positivity
# ---------------------------------------------------------------------------

def _require_hp(phi):
    if not mp.is_hermiticity_preserving(phi):
        raise PreconditionFailed("map is not Hermiticity preserving")


def is_completely_positive(phi: mp.QuantumMap, tol: float = VIOLATION_TOL) -> PositivityVerdict:
    """Exact test: the Choi matrix is positive semidefinite."""
    _require_hp(phi)
    lam, vecs = ops.eigh(phi.choi, 1e-10)
    value = float(lam[0])
    if value >= -tol:
        return PositivityVerdict(Verdict.CERTIFIED_MEMBER, value, "is_completely_positive")
    return PositivityVerdict(
        Verdict.CERTIFIED_VIOLATION, value, "is_completely_positive", witness={"psi": vecs[:, 0]},
    )


def _seesaw(C: np.ndarray, d: int, k: int, rng: np.random.Generator, iters: int):
    A = ops.ginibre(rng, d, k)
    B = ops.ginibre(rng, d, k)
    eye = np.eye(d)
    value = np.inf
    for _ in range(iters):
        U, s, Wh = np.linalg.svd(A @ B.T)
        # A-side: B has orthonormal columns, so psi = (1 (x) B) vec(A) is an isometry
        L = np.kron(eye, Wh[:k].T)
        lam, v = np.linalg.eigh(L.conj().T @ C @ L)
        A, B = v[:, 0].reshape(d, k), Wh[:k].T
        U, s, Wh = np.linalg.svd(A @ B.T)
        L = np.kron(U[:, :k], eye)
        lam, v = np.linalg.eigh(L.conj().T @ C @ L)
        A, B = U[:, :k], v[:, 0].reshape(k, d).T
        improvement = value - lam[0]
        value = lam[0]
        if improvement < 1e-12:
            break
    psi = (A @ B.T).reshape(-1)
    psi = psi / np.linalg.norm(psi)
    return float(np.real(psi.conj() @ C @ psi)), psi


def k_positivity_search(
    phi: mp.QuantumMap,
    k: int,
    restarts: int = 64,
    iters: int = 500,
    seed: int = 0,
    tol: float = VIOLATION_TOL,
    workers: int = 1,
) -> PositivityVerdict:
    """Minimize ``<psi|C(phi)|psi>`` over unit vectors of Schmidt rank at most ``k``.

    Alternating minimization: with one side's Schmidt frame fixed the problem
    is an exact ``dk x dk`` eigenproblem. A negative minimum certifies that
    ``id_k (x) phi`` is not positive.
    """
    d = phi.dim
    if not 1 <= k <= d:
        raise InvalidInput(f"k must lie in [1, {d}], got {k}")
    if restarts < 1 or iters < 1:
        raise InvalidInput("restarts and iters must be positive")
    _require_hp(phi)
    C = np.asarray(phi.choi)
    C = (C + C.conj().T) / 2
    results = run_indexed(lambda r: _seesaw(C, d, k, ops.make_rng(seed, r), iters), range(restarts), workers)
    best = min(range(restarts), key=lambda r: (results[r][0], r))
    value, psi = results[best]
    budget = {"restarts": restarts, "iters": iters, "k": k}
    if value < -tol:
        return PositivityVerdict(
            Verdict.CERTIFIED_VIOLATION, value, "k_positivity_search", {"psi": psi}, budget, seed,
            {"restart": best},
        )
    return PositivityVerdict(Verdict.NO_VIOLATION_FOUND, value, "k_positivity_search", None, budget, seed)


def is_positive(phi: mp.QuantumMap, restarts: int = 64, seed: int = 0, iters: int = 500,
                tol: float = VIOLATION_TOL, workers: int = 1) -> PositivityVerdict:
    return k_positivity_search(phi, 1, restarts=restarts, iters=iters, seed=seed, tol=tol, workers=workers)


def positivity_witness_state(verdict: PositivityVerdict, d: int) -> tuple[np.ndarray, np.ndarray]:
    """Input pure state ``X`` and output vector ``b`` with ``<b|Phi[X]|b> < 0``.

    For a product witness ``psi = a (x) b`` of the Choi form,
    ``<psi|C|psi> = (1/d) <b|Phi[conj(a) conj(a)^dag]|b>``.
    """
    psi = verdict.witness["psi"].reshape(d, d)
    U, s, Wh = np.linalg.svd(psi)
    a = U[:, 0]
    b = Wh[0]
    x = a.conj()
    return np.outer(x, x.conj()), b


# ---------------------------------------------------------------------------
# Sampling-based checks
# ---------------------------------------------------------------------------

def _hermitian_samples(d: int, n: int, rng: np.random.Generator) -> np.ndarray:
    q = max(n // 4, 1)
    G = ops.ginibre(rng, q * d, d).reshape(q, d, d)
    gauss = (G + ops.dagger(G)) / 2
    v = ops.ginibre(rng, q, d)
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    proj = np.einsum("ni,nj->nij", v, v.conj())
    traceless = gauss - np.einsum("n,ij->nij", np.trace(gauss, axis1=1, axis2=2) / d, np.eye(d))
    w = ops.ginibre(rng, q, d)
    w /= np.linalg.norm(w, axis=1, keepdims=True)
    diff = proj - np.einsum("ni,nj->nij", w, w.conj())
    X = np.concatenate([gauss, proj, traceless, diff])[:n]
    return X


def contraction_check(
    phi: mp.QuantumMap,
    samples: int = 4000,
    seed: int = 0,
    candidates=None,
    tol: float = VIOLATION_TOL,
) -> PositivityVerdict:
    """Look for Hermitian ``X`` with ``||Phi[X]||_tr > ||X||_tr``.

    For trace- and Hermiticity-preserving maps such an ``X`` exists exactly
    when the map fails to be positive. ``candidates`` are tested first.
    """
    if not mp.is_trace_preserving(phi):
        raise PreconditionFailed("contraction characterization requires a trace-preserving map")
    _require_hp(phi)
    X = _hermitian_samples(phi.dim, samples, ops.make_rng(seed))
    if candidates is not None:
        X = np.concatenate([np.asarray(candidates, dtype=complex).reshape(-1, phi.dim, phi.dim), X])
    X = X / ops.trace_norms_hermitian(X)[:, None, None]
    gaps = contraction_gaps(phi, X)
    i = int(np.argmax(gaps))
    budget = {"samples": samples}
    if gaps[i] > tol:
        return PositivityVerdict(Verdict.CERTIFIED_VIOLATION, float(gaps[i]), "contraction_check", {"X": X[i]},
                                 budget, seed)
    return PositivityVerdict(Verdict.NO_VIOLATION_FOUND, float(gaps[i]), "contraction_check", None, budget, seed)


def _structured_samples(d: int, n: int, rng: np.random.Generator) -> np.ndarray:
    """Matrix units, rotated units, nilpotents, rank-one and Gaussian matrices."""
    units = np.eye(d * d, dtype=complex).reshape(d * d, d, d)
    q = max((n - d * d) // 4, 1)
    U = np.array([np.linalg.qr(ops.ginibre(rng, d, d))[0] for _ in range(q)])
    idx = rng.integers(0, d * d, q)
    rotated = U @ units[idx] @ ops.dagger(U)
    N = np.triu(ops.ginibre(rng, q * d, d).reshape(q, d, d), 1)
    nilpotent = U @ N @ ops.dagger(U)
    u = ops.ginibre(rng, q, d)
    v = ops.ginibre(rng, q, d)
    rank_one = np.einsum("ni,nj->nij", u, v.conj())
    gauss = ops.ginibre(rng, q * d, d).reshape(q, d, d)
    X = np.concatenate([units, rotated, nilpotent, rank_one, gauss])[:max(n, d * d)]
    norms = np.sqrt(np.real(np.einsum("nij,nij->n", X.conj(), X)))
    return X / norms[:, None, None]


def schwarz_check(phi: mp.QuantumMap, samples: int = 10_000, seed: int = 0,
                  tol: float = VIOLATION_TOL) -> PositivityVerdict:
    """Sample ``X`` for the Schwarz inequality ``||Phi(1)|| Phi[X^dag X] >= Phi[X^dag] Phi[X]``.

    Positivity of ``phi`` is assumed, not re-checked.
    """
    X = _structured_samples(phi.dim, samples, ops.make_rng(seed))
    gaps = schwarz_gaps(phi, X)
    i = int(np.argmin(gaps))
    budget = {"samples": int(len(X))}
    if gaps[i] < -tol:
        return PositivityVerdict(Verdict.CERTIFIED_VIOLATION, float(gaps[i]), "schwarz_check", {"X": X[i]},
                                 budget, seed)
    return PositivityVerdict(Verdict.NO_VIOLATION_FOUND, float(gaps[i]), "schwarz_check", None, budget, seed)


def kadison_check(phi: mp.QuantumMap, samples: int = 10_000, seed: int = 0,
                  tol: float = VIOLATION_TOL) -> PositivityVerdict:
    """Sample Hermitian ``X`` for ``Phi[X^2] >= Phi[X]^2`` (unital maps only)."""
    if not mp.is_unital(phi):
        raise PreconditionFailed("Kadison inequality applies to unital maps")
    d = phi.dim
    rng = ops.make_rng(seed)
    X = _hermitian_samples(d, samples, rng)
    X = X / np.linalg.norm(X, axis=(1, 2))[:, None, None]
    gaps = kadison_gaps(phi, X)
    i = int(np.argmin(gaps))
    budget = {"samples": int(len(X))}
    if gaps[i] < -tol:
        return PositivityVerdict(Verdict.CERTIFIED_VIOLATION, float(gaps[i]), "kadison_check", {"X": X[i]},
                                 budget, seed)
    return PositivityVerdict(Verdict.NO_VIOLATION_FOUND, float(gaps[i]), "kadison_check", None, budget, seed)


def build_schwarz_mixture(base: mp.QuantumMap, q: float, seed: int = 0) -> mp.QuantumMap:
    """``X -> (q/d) 1 Tr X + (1 - q) base[X]``.

    ``base`` must be positive, trace preserving, unital and contractive in the
    Hilbert-Schmidt norm; the mixture is then a Schwarz map for
    ``1/2 <= q <= 3/2`` (established for qubits).
    """
    if not (mp.is_trace_preserving(base) and mp.is_unital(base)):
        raise PreconditionFailed("base map must be trace preserving and unital")
    # vec is an isometry for the Hilbert-Schmidt norm, so the superoperator's
    # spectral norm is the exact contraction constant
    hs_norm = float(np.linalg.norm(base.superop, 2))
    if hs_norm > 1 + 1e-10:
        raise PreconditionFailed(f"base map is not a Hilbert-Schmidt contraction (norm {hs_norm:.6g})")
    if is_positive(base, restarts=16, seed=seed).violated:
        raise PreconditionFailed("base map is not positive")
    d = base.dim
    return mp.combine([q, 1 - q], [mp.completely_depolarizing(d), base], f"schwarz_mixture(q={q!r},{base.label})")

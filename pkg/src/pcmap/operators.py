"""Dense operator foundation: validation, norms, spectra and seeded sampling.

Operators are plain complex ``numpy`` arrays. The helpers in this module
validate the structural invariants (Hermiticity, unit trace, unitarity) at the
boundaries where they matter and leave the arrays themselves untouched.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import DimensionMismatch, InvalidInput

HERMITIAN_TOL = 1e-12
DENSITY_TOL = 1e-10
UNITARY_TOL = 1e-10
PSD_TOL = 1e-9
SUPPORT_TOL = 1e-12

SIGMA_0 = np.eye(2, dtype=complex)
SIGMA_1 = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_2 = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_3 = np.array([[1, 0], [0, -1]], dtype=complex)
PAULIS = (SIGMA_0, SIGMA_1, SIGMA_2, SIGMA_3)


def make_rng(seed, *index) -> np.random.Generator:
    """Generator derived from ``(seed, *index)``; the only source of randomness."""
    if isinstance(seed, np.random.Generator):
        if index:
            raise InvalidInput("cannot derive an indexed stream from a Generator")
        return seed
    return np.random.default_rng(_flatten_seed((seed, *index)))


def _flatten_seed(parts) -> list[int]:
    out = []
    for x in parts:
        out.extend(_flatten_seed(x) if isinstance(x, (tuple, list)) else [int(x)])
    return out


def _as_square(X) -> np.ndarray:
    X = np.asarray(X, dtype=complex)
    if X.ndim != 2 or X.shape[0] != X.shape[1]:
        raise InvalidInput(f"expected a square matrix, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise InvalidInput("matrix has non-finite entries")
    return X


def is_hermitian(X, tol: float = HERMITIAN_TOL) -> bool:
    X = np.asarray(X)
    return X.ndim == 2 and X.shape[0] == X.shape[1] and np.max(np.abs(X - X.conj().T), initial=0.0) <= tol


def as_hermitian(X, tol: float = HERMITIAN_TOL) -> np.ndarray:
    """Return ``X`` as a complex array after checking Hermiticity (max-entry norm)."""
    X = _as_square(X)
    err = np.max(np.abs(X - X.conj().T), initial=0.0)
    if err > tol:
        raise InvalidInput(f"matrix is not Hermitian (max deviation {err:.3e})")
    return X


def as_density(X, tol: float = DENSITY_TOL) -> np.ndarray:
    """Return ``X`` after checking it is a density operator."""
    X = as_hermitian(X, max(tol, HERMITIAN_TOL))
    if abs(np.trace(X).real - 1.0) > tol:
        raise InvalidInput(f"density operator must have unit trace, got {np.trace(X).real!r}")
    lam = np.linalg.eigvalsh(X)
    if lam[0] < -tol:
        raise InvalidInput(f"density operator has negative eigenvalue {lam[0]:.3e}")
    return X


def is_unitary(U, tol: float = UNITARY_TOL) -> bool:
    U = np.asarray(U)
    if U.ndim != 2 or U.shape[0] != U.shape[1]:
        return False
    return np.max(np.abs(U @ U.conj().T - np.eye(U.shape[0]))) <= tol


def as_unitary(U, tol: float = UNITARY_TOL) -> np.ndarray:
    U = _as_square(U)
    if not is_unitary(U, tol):
        raise InvalidInput("matrix is not unitary")
    return U


def dagger(X: np.ndarray) -> np.ndarray:
    return np.swapaxes(X, -1, -2).conj()


def trace_norm(X) -> float:
    """Sum of singular values; for Hermitian input, the sum of absolute eigenvalues."""
    X = _as_square(X)
    if is_hermitian(X, 1e-12):
        return float(np.sum(np.abs(np.linalg.eigvalsh(X))))
    return float(np.sum(np.linalg.svd(X, compute_uv=False)))


def trace_norms_hermitian(batch: np.ndarray) -> np.ndarray:
    """Trace norms of a stack of Hermitian matrices, shape ``(..., n, n)``."""
    return np.sum(np.abs(np.linalg.eigvalsh(batch)), axis=-1)


def operator_norm(X) -> float:
    """Largest singular value (largest absolute eigenvalue for Hermitian input)."""
    X = _as_square(X)
    if is_hermitian(X, 1e-12):
        return float(np.max(np.abs(np.linalg.eigvalsh(X))))
    return float(np.linalg.norm(X, 2))


def hilbert_schmidt_norm(X) -> float:
    X = _as_square(X)
    return float(np.sqrt(np.real(np.vdot(X, X))))


def eigh(X, tol: float = HERMITIAN_TOL) -> tuple[np.ndarray, np.ndarray]:
    """Eigenvalues in nondecreasing order and a unitary matrix of eigenvectors."""
    X = as_hermitian(X, tol)
    # symmetrize so rounding in the upper triangle does not leak into the result
    return np.linalg.eigh((X + X.conj().T) / 2)


def lambda_min(X) -> float:
    X = np.asarray(X, dtype=complex)
    return float(np.linalg.eigvalsh((X + X.conj().T) / 2)[0])


def _support_log(lam: np.ndarray) -> np.ndarray:
    out = np.zeros_like(lam)
    mask = lam > SUPPORT_TOL
    out[mask] = np.log(lam[mask])
    return out


def relative_entropy(rho, sigma) -> float:
    """Quantum relative entropy ``Tr rho (log rho - log sigma)`` in nats.

    Returns ``inf`` when the support of ``rho`` is not contained in the
    support of ``sigma``. Eigenvalues below ``1e-12`` are treated as zero.
    """
    rho = as_hermitian(rho, 1e-10)
    sigma = as_hermitian(sigma, 1e-10)
    if rho.shape != sigma.shape:
        raise DimensionMismatch(f"{rho.shape} vs {sigma.shape}")
    lr, vr = np.linalg.eigh(rho)
    ls, vs = np.linalg.eigh(sigma)
    overlap = np.abs(vr.conj().T @ vs) ** 2  # |<r_i|s_j>|^2
    weights = np.clip(lr, 0.0, None)
    kernel = ls <= SUPPORT_TOL
    if np.any(kernel) and float(weights @ overlap[:, kernel].sum(axis=1)) > SUPPORT_TOL:
        return float("inf")
    value = float(weights @ _support_log(lr) - weights @ overlap @ _support_log(ls))
    return max(value, 0.0)


# ---------------------------------------------------------------------------
# Real coordinates on Hermitian matrices
# ---------------------------------------------------------------------------

@lru_cache(maxsize=None)
def _hermitian_basis(d: int) -> np.ndarray:
    basis = []
    for j in range(d):
        E = np.zeros((d, d), dtype=complex)
        E[j, j] = 1.0
        basis.append(E)
    for j in range(d):
        for k in range(j + 1, d):
            S = np.zeros((d, d), dtype=complex)
            S[j, k] = S[k, j] = 1 / np.sqrt(2)
            A = np.zeros((d, d), dtype=complex)
            A[j, k] = -1j / np.sqrt(2)
            A[k, j] = 1j / np.sqrt(2)
            basis.extend([S, A])
    out = np.array(basis)
    out.setflags(write=False)
    return out


def hermitian_basis(d: int) -> np.ndarray:
    """Hilbert-Schmidt orthonormal real basis of the ``d``x``d`` Hermitian matrices."""
    return _hermitian_basis(int(d))


def real_coords(X) -> np.ndarray:
    """Coordinates of Hermitian ``X`` (or a stack) in :func:`hermitian_basis`."""
    X = np.asarray(X, dtype=complex)
    B = hermitian_basis(X.shape[-1])
    return np.real(np.einsum("kij,...ji->...k", B, X))


def from_real_coords(c) -> np.ndarray:
    c = np.asarray(c, dtype=float)
    d = int(round(np.sqrt(c.shape[-1])))
    return np.einsum("...k,kij->...ij", c, hermitian_basis(d))


def gram_min_singular(ops) -> float:
    """Smallest singular value of the Hilbert-Schmidt Gram matrix of ``ops``."""
    C = real_coords(np.asarray(ops))
    return float(np.linalg.svd(C @ C.T, compute_uv=False)[-1])


# ---------------------------------------------------------------------------
# Bipartite helpers
# ---------------------------------------------------------------------------

def max_entangled_vector(d: int) -> np.ndarray:
    """``(1/sqrt d) sum_i |ii>`` with kron ordering ``|a b> -> a*d + b``."""
    v = np.zeros(d * d, dtype=complex)
    v[:: d + 1] = 1.0
    return v / np.sqrt(d)


def max_entangled_projector(d: int) -> np.ndarray:
    v = max_entangled_vector(d)
    return np.outer(v, v.conj())


def partial_trace(X, dims: tuple[int, int], keep: int) -> np.ndarray:
    """Partial trace of ``X`` on ``C^dA (x) C^dB``, keeping subsystem ``keep`` (0 or 1)."""
    dA, dB = dims
    T = np.asarray(X).reshape(dA, dB, dA, dB)
    if keep == 0:
        return np.einsum("ajbj->ab", T)
    return np.einsum("jajb->ab", T)


# ---------------------------------------------------------------------------
# Pure bipartite states
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PureStateVector:
    dims: tuple[int, int]
    amplitudes: np.ndarray

    def __post_init__(self):
        dA, dB = self.dims
        amp = np.asarray(self.amplitudes, dtype=complex).reshape(-1)
        if amp.size != dA * dB:
            raise DimensionMismatch(f"{amp.size} amplitudes for dims {self.dims}")
        if abs(np.linalg.norm(amp) - 1.0) > 1e-12:
            raise InvalidInput("state vector must have unit norm")
        object.__setattr__(self, "amplitudes", amp)

    @property
    def schmidt_coefficients(self) -> np.ndarray:
        return np.linalg.svd(self.amplitudes.reshape(self.dims), compute_uv=False)

    def projector(self) -> np.ndarray:
        return np.outer(self.amplitudes, self.amplitudes.conj())


def normalized_pure(amplitudes, dims) -> PureStateVector:
    amp = np.asarray(amplitudes, dtype=complex).reshape(-1)
    return PureStateVector(tuple(dims), amp / np.linalg.norm(amp))


# ---------------------------------------------------------------------------
# Sampling
# ---------------------------------------------------------------------------

def ginibre(rng: np.random.Generator, rows: int, cols: int) -> np.ndarray:
    return (rng.standard_normal((rows, cols)) + 1j * rng.standard_normal((rows, cols))) / np.sqrt(2)


def sample_density(dim: int, rank: int | None = None, seed=0) -> np.ndarray:
    """Random density operator ``G G^dag / Tr(G G^dag)`` with ``G`` of shape ``dim x rank``."""
    rank = dim if rank is None else rank
    if not 1 <= rank <= dim:
        raise InvalidInput(f"rank bound must lie in [1, {dim}], got {rank}")
    G = ginibre(make_rng(seed), dim, rank)
    rho = G @ G.conj().T
    return rho / np.trace(rho).real


def sample_hermitian(dim: int, seed=0) -> np.ndarray:
    G = ginibre(make_rng(seed), dim, dim)
    return (G + G.conj().T) / 2


def sample_unitary(dim: int, seed=0) -> np.ndarray:
    """Haar-distributed unitary via QR with phase correction."""
    Q, R = np.linalg.qr(ginibre(make_rng(seed), dim, dim))
    phases = np.diag(R) / np.abs(np.diag(R))
    return Q * phases


def sample_pure(dims: tuple[int, int], schmidt_rank: int, seed=0) -> PureStateVector:
    """Random pure state of exact Schmidt rank ``schmidt_rank``."""
    dA, dB = dims
    if not 1 <= schmidt_rank <= min(dA, dB):
        raise InvalidInput(f"Schmidt rank must lie in [1, {min(dA, dB)}]")
    rng = make_rng(seed)
    s = rng.uniform(0.1, 1.0, schmidt_rank)
    s = np.sort(s / np.linalg.norm(s))[::-1]
    UA = np.linalg.qr(ginibre(rng, dA, dA))[0]
    UB = np.linalg.qr(ginibre(rng, dB, dB))[0]
    M = (UA[:, :schmidt_rank] * s) @ UB[:, :schmidt_rank].T
    return normalized_pure(M.reshape(-1), dims)

"""Linear maps on ``d x d`` operators.

A map is stored as its superoperator ``S`` acting on column-stacked
vectorizations: ``vec(X) = X.T.reshape(-1)`` so that ``vec(A X B) =
(B^T kron A) vec(X)``. The Choi matrix uses the normalized convention

    C(Phi) = (1/d) sum_{jk} |j><k| (x) Phi[|j><k|]

with the input factor first. For a trace-preserving map the partial trace of
``C`` over the output factor is ``1/d``; ``Phi[X] = d Tr_1[(X^T (x) 1) C]``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Sequence

import numpy as np

from . import operators as ops
from .errors import DependentBasis, DimensionMismatch, InvalidInput

TP_TOL = 1e-10


def vec(X) -> np.ndarray:
    X = np.asarray(X)
    return np.swapaxes(X, -1, -2).reshape(X.shape[:-2] + (-1,))


def unvec(v, d: int) -> np.ndarray:
    v = np.asarray(v)
    return np.swapaxes(v.reshape(v.shape[:-1] + (d, d)), -1, -2)


def _choi_from_superop(S: np.ndarray, d: int) -> np.ndarray:
    # S[b*d + a, k*d + j] = Phi[E_jk]_{ab};  C[(j,a),(k,b)] = Phi[E_jk]_{ab} / d
    return S.reshape(d, d, d, d).transpose(3, 1, 2, 0).reshape(d * d, d * d) / d


def _superop_from_choi(C: np.ndarray, d: int) -> np.ndarray:
    return d * C.reshape(d, d, d, d).transpose(3, 1, 2, 0).reshape(d * d, d * d)


@dataclass(frozen=True, eq=False)
class QuantumMap:
    """Linear map on ``d x d`` matrices held as a superoperator."""

    dim: int
    superop: np.ndarray = field(repr=False)
    label: str = ""

    def __post_init__(self):
        S = np.array(self.superop, dtype=complex)
        n = self.dim * self.dim
        if S.shape != (n, n):
            raise DimensionMismatch(f"superoperator for dim {self.dim} must be {n}x{n}, got {S.shape}")
        if not np.all(np.isfinite(S)):
            raise InvalidInput("superoperator has non-finite entries")
        S.setflags(write=False)
        object.__setattr__(self, "superop", S)

    @cached_property
    def choi(self) -> np.ndarray:
        C = _choi_from_superop(self.superop, self.dim)
        C.setflags(write=False)
        return C

    def __call__(self, X) -> np.ndarray:
        return apply(self, X)

    def __repr__(self):
        return f"QuantumMap(dim={self.dim}, label={self.label!r})"


def apply(phi: QuantumMap, X) -> np.ndarray:
    """Apply ``phi`` to ``X`` or to a stack of matrices with trailing shape ``(d, d)``."""
    X = np.asarray(X, dtype=complex)
    if X.shape[-2:] != (phi.dim, phi.dim):
        raise DimensionMismatch(f"map acts on {phi.dim}x{phi.dim}, got {X.shape[-2:]}")
    return unvec(vec(X) @ phi.superop.T, phi.dim)


def choi(phi: QuantumMap) -> np.ndarray:
    return phi.choi


def map_from_choi(C, label: str = "") -> QuantumMap:
    C = np.asarray(C, dtype=complex)
    d = int(round(np.sqrt(C.shape[0])))
    if C.shape != (d * d, d * d):
        raise DimensionMismatch(f"Choi matrix must be d^2 x d^2, got {C.shape}")
    return QuantumMap(d, _superop_from_choi(C, d), label)


def from_function(fn: Callable[[np.ndarray], np.ndarray], d: int, label: str = "") -> QuantumMap:
    """Superoperator of a linear function, built from its action on matrix units."""
    cols = []
    for n in range(d * d):
        E = np.zeros(d * d, dtype=complex)
        E[n] = 1.0
        cols.append(vec(np.asarray(fn(unvec(E, d)), dtype=complex)))
    return QuantumMap(d, np.array(cols).T, label)


def compose(f: QuantumMap, g: QuantumMap, label: str | None = None) -> QuantumMap:
    """``f o g``: apply ``g`` first."""
    if f.dim != g.dim:
        raise DimensionMismatch(f"cannot compose dims {f.dim} and {g.dim}")
    return QuantumMap(f.dim, f.superop @ g.superop, label if label is not None else f"({f.label})o({g.label})")


def combine(weights: Sequence[float], maps: Sequence[QuantumMap], label: str = "") -> QuantumMap:
    """Linear combination ``sum_i w_i Phi_i``."""
    d = maps[0].dim
    if any(m.dim != d for m in maps):
        raise DimensionMismatch("all maps in a combination must share a dimension")
    S = sum(w * m.superop for w, m in zip(weights, maps))
    return QuantumMap(d, S, label)


def apply_id_tensor(phi: QuantumMap, Y, k: int) -> np.ndarray:
    """``(id_k (x) phi)[Y]`` for ``Y`` (or a stack) on ``C^k (x) C^d``."""
    d = phi.dim
    Y = np.asarray(Y, dtype=complex)
    lead = Y.shape[:-2]
    if Y.shape[-2:] != (k * d, k * d):
        raise DimensionMismatch(f"expected trailing shape {(k * d, k * d)}, got {Y.shape[-2:]}")
    blocks = Y.reshape(lead + (k, d, k, d))
    blocks = np.moveaxis(blocks, -3, -2)  # (..., k, k, d, d)
    out = apply(phi, blocks)
    return np.moveaxis(out, -2, -3).reshape(lead + (k * d, k * d))


def tensor_with_identity(phi: QuantumMap, k: int) -> QuantumMap:
    """Superoperator of ``id_k (x) phi`` on ``(k d) x (k d)`` matrices."""
    if k < 1:
        raise InvalidInput("k must be a positive integer")
    if k == 1:
        return phi
    n = k * phi.dim
    units = unvec(np.eye(n * n, dtype=complex), n)
    images = apply_id_tensor(phi, units, k)
    return QuantumMap(n, vec(images).T, f"id_{k}(x){phi.label}")


def is_trace_preserving(phi: QuantumMap, tol: float = TP_TOL) -> bool:
    d = phi.dim
    vid = vec(np.eye(d, dtype=complex))
    return bool(np.max(np.abs(vid @ phi.superop - vid)) <= tol)


def is_hermiticity_preserving(phi: QuantumMap, tol: float = TP_TOL) -> bool:
    C = phi.choi
    return bool(np.max(np.abs(C - C.conj().T)) <= tol)


def is_unital(phi: QuantumMap, tol: float = TP_TOL) -> bool:
    d = phi.dim
    vid = vec(np.eye(d, dtype=complex))
    return bool(np.max(np.abs(phi.superop @ vid - vid)) <= tol)


# ---------------------------------------------------------------------------
# Named families
# ---------------------------------------------------------------------------

def _trace_projector(d: int) -> np.ndarray:
    # vec(1) vec(1)^T vec(X) = Tr(X) vec(1)
    vid = vec(np.eye(d, dtype=complex))
    return np.outer(vid, vid)


def identity_map(d: int) -> QuantumMap:
    return QuantumMap(d, np.eye(d * d, dtype=complex), f"identity:d={d}")


def transposition(d: int) -> QuantumMap:
    P = np.zeros((d * d, d * d), dtype=complex)
    for j in range(d):
        for k in range(d):
            P[k + d * j, j + d * k] = 1.0
    return QuantumMap(d, P, f"transpose:d={d}")


def completely_depolarizing(d: int) -> QuantumMap:
    return QuantumMap(d, _trace_projector(d) / d, f"depolarizing:d={d}")


def lambda_family(a: float) -> QuantumMap:
    """Qubit map ``X -> (1 Tr X - a X) / (2 - a)``."""
    a = float(a)
    if a == 2.0:
        raise InvalidInput("lambda family is undefined at a = 2")
    S = (_trace_projector(2) - a * np.eye(4)) / (2.0 - a)
    return QuantumMap(2, S, f"lambda:a={a!r}")


def omega_family(eps: float) -> QuantumMap:
    """Qubit map ``X -> (eps/2) 1 Tr X + (1 - eps) X^T``."""
    eps = float(eps)
    S = eps / 2 * _trace_projector(2) + (1 - eps) * transposition(2).superop
    return QuantumMap(2, S, f"omega:eps={eps!r}")


def phi_p_family(d: int, p: float) -> QuantumMap:
    """``X -> p 1_d Tr X - X``; k-positive exactly for ``p >= k``."""
    p = float(p)
    S = p * _trace_projector(d) - np.eye(d * d)
    return QuantumMap(d, S, f"phi_p:d={d},p={p!r}")


def reduction_map(d: int) -> QuantumMap:
    return QuantumMap(d, phi_p_family(d, 1.0).superop, f"reduction:d={d}")


def trace_normalized(phi: QuantumMap) -> QuantumMap:
    """Rescale a map with ``Tr Phi[X] = c Tr X`` (``c > 0``) to be trace preserving."""
    d = phi.dim
    vid = vec(np.eye(d, dtype=complex))
    row = vid @ phi.superop
    c = row[0]
    if abs(c) < 1e-14 or np.max(np.abs(row - c * vid)) > 1e-10 or abs(c.imag) > 1e-12:
        raise InvalidInput("map does not scale the trace uniformly")
    return QuantumMap(d, phi.superop / c.real, f"{phi.label}/tr")


# ---------------------------------------------------------------------------
# Random maps
# ---------------------------------------------------------------------------

def sample_cptp(d: int, seed=0, rank: int | None = None) -> QuantumMap:
    """Random CPTP map: Wishart Choi matrix rescaled to the trace-preserving slice."""
    rng = ops.make_rng(seed)
    G = ops.ginibre(rng, d * d, rank or d * d)
    W = G @ G.conj().T
    T = ops.partial_trace(W, (d, d), keep=0)
    lam, V = np.linalg.eigh(T)
    T_inv_sqrt = (V / np.sqrt(lam)) @ V.conj().T
    K = np.kron(T_inv_sqrt, np.eye(d))
    C = K @ W @ K / d
    return map_from_choi((C + C.conj().T) / 2, f"cptp:seed={seed}")


def sample_ptp(d: int, seed=0) -> QuantumMap:
    """Random positive trace-preserving map ``q A + (1-q) T o B`` with CPTP ``A, B``."""
    rng = ops.make_rng(seed)
    q = rng.uniform()
    sub = int(rng.integers(0, 2**31))
    A = sample_cptp(d, (sub, 0))
    B = sample_cptp(d, (sub, 1))
    return combine([q, 1 - q], [A, compose(transposition(d), B)], f"ptp:seed={seed}")


def sample_tp_map(d: int, seed=0) -> QuantumMap:
    """Random trace- and Hermiticity-preserving map (generally not positive)."""
    rng = ops.make_rng(seed)
    H = ops.ginibre(rng, d * d, d * d)
    H = (H + H.conj().T) / 2
    # remove the output-traced part so Tr_2 C = 1/d exactly
    Tr2 = ops.partial_trace(H, (d, d), keep=0)
    C = H - np.kron(Tr2, np.eye(d)) / d + np.eye(d * d) / d**2
    return map_from_choi(C, f"tp:seed={seed}")


# ---------------------------------------------------------------------------
# Restrictions
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class RestrictedMap:
    """A map known only on the real span of ``domain_basis``.

    ``canonical`` optionally holds the ``(U, p)`` frame the basis was built in
    and ``source`` the map it was restricted from; both enable analytic
    shortcuts downstream but are not required.
    """

    domain_basis: tuple
    images: tuple
    canonical: object = None
    source: QuantumMap | None = None

    def __post_init__(self):
        basis = tuple(ops.as_hermitian(B, 1e-10) for B in self.domain_basis)
        images = tuple(np.asarray(Y, dtype=complex) for Y in self.images)
        if len(basis) != len(images):
            raise InvalidInput("domain basis and images must have equal length")
        if ops.gram_min_singular(basis) <= 1e-10:
            raise DependentBasis("domain basis is linearly dependent over the reals")
        object.__setattr__(self, "domain_basis", basis)
        object.__setattr__(self, "images", images)

    @property
    def dim(self) -> int:
        return self.domain_basis[0].shape[0]


def restrict(phi: QuantumMap, basis: Sequence[np.ndarray], canonical=None) -> RestrictedMap:
    basis = [np.asarray(B, dtype=complex) for B in basis]
    if ops.gram_min_singular([ops.as_hermitian(B, 1e-10) for B in basis]) <= 1e-10:
        raise DependentBasis("restriction basis is linearly dependent")
    return RestrictedMap(tuple(basis), tuple(apply(phi, B) for B in basis), canonical, phi)

"""State-side hierarchies.

``E_k`` (Schmidt number at most ``k``) is probed by ``k``-positive maps and
the classes ``calE_k`` by ``k``-partially contractive maps: a state lies
outside a class when some map of the matching level turns
``(id (x) Phi)[rho]`` indefinite. Both checks are one-sided.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from . import contractivity as ct
from . import maps as mp
from . import operators as ops
from .errors import DimensionMismatch, InvalidInput, PreconditionFailed

WITNESS_TOL = 1e-9
RECONSTRUCTION_TOL = 1e-8
OUTSIDE = "OUTSIDE"
CONSISTENT = "CONSISTENT"


@dataclass(frozen=True, eq=False)
class BipartiteState:
    """Density operator on ``C^dA (x) C^dB``.

    ``decomposition`` optionally records how the state was built, as a list
    of ``(weight, PureStateVector)``.
    """

    dims: tuple[int, int]
    rho: np.ndarray
    decomposition: tuple | None = None
    label: str = ""

    def __post_init__(self):
        dA, dB = self.dims
        rho = ops.as_density(self.rho)
        if rho.shape != (dA * dB, dA * dB):
            raise DimensionMismatch(f"dims {self.dims} do not match a {rho.shape[0]}x{rho.shape[0]} state")
        object.__setattr__(self, "dims", (int(dA), int(dB)))
        object.__setattr__(self, "rho", rho)
        if self.decomposition is not None:
            object.__setattr__(self, "decomposition", tuple(self.decomposition))


@dataclass(frozen=True)
class SchmidtReport:
    lower_bound: int
    upper_bound: int
    witnesses: list = field(default_factory=list)
    decomposition: tuple | None = None
    upper_bound_method: str = "default"


@dataclass(frozen=True, eq=False)
class BankEntry:
    """A witness map together with the level at which it is known to be valid.

    For the Schmidt-number bank ``level`` is the map's ``k``-positivity; for
    the partial-contractivity bank it is the ``C_k`` level and
    ``certificate`` must certify membership.
    """

    map: mp.QuantumMap
    level: int
    certificate: ct.ContractivityCertificate | None = None
    source: str = ""


def schmidt_rank(psi, dims=None, tol: float = 1e-10) -> int:
    if not isinstance(psi, ops.PureStateVector):
        if dims is None:
            raise InvalidInput("dims are required for a raw amplitude vector")
        psi = ops.normalized_pure(psi, dims)
    return int(np.sum(psi.schmidt_coefficients > tol))


def isotropic_state(d: int, f: float) -> BipartiteState:
    if not 0 <= f <= 1:
        raise InvalidInput(f"fidelity must lie in [0, 1], got {f!r}")
    P = ops.max_entangled_projector(d)
    rho = (1 - f) / (d * d - 1) * (np.eye(d * d) - P) + f * P
    return BipartiteState((d, d), rho, label=f"iso:d={d},f={f!r}")


def isotropic_fidelity(state: BipartiteState, tol: float = 1e-10) -> float | None:
    """``f`` when the state is isotropic, else ``None``."""
    dA, dB = state.dims
    if dA != dB:
        return None
    P = ops.max_entangled_projector(dA)
    f = float(np.trace(P @ state.rho).real)
    f = min(max(f, 0.0), 1.0)
    if np.max(np.abs(isotropic_state(dA, f).rho - state.rho)) > tol:
        return None
    return f


def sample_separable(dims: tuple[int, int], terms: int = 4, seed=0) -> BipartiteState:
    """Random mixture of product pure states, recording its decomposition."""
    rng = ops.make_rng(seed)
    w = rng.dirichlet(np.ones(terms))
    parts = [ops.sample_pure(dims, 1, (seed, i)) for i in range(terms)]
    rho = sum(wi * psi.projector() for wi, psi in zip(w, parts))
    return BipartiteState(tuple(dims), rho / np.trace(rho).real,
                          tuple(zip(w, parts)), label="separable")


def apply_local(state: BipartiteState, phi: mp.QuantumMap) -> np.ndarray:
    """``(id (x) Phi)[rho]`` with ``Phi`` acting on the second factor."""
    dA, dB = state.dims
    if phi.dim != dB:
        raise DimensionMismatch(f"map dimension {phi.dim} does not match d_B = {dB}")
    return mp.apply_id_tensor(phi, state.rho, dA)


def witness_with_map(state: BipartiteState, phi: mp.QuantumMap) -> float:
    """``lambda_min`` of ``(id (x) Phi)[rho]``; negative values exclude the state."""
    return ops.lambda_min(apply_local(state, phi))


def lambda_isotropic_closed_form(a: float, f: float) -> np.ndarray:
    """Closed form of ``(id (x) Lambda_a)[rho_f]`` for two qubits."""
    outer = 3 - a * (1 + 2 * f)
    inner = 3 - 2 * a * (1 - f)
    corner = -a * (4 * f - 1)
    M = np.diag([outer, inner, inner, outer]).astype(complex)
    M[0, 3] = M[3, 0] = corner
    return M / (6 * (2 - a))


def psd_boundary(fn, lo: float, hi: float, width: float = 1e-8) -> float:
    """Bisection for the sign change of ``fn`` (``fn(lo) >= 0 > fn(hi)``)."""
    flo, fhi = fn(lo), fn(hi)
    if not (flo >= 0 > fhi):
        raise InvalidInput(f"no sign change on [{lo}, {hi}]: values {flo:.3e}, {fhi:.3e}")
    while hi - lo > width:
        mid = (lo + hi) / 2
        if fn(mid) >= 0:
            lo = mid
        else:
            hi = mid
    return (lo + hi) / 2


def isotropic_threshold(phi: mp.QuantumMap, width: float = 1e-8) -> float:
    """Largest ``f`` with ``(id (x) Phi)[rho_f] >= 0``, by bisection."""
    d = phi.dim
    return psd_boundary(lambda f: witness_with_map(isotropic_state(d, f), phi), 1 / d**2, 1.0, width)


# ---------------------------------------------------------------------------
# Banks
# ---------------------------------------------------------------------------

def default_positive_bank(d: int) -> list[BankEntry]:
    """``k``-positive witnesses: transposition, ``Phi_p`` at ``p = k`` and, for qubits, two positive families."""
    bank = [BankEntry(mp.transposition(d), 1, source="transposition is positive")]
    for k in range(1, d):
        bank.append(BankEntry(mp.phi_p_family(d, k), k, source=f"Phi_p is {k}-positive at p = {k}"))
    if d == 2:
        bank.append(BankEntry(mp.lambda_family(0.6), 1, source="Lambda_a is positive for a <= 1"))
        bank.append(BankEntry(mp.omega_family(0.55), 1, source="Omega_eps is positive for eps in [0, 1]"))
    return bank


@lru_cache(maxsize=4)
def default_contractive_bank(seed: int = 0) -> tuple[BankEntry, ...]:
    """Certified qubit witnesses for the ``calE_k`` classes.

    Level 3 uses ``Lambda_{2/3}`` and ``Omega_{1/2}``: at the edge of their
    certified ranges both turn ``rho_f`` indefinite exactly for ``f > 3/4``.
    """
    entries = [
        (mp.transposition(2), 2),
        (mp.trace_normalized(mp.reduction_map(2)), 2),
        (mp.lambda_family(2 / 3), 3),
        (mp.omega_family(0.5), 3),
    ]
    bank = []
    for phi, k in entries:
        cert = ct.certify_membership(phi, k, seed=seed)
        if not cert.member:
            raise PreconditionFailed(f"default bank map {phi.label} failed certification at level {k}")
        bank.append(BankEntry(phi, k, cert, source="certified"))
    return tuple(bank)


# ---------------------------------------------------------------------------
# Schmidt number
# ---------------------------------------------------------------------------

def _truncate_schmidt(vecs: np.ndarray, dims, r: int) -> np.ndarray:
    """Nearest Schmidt-rank-``r`` vectors (columns)."""
    dA, dB = dims
    M = vecs.T.reshape(-1, dA, dB)
    U, s, Vh = np.linalg.svd(M, full_matrices=False)
    s[:, r:] = 0
    return np.einsum("nij,nj,njk->nik", U, s, Vh).reshape(-1, dA * dB).T


def decomposition_search(state: BipartiteState, r: int, seed=0, restarts: int = 4, iters: int = 3000,
                         columns: int | None = None):
    """Look for ``rho = sum_i |v_i><v_i|`` with every ``v_i`` of Schmidt rank at most ``r``.

    Alternates between truncating each column of ``M`` to Schmidt rank ``r``
    and returning to the set ``{sqrt(rho) Q : Q Q^dag = 1}`` of exact
    decompositions. Best effort; returns a list of ``(weight,
    PureStateVector)`` or ``None``.
    """
    D = state.rho.shape[0]
    n = columns or 2 * D
    lam, V = np.linalg.eigh(state.rho)
    lam = np.clip(lam, 0, None)
    root = (V * np.sqrt(lam)) @ V.conj().T
    support = lam > 1e-12
    for restart in range(restarts):
        rng = ops.make_rng(seed, r, restart)
        Q = np.linalg.qr(ops.ginibre(rng, n, D))[0].conj().T  # D x n, rows orthonormal
        M = root @ Q
        for _ in range(iters):
            T = _truncate_schmidt(M, state.dims, r)
            if np.max(np.abs(T @ T.conj().T - state.rho)) < RECONSTRUCTION_TOL:
                w = np.sum(np.abs(T) ** 2, axis=0)
                keep = w > 1e-14
                parts = tuple((float(wi), ops.normalized_pure(T[:, i], state.dims))
                              for i, wi in zip(np.flatnonzero(keep), w[keep]))
                return parts
            # closest exact decomposition: M = sqrt(rho) Q with Q the polar factor
            # of the support-projected sqrt(rho)^+ T
            inv_root = (V[:, support] / np.sqrt(lam[support])) @ V[:, support].conj().T
            Y = V[:, support].conj().T @ (inv_root @ T)
            U, _, Vh = np.linalg.svd(Y, full_matrices=False)
            Q = V[:, support] @ (U @ Vh)
            M = root @ Q
    return None


def schmidt_number_bounds(state: BipartiteState, bank=None, seed=0, search: bool = True) -> SchmidtReport:
    """Lower and upper bounds on the Schmidt number.

    Lower bound: ``1 + k`` for the largest ``k`` at which a ``k``-positive
    bank map witnesses the state, and for isotropic states ``f > k / d``.
    Upper bound: a recorded decomposition, the Schmidt rank of a pure state,
    or a decomposition search; ``d`` if none succeeds.
    """
    dA, dB = state.dims
    if dA != dB:
        raise InvalidInput("Schmidt-number bounds need d_A = d_B")
    d = dA
    bank = default_positive_bank(d) if bank is None else bank
    lower, witnesses = 1, []
    for entry in bank:
        lam = witness_with_map(state, entry.map)
        witnesses.append((entry.map.label, lam))
        if lam < -WITNESS_TOL:
            lower = max(lower, entry.level + 1)
    f = isotropic_fidelity(state)
    if f is not None:
        # largest k with f > k / d
        k = int(np.ceil(f * d - 1e-12)) - 1
        lower = max(lower, min(k + 1, d))
    lower = min(lower, d)

    upper, method, decomposition = d, "default", None
    if state.decomposition is not None:
        rec = sum(w * psi.projector() for w, psi in state.decomposition)
        if np.max(np.abs(rec - state.rho)) < RECONSTRUCTION_TOL:
            upper = max(schmidt_rank(psi) for _, psi in state.decomposition)
            method, decomposition = "recorded decomposition", state.decomposition
    lam, V = np.linalg.eigh(state.rho)
    if upper > lower and np.sum(lam > 1e-10) == 1:
        psi = ops.normalized_pure(V[:, -1], state.dims)
        upper, method, decomposition = schmidt_rank(psi), "pure state", ((1.0, psi),)
    if search and upper > lower:
        for r in range(lower, upper):
            parts = decomposition_search(state, r, seed=seed)
            if parts is not None:
                upper, method, decomposition = max(schmidt_rank(psi) for _, psi in parts), "decomposition search", parts
                break
    if lower > upper:
        raise RuntimeError(f"inconsistent Schmidt-number bounds {lower} > {upper}")
    return SchmidtReport(lower, upper, witnesses, decomposition, method)


# ---------------------------------------------------------------------------
# The calE_k classes
# ---------------------------------------------------------------------------

def classify_new_hierarchy(state: BipartiteState, bank=None, seed: int = 0) -> dict[int, str]:
    """Per-level verdicts for the classes ``calE_k``, ``k = 1 .. d^2``.

    A map certified in ``C_k`` lies in every ``C_j`` with ``j <= k``, so a
    witness at level ``k`` puts the state outside ``calE_j`` for all
    ``j <= k``. ``CONSISTENT`` only means no bank map excludes the state.
    """
    dA, dB = state.dims
    bank = list(default_contractive_bank(seed)) if bank is None else list(bank)
    for entry in bank:
        cert = entry.certificate
        if cert is None or not cert.member or cert.k < entry.level:
            raise PreconditionFailed(f"bank map {entry.map.label!r} carries no membership certificate "
                                     f"at level {entry.level}")
        if entry.map.dim != dB:
            raise DimensionMismatch(f"bank map dimension {entry.map.dim} does not match d_B = {dB}")
    top = dB * dB
    outside_up_to = 0
    for entry in bank:
        if witness_with_map(state, entry.map) < -WITNESS_TOL:
            outside_up_to = max(outside_up_to, entry.level)
    return {k: OUTSIDE if k <= outside_up_to else CONSISTENT for k in range(1, top + 1)}

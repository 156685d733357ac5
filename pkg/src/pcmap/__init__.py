"""Partially contractive maps on matrix algebras and the matching entanglement classes."""
from .contractivity import (
    CanonicalTriple,
    ContractivityCertificate,
    ExtensionSearchResult,
    canonical_restriction,
    canonicalize_triple,
    certify_c3_covariant,
    certify_membership,
    check_covariance,
    contraction_sides,
    extension_feasibility,
    hierarchy_scan,
    lemma3s_condition_B,
    violation_search,
)
from .entanglement import (
    BankEntry,
    BipartiteState,
    SchmidtReport,
    classify_new_hierarchy,
    isotropic_state,
    schmidt_number_bounds,
    schmidt_rank,
    witness_with_map,
)
from .errors import DegenerateTriple, DependentBasis, DimensionMismatch, InvalidInput, PreconditionFailed
from .maps import (
    QuantumMap,
    RestrictedMap,
    apply,
    choi,
    compose,
    identity_map,
    is_hermiticity_preserving,
    is_trace_preserving,
    is_unital,
    lambda_family,
    map_from_choi,
    omega_family,
    phi_p_family,
    reduction_map,
    restrict,
    tensor_with_identity,
    transposition,
)
from .operators import (
    PureStateVector,
    eigh,
    hilbert_schmidt_norm,
    operator_norm,
    relative_entropy,
    sample_density,
    sample_hermitian,
    sample_pure,
    sample_unitary,
    trace_norm,
)
from .positivity import (
    PositivityVerdict,
    Verdict,
    build_schwarz_mixture,
    contraction_check,
    is_completely_positive,
    is_positive,
    k_positivity_search,
    kadison_check,
    schwarz_check,
)

__version__ = "0.1.0"

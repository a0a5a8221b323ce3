"""Closed-form constants, lemma oracles and recovery certificates."""
from .constants import (
    ConstrainedBoundParams,
    ConstrainedConstants,
    Constant,
    RegularizedConstants,
    alpha_hat,
    block_split,
    constrained_constants,
    delta4r_threshold,
    mn_min_max,
    mn_min_max_bruteforce,
    regularized_constants,
    suggest_lambdas,
    tail_bound_constants,
    theta_k,
)
from .lemmas import PolytopeDecomposition, lstar_f_bounds, polytope_decompose, power_sum_check
from .recovery import (
    FAIL,
    NO_ADMISSIBLE_K,
    NOT_APPLICABLE,
    PASS,
    SKIPPED,
    ConstrainedBoundReport,
    RegularizedBoundReport,
    check_constrained_recovery,
    check_regularized_recovery,
    params_from_operator,
    proof_replay_constrained,
    spectral_tail_replay,
)

__all__ = [
    "Constant",
    "ConstrainedBoundParams",
    "ConstrainedBoundReport",
    "ConstrainedConstants",
    "FAIL",
    "NOT_APPLICABLE",
    "NO_ADMISSIBLE_K",
    "PASS",
    "PolytopeDecomposition",
    "RegularizedBoundReport",
    "RegularizedConstants",
    "SKIPPED",
    "alpha_hat",
    "block_split",
    "check_constrained_recovery",
    "check_regularized_recovery",
    "constrained_constants",
    "delta4r_threshold",
    "lstar_f_bounds",
    "mn_min_max",
    "mn_min_max_bruteforce",
    "params_from_operator",
    "polytope_decompose",
    "power_sum_check",
    "proof_replay_constrained",
    "regularized_constants",
    "spectral_tail_replay",
    "suggest_lambdas",
    "tail_bound_constants",
    "theta_k",
]

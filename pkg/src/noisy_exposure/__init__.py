"""Privacy/accuracy trade-offs for noisy exposure notification.

Noisy subset-sum oracles over infection-status databases, reconstruction
attacks against them, edge-private alerting on contact graphs, and the
closed-form lower bounds that tie the two together.
"""

from .attacks import (
    ReconstructionResult,
    adaptive_split_reconstruct,
    brute_force_reconstruct,
    consistent_candidates,
    relax_and_round_reconstruct,
    split_database_attack,
)
from .bounds import (
    TradeoffBound,
    bound_vs_empirical,
    leaked_count,
    lemma1_eps_lower,
    reconstruction_error_bound,
    theorem4_eps_lower,
)
from .db import (
    BinaryDatabase,
    NoiseMechanism,
    NoisyOracle,
    SubsetQuery,
    hamming_distance,
    oracle_answer,
    random_database,
    true_answer,
)
from .graphrec import (
    ContactGraph,
    RecommendationDistribution,
    UtilityVector,
    build_graph,
    dp_audit,
    empirical_accuracy,
    exponential_mechanism,
    structural_utility,
)

__version__ = "0.1.0"

"""Generalized uniformity testing: decide from samples whether a discrete
distribution is uniform over some unknown subset of its domain."""

from .collision import CollisionTracker
from .core import (
    Distribution,
    NormSummary,
    UniformClassDistance,
    norms,
    norms_to_distance_bound,
    read_distribution,
    tv_distance,
    tv_to_uniform_class,
    uniformity_gap,
    validate,
    write_distribution,
)
from .estimator import EstimatorConfig, L2Estimate, build_l2_adversary, estimate_l2_squared
from .lowerbound import (
    IndistinguishabilityReport,
    MomentProfile,
    build_matched_uniform,
    k_moments,
    max_indistinguishable_k,
    wishful_discrepancy,
)
from .sampling import FamilySpec, SampleOracle, make_stream, make_synthetic, parse_family, realize
from .tester import TesterConfig, Verdict, expected_stage2_budget, test_uniformity

__version__ = "0.1.0"

__all__ = [
    "CollisionTracker",
    "Distribution", "NormSummary", "UniformClassDistance", "norms", "norms_to_distance_bound",
    "read_distribution", "tv_distance", "tv_to_uniform_class", "uniformity_gap", "validate",
    "write_distribution",
    "EstimatorConfig", "L2Estimate", "build_l2_adversary", "estimate_l2_squared",
    "IndistinguishabilityReport", "MomentProfile", "build_matched_uniform", "k_moments",
    "max_indistinguishable_k", "wishful_discrepancy",
    "FamilySpec", "SampleOracle", "make_stream", "make_synthetic", "parse_family", "realize",
    "TesterConfig", "Verdict", "expected_stage2_budget", "test_uniformity",
]

"""Numerical laboratory for Ghirlanda-Guerra identities in disordered Gibbs measures."""

from gglab.model import (
    FeatureSet,
    ModelInstance,
    ModelSpec,
    SelfOverlapError,
    build_ea,
    build_generalized,
    build_pspin,
    build_rfim,
    build_sk,
    energy,
    energy_delta,
    self_overlap_constant,
)
from gglab.gibbs import (
    GibbsEnsemble,
    ExactModeError,
    exact_replica_sampler,
    feature_averages,
    free_energy_per_site,
    log_partition,
    mcmc_sampler,
    pair_overlap_moment,
)

__version__ = "0.1.0"

__all__ = [
    "FeatureSet",
    "ModelInstance",
    "ModelSpec",
    "SelfOverlapError",
    "build_ea",
    "build_generalized",
    "build_pspin",
    "build_rfim",
    "build_sk",
    "energy",
    "energy_delta",
    "self_overlap_constant",
    "GibbsEnsemble",
    "ExactModeError",
    "exact_replica_sampler",
    "feature_averages",
    "free_energy_per_site",
    "log_partition",
    "mcmc_sampler",
    "pair_overlap_moment",
]

"""Estimation of participation and transmission rates from diffusion panels
observed on village networks."""

from .estimation import Grid, covariance, estimate, profile_p
from .graph import RateCase, VillageNetwork, build_network, compute_reach, partition_types
from .io import export_surface, load_sample, read_networks
from .moments import (
    decompose_2m,
    hessian_convexity,
    individual_moments,
    objective_2m,
    objective_na,
    score,
)
from .montecarlo import McConfig, run_study, synthetic_villages
from .rates import closed_form_rate, oracle_rate, rate_gradient, star_formula
from .simulate import seed_plan, simulate_sample, simulate_village

__version__ = "0.1.0"

__all__ = [
    "Grid", "McConfig", "RateCase", "VillageNetwork", "build_network", "closed_form_rate",
    "compute_reach", "covariance", "decompose_2m", "estimate", "export_surface",
    "hessian_convexity", "individual_moments", "load_sample", "objective_2m", "objective_na",
    "oracle_rate", "partition_types", "profile_p", "rate_gradient", "read_networks",
    "run_study", "score", "seed_plan", "simulate_sample", "simulate_village", "star_formula",
    "synthetic_villages",
]

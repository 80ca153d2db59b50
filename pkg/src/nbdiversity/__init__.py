"""Sampling formula, simulation and WLS estimation for the PD_alpha^(r) partition model."""
from .diversity import shannon_entropy
from .esf import Params, eppf, esf_conditional_on_k, esf_distribution, esf_probability, poisson_mixture_probability
from .estimation import (
    ExpectedCounts,
    FitResult,
    GridSpec,
    WeightScheme,
    expected_counts,
    fit_grid,
    fit_pd_alpha_baseline,
    simulation_study,
    weighted_ss,
)
from .io import AlleleDataset, load_quolls, parse_dataset, serialize_dataset
from .partitions import PartitionCounts, enumerate_partitions, parse_partition
from .sampling import LevyMeasure, SamplerConfig, nbpp_draw

__version__ = "0.1.0"

"""Transformed Gaussian Markov random fields.

Random fields with arbitrary continuous margins tied together by a Gaussian
copula whose precision is a CAR matrix on a spatial graph, and Bayesian
spatial Poisson and Bernoulli regressions built on them.
"""
from .errors import *  # noqa: F401,F403
from .field import TgmrfSample, log_joint_density, markov_check, sample_field, sample_latent
from .glmm import Dataset, Likelihood, read_dataset, write_dataset
from .lattice import (
    SpatialGraph,
    build_grid_graph,
    build_lfdp_lattice,
    car_precision,
    copula_correlation,
    load_graph,
    read_graph,
    write_graph,
)
from .margins import Kind, MarginalFamily, SiteMarginal, resolve
from .mcmc import ChainConfig, PosteriorChain, Priors, TgmrfModel, log_posterior, run_chain
from .selection import LpmlReport, compare_models, compute_lpml
from .study import StudyDesign, StudyResult, lpml_difference_summary, run_study

__version__ = "0.1.0"

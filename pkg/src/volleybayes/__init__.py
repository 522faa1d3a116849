"""Bayesian hierarchical model for volleyball match results.

Points scored follow a Poisson log-linear model with team attack and
defence effects driven by skill efficiencies; whether a match goes to five
sets and who wins it follow logistic models given the points.
"""

from .diagnostics import ParameterSummary, effective_sample_size, potential_scale_reduction, summarize
from .match_data import (
    MatchRecord,
    SeasonData,
    TeamIndex,
    center_covariates,
    compute_efficiency,
    parse_season_csv,
    validate_season,
    write_season_csv,
)
from .mcmc import ChainTrace, PosteriorSample, SamplerConfig, run_all_chains, run_chain
from .model import (
    BasicHyper,
    ParameterState,
    ScaledIWHyper,
    joint_log_posterior,
    log_likelihood,
    prob_five_sets,
    prob_home_win,
    scoring_intensity,
)
from .predictive import (
    league_points,
    rank_probabilities,
    replicate_match,
    replicate_season,
    cumulative_points,
)
from .priors import PriorSpec, XiPrior, log_prior

__version__ = "0.1.0"

__all__ = [
    "BasicHyper", "ChainTrace", "MatchRecord", "ParameterState", "ParameterSummary", "PosteriorSample",
    "PriorSpec", "SamplerConfig", "ScaledIWHyper", "SeasonData", "TeamIndex", "XiPrior",
    "center_covariates", "compute_efficiency", "cumulative_points", "effective_sample_size",
    "joint_log_posterior", "league_points", "log_likelihood", "log_prior", "parse_season_csv",
    "potential_scale_reduction", "prob_five_sets", "prob_home_win", "rank_probabilities",
    "replicate_match", "replicate_season", "run_all_chains", "run_chain", "scoring_intensity",
    "summarize", "validate_season", "write_season_csv",
]

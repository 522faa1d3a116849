"""Linear predictors, likelihood terms and the joint log-posterior.

Points scored by each side are independent Poisson counts whose log-rates
combine a constant, a home effect and team-specific attack/defence terms.
Each team term is an intercept plus two efficiency slopes, and every
coefficient column is constrained to sum to zero over teams by centering
unconstrained ("star") coefficients. Two logistic regressions on the
observed points describe whether five sets were played and whether the
home side won.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Union

import numpy as np
from scipy.special import gammaln

from .match_data import MatchRecord, SeasonData

# Columns of the per-side design blocks: intercept plus two efficiencies.
ATTACK_COVARIATES = (1, 0)  # att_eff, ser_eff positions within a 4-vector of efficiencies
DEFENCE_COVARIATES = (2, 3)  # def_eff, blo_eff

_MAX_LOG_INTENSITY = 700.0


class IntensityOverflowError(FloatingPointError):
    def __init__(self, log_intensity: float):
        super().__init__(f"scoring intensity overflows: log-intensity {log_intensity!r}")
        self.log_intensity = log_intensity


@dataclass
class BasicHyper:
    """Independent Normal hierarchy: per-column means and precisions."""

    mu_alpha: np.ndarray
    mu_beta: np.ndarray
    tau_alpha: np.ndarray
    tau_beta: np.ndarray

    variant = "basic"

    def copy(self) -> "BasicHyper":
        return BasicHyper(*(np.array(a, dtype=float) for a in
                            (self.mu_alpha, self.mu_beta, self.tau_alpha, self.tau_beta)))


@dataclass
class ScaledIWHyper:
    """Scaled Inverse-Wishart hierarchy.

    Team coefficient rows are ``xi * raw`` with ``raw ~ MVN(mu_raw, Lambda)``,
    so the rows themselves have covariance ``Diag(xi) Lambda Diag(xi)``.
    """

    mu_raw_alpha: np.ndarray
    mu_raw_beta: np.ndarray
    xi_alpha: np.ndarray
    xi_beta: np.ndarray
    Lambda_alpha: np.ndarray
    Lambda_beta: np.ndarray

    variant = "scaled-iw"

    def copy(self) -> "ScaledIWHyper":
        return ScaledIWHyper(*(np.array(a, dtype=float) for a in (
            self.mu_raw_alpha, self.mu_raw_beta, self.xi_alpha, self.xi_beta,
            self.Lambda_alpha, self.Lambda_beta)))


HyperState = Union[BasicHyper, ScaledIWHyper]


@dataclass
class ParameterState:
    mu: float
    lam: float
    alpha_star: np.ndarray  # K x 3
    beta_star: np.ndarray  # K x 3
    hyper: HyperState
    gamma: np.ndarray = field(default_factory=lambda: np.zeros(3))
    eta: np.ndarray = field(default_factory=lambda: np.zeros(4))

    @property
    def K(self) -> int:
        return self.alpha_star.shape[0]

    @property
    def variant(self) -> str:
        return self.hyper.variant

    def copy(self) -> "ParameterState":
        return ParameterState(
            float(self.mu), float(self.lam), np.array(self.alpha_star, dtype=float),
            np.array(self.beta_star, dtype=float), self.hyper.copy(),
            np.array(self.gamma, dtype=float), np.array(self.eta, dtype=float),
        )

    def is_finite(self) -> bool:
        arrays = [self.alpha_star, self.beta_star, self.gamma, self.eta,
                  *(np.asarray(v) for v in vars(self.hyper).values())]
        return math.isfinite(self.mu) and math.isfinite(self.lam) and all(
            np.all(np.isfinite(a)) for a in arrays)


@dataclass(frozen=True)
class CenteredEffects:
    alpha: np.ndarray
    beta: np.ndarray


@dataclass(frozen=True)
class ScoringIntensities:
    theta_h: float
    theta_a: float


def apply_sum_to_zero(stars: np.ndarray) -> np.ndarray:
    """Subtract each column's mean (works on a vector or a K x J matrix)."""
    stars = np.asarray(stars, dtype=float)
    if stars.shape[0] < 2:
        raise ValueError("sum-to-zero centering needs at least two teams")
    return stars - stars.mean(axis=0)


def centered_effects(state: ParameterState) -> CenteredEffects:
    return CenteredEffects(apply_sum_to_zero(state.alpha_star), apply_sum_to_zero(state.beta_star))


def _exp_checked(log_theta):
    worst = np.max(np.abs(log_theta)) if np.ndim(log_theta) else abs(log_theta)
    if not np.all(np.isfinite(log_theta)) or worst > _MAX_LOG_INTENSITY:
        bad = np.ravel(log_theta)[np.argmax(np.abs(np.nan_to_num(np.ravel(log_theta), nan=np.inf)))]
        raise IntensityOverflowError(float(bad))
    return np.exp(log_theta)


def scoring_intensity(state: ParameterState, match: MatchRecord,
                      effects: CenteredEffects | None = None) -> ScoringIntensities:
    """Expected points of the home and away side in one match."""
    eff = effects if effects is not None else centered_effects(state)
    h, a = match.home - 1, match.away - 1
    xh = np.asarray(match.eff_home, dtype=float)
    xa = np.asarray(match.eff_away, dtype=float)
    att = lambda k, x: eff.alpha[k, 0] + eff.alpha[k, 1] * x[1] + eff.alpha[k, 2] * x[0]  # noqa: E731
    dfc = lambda k, x: eff.beta[k, 0] + eff.beta[k, 1] * x[2] + eff.beta[k, 2] * x[3]  # noqa: E731
    log_h = state.mu + state.lam + att(h, xh) + dfc(a, xa)
    log_a = state.mu + att(a, xa) + dfc(h, xh)
    th, ta = _exp_checked(np.array([log_h, log_a]))
    return ScoringIntensities(float(th), float(ta))


@dataclass(frozen=True)
class Design:
    """Vectorised view of a season used by the likelihood and the sampler.

    The four ``x_*`` blocks are N x 3 with columns (1, slope covariate 1,
    slope covariate 2) for attack (att_eff, ser_eff) or defence
    (def_eff, blo_eff).
    """

    K: int
    home: np.ndarray
    away: np.ndarray
    y_h: np.ndarray
    y_a: np.ndarray
    d_s: np.ndarray
    d_m: np.ndarray
    x_att_h: np.ndarray
    x_att_a: np.ndarray
    x_def_h: np.ndarray
    x_def_a: np.ndarray

    @property
    def n(self) -> int:
        return len(self.home)

    @classmethod
    def from_season(cls, data: SeasonData) -> "Design":
        arr = data.arrays()
        eh, ea = arr["eff_home"], arr["eff_away"]
        ones = np.ones(len(eh))
        block = lambda e, cols: np.column_stack([ones, e[:, cols[0]], e[:, cols[1]]])  # noqa: E731
        return cls(
            K=data.teams.K, home=arr["home"], away=arr["away"], y_h=arr["y_h"], y_a=arr["y_a"],
            d_s=arr["d_s"], d_m=arr["d_m"],
            x_att_h=block(eh, ATTACK_COVARIATES).reshape(-1, 3),
            x_att_a=block(ea, ATTACK_COVARIATES).reshape(-1, 3),
            x_def_h=block(eh, DEFENCE_COVARIATES).reshape(-1, 3),
            x_def_a=block(ea, DEFENCE_COVARIATES).reshape(-1, 3),
        )


def _as_design(data) -> Design:
    return data if isinstance(data, Design) else Design.from_season(data)


def log_intensities(state: ParameterState, data, effects: CenteredEffects | None = None):
    """Vector log-rates ``(log theta_h, log theta_a)`` for every match."""
    d = _as_design(data)
    eff = effects if effects is not None else centered_effects(state)
    log_h = (state.mu + state.lam + np.einsum("ij,ij->i", eff.alpha[d.home], d.x_att_h)
             + np.einsum("ij,ij->i", eff.beta[d.away], d.x_def_a))
    log_a = (state.mu + np.einsum("ij,ij->i", eff.alpha[d.away], d.x_att_a)
             + np.einsum("ij,ij->i", eff.beta[d.home], d.x_def_h))
    return log_h, log_a


def poisson_logpmf(y, theta):
    y = np.asarray(y, dtype=float)
    theta = np.asarray(theta, dtype=float)
    return y * np.log(theta) - theta - gammaln(y + 1.0)


def loglik_points(theta: ScoringIntensities, y_h: int, y_a: int) -> float:
    """Sum of the two independent Poisson log-probabilities."""
    if theta.theta_h <= 0 or theta.theta_a <= 0:
        raise ValueError("scoring intensities must be positive")
    if y_h < 0 or y_a < 0:
        raise ValueError("point counts must be nonnegative")
    return float(poisson_logpmf(y_h, theta.theta_h) + poisson_logpmf(y_a, theta.theta_a))


def inv_logit(x):
    """Logistic function, evaluated without overflow for either sign of ``x``."""
    x = np.asarray(x, dtype=float)
    z = np.exp(-np.abs(x))
    out = np.where(x >= 0, 1.0 / (1.0 + z), z / (1.0 + z))
    return out if out.ndim else float(out)


def bernoulli_logit_logpmf(d, x):
    """log p(d) for d ~ Bernoulli(inv_logit(x))."""
    return np.asarray(d, dtype=float) * x - np.logaddexp(0.0, x)


def prob_five_sets(gamma, y_h, y_a):
    gamma = np.asarray(gamma, dtype=float)
    return inv_logit(gamma[0] + gamma[1] * np.asarray(y_h, dtype=float) + gamma[2] * np.asarray(y_a, dtype=float))


def prob_home_win(eta, y_h, y_a, d_s):
    eta = np.asarray(eta, dtype=float)
    d_s = np.asarray(d_s, dtype=float)
    if np.any((d_s != 0) & (d_s != 1)):
        raise ValueError("d_s must be 0 or 1")
    return inv_logit(eta[0] + eta[1] * np.asarray(y_h, dtype=float)
                     + eta[2] * np.asarray(y_a, dtype=float) + eta[3] * d_s)


def sets_linear_predictor(gamma, d: Design):
    return gamma[0] + gamma[1] * d.y_h + gamma[2] * d.y_a


def winner_linear_predictor(eta, d: Design):
    return eta[0] + eta[1] * d.y_h + eta[2] * d.y_a + eta[3] * d.d_s


def match_log_likelihood(state: ParameterState, data) -> np.ndarray:
    """Per-match contribution of the three modules (vector of length N)."""
    d = _as_design(data)
    log_h, log_a = log_intensities(state, d)
    th, ta = _exp_checked(log_h), _exp_checked(log_a)
    points = d.y_h * log_h - th - gammaln(d.y_h + 1) + d.y_a * log_a - ta - gammaln(d.y_a + 1)
    sets = bernoulli_logit_logpmf(d.d_s, sets_linear_predictor(state.gamma, d))
    winner = bernoulli_logit_logpmf(d.d_m, winner_linear_predictor(state.eta, d))
    return points + sets + winner


def log_likelihood(state: ParameterState, data) -> float:
    d = _as_design(data)
    if d.n == 0:
        return 0.0
    return float(np.sum(match_log_likelihood(state, d)))


def joint_log_posterior(state: ParameterState, data, prior) -> float:
    """Unnormalised joint log-density of parameters and observed season.

    Returns ``-inf`` when the state lies outside the prior support.
    """
    from .priors import log_prior

    lp = log_prior(state, prior)
    if not np.isfinite(lp):
        return -math.inf
    return lp + log_likelihood(state, data)


def with_hyper(state: ParameterState, **changes) -> ParameterState:
    """Copy of ``state`` with hyperparameter fields replaced."""
    new = state.copy()
    new.hyper = replace(new.hyper, **changes)
    return new

"""Synthetic seasons drawn from the model's own generative process."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .match_data import SeasonData, double_round_robin, season_from_arrays
from .model import BasicHyper, ParameterState, centered_effects, inv_logit

# Typical per-match efficiencies (mean, sd) in ser, att, def, blo order.
EFFICIENCY_MOMENTS = ((-0.08, 0.04), (0.22, 0.07), (0.12, 0.08), (0.03, 0.10))


@dataclass(frozen=True)
class SyntheticTruth:
    """Hierarchy scales used to draw team coefficients (standard deviations per column)."""

    mu: float = 4.44
    lam: float = 0.03
    sd_alpha: tuple = (0.07, 0.2, 0.2)
    sd_beta: tuple = (0.08, 0.2, 0.2)
    gamma: tuple = (-14.0, 0.08, 0.08)
    eta: tuple = (0.0, 0.25, -0.25, 0.0)


def draw_true_state(K: int, rng: np.random.Generator, truth: SyntheticTruth = SyntheticTruth()) -> ParameterState:
    """Team coefficients drawn from the basic hierarchy with zero hierarchy means."""
    sd_a = np.asarray(truth.sd_alpha, dtype=float)
    sd_b = np.asarray(truth.sd_beta, dtype=float)
    alpha_star = rng.standard_normal((K, 3)) * sd_a
    beta_star = rng.standard_normal((K, 3)) * sd_b
    hyper = BasicHyper(np.zeros(3), np.zeros(3), 1.0 / sd_a**2, 1.0 / sd_b**2)
    return ParameterState(truth.mu, truth.lam, alpha_star, beta_star, hyper,
                          np.array(truth.gamma, dtype=float), np.array(truth.eta, dtype=float))


def draw_efficiencies(n: int, rng: np.random.Generator) -> np.ndarray:
    m = np.array([mo[0] for mo in EFFICIENCY_MOMENTS])
    s = np.array([mo[1] for mo in EFFICIENCY_MOMENTS])
    return np.clip(m + s * rng.standard_normal((n, 4)), -1.0, 1.0)


def simulate_season(state: ParameterState, rng: np.random.Generator, team_names=None,
                    fixtures=None) -> SeasonData:
    """Draw one double round-robin season given parameters.

    Covariates are drawn first and centered, so the season is ready to fit.
    Set scores are reconstructed from the simulated indicators: the winner
    takes 3 sets, the loser 2 in a five-set match and otherwise 0 or 1.
    """
    K = state.K
    names = list(team_names) if team_names is not None else [f"Team {chr(65 + k)}" for k in range(K)]
    pairs = np.array(fixtures if fixtures is not None else double_round_robin(K))
    home, away = pairs[:, 0], pairs[:, 1]
    n = len(pairs)
    eff_h = draw_efficiencies(n, rng)
    eff_a = draw_efficiencies(n, rng)
    X = np.hstack([eff_h, eff_a])
    X = X - X.mean(axis=0)
    eff_h, eff_a = X[:, :4], X[:, 4:]

    e = centered_effects(state)
    log_h = (state.mu + state.lam + e.alpha[home, 0] + e.alpha[home, 1] * eff_h[:, 1] + e.alpha[home, 2] * eff_h[:, 0]
             + e.beta[away, 0] + e.beta[away, 1] * eff_a[:, 2] + e.beta[away, 2] * eff_a[:, 3])
    log_a = (state.mu + e.alpha[away, 0] + e.alpha[away, 1] * eff_a[:, 1] + e.alpha[away, 2] * eff_a[:, 0]
             + e.beta[home, 0] + e.beta[home, 1] * eff_h[:, 2] + e.beta[home, 2] * eff_h[:, 3])
    y_h = rng.poisson(np.exp(log_h))
    y_a = rng.poisson(np.exp(log_a))
    g, et = state.gamma, state.eta
    d_s = (rng.random(n) < inv_logit(g[0] + g[1] * y_h + g[2] * y_a)).astype(int)
    d_m = (rng.random(n) < inv_logit(et[0] + et[1] * y_h + et[2] * y_a + et[3] * d_s)).astype(int)
    loser = np.where(d_s == 1, 2, rng.integers(0, 2, n))
    s_h = np.where(d_m == 1, 3, loser)
    s_a = np.where(d_m == 1, loser, 3)
    season = season_from_arrays(names, home, away, y_h, y_a, s_h, s_a, eff_h, eff_a)
    return replace(season, centered=True)

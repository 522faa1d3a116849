"""Prior densities and conjugate Gibbs updates for both hierarchy variants."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Any

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve, solve_triangular
from scipy.special import gammaln, multigammaln

from .model import BasicHyper, ParameterState, ScaledIWHyper

LOG_2PI = math.log(2.0 * math.pi)
VARIANTS = ("basic", "scaled-iw")


class WishartUpdateError(LinAlgError):
    """The updated Inverse-Wishart scale matrix is not positive-definite."""


@dataclass(frozen=True)
class XiPrior:
    """Prior on the scale factors: ``uniform`` on (low, high) or zero-mean ``normal`` with ``sd``."""

    kind: str = "uniform"
    low: float = 0.0
    high: float = 100.0
    sd: float = 10.0

    def __post_init__(self):
        if self.kind not in ("uniform", "normal"):
            raise ValueError(f"unknown xi prior {self.kind!r}")
        if self.kind == "uniform" and not self.low < self.high:
            raise ValueError("xi prior needs low < high")
        if self.kind == "normal" and self.sd <= 0:
            raise ValueError("xi prior sd must be positive")

    def logpdf(self, xi: np.ndarray) -> float:
        xi = np.asarray(xi, dtype=float)
        if np.any(xi == 0):
            return -math.inf
        if self.kind == "uniform":
            if np.any(xi <= self.low) or np.any(xi >= self.high):
                return -math.inf
            return -xi.size * math.log(self.high - self.low)
        return float(np.sum(-0.5 * LOG_2PI - math.log(self.sd) - 0.5 * (xi / self.sd) ** 2))


@dataclass(frozen=True)
class PriorSpec:
    variant: str = "basic"
    normal_fixed_precision: float = 1e-6
    gamma_shape: float = 0.01
    gamma_rate: float = 0.01
    logistic_precision: float = 1e-4
    iw_nu: float = 4.0
    iw_scale: tuple = ((1.0, 0.0, 0.0), (0.0, 1.0, 0.0), (0.0, 0.0, 1.0))
    xi_prior: XiPrior = field(default_factory=XiPrior)

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown prior variant {self.variant!r}; expected one of {VARIANTS}")
        for name in ("normal_fixed_precision", "gamma_shape", "gamma_rate", "logistic_precision"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.iw_nu < 4:
            raise ValueError("iw_nu must be at least 4")
        scale = np.asarray(self.iw_scale, dtype=float)
        if scale.shape != (3, 3) or not np.allclose(scale, scale.T):
            raise ValueError("iw_scale must be a symmetric 3x3 matrix")
        try:
            np.linalg.cholesky(scale)
        except np.linalg.LinAlgError:
            raise ValueError("iw_scale must be positive-definite") from None
        object.__setattr__(self, "iw_scale", tuple(tuple(map(float, r)) for r in scale))
        if isinstance(self.xi_prior, dict):
            object.__setattr__(self, "xi_prior", XiPrior(**self.xi_prior))

    @property
    def scale_matrix(self) -> np.ndarray:
        return np.array(self.iw_scale, dtype=float)

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["iw_scale"] = [list(r) for r in self.iw_scale]
        return d

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "PriorSpec":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown prior keys: {sorted(unknown)}")
        d = dict(d)
        if "iw_scale" in d:
            d["iw_scale"] = tuple(tuple(r) for r in d["iw_scale"])
        if isinstance(d.get("xi_prior"), dict):
            d["xi_prior"] = XiPrior(**d["xi_prior"])
        return cls(**d)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "PriorSpec":
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True)
class CovarianceSummary:
    Sigma: np.ndarray
    sigma2: np.ndarray
    rho: np.ndarray  # pairs (0,1), (0,2), (1,2)


RHO_PAIRS = ((0, 1), (0, 2), (1, 2))


def reconstruct_covariance(xi, Lambda) -> CovarianceSummary:
    """``Sigma = Diag(xi) Lambda Diag(xi)`` with its variances and correlations."""
    xi = np.asarray(xi, dtype=float)
    Lambda = np.asarray(Lambda, dtype=float)
    Sigma = xi[:, None] * Lambda * xi[None, :]
    sigma2 = xi**2 * np.diag(Lambda)
    d = np.sqrt(np.diag(Lambda))
    # Scale factors cancel, so correlations come from Lambda directly.
    rho = np.array([Lambda[j, l] / (d[j] * d[l]) for j, l in RHO_PAIRS])
    return CovarianceSummary(Sigma, sigma2, rho)


# -- log densities ----------------------------------------------------------

def normal_logpdf_prec(x, mean, precision) -> float:
    x = np.asarray(x, dtype=float)
    return float(np.sum(0.5 * np.log(precision) - 0.5 * LOG_2PI - 0.5 * precision * (x - mean) ** 2))


def gamma_logpdf(x, shape, rate) -> float:
    x = np.asarray(x, dtype=float)
    if np.any(x <= 0):
        return -math.inf
    return float(np.sum(shape * math.log(rate) - gammaln(shape) + (shape - 1) * np.log(x) - rate * x))


def _chol_or_none(A):
    try:
        if not np.allclose(A, A.T, rtol=1e-10, atol=1e-12):
            return None
        return np.linalg.cholesky(A)
    except np.linalg.LinAlgError:
        return None


def mvn_logpdf_rows(rows, mean, cov) -> float:
    """Sum of MVN log-densities of the rows of ``rows`` (``-inf`` if ``cov`` is not SPD)."""
    L = _chol_or_none(np.asarray(cov, dtype=float))
    if L is None:
        return -math.inf
    rows = np.atleast_2d(rows)
    p = rows.shape[1]
    z = solve_triangular(L, (rows - mean).T, lower=True)
    logdet = 2.0 * np.sum(np.log(np.diag(L)))
    return float(-0.5 * rows.shape[0] * (p * LOG_2PI + logdet) - 0.5 * np.sum(z**2))


def inv_wishart_logpdf(Lambda, nu, Omega) -> float:
    Lambda = np.asarray(Lambda, dtype=float)
    L = _chol_or_none(Lambda)
    if L is None:
        return -math.inf
    p = Lambda.shape[0]
    logdet_lam = 2.0 * np.sum(np.log(np.diag(L)))
    _, logdet_om = np.linalg.slogdet(Omega)
    trace = np.trace(cho_solve((L, True), Omega))
    return float(0.5 * nu * logdet_om - 0.5 * nu * p * math.log(2.0) - multigammaln(0.5 * nu, p)
                 - 0.5 * (nu + p + 1) * logdet_lam - 0.5 * trace)


def log_prior(state: ParameterState, spec: PriorSpec) -> float:
    """Fully normalised log prior density of ``state`` under ``spec``."""
    if state.variant != spec.variant:
        raise ValueError(f"state variant {state.variant!r} does not match prior {spec.variant!r}")
    t0 = spec.normal_fixed_precision
    lp = normal_logpdf_prec([state.mu, state.lam], 0.0, t0)
    lp += normal_logpdf_prec(state.gamma, 0.0, spec.logistic_precision)
    lp += normal_logpdf_prec(state.eta, 0.0, spec.logistic_precision)
    h = state.hyper
    if isinstance(h, BasicHyper):
        if np.any(h.tau_alpha <= 0) or np.any(h.tau_beta <= 0):
            return -math.inf
        lp += normal_logpdf_prec(state.alpha_star, h.mu_alpha, h.tau_alpha)
        lp += normal_logpdf_prec(state.beta_star, h.mu_beta, h.tau_beta)
        lp += normal_logpdf_prec(np.concatenate([h.mu_alpha, h.mu_beta]), 0.0, t0)
        lp += gamma_logpdf(np.concatenate([h.tau_alpha, h.tau_beta]), spec.gamma_shape, spec.gamma_rate)
        return lp

    for xi in (h.xi_alpha, h.xi_beta):
        lp += spec.xi_prior.logpdf(xi)
    if not math.isfinite(lp):
        return -math.inf
    Omega = spec.scale_matrix
    for stars, mu_raw, xi, Lam in ((state.alpha_star, h.mu_raw_alpha, h.xi_alpha, h.Lambda_alpha),
                                   (state.beta_star, h.mu_raw_beta, h.xi_beta, h.Lambda_beta)):
        lp += inv_wishart_logpdf(Lam, spec.iw_nu, Omega)
        if not math.isfinite(lp):
            return -math.inf
        Sigma = xi[:, None] * Lam * xi[None, :]
        lp += mvn_logpdf_rows(stars, xi * mu_raw, Sigma)
        lp += normal_logpdf_prec(mu_raw, 0.0, t0)
    return lp


# -- conjugate updates ------------------------------------------------------

def hyper_mean_posterior(coeffs, tau: float, prior_precision: float = 1e-6, prior_mean: float = 0.0):
    """Mean and precision of the Normal full conditional of a hierarchy mean."""
    coeffs = np.asarray(coeffs, dtype=float)
    post_prec = prior_precision + coeffs.size * tau
    post_mean = (prior_precision * prior_mean + tau * coeffs.sum()) / post_prec
    return post_mean, post_prec


def gibbs_update_hyper_mean(coeffs, tau: float, rng: np.random.Generator,
                            prior_precision: float = 1e-6) -> float:
    if tau <= 0:
        raise ValueError("precision must be positive")
    mean, prec = hyper_mean_posterior(coeffs, tau, prior_precision)
    return float(mean + rng.standard_normal() / math.sqrt(prec))


def hyper_precision_posterior(coeffs, mu: float, shape0: float, rate0: float):
    """Shape and rate of the Gamma full conditional of a hierarchy precision."""
    coeffs = np.asarray(coeffs, dtype=float)
    return shape0 + 0.5 * coeffs.size, rate0 + 0.5 * float(np.sum((coeffs - mu) ** 2))


def gibbs_update_hyper_precision(coeffs, mu: float, shape0: float, rate0: float,
                                 rng: np.random.Generator) -> float:
    if shape0 <= 0 or rate0 <= 0:
        raise ValueError("Gamma hyperparameters must be positive")
    shape, rate = hyper_precision_posterior(coeffs, mu, shape0, rate0)
    return float(rng.gamma(shape, 1.0 / rate))


def sample_inverse_wishart(nu: float, Psi, rng: np.random.Generator) -> np.ndarray:
    """Draw from Inverse-Wishart(nu, Psi) via the Bartlett factor of its inverse.

    ``Lambda^{-1} ~ Wishart(nu, Psi^{-1})`` is written as ``(L A)(L A)^T`` with
    ``L = chol(Psi^{-1})`` and ``A`` lower triangular (chi variates on the
    diagonal, standard normals below); inverting the triangular factor then
    gives ``Lambda`` without a general matrix inverse.
    """
    Psi = np.asarray(Psi, dtype=float)
    p = Psi.shape[0]
    try:
        c = cho_factor(Psi, lower=True)
    except LinAlgError as exc:
        raise WishartUpdateError(f"Inverse-Wishart scale is not positive-definite: {exc}") from None
    Psi_inv = cho_solve(c, np.eye(p))
    L = np.linalg.cholesky(0.5 * (Psi_inv + Psi_inv.T))
    A = np.zeros((p, p))
    A[np.diag_indices(p)] = np.sqrt(rng.chisquare(nu - np.arange(p)))
    A[np.tril_indices(p, -1)] = rng.standard_normal(p * (p - 1) // 2)
    T_inv = solve_triangular(L @ A, np.eye(p), lower=True)
    Lam = T_inv.T @ T_inv
    return 0.5 * (Lam + Lam.T)


def wishart_posterior(rows, M, nu: float, scale):
    """Degrees of freedom and scale of the Inverse-Wishart full conditional."""
    rows = np.atleast_2d(np.asarray(rows, dtype=float))
    resid = rows - np.asarray(M, dtype=float)
    if rows.size == 0:
        return nu, np.asarray(scale, dtype=float)
    return nu + rows.shape[0], np.asarray(scale, dtype=float) + resid.T @ resid


def gibbs_update_wishart(rows, M, nu: float, scale, rng: np.random.Generator) -> np.ndarray:
    """Draw an unscaled covariance from its Inverse-Wishart full conditional."""
    if nu < 4:
        raise ValueError("nu must be at least 4")
    nu_post, scale_post = wishart_posterior(rows, M, nu, scale)
    return sample_inverse_wishart(nu_post, scale_post, rng)


def gibbs_update_mvn_mean(rows, Lambda, rng: np.random.Generator, prior_precision: float = 1e-6):
    """Draw the common mean of MVN rows with covariance ``Lambda`` under an independent Normal prior."""
    rows = np.atleast_2d(np.asarray(rows, dtype=float))
    p = Lambda.shape[0]
    K = rows.shape[0] if rows.size else 0
    Lam_inv = np.linalg.inv(Lambda)
    P = prior_precision * np.eye(p) + K * Lam_inv
    b = Lam_inv @ rows.sum(axis=0) if K else np.zeros(p)
    c = cho_factor(P, lower=True)
    mean = cho_solve(c, b)
    z = rng.standard_normal(p)
    # x = mean + L^{-T} z has covariance P^{-1}.
    return mean + solve_triangular(np.tril(c[0]).T, z, lower=False)


def initial_hyper(variant: str, K: int) -> BasicHyper | ScaledIWHyper:
    if variant == "basic":
        return BasicHyper(np.zeros(3), np.zeros(3), np.ones(3), np.ones(3))
    return ScaledIWHyper(np.zeros(3), np.zeros(3), np.ones(3), np.ones(3), np.eye(3), np.eye(3))

"""Adaptive Metropolis-within-Gibbs sampler for the volleyball model.

One sweep updates, in order: the constant, the home effect, every
unconstrained attack and defence coefficient (scalar random-walk moves),
the two logistic coefficient vectors (block random-walk moves), the scale
factors of the scaled Inverse-Wishart variant, and finally the hierarchy
hyperparameters by exact conjugate draws.

The scale factors get three moves: a random walk with the coefficients held
fixed, a joint rescaling of a factor and its coefficient column, and a
rescaling along the factor/Lambda redundancy that leaves the covariance
unchanged. The first alone mixes very slowly.

Step sizes adapt during burn-in only; the retained draws all come from the
same fixed kernel. Log-intensities are cached so that a single coefficient
move costs O(N) rather than a full likelihood evaluation.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .match_data import SeasonData
from .model import (
    BasicHyper,
    CenteredEffects,
    Design,
    ParameterState,
    ScaledIWHyper,
    bernoulli_logit_logpmf,
    centered_effects,
    joint_log_posterior,
)
from .priors import (
    RHO_PAIRS,
    CovarianceSummary,
    PriorSpec,
    gibbs_update_hyper_mean,
    gibbs_update_hyper_precision,
    gibbs_update_mvn_mean,
    gibbs_update_wishart,
    initial_hyper,
    reconstruct_covariance,
)

BLOCK_TARGET_ACCEPT = 0.234


class SamplerError(RuntimeError):
    pass


class TraceFormatError(ValueError):
    pass


@dataclass(frozen=True)
class SamplerConfig:
    n_chains: int = 2
    n_iter: int = 20000
    burn_in: int = 10000
    thin: int = 1
    seed: int = 20172018
    adapt_window: int | None = None  # defaults to the whole burn-in
    adapt_interval: int = 50
    target_accept: float = 0.44
    init_jitter: float = 0.1
    record_log_posterior: bool = True
    workers: int = 1

    def __post_init__(self):
        if self.n_chains < 2:
            raise ValueError("at least two chains are needed for convergence diagnostics")
        if not 0 <= self.burn_in < self.n_iter:
            raise ValueError("burn_in must lie in [0, n_iter)")
        if self.thin < 1:
            raise ValueError("thin must be >= 1")
        if self.adapt_interval < 1:
            raise ValueError("adapt_interval must be >= 1")
        if not 0 < self.target_accept < 1:
            raise ValueError("target_accept must lie in (0, 1)")
        if self.init_jitter < 0:
            raise ValueError("init_jitter must be nonnegative")

    @property
    def n_keep(self) -> int:
        return (self.n_iter - self.burn_in) // self.thin

    @property
    def adapt_until(self) -> int:
        window = self.burn_in if self.adapt_window is None else min(self.adapt_window, self.burn_in)
        return window

    def to_dict(self) -> dict:
        return asdict(self)

    def digest(self) -> str:
        d = self.to_dict()
        d.pop("workers")
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()[:16]


# -- parameter layout ---------------------------------------------------------

def column_names(K: int, variant: str) -> list[str]:
    """Trace columns, named ``param[index]`` with 0-based team and coefficient indices."""
    cols = ["mu", "lambda"]
    for name in ("alpha_star", "beta_star", "alpha", "beta"):
        cols += [f"{name}[{k},{j}]" for k in range(K) for j in range(3)]
    cols += [f"gamma[{j}]" for j in range(3)] + [f"eta[{j}]" for j in range(4)]
    if variant == "basic":
        for name in ("mu_alpha", "mu_beta", "tau_alpha", "tau_beta"):
            cols += [f"{name}[{j}]" for j in range(3)]
    else:
        for name in ("mu_raw_alpha", "mu_raw_beta", "xi_alpha", "xi_beta"):
            cols += [f"{name}[{j}]" for j in range(3)]
        for name in ("Lambda_alpha", "Lambda_beta", "Sigma_alpha", "Sigma_beta"):
            cols += [f"{name}[{j},{l}]" for j in range(3) for l in range(3)]
        for name in ("sigma2_alpha", "sigma2_beta", "rho_alpha", "rho_beta"):
            cols += [f"{name}[{j}]" for j in range(3)]
    cols.append("log_posterior")
    return cols


def pack_state(state: ParameterState, log_post: float = math.nan) -> np.ndarray:
    eff = centered_effects(state)
    parts = [[state.mu, state.lam], state.alpha_star.ravel(), state.beta_star.ravel(),
             eff.alpha.ravel(), eff.beta.ravel(), state.gamma, state.eta]
    h = state.hyper
    if isinstance(h, BasicHyper):
        parts += [h.mu_alpha, h.mu_beta, h.tau_alpha, h.tau_beta]
    else:
        ca = reconstruct_covariance(h.xi_alpha, h.Lambda_alpha)
        cb = reconstruct_covariance(h.xi_beta, h.Lambda_beta)
        parts += [h.mu_raw_alpha, h.mu_raw_beta, h.xi_alpha, h.xi_beta,
                  h.Lambda_alpha.ravel(), h.Lambda_beta.ravel(), ca.Sigma.ravel(), cb.Sigma.ravel(),
                  ca.sigma2, cb.sigma2, ca.rho, cb.rho]
    parts.append([log_post])
    return np.concatenate([np.asarray(p, dtype=float).ravel() for p in parts])


def unpack_state(row: np.ndarray, K: int, variant: str) -> ParameterState:
    row = np.asarray(row, dtype=float)
    pos = 0

    def take(n, shape=None):
        nonlocal pos
        out = row[pos:pos + n]
        pos += n
        return out.reshape(shape) if shape else out.copy()

    mu, lam = take(2)
    a_star, b_star = take(3 * K, (K, 3)).copy(), take(3 * K, (K, 3)).copy()
    take(6 * K)  # centered effects are derived
    gamma, eta = take(3), take(4)
    if variant == "basic":
        hyper = BasicHyper(take(3), take(3), take(3), take(3))
    else:
        mra, mrb, xa, xb = take(3), take(3), take(3), take(3)
        hyper = ScaledIWHyper(mra, mrb, xa, xb, take(9, (3, 3)).copy(), take(9, (3, 3)).copy())
    return ParameterState(float(mu), float(lam), a_star, b_star, hyper, gamma, eta)


@dataclass
class PosteriorSample:
    state: ParameterState
    effects: CenteredEffects
    covariance: dict[str, CovarianceSummary] | None = None
    log_posterior: float = math.nan

    @classmethod
    def from_state(cls, state: ParameterState, log_posterior: float = math.nan) -> "PosteriorSample":
        cov = None
        if isinstance(state.hyper, ScaledIWHyper):
            cov = {"alpha": reconstruct_covariance(state.hyper.xi_alpha, state.hyper.Lambda_alpha),
                   "beta": reconstruct_covariance(state.hyper.xi_beta, state.hyper.Lambda_beta)}
        return cls(state, centered_effects(state), cov, log_posterior)


@dataclass
class ChainTrace:
    """Retained draws of one chain, one row per sample, columns per :func:`column_names`."""

    columns: list[str]
    draws: np.ndarray
    acceptance: dict[str, float]
    meta: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return self.draws.shape[0]

    @property
    def K(self) -> int:
        return int(self.meta["K"])

    @property
    def variant(self) -> str:
        return self.meta["variant"]

    def column(self, name: str) -> np.ndarray:
        try:
            return self.draws[:, self.columns.index(name)]
        except ValueError:
            raise KeyError(f"unknown parameter {name!r}") from None

    def state(self, i: int) -> ParameterState:
        return unpack_state(self.draws[i], self.K, self.variant)

    def samples(self) -> list[PosteriorSample]:
        lp = self.columns.index("log_posterior")
        return [PosteriorSample.from_state(self.state(i), float(self.draws[i, lp]))
                for i in range(len(self))]

    def to_csv(self, path: str | Path) -> None:
        """Columnar CSV with a ``#``-prefixed JSON metadata line first.

        Wall-clock time is left out so reruns give byte-identical files.
        """
        meta = {k: v for k, v in self.meta.items() if k != "seconds"}
        meta["acceptance"] = self.acceptance
        buf = io.StringIO()
        buf.write("# " + json.dumps(meta, sort_keys=True) + "\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.columns)
        for row in self.draws:
            w.writerow([repr(float(v)) for v in row])
        Path(path).write_text(buf.getvalue(), encoding="utf-8")

    @classmethod
    def from_csv(cls, path: str | Path) -> "ChainTrace":
        path = Path(path)
        with path.open(encoding="utf-8") as fh:
            first = fh.readline()
            if not first.startswith("# "):
                raise TraceFormatError(f"{path}:1: missing metadata line")
            try:
                meta = json.loads(first[2:])
            except json.JSONDecodeError as exc:
                raise TraceFormatError(f"{path}:1: bad metadata: {exc}") from None
            reader = csv.reader(fh)
            try:
                columns = next(reader)
            except StopIteration:
                raise TraceFormatError(f"{path}:2: missing header") from None
            rows = []
            for lineno, row in enumerate(reader, start=3):
                if len(row) != len(columns):
                    raise TraceFormatError(f"{path}:{lineno}: expected {len(columns)} fields, got {len(row)}")
                try:
                    rows.append([float(v) for v in row])
                except ValueError:
                    raise TraceFormatError(f"{path}:{lineno}: non-numeric value") from None
        for key in ("K", "variant"):
            if key not in meta:
                raise TraceFormatError(f"{path}:1: metadata lacks {key!r}")
        acceptance = meta.pop("acceptance", {})
        draws = np.array(rows, dtype=float).reshape(len(rows), len(columns))
        return cls(columns, draws, acceptance, meta)


# -- elementary kernels -------------------------------------------------------

def metropolis_step(current: float, step_size: float, log_target: Callable[[float], float],
                    rng: np.random.Generator, current_log_target: float | None = None):
    """One Gaussian random-walk Metropolis move on a scalar.

    Returns ``(value, accepted)``; proposals with ``-inf`` target are always rejected.
    """
    if step_size <= 0:
        raise ValueError("step_size must be positive")
    lp_old = log_target(current) if current_log_target is None else current_log_target
    proposal = current + step_size * rng.standard_normal()
    lp_new = log_target(proposal)
    if _accept(lp_new - lp_old, rng.random()):
        return proposal, True
    return current, False


def _accept(delta: float, u: float) -> bool:
    if not delta == delta or delta == -math.inf:  # nan or -inf
        return False
    return delta >= 0 or u < math.exp(delta)


def adapt_step_sizes(acceptance_rates, sizes, target: float = 0.44, gain: float = 1.0):
    """Multiplicative Robbins-Monro update of proposal scales toward ``target``."""
    rates = np.asarray(acceptance_rates, dtype=float)
    return np.asarray(sizes, dtype=float) * np.exp(gain * (rates - target))


def _logistic_laplace_cov(X, d, prior_precision, n_newton=50):
    """Inverse negative Hessian of a logistic log-posterior at (or near) its mode."""
    beta = np.zeros(X.shape[1])
    P = prior_precision * np.eye(X.shape[1])
    H = X.T @ X * 0.25 + P
    for _ in range(n_newton):
        p = 1.0 / (1.0 + np.exp(-np.clip(X @ beta, -700, 700)))
        H = (X * (p * (1 - p))[:, None]).T @ X + P
        step = np.linalg.solve(H, X.T @ (d - p) - P @ beta)
        beta = beta + step
        if np.max(np.abs(step)) < 1e-10:
            break
    cov = np.linalg.inv(H)
    return 0.5 * (cov + cov.T)


# -- the chain ----------------------------------------------------------------

def initialize_chain(data: SeasonData | Design, spec: PriorSpec, config: SamplerConfig,
                     chain_id: int, rng: np.random.Generator) -> ParameterState:
    """Overdispersed starting point.

    The constant starts at the log of the mean observed points; every other
    location parameter starts at zero. Each gets ``init_jitter`` Gaussian
    noise (divided by the mean points for logistic slopes on points).
    """
    d = data if isinstance(data, Design) else Design.from_season(data)
    if d.n == 0:
        raise ValueError("cannot initialise a chain on an empty season")
    s = config.init_jitter
    ybar = float(np.mean(np.concatenate([d.y_h, d.y_a])))
    jit = lambda *shape: s * rng.standard_normal(shape) if s > 0 else np.zeros(shape)  # noqa: E731
    mu = math.log(ybar) + float(jit(1)[0])
    lam = float(jit(1)[0])
    alpha_star = jit(d.K, 3)
    beta_star = jit(d.K, 3)
    slope = np.array([1.0, 1.0 / ybar, 1.0 / ybar])
    gamma = jit(3) * slope
    eta = jit(4) * np.append(slope, 1.0)
    return ParameterState(mu, lam, alpha_star, beta_star, initial_hyper(spec.variant, d.K), gamma, eta)


class _ChainSampler:
    """Mutable per-chain state with cached linear predictors."""

    def __init__(self, design: Design, spec: PriorSpec, config: SamplerConfig,
                 state: ParameterState, rng: np.random.Generator):
        self.d, self.spec, self.cfg, self.rng = design, spec, config, rng
        self.K = design.K
        self.state = state.copy()
        self.scaled = spec.variant == "scaled-iw"
        d, K = design, self.K

        # Direction vectors: effect on (log theta_h, log theta_a) of a unit move in a star coefficient.
        onehot_h = (d.home[None, :] == np.arange(K)[:, None]) - 1.0 / K  # K x N
        onehot_a = (d.away[None, :] == np.arange(K)[:, None]) - 1.0 / K
        self.V_h = np.empty((2, K, 3, d.n))
        self.V_a = np.empty((2, K, 3, d.n))
        self.V_h[0] = onehot_h[:, None, :] * d.x_att_h.T[None, :, :]
        self.V_a[0] = onehot_a[:, None, :] * d.x_att_a.T[None, :, :]
        self.V_h[1] = onehot_a[:, None, :] * d.x_def_a.T[None, :, :]
        self.V_a[1] = onehot_h[:, None, :] * d.x_def_h.T[None, :, :]
        self.C = self.V_h @ d.y_h + self.V_a @ d.y_a
        self.sum_y_h = float(d.y_h.sum())
        self.sum_y = self.sum_y_h + float(d.y_a.sum())

        self.X_s = np.column_stack([np.ones(d.n), d.y_h, d.y_a])
        self.X_m = np.column_stack([np.ones(d.n), d.y_h, d.y_a, d.d_s])
        tp = spec.logistic_precision
        self.chol_s = np.linalg.cholesky(_logistic_laplace_cov(self.X_s, d.d_s, tp))
        self.chol_m = np.linalg.cholesky(_logistic_laplace_cov(self.X_m, d.d_m, tp))

        # Proposal scales: [mu, lambda], stars (2, K, 3), block scales [gamma, eta], xi (2, 3).
        self.step_fixed = np.array([0.02, 0.02])
        self.step_star = np.full((2, K, 3), 0.05)
        self.step_block = np.array([2.38 / math.sqrt(3), 2.38 / math.sqrt(4)])
        self.step_xi = np.full((2, 3), 0.2)
        self.step_scale = np.full((2, 3), 0.2)
        self.step_ridge = np.full((2, 3), 0.5)
        self._reset_counts()
        self.refresh()

    # -- caches
    def refresh(self):
        st, d = self.state, self.d
        a = st.alpha_star - st.alpha_star.mean(axis=0)
        b = st.beta_star - st.beta_star.mean(axis=0)
        self.eta_h = (st.mu + st.lam + np.einsum("ij,ij->i", a[d.home], d.x_att_h)
                      + np.einsum("ij,ij->i", b[d.away], d.x_def_a))
        self.eta_a = (st.mu + np.einsum("ij,ij->i", a[d.away], d.x_att_a)
                      + np.einsum("ij,ij->i", b[d.home], d.x_def_h))
        if np.max(np.abs(np.concatenate([self.eta_h, self.eta_a]))) > 700:
            raise FloatingPointError("log-intensity out of range")
        self.e_h = np.exp(self.eta_h)
        self.e_a = np.exp(self.eta_a)
        self.S_h = float(self.e_h.sum())
        self.S_a = float(self.e_a.sum())
        self.ll_s = float(np.sum(bernoulli_logit_logpmf(d.d_s, self.X_s @ st.gamma)))
        self.ll_m = float(np.sum(bernoulli_logit_logpmf(d.d_m, self.X_m @ st.eta)))
        self._refresh_row_prior()

    def _refresh_row_prior(self):
        h = self.state.hyper
        if self.scaled:
            self.row_mean, self.row_prec = [], []
            for xi, mu_raw, Lam in ((h.xi_alpha, h.mu_raw_alpha, h.Lambda_alpha),
                                    (h.xi_beta, h.mu_raw_beta, h.Lambda_beta)):
                Sigma = xi[:, None] * Lam * xi[None, :]
                self.row_mean.append(xi * mu_raw)
                self.row_prec.append(np.linalg.inv(Sigma))
        else:
            self.row_mean = [h.mu_alpha, h.mu_beta]
            self.row_prec = [h.tau_alpha, h.tau_beta]

    def _reset_counts(self):
        self.acc_fixed = np.zeros(2)
        self.acc_star = np.zeros((2, self.K, 3))
        self.acc_block = np.zeros(2)
        self.acc_xi = np.zeros((2, 3))
        self.acc_scale = np.zeros((2, 3))
        self.acc_ridge = np.zeros((2, 3))
        self.n_batch = 0

    # -- moves
    def _move_fixed(self):
        st, rng, t0 = self.state, self.rng, self.spec.normal_fixed_precision
        # constant
        delta = self.step_fixed[0] * rng.standard_normal()
        growth = math.expm1(delta)
        dl = delta * self.sum_y - (self.S_h + self.S_a) * growth
        dl += -0.5 * t0 * ((st.mu + delta) ** 2 - st.mu**2)
        if _accept(dl, rng.random()):
            st.mu += delta
            self.eta_h += delta
            self.eta_a += delta
            self.e_h *= growth + 1.0
            self.e_a *= growth + 1.0
            self.S_h *= growth + 1.0
            self.S_a *= growth + 1.0
            self.acc_fixed[0] += 1
        # home effect
        delta = self.step_fixed[1] * rng.standard_normal()
        growth = math.expm1(delta)
        dl = delta * self.sum_y_h - self.S_h * growth - 0.5 * t0 * ((st.lam + delta) ** 2 - st.lam**2)
        if _accept(dl, rng.random()):
            st.lam += delta
            self.eta_h += delta
            self.e_h *= growth + 1.0
            self.S_h *= growth + 1.0
            self.acc_fixed[1] += 1

    def _move_stars(self):
        st, rng, K = self.state, self.rng, self.K
        z = rng.standard_normal((2, K, 3)) * self.step_star
        u = rng.random((2, K, 3))
        for b, stars in enumerate((st.alpha_star, st.beta_star)):
            mean, prec = self.row_mean[b], self.row_prec[b]
            for k in range(K):
                for j in range(3):
                    delta = z[b, k, j]
                    vh, va = self.V_h[b, k, j], self.V_a[b, k, j]
                    fh = np.exp(delta * vh)
                    fa = np.exp(delta * va)
                    new_h = self.e_h @ fh
                    new_a = self.e_a @ fa
                    dl = delta * self.C[b, k, j] - (new_h - self.S_h) - (new_a - self.S_a)
                    old = stars[k, j]
                    if self.scaled:
                        r = stars[k] - mean
                        dl -= delta * (prec[j] @ r) + 0.5 * delta * delta * prec[j, j]
                    else:
                        dl -= 0.5 * prec[j] * ((old + delta - mean[j]) ** 2 - (old - mean[j]) ** 2)
                    if _accept(dl, u[b, k, j]):
                        stars[k, j] = old + delta
                        self.eta_h += delta * vh
                        self.eta_a += delta * va
                        self.e_h *= fh
                        self.e_a *= fa
                        self.S_h, self.S_a = float(new_h), float(new_a)
                        self.acc_star[b, k, j] += 1

    def _move_logistic(self):
        st, rng, tp = self.state, self.rng, self.spec.logistic_precision
        for i, (X, y, chol) in enumerate(((self.X_s, self.d.d_s, self.chol_s),
                                          (self.X_m, self.d.d_m, self.chol_m))):
            cur = st.gamma if i == 0 else st.eta
            ll_old = self.ll_s if i == 0 else self.ll_m
            prop = cur + self.step_block[i] * (chol @ rng.standard_normal(len(cur)))
            ll_new = float(np.sum(bernoulli_logit_logpmf(y, X @ prop)))
            dl = ll_new - ll_old - 0.5 * tp * (prop @ prop - cur @ cur)
            if _accept(dl, rng.random()):
                cur[:] = prop
                if i == 0:
                    self.ll_s = ll_new
                else:
                    self.ll_m = ll_new
                self.acc_block[i] += 1

    def _xi_log_target(self, b, xi, lam_inv):
        # Density of the star rows as a function of xi with Lambda fixed:
        # rows / xi ~ MVN(mu_raw, Lambda), Jacobian |prod xi|^-K.
        lp = self.spec.xi_prior.logpdf(xi)
        if lp == -math.inf:
            return lp
        h = self.state.hyper
        stars = self.state.alpha_star if b == 0 else self.state.beta_star
        mu_raw = h.mu_raw_alpha if b == 0 else h.mu_raw_beta
        r = stars / xi - mu_raw
        return lp - self.K * float(np.sum(np.log(np.abs(xi)))) - 0.5 * float(np.sum((r @ lam_inv) * r))

    def _move_xi(self):
        h, rng = self.state.hyper, self.rng
        z = rng.standard_normal((2, 3)) * self.step_xi
        u = rng.random((2, 3))
        for b, (xi, Lam) in enumerate(((h.xi_alpha, h.Lambda_alpha), (h.xi_beta, h.Lambda_beta))):
            lam_inv = np.linalg.inv(Lam)
            lp_old = self._xi_log_target(b, xi, lam_inv)
            for j in range(3):
                prop = xi.copy()
                prop[j] += z[b, j]
                lp_new = self._xi_log_target(b, prop, lam_inv)
                if _accept(lp_new - lp_old, u[b, j]):
                    xi[j] = prop[j]
                    lp_old = lp_new
                    self.acc_xi[b, j] += 1

    def _xi_scale_log_ratio(self, b, j, delta):
        """Target log-ratio for multiplying xi_j and star column j by exp(delta).

        The raw coefficients stars/xi are unchanged, so only the likelihood,
        the xi prior and the |xi_j|^-K factor of the star density move.
        Returns the ratio and the new cached exponentials.
        """
        h = self.state.hyper
        xi = h.xi_alpha if b == 0 else h.xi_beta
        stars = self.state.alpha_star if b == 0 else self.state.beta_star
        prop = xi.copy()
        prop[j] *= math.exp(delta)
        lp = self.spec.xi_prior.logpdf(prop)
        if lp == -math.inf:
            return -math.inf, None
        shift = math.expm1(delta) * stars[:, j]
        dh = shift @ self.V_h[b, :, j]
        da = shift @ self.V_a[b, :, j]
        e_h = self.e_h * np.exp(dh)
        e_a = self.e_a * np.exp(da)
        dl = float(shift @ self.C[b, :, j]) - (e_h.sum() - self.S_h) - (e_a.sum() - self.S_a)
        dl += lp - self.spec.xi_prior.logpdf(xi) - self.K * delta
        return dl, (dh, da, e_h, e_a)

    def _move_xi_scale(self):
        # Non-centred companion of _move_xi: lets the group scale and the team
        # coefficients shrink or grow together, which the fixed-star move cannot.
        z = self.rng.standard_normal((2, 3)) * self.step_scale
        u = self.rng.random((2, 3))
        h, st = self.state.hyper, self.state
        for b in range(2):
            xi = h.xi_alpha if b == 0 else h.xi_beta
            stars = st.alpha_star if b == 0 else st.beta_star
            for j in range(3):
                dl, cache = self._xi_scale_log_ratio(b, j, z[b, j])
                # the map (xi_j, stars[:, j]) -> c * (...) has Jacobian c^(K+1)
                if cache is not None and _accept(dl + (self.K + 1) * z[b, j], u[b, j]):
                    c = math.exp(z[b, j])
                    xi[j] *= c
                    stars[:, j] *= c
                    dh, da, self.e_h, self.e_a = cache
                    self.eta_h += dh
                    self.eta_a += da
                    self.S_h, self.S_a = float(self.e_h.sum()), float(self.e_a.sum())
                    self.acc_scale[b, j] += 1
        self._refresh_row_prior()

    def _ridge_log_ratio(self, b, j, delta):
        """Target log-ratio for xi_j -> c xi_j, Lambda -> D^-1 Lambda D^-1, mu_raw_j -> mu_raw_j / c.

        Sigma and xi * mu_raw are unchanged, so the star density cancels.
        """
        h, spec = self.state.hyper, self.spec
        xi, Lam, mu_raw = ((h.xi_alpha, h.Lambda_alpha, h.mu_raw_alpha) if b == 0
                           else (h.xi_beta, h.Lambda_beta, h.mu_raw_beta))
        c = math.exp(delta)
        xi2, Lam2, mu2 = xi.copy(), Lam.copy(), mu_raw.copy()
        xi2[j] *= c
        Lam2[j, :] /= c
        Lam2[:, j] /= c
        mu2[j] /= c
        lp_new = spec.xi_prior.logpdf(xi2)
        if lp_new == -math.inf:
            return -math.inf, None
        # Inverse-Wishart ratio: log det falls by 2*delta and the inverse becomes D Lambda^-1 D.
        P = np.linalg.inv(Lam)
        P2 = P.copy()
        P2[j, :] *= c
        P2[:, j] *= c
        Omega, p = spec.scale_matrix, Lam.shape[0]
        t0 = spec.normal_fixed_precision
        dl = (lp_new - spec.xi_prior.logpdf(xi)
              + (spec.iw_nu + p + 1) * delta - 0.5 * float(np.sum(Omega * (P2 - P)))
              - 0.5 * t0 * (mu2[j] ** 2 - mu_raw[j] ** 2))
        return dl, (xi2, Lam2, mu2)

    def _move_ridge(self):
        z = self.rng.standard_normal((2, 3)) * self.step_ridge
        u = self.rng.random((2, 3))
        h = self.state.hyper
        for b in range(2):
            for j in range(3):
                dl, new = self._ridge_log_ratio(b, j, z[b, j])
                # Jacobian on (xi_j, mu_raw_j, Lambda_jj, two off-diagonals): c * c^-1 * c^-2 * c^-2
                if new is not None and _accept(dl - 4.0 * z[b, j], u[b, j]):
                    xi, Lam, mu_raw = new
                    if b == 0:
                        h.xi_alpha[:], h.Lambda_alpha, h.mu_raw_alpha = xi, Lam, mu_raw
                    else:
                        h.xi_beta[:], h.Lambda_beta, h.mu_raw_beta = xi, Lam, mu_raw
                    self.acc_ridge[b, j] += 1

    def _gibbs_hyper(self):
        st, spec, rng = self.state, self.spec, self.rng
        h = st.hyper
        if not self.scaled:
            for stars, mu, tau in ((st.alpha_star, h.mu_alpha, h.tau_alpha),
                                   (st.beta_star, h.mu_beta, h.tau_beta)):
                for j in range(3):
                    mu[j] = gibbs_update_hyper_mean(stars[:, j], tau[j], rng, spec.normal_fixed_precision)
                    tau[j] = gibbs_update_hyper_precision(stars[:, j], mu[j], spec.gamma_shape,
                                                          spec.gamma_rate, rng)
        else:
            for b, stars in enumerate((st.alpha_star, st.beta_star)):
                xi = h.xi_alpha if b == 0 else h.xi_beta
                raw = stars / xi
                Lam = h.Lambda_alpha if b == 0 else h.Lambda_beta
                mu_raw = gibbs_update_mvn_mean(raw, Lam, rng, spec.normal_fixed_precision)
                Lam = gibbs_update_wishart(raw, mu_raw, spec.iw_nu, spec.scale_matrix, rng)
                if b == 0:
                    h.mu_raw_alpha, h.Lambda_alpha = mu_raw, Lam
                else:
                    h.mu_raw_beta, h.Lambda_beta = mu_raw, Lam
        self._refresh_row_prior()

    def sweep(self):
        self._move_fixed()
        self._move_stars()
        self._move_logistic()
        if self.scaled:
            self._move_xi()
            self._move_xi_scale()
            self._move_ridge()
        self._gibbs_hyper()
        self.n_batch += 1

    def adapt(self, batch_number: int):
        n = self.n_batch
        gain = min(1.0, 3.0 / math.sqrt(batch_number))
        t = self.cfg.target_accept
        self.step_fixed = adapt_step_sizes(self.acc_fixed / n, self.step_fixed, t, gain)
        self.step_star = adapt_step_sizes(self.acc_star / n, self.step_star, t, gain)
        self.step_block = adapt_step_sizes(self.acc_block / n, self.step_block, BLOCK_TARGET_ACCEPT, gain)
        self.step_xi = adapt_step_sizes(self.acc_xi / n, self.step_xi, t, gain)
        self.step_scale = adapt_step_sizes(self.acc_scale / n, self.step_scale, t, gain)
        self.step_ridge = adapt_step_sizes(self.acc_ridge / n, self.step_ridge, t, gain)
        self._reset_counts()

    def acceptance(self) -> dict[str, float]:
        n = max(self.n_batch, 1)
        out = {"mu": self.acc_fixed[0] / n, "lambda": self.acc_fixed[1] / n}
        for b, name in enumerate(("alpha_star", "beta_star")):
            for k in range(self.K):
                for j in range(3):
                    out[f"{name}[{k},{j}]"] = self.acc_star[b, k, j] / n
        out["gamma"] = self.acc_block[0] / n
        out["eta"] = self.acc_block[1] / n
        if self.scaled:
            for b, name in enumerate(("xi_alpha", "xi_beta")):
                for j in range(3):
                    out[f"{name}[{j}]"] = self.acc_xi[b, j] / n
                    out[f"{name}_scale[{j}]"] = self.acc_scale[b, j] / n
                    out[f"{name}_ridge[{j}]"] = self.acc_ridge[b, j] / n
        return {k: float(v) for k, v in out.items()}


def chain_seed_sequence(master_seed: int, chain_id: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(master_seed, spawn_key=(chain_id,))


def run_chain(data: SeasonData | Design, spec: PriorSpec, config: SamplerConfig, chain_id: int,
              team_names: Sequence[str] | None = None, covariate_means=None) -> ChainTrace:
    """Run one chain; fully determined by ``(config.seed, chain_id)``."""
    if isinstance(data, SeasonData):
        team_names = team_names or data.teams.ordered_names()
        covariate_means = covariate_means if covariate_means is not None else data.covariate_means
        design = Design.from_season(data)
    else:
        design = data
    rng = np.random.default_rng(chain_seed_sequence(config.seed, chain_id))
    init = initialize_chain(design, spec, config, chain_id, rng)
    sampler = _ChainSampler(design, spec, config, init, rng)
    columns = column_names(design.K, spec.variant)
    draws = np.empty((config.n_keep, len(columns)))
    kept = 0
    batch = 0
    t_start = time.perf_counter()
    for it in range(config.n_iter):
        try:
            sampler.sweep()
            if it < config.adapt_until and sampler.n_batch == config.adapt_interval:
                batch += 1
                sampler.adapt(batch)
            if it + 1 == config.burn_in:
                sampler._reset_counts()
            if it % 100 == 99:
                sampler.refresh()  # clear accumulated rounding in the caches
            if it >= config.burn_in and (it - config.burn_in) % config.thin == config.thin - 1 and kept < config.n_keep:
                lp = math.nan
                if config.record_log_posterior:
                    lp = joint_log_posterior(sampler.state, design, spec)
                draws[kept] = pack_state(sampler.state, lp)
                kept += 1
        except (FloatingPointError, ArithmeticError, np.linalg.LinAlgError, ValueError) as exc:
            raise SamplerError(f"chain {chain_id}, iteration {it}: {exc}") from exc
    meta = {
        "K": design.K,
        "variant": spec.variant,
        "chain_id": chain_id,
        "seed": config.seed,
        "seed_spawn_key": [chain_id],
        "config_hash": config.digest(),
        "config": {k: v for k, v in config.to_dict().items() if k != "workers"},  # worker count never changes the draws
        "prior": spec.to_dict(),
        "teams": list(team_names) if team_names is not None else [f"team{k + 1}" for k in range(design.K)],
        "covariate_means": [float(v) for v in covariate_means] if covariate_means is not None else None,
        "step_sizes": {"fixed": sampler.step_fixed.tolist(), "block": sampler.step_block.tolist()},
        "seconds": round(time.perf_counter() - t_start, 3),
    }
    return ChainTrace(columns, draws, sampler.acceptance(), meta)


def _run_chain_job(args):
    return run_chain(*args)


def run_all_chains(data: SeasonData, spec: PriorSpec, config: SamplerConfig) -> list[ChainTrace]:
    """Run ``config.n_chains`` chains with sub-seeds spawned from the master seed.

    With ``config.workers > 1`` chains run in separate processes; the output is
    always in chain order and identical to a sequential run.
    """
    jobs = [(data, spec, config, c) for c in range(config.n_chains)]
    if config.workers > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            futures = [pool.submit(_run_chain_job, job) for job in jobs]
            traces = []
            for c, fut in enumerate(futures):
                try:
                    traces.append(fut.result())
                except Exception as exc:
                    raise SamplerError(f"chain {c} failed: {exc}") from exc
            return traces
    traces = []
    for c, job in enumerate(jobs):
        try:
            traces.append(run_chain(*job))
        except SamplerError:
            raise
        except Exception as exc:
            raise SamplerError(f"chain {c} failed: {exc}") from exc
    return traces

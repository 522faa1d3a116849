"""Convergence diagnostics and posterior summary tables."""

from __future__ import annotations

import csv
import fnmatch
import json
import logging
import math
import re
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .mcmc import ChainTrace

log = logging.getLogger(__name__)

SUMMARY_COLUMNS = ("name", "mean", "sd", "q025", "median", "q975", "r_hat", "ess")


class DegenerateTraceError(ValueError):
    """All chains have zero within-chain variance."""


@dataclass(frozen=True)
class ParameterSummary:
    name: str
    mean: float
    sd: float
    q025: float
    median: float
    q975: float
    r_hat: float
    ess: float


def _as_chains(sequences) -> np.ndarray:
    chains = np.asarray([np.asarray(s, dtype=float) for s in sequences])
    if chains.ndim != 2 or chains.shape[0] < 2:
        raise ValueError("need at least two sequences of equal length")
    if chains.shape[1] < 4:
        raise ValueError("sequences must have length >= 4")
    return chains


def _split(chains: np.ndarray) -> np.ndarray:
    half = chains.shape[1] // 2
    return np.concatenate([chains[:, :half], chains[:, -half:]], axis=0)


def potential_scale_reduction(sequences) -> float:
    """Split-chain potential scale reduction factor.

    Every chain is cut in two halves (the middle draw is dropped for odd
    lengths) and the between/within variance ratio is computed on the halves.
    """
    chains = _split(_as_chains(sequences))
    n = chains.shape[1]
    W = float(np.mean(np.var(chains, axis=1, ddof=1)))
    if not W > 0:
        raise DegenerateTraceError("degenerate trace: zero within-chain variance")
    B = n * float(np.var(np.mean(chains, axis=1), ddof=1))
    return math.sqrt(((n - 1) / n * W + B / n) / W)


def _autocovariance(x: np.ndarray) -> np.ndarray:
    n = len(x)
    x = x - x.mean()
    size = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(x, size)
    return np.fft.irfft(f * np.conj(f), size)[:n] / n


def effective_sample_size(sequences) -> float:
    """Multi-chain ESS with Geyer's monotone initial-positive-sequence truncation.

    Computed on split chains. Antithetic chains can give an estimate above
    the number of draws; the value returned is capped at the total draw count.
    """
    chains = _split(_as_chains(sequences))
    m, n = chains.shape
    total = m * n
    W = float(np.mean(np.var(chains, axis=1, ddof=1)))
    if not W > 0:
        raise DegenerateTraceError("degenerate trace: zero within-chain variance")
    B = n * float(np.var(np.mean(chains, axis=1), ddof=1))
    var_plus = (n - 1) / n * W + B / n
    acov = np.mean([_autocovariance(c) for c in chains], axis=0)
    rho = 1.0 - (W - acov) / var_plus
    rho[0] = 1.0

    tau_sum = 0.0
    prev = math.inf
    for k in range(n // 2):
        pair = rho[2 * k] + rho[2 * k + 1]
        if k > 0 and pair <= 0:
            break
        pair = min(pair, prev)
        tau_sum += pair
        prev = pair
    tau = max(-1.0 + 2.0 * tau_sum, 1.0 / math.log10(total))
    ess = total / tau
    if ess > total:
        log.info("ESS estimate %.1f exceeds %d draws (antithetic chain); capped", ess, total)
        ess = float(total)
    return float(ess)


# -- parameter selection ------------------------------------------------------

def _team_names(trace: ChainTrace) -> list[str]:
    return list(trace.meta.get("teams") or [f"team{k + 1}" for k in range(trace.K)])


def default_selector(trace: ChainTrace) -> list[str]:
    """Marginal attack and defence effects of every team, then home and constant."""
    teams = _team_names(trace)
    return [f"attack[{t}]" for t in teams] + [f"defence[{t}]" for t in teams] + ["home", "constant"]


def resolve(trace: ChainTrace, selector: str | Sequence[str] | None) -> list[tuple[str, str]]:
    """Map a selector to ``(display name, trace column)`` pairs.

    Understood: ``default``, ``all``, ``home``, ``constant``, ``attack``,
    ``defence``, ``attack[<team>]``, ``defence[<team>]``, raw column names
    and shell-style patterns such as ``alpha[*,0]``.
    """
    if selector is None:
        selector = ["default"]
    elif isinstance(selector, str):
        selector = [s.strip() for s in re.split(r",(?![^\[]*\])", selector) if s.strip()]
    teams = _team_names(trace)
    out: list[tuple[str, str]] = []
    for sel in selector:
        if sel == "default":
            out += resolve(trace, default_selector(trace))
        elif sel == "all":
            out += [(c, c) for c in trace.columns if c != "log_posterior"]
        elif sel == "home":
            out.append(("home", "lambda"))
        elif sel == "constant":
            out.append(("constant", "mu"))
        elif sel in ("attack", "defence"):
            out += resolve(trace, [f"{sel}[{t}]" for t in teams])
        elif m := re.fullmatch(r"(attack|defence)\[(.+)\]", sel):
            kind, team = m.groups()
            if team not in teams:
                raise KeyError(f"unknown parameter {sel!r}: no team {team!r}")
            col = "alpha" if kind == "attack" else "beta"
            out.append((sel, f"{col}[{teams.index(team)},0]"))
        elif sel in trace.columns:
            out.append((sel, sel))
        else:
            hits = fnmatch.filter(trace.columns, sel.replace("[", "[[]"))
            if not hits:
                raise KeyError(f"unknown parameter {sel!r}")
            out += [(c, c) for c in hits]
    return out


def summarize_draws(name: str, sequences) -> ParameterSummary:
    chains = [np.asarray(s, dtype=float) for s in sequences]
    pooled = np.concatenate(chains)
    if pooled.size == 0:
        raise ValueError("no draws to summarise")
    q025, median, q975 = np.quantile(pooled, [0.025, 0.5, 0.975])  # linear interpolation (type 7)
    sd = float(np.std(pooled, ddof=1)) if pooled.size > 1 else 0.0
    try:
        r_hat = potential_scale_reduction(chains)
        ess = effective_sample_size(chains)
    except (DegenerateTraceError, ValueError):
        r_hat = ess = math.nan
    return ParameterSummary(name, float(np.mean(pooled)), sd, float(q025), float(median), float(q975),
                            r_hat, ess)


def summarize(traces: Sequence[ChainTrace], selector=None) -> list[ParameterSummary]:
    """Posterior summaries over all chains for the selected parameters."""
    if not traces or any(len(t) == 0 for t in traces):
        raise ValueError("summaries need non-empty traces")
    pairs = resolve(traces[0], selector)
    return [summarize_draws(name, [t.column(col) for t in traces]) for name, col in pairs]


def write_summary_csv(rows: Iterable[ParameterSummary], path: str | Path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SUMMARY_COLUMNS)
        for r in rows:
            w.writerow([r.name] + [repr(float(getattr(r, c))) for c in SUMMARY_COLUMNS[1:]])


def write_summary_json(rows: Iterable[ParameterSummary], path: str | Path) -> None:
    def clean(v):
        return None if isinstance(v, float) and not math.isfinite(v) else v

    data = [{k: clean(v) for k, v in asdict(r).items()} for r in rows]
    Path(path).write_text(json.dumps(data, indent=2) + "\n", encoding="utf-8")


def format_table(rows: Iterable[ParameterSummary]) -> str:
    rows = list(rows)
    width = max([len(r.name) for r in rows] + [4])
    lines = [f"{'name':<{width}} " + " ".join(f"{c:>10}" for c in SUMMARY_COLUMNS[1:])]
    for r in rows:
        vals = [r.mean, r.sd, r.q025, r.median, r.q975, r.r_hat, r.ess]
        lines.append(f"{r.name:<{width}} " + " ".join(f"{v:>10.4f}" for v in vals))
    return "\n".join(lines)

"""Posterior-predictive replication of matches and seasons, league tables and rankings.

League points follow the volleyball rules: a 3-0 or 3-1 win is worth 3
points to the winner and none to the loser, a 3-2 win 2 points to the
winner and 1 to the loser. Replicates carry only the five-set and home-win
indicators, which is all the point assignment needs.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .match_data import LEGAL_SETS, SeasonData, SeasonFormatError, TABLE1_COLUMNS
from .mcmc import PosteriorSample
from .model import inv_logit


def league_points(s_h: int, s_a: int) -> tuple[int, int]:
    """League points ``(home, away)`` for a final set score."""
    if (s_h, s_a) not in LEGAL_SETS:
        raise ValueError(f"illegal set score {s_h}-{s_a}")
    winner, loser = (3, 0) if min(s_h, s_a) < 2 else (2, 1)
    return (winner, loser) if s_h > s_a else (loser, winner)


def points_from_indicators(d_m, d_s):
    """Vectorised league points from the home-win and five-set indicators."""
    d_m = np.asarray(d_m)
    d_s = np.asarray(d_s)
    win, lose = 3 - d_s, d_s
    return np.where(d_m == 1, win, lose), np.where(d_m == 1, lose, win)


@dataclass(frozen=True)
class Fixture:
    match_id: int
    home: int  # 1-based team code
    away: int
    eff_home: tuple | None = None
    eff_away: tuple | None = None


@dataclass(frozen=True)
class MatchReplicate:
    y_h_rep: int
    y_a_rep: int
    d_s_rep: int
    d_m_rep: int


def _log_rates(mu, lam, alpha, beta, home, away, eff_home=None, eff_away=None):
    """Log scoring rates; leading axes of the parameters broadcast against matches."""
    log_h = mu + lam + alpha[..., home, 0] + beta[..., away, 0]
    log_a = mu + alpha[..., away, 0] + beta[..., home, 0]
    if eff_home is not None:
        eh, ea = np.asarray(eff_home, dtype=float), np.asarray(eff_away, dtype=float)
        log_h = (log_h + alpha[..., home, 1] * eh[..., 1] + alpha[..., home, 2] * eh[..., 0]
                 + beta[..., away, 1] * ea[..., 2] + beta[..., away, 2] * ea[..., 3])
        log_a = (log_a + alpha[..., away, 1] * ea[..., 1] + alpha[..., away, 2] * ea[..., 0]
                 + beta[..., home, 1] * eh[..., 2] + beta[..., home, 2] * eh[..., 3])
    return log_h, log_a


def replicate_match(sample: PosteriorSample, match, rng: np.random.Generator,
                    use_covariates: bool = False) -> MatchReplicate:
    """Draw points, then the five-set flag given points, then the winner given both.

    ``match`` needs ``home``/``away`` codes (1-based) and, when
    ``use_covariates`` is set, centered ``eff_home``/``eff_away``; otherwise
    covariates sit at their centre (zero).
    """
    st, e = sample.state, sample.effects
    h, a = match.home - 1, match.away - 1
    effs = (match.eff_home, match.eff_away) if use_covariates else (None, None)
    log_h, log_a = _log_rates(st.mu, st.lam, e.alpha, e.beta, h, a, *effs)
    y_h = int(rng.poisson(np.exp(log_h)))
    y_a = int(rng.poisson(np.exp(log_a)))
    g, et = st.gamma, st.eta
    d_s = int(rng.random() < inv_logit(g[0] + g[1] * y_h + g[2] * y_a))
    d_m = int(rng.random() < inv_logit(et[0] + et[1] * y_h + et[2] * y_a + et[3] * d_s))
    return MatchReplicate(y_h, y_a, d_s, d_m)


@dataclass(frozen=True)
class LeagueTable:
    points_scored: np.ndarray
    points_conceded: np.ndarray
    wins: np.ndarray
    league_points: np.ndarray
    rank: np.ndarray  # final position (1-based) of each team, indexed by team code - 1

    @property
    def order(self) -> np.ndarray:
        """Team indices (0-based) from first to last."""
        return np.argsort(self.rank)


def rank_teams(league_pts, wins, scored, conceded) -> np.ndarray:
    """Final positions: league points, then wins, then point difference, then team code."""
    K = len(league_pts)
    order = np.lexsort((np.arange(K), -(np.asarray(scored) - np.asarray(conceded)),
                        -np.asarray(wins), -np.asarray(league_pts)))
    rank = np.empty(K, dtype=int)
    rank[order] = np.arange(1, K + 1)
    return rank


def league_table(K: int, home, away, y_h, y_a, d_s, d_m) -> LeagueTable:
    """Table for one season from 0-based team indices and match outcomes."""
    home, away = np.asarray(home), np.asarray(away)
    y_h, y_a = np.asarray(y_h), np.asarray(y_a)
    d_m = np.asarray(d_m)
    pts_h, pts_a = points_from_indicators(d_m, d_s)
    count = lambda w_h, w_a: (np.bincount(home, w_h, K) + np.bincount(away, w_a, K))  # noqa: E731
    scored = count(y_h, y_a)
    conceded = count(y_a, y_h)
    wins = count(d_m, 1 - d_m)
    pts = count(pts_h, pts_a)
    return LeagueTable(scored, conceded, wins, pts, rank_teams(pts, wins, scored, conceded))


def observed_table(season: SeasonData) -> LeagueTable:
    arr = season.arrays()
    d_s = np.array([int(r.s_h + r.s_a == 5) for r in season.matches])
    d_m = np.array([int(r.s_h > r.s_a) for r in season.matches])
    return league_table(season.teams.K, arr["home"], arr["away"], arr["y_h"], arr["y_a"], d_s, d_m)


@dataclass(frozen=True)
class SeasonReplicate:
    home: np.ndarray
    away: np.ndarray
    y_h: np.ndarray
    y_a: np.ndarray
    d_s: np.ndarray
    d_m: np.ndarray
    table: LeagueTable
    sample_index: int


class ReplicateBatch(Sequence):
    """``R`` replicated seasons over the same fixtures, stored as ``R x N`` arrays.

    Indexing yields :class:`SeasonReplicate` objects; the ``*_totals``
    properties give every replicate's league-table columns at once.
    """

    def __init__(self, K, home, away, y_h, y_a, d_s, d_m, sample_index):
        self.K = K
        self.home, self.away = np.asarray(home), np.asarray(away)
        self.y_h, self.y_a, self.d_s, self.d_m = y_h, y_a, d_s, d_m
        self.sample_index = sample_index
        self._tables = None

    def __len__(self):
        return self.y_h.shape[0]

    def __getitem__(self, r):
        if isinstance(r, slice):
            return [self[i] for i in range(*r.indices(len(self)))]
        t = self.tables()
        table = LeagueTable(t["scored"][r], t["conceded"][r], t["wins"][r], t["league_points"][r],
                            t["rank"][r])
        return SeasonReplicate(self.home, self.away, self.y_h[r], self.y_a[r], self.d_s[r], self.d_m[r],
                               table, int(self.sample_index[r]))

    def match_points(self):
        return points_from_indicators(self.d_m, self.d_s)

    def tables(self) -> dict[str, np.ndarray]:
        if self._tables is None:
            Hh = np.eye(self.K, dtype=np.int64)[self.home]
            Ha = np.eye(self.K, dtype=np.int64)[self.away]
            pts_h, pts_a = self.match_points()
            scored = self.y_h @ Hh + self.y_a @ Ha
            conceded = self.y_a @ Hh + self.y_h @ Ha
            wins = self.d_m @ Hh + (1 - self.d_m) @ Ha
            pts = pts_h @ Hh + pts_a @ Ha
            rank = np.array([rank_teams(pts[r], wins[r], scored[r], conceded[r]) for r in range(len(self))])
            self._tables = {"scored": scored, "conceded": conceded, "wins": wins,
                            "league_points": pts, "rank": rank.reshape(len(self), self.K)}
        return self._tables


def _stack(samples: Sequence[PosteriorSample], idx):
    chosen = [samples[i] for i in idx]
    return (np.array([s.state.mu for s in chosen]), np.array([s.state.lam for s in chosen]),
            np.array([s.effects.alpha for s in chosen]), np.array([s.effects.beta for s in chosen]),
            np.array([s.state.gamma for s in chosen]), np.array([s.state.eta for s in chosen]))


def replicate_season(samples: Sequence[PosteriorSample], fixtures: Sequence, n_rep: int,
                     rng: np.random.Generator, use_covariates: bool = False,
                     K: int | None = None) -> ReplicateBatch:
    """Replicate every fixture ``n_rep`` times.

    Each replicate uses one posterior sample drawn uniformly with
    replacement, so parameter uncertainty enters the spread of the tables.
    """
    if n_rep < 1:
        raise ValueError("n_rep must be >= 1")
    if not samples:
        raise ValueError("no posterior samples")
    if not fixtures:
        raise ValueError("empty fixtures")
    K = K or samples[0].state.K
    home = np.array([f.home - 1 for f in fixtures])
    away = np.array([f.away - 1 for f in fixtures])
    idx = rng.integers(0, len(samples), size=n_rep)
    mu, lam, alpha, beta, gamma, eta = _stack(samples, idx)
    effs = (None, None)
    if use_covariates:
        effs = (np.array([f.eff_home for f in fixtures], dtype=float),
                np.array([f.eff_away for f in fixtures], dtype=float))
    log_h, log_a = _log_rates(mu[:, None], lam[:, None], alpha, beta, home, away, *effs)
    y_h = rng.poisson(np.exp(log_h))
    y_a = rng.poisson(np.exp(log_a))
    p_s = inv_logit(gamma[:, [0]] + gamma[:, [1]] * y_h + gamma[:, [2]] * y_a)
    d_s = (rng.random(y_h.shape) < p_s).astype(np.int64)
    p_m = inv_logit(eta[:, [0]] + eta[:, [1]] * y_h + eta[:, [2]] * y_a + eta[:, [3]] * d_s)
    d_m = (rng.random(y_h.shape) < p_m).astype(np.int64)
    return ReplicateBatch(K, home, away, y_h, y_a, d_s, d_m, idx)


@dataclass(frozen=True)
class RankDistribution:
    matrix: np.ndarray  # (team, position) -> probability
    teams: tuple[str, ...] = ()


def rank_probabilities(replicates, teams: Sequence[str] = ()) -> RankDistribution:
    """Empirical probability of each team finishing in each position."""
    if isinstance(replicates, ReplicateBatch):
        ranks = replicates.tables()["rank"]
        K = replicates.K
    else:
        replicates = list(replicates)
        if not replicates:
            raise ValueError("need at least one replicate")
        ranks = np.array([r.table.rank for r in replicates])
        K = ranks.shape[1]
    if len(ranks) == 0:
        raise ValueError("need at least one replicate")
    M = np.zeros((K, K))
    for pos in range(1, K + 1):
        M[:, pos - 1] = np.mean(ranks == pos, axis=0)
    return RankDistribution(M, tuple(teams))


def _trajectories(K, home, away, pts_h, pts_a) -> list[np.ndarray]:
    """Running point totals per team; ``pts_*`` may carry a leading replicate axis."""
    out = []
    for k in range(K):
        idx = np.flatnonzero((home == k) | (away == k))
        per_match = np.where(home[idx] == k, pts_h[..., idx], pts_a[..., idx])
        out.append(np.cumsum(per_match, axis=-1))
    return out


def cumulative_points(source, K: int | None = None) -> list[np.ndarray]:
    """League-point trajectories by match day for each team (index = team code - 1).

    ``source`` is an observed :class:`SeasonData` (matches taken in
    ``match_id`` order) or a :class:`ReplicateBatch`, whose trajectories are
    averaged over replicates.
    """
    if isinstance(source, SeasonData):
        matches = sorted(source.matches, key=lambda r: r.match_id)
        home = np.array([r.home - 1 for r in matches])
        away = np.array([r.away - 1 for r in matches])
        pts = np.array([league_points(r.s_h, r.s_a) for r in matches])
        return _trajectories(source.teams.K, home, away, pts[:, 0], pts[:, 1])
    pts_h, pts_a = source.match_points()
    trajs = _trajectories(source.K, source.home, source.away, pts_h, pts_a)
    return [t.mean(axis=0) for t in trajs]


# -- fixtures and outputs -----------------------------------------------------

def fixtures_from_season(season: SeasonData) -> list[Fixture]:
    return [Fixture(r.match_id, r.home, r.away, r.eff_home, r.eff_away)
            for r in sorted(season.matches, key=lambda r: r.match_id)]


def load_fixtures(path, team_names: Sequence[str]):
    """Read fixtures, mapping team names onto the fitted team coding.

    Accepts a full season file (then the observed results are returned too)
    or a bare ``match_id,home_team,away_team`` list. Returns
    ``(fixtures, observed season or None)``.
    """
    from .match_data import parse_season_csv

    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = [h.strip() for h in (reader.fieldnames or [])]
        rows = list(reader)
    for col in ("match_id", "home_team", "away_team"):
        if col not in header:
            raise SeasonFormatError(f"fixtures: missing column {col!r}")
    names = {r["home_team"].strip() for r in rows} | {r["away_team"].strip() for r in rows}
    unknown = sorted(names - set(team_names))
    if unknown:
        raise KeyError(f"fixtures mention teams absent from the fit: {', '.join(unknown)}")
    code = {n: i + 1 for i, n in enumerate(team_names)}

    observed = None
    if set(TABLE1_COLUMNS) <= set(header) or "y_h" in header:
        season = parse_season_csv(path)
        recode = {season.teams.code(n): code[n] for n in season.teams.names}
        from dataclasses import replace
        from .match_data import TeamIndex

        matches = tuple(replace(r, home=recode[r.home], away=recode[r.away]) for r in season.matches)
        observed = SeasonData(TeamIndex(tuple(team_names)), matches)
        return fixtures_from_season(observed), observed

    fixtures = []
    for r in rows:
        fixtures.append(Fixture(int(r["match_id"]), code[r["home_team"].strip()], code[r["away_team"].strip()]))
    fixtures.sort(key=lambda f: f.match_id)
    return fixtures, None


def write_league_summary(batch: ReplicateBatch, teams: Sequence[str], path,
                         observed: LeagueTable | None = None) -> None:
    """Per-team mean and 95% interval of every league-table column."""
    t = batch.tables()
    cols = ("scored", "conceded", "wins", "league_points")
    header = ["team"]
    if observed is not None:
        header += [f"observed_{c}" for c in cols]
    for c in cols:
        header += [f"{c}_mean", f"{c}_q025", f"{c}_q975"]
    header.append("mean_rank")
    obs = None if observed is None else {"scored": observed.points_scored, "conceded": observed.points_conceded,
                                         "wins": observed.wins, "league_points": observed.league_points}
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for k, name in enumerate(teams):
            row = [name]
            if obs is not None:
                row += [int(obs[c][k]) for c in cols]
            for c in cols:
                x = t[c][:, k]
                lo, hi = np.quantile(x, [0.025, 0.975])
                row += [f"{x.mean():.4f}", f"{lo:.4f}", f"{hi:.4f}"]
            row.append(f"{t['rank'][:, k].mean():.4f}")
            w.writerow(row)


def write_rank_matrix(dist: RankDistribution, path) -> None:
    K = dist.matrix.shape[0]
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["team"] + [f"pos_{p}" for p in range(1, K + 1)])
        for k in range(K):
            name = dist.teams[k] if dist.teams else str(k + 1)
            w.writerow([name] + [f"{v:.6f}" for v in dist.matrix[k]])


def write_cumulative_points(teams: Sequence[str], predicted: list[np.ndarray], path,
                            observed: list[np.ndarray] | None = None) -> None:
    """Long format: team, match_day, observed, predicted_mean."""
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["team", "match_day", "observed", "predicted_mean"])
        for k, name in enumerate(teams):
            for day, value in enumerate(predicted[k], start=1):
                obs = "" if observed is None else int(observed[k][day - 1])
                w.writerow([name, day, obs, f"{value:.4f}"])

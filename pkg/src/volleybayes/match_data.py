"""Season data: parsing, validation, derived efficiencies and centering.

A season is a list of matches between ``K`` teams. Each match carries total
points, set counts, the five-set and home-win indicators, and four skill
efficiencies per side (serve, attack, defence, block).

Two CSV layouts are understood:

``table1``
    efficiencies given directly as ``ser_eff_h``, ``att_eff_h`` ... columns.
``raw-counts``
    each efficiency replaced by a ``<skill>_tot_<side>``, ``<skill>_perfect_<side>``,
    ``<skill>_err_<side>`` triple, from which the ratio is computed.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

SKILLS = ("ser", "att", "def", "blo")
SIDES = ("h", "a")
# Order of the 8 covariate streams held in SeasonData.covariate_means.
COVARIATE_COLUMNS = tuple(f"{s}_eff_{t}" for t in SIDES for s in SKILLS)
BASE_COLUMNS = ("match_id", "home_team", "away_team", "y_h", "y_a", "s_h", "s_a", "d_s", "d_m")
TABLE1_COLUMNS = BASE_COLUMNS + COVARIATE_COLUMNS
RAW_COUNT_COLUMNS = BASE_COLUMNS + tuple(
    f"{s}_{part}_{t}" for t in SIDES for s in SKILLS for part in ("tot", "perfect", "err")
)
LEGAL_SETS = ((3, 0), (3, 1), (3, 2), (0, 3), (1, 3), (2, 3))


class SeasonFormatError(ValueError):
    """Raised when a season file cannot be turned into match records."""


class EfficiencyError(ValueError):
    """Raised when an efficiency ratio is undefined (no attempts recorded)."""


@dataclass(frozen=True)
class RawSkillCounts:
    total: int
    perfect: int
    errors: int


def compute_efficiency(counts: RawSkillCounts) -> float:
    """Return ``(perfect - errors) / total`` for one skill.

    Raises
    ------
    EfficiencyError
        If ``total`` is zero, or the counts are inconsistent.
    """
    if counts.total <= 0:
        raise EfficiencyError(f"undefined efficiency: total is {counts.total}")
    if min(counts.perfect, counts.errors) < 0 or counts.perfect + counts.errors > counts.total:
        raise EfficiencyError(f"inconsistent skill counts {counts}")
    return (counts.perfect - counts.errors) / counts.total


@dataclass(frozen=True)
class TeamIndex:
    """Bijection between team names and integer codes ``1..K``."""

    names: tuple[str, ...]
    codes: tuple[int, ...] = ()

    def __post_init__(self):
        if not self.codes:
            object.__setattr__(self, "codes", tuple(range(1, len(self.names) + 1)))
        if len(set(self.names)) != len(self.names):
            raise ValueError("team names must be distinct")
        if sorted(self.codes) != list(range(1, len(self.names) + 1)):
            raise ValueError("team codes must be a permutation of 1..K")
        if len(self.names) < 2:
            raise ValueError("a season needs at least two teams")

    @property
    def K(self) -> int:
        return len(self.names)

    def code(self, name: str) -> int:
        try:
            return self.codes[self.names.index(name)]
        except ValueError:
            raise KeyError(f"unknown team {name!r}") from None

    def name(self, code: int) -> str:
        return self.names[self.codes.index(code)]

    def ordered_names(self) -> list[str]:
        """Team names sorted by code."""
        return [self.name(c) for c in range(1, self.K + 1)]


@dataclass(frozen=True)
class MatchRecord:
    match_id: int
    home: int
    away: int
    y_h: int
    y_a: int
    s_h: int
    s_a: int
    d_s: float
    d_m: float
    eff_home: tuple[float, float, float, float]
    eff_away: tuple[float, float, float, float]

    @property
    def ser_eff_h(self) -> float:
        return self.eff_home[0]

    @property
    def att_eff_h(self) -> float:
        return self.eff_home[1]

    @property
    def def_eff_h(self) -> float:
        return self.eff_home[2]

    @property
    def blo_eff_h(self) -> float:
        return self.eff_home[3]

    @property
    def ser_eff_a(self) -> float:
        return self.eff_away[0]

    @property
    def att_eff_a(self) -> float:
        return self.eff_away[1]

    @property
    def def_eff_a(self) -> float:
        return self.eff_away[2]

    @property
    def blo_eff_a(self) -> float:
        return self.eff_away[3]


def indicators_from_sets(s_h: int, s_a: int) -> tuple[int, int]:
    """Return ``(d_s, d_m)`` implied by a set score."""
    return int(s_h + s_a == 5), int(s_h > s_a)


@dataclass(frozen=True)
class SeasonData:
    teams: TeamIndex
    matches: tuple[MatchRecord, ...]
    covariate_means: tuple[float, ...] = (0.0,) * 8
    centered: bool = False

    @property
    def n_matches(self) -> int:
        return len(self.matches)

    def arrays(self) -> dict[str, np.ndarray]:
        """Column arrays with 0-based team indices, convenient for vectorised code."""
        m = self.matches
        return {
            "home": np.array([r.home - 1 for r in m], dtype=np.intp),
            "away": np.array([r.away - 1 for r in m], dtype=np.intp),
            "y_h": np.array([r.y_h for r in m], dtype=float),
            "y_a": np.array([r.y_a for r in m], dtype=float),
            "d_s": np.array([r.d_s for r in m], dtype=float),
            "d_m": np.array([r.d_m for r in m], dtype=float),
            "eff_home": np.array([r.eff_home for r in m], dtype=float).reshape(-1, 4),
            "eff_away": np.array([r.eff_away for r in m], dtype=float).reshape(-1, 4),
        }


def _number(text: str, column: str, line: int) -> float:
    try:
        value = float(text)
    except (TypeError, ValueError):
        raise SeasonFormatError(f"line {line}: non-numeric value {text!r} in column {column!r}") from None
    if not math.isfinite(value):
        raise SeasonFormatError(f"line {line}: non-finite value in column {column!r}")
    return value


def _integer(text: str, column: str, line: int) -> int:
    value = _number(text, column, line)
    if value != int(value):
        raise SeasonFormatError(f"line {line}: expected an integer in column {column!r}, got {text!r}")
    return int(value)


def _indicator(text: str, column: str, line: int) -> float:
    # Kept as read; validate_season reports non-binary values instead of failing here.
    value = _number(text, column, line)
    return int(value) if value == int(value) else value


def detect_schema(header: Sequence[str]) -> str:
    cols = set(header)
    if set(TABLE1_COLUMNS) <= cols:
        return "table1"
    if set(RAW_COUNT_COLUMNS) <= cols:
        return "raw-counts"
    missing = sorted(set(TABLE1_COLUMNS) - cols)
    raise SeasonFormatError(f"missing column(s): {', '.join(missing)}")


def parse_season_csv(path: str | Path, schema: str | None = None) -> SeasonData:
    """Read a season CSV into a :class:`SeasonData`.

    ``schema`` is ``"table1"``, ``"raw-counts"`` or ``None`` to detect it
    from the header. Optional ``home_code``/``away_code`` columns fix the team
    coding; otherwise teams are numbered in order of first appearance.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise SeasonFormatError(f"{path}: empty file") from None
        rows = [(reader.line_num, row) for row in reader if any(c.strip() for c in row)]

    if schema is None:
        schema = detect_schema(header)
    required = {"table1": TABLE1_COLUMNS, "raw-counts": RAW_COUNT_COLUMNS}.get(schema)
    if required is None:
        raise SeasonFormatError(f"unknown schema {schema!r}")
    missing = [c for c in required if c not in header]
    if missing:
        raise SeasonFormatError(f"missing column(s): {', '.join(missing)}")
    if not rows:
        raise SeasonFormatError("no matches")
    col = {name: i for i, name in enumerate(header)}
    explicit_codes = "home_code" in col and "away_code" in col

    parsed = []
    for line, row in rows:
        if len(row) != len(header):
            raise SeasonFormatError(f"line {line}: expected {len(header)} fields, got {len(row)}")
        get = lambda c: row[col[c]].strip()  # noqa: E731
        rec = {
            "match_id": _integer(get("match_id"), "match_id", line),
            "home_team": get("home_team"),
            "away_team": get("away_team"),
            "y_h": _integer(get("y_h"), "y_h", line),
            "y_a": _integer(get("y_a"), "y_a", line),
            "s_h": _integer(get("s_h"), "s_h", line),
            "s_a": _integer(get("s_a"), "s_a", line),
            "d_s": _indicator(get("d_s"), "d_s", line),
            "d_m": _indicator(get("d_m"), "d_m", line),
        }
        if explicit_codes:
            rec["home_code"] = _integer(get("home_code"), "home_code", line)
            rec["away_code"] = _integer(get("away_code"), "away_code", line)
        effs = {}
        for side in SIDES:
            values = []
            for skill in SKILLS:
                if schema == "table1":
                    name = f"{skill}_eff_{side}"
                    values.append(_number(get(name), name, line))
                else:
                    counts = RawSkillCounts(
                        *(_integer(get(f"{skill}_{p}_{side}"), f"{skill}_{p}_{side}", line)
                          for p in ("tot", "perfect", "err"))
                    )
                    try:
                        values.append(compute_efficiency(counts))
                    except EfficiencyError as exc:
                        raise SeasonFormatError(f"line {line}: {skill} ({side}): {exc}") from None
            effs[side] = tuple(values)
        rec["eff"] = effs
        rec["line"] = line
        parsed.append(rec)

    seen = set()
    for rec in parsed:
        if rec["match_id"] in seen:
            raise SeasonFormatError(f"line {rec['line']}: duplicate match_id {rec['match_id']}")
        seen.add(rec["match_id"])

    teams = _build_team_index(parsed, explicit_codes)
    matches = tuple(
        MatchRecord(
            match_id=rec["match_id"],
            home=teams.code(rec["home_team"]),
            away=teams.code(rec["away_team"]),
            y_h=rec["y_h"],
            y_a=rec["y_a"],
            s_h=rec["s_h"],
            s_a=rec["s_a"],
            d_s=rec["d_s"],
            d_m=rec["d_m"],
            eff_home=rec["eff"]["h"],
            eff_away=rec["eff"]["a"],
        )
        for rec in parsed
    )
    return SeasonData(teams=teams, matches=matches)


def _build_team_index(parsed: list[dict], explicit_codes: bool) -> TeamIndex:
    if not explicit_codes:
        names: list[str] = []
        for rec in parsed:
            for n in (rec["home_team"], rec["away_team"]):
                if n not in names:
                    names.append(n)
        return TeamIndex(tuple(names))

    by_code: dict[int, str] = {}
    for rec in parsed:
        for n, c in ((rec["home_team"], rec["home_code"]), (rec["away_team"], rec["away_code"])):
            if by_code.setdefault(c, n) != n:
                raise SeasonFormatError(
                    f"line {rec['line']}: code {c} used for both {by_code[c]!r} and {n!r}"
                )
    K = len(by_code)
    bad = sorted(c for c in by_code if not 1 <= c <= K)
    if bad or len(set(by_code.values())) != K:
        raise SeasonFormatError(f"unknown team code(s) {bad}; codes must cover 1..{K} one-to-one")
    codes = tuple(sorted(by_code))
    return TeamIndex(tuple(by_code[c] for c in codes), codes)


def write_season_csv(data: SeasonData, path: str | Path, explicit_codes: bool = True) -> None:
    """Write ``data`` in the ``table1`` layout (round-trips through :func:`parse_season_csv`)."""
    header = list(BASE_COLUMNS[:3])
    if explicit_codes:
        header += ["home_code", "away_code"]
    header += list(BASE_COLUMNS[3:]) + list(COVARIATE_COLUMNS)
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for r in data.matches:
            row = [r.match_id, data.teams.name(r.home), data.teams.name(r.away)]
            if explicit_codes:
                row += [r.home, r.away]
            row += [r.y_h, r.y_a, r.s_h, r.s_a, r.d_s, r.d_m]
            row += [repr(float(v)) for v in r.eff_home + r.eff_away]
            w.writerow(row)


@dataclass
class Violation:
    match_id: int
    message: str
    expected: dict = field(default_factory=dict)

    def __str__(self):
        return f"match {self.match_id}: {self.message}"


@dataclass
class ValidationReport:
    violations: list[Violation]
    season_issues: list[str]

    @property
    def clean(self) -> bool:
        return not self.violations and not self.season_issues

    def rows(self) -> list[int]:
        return sorted({v.match_id for v in self.violations})

    def __str__(self):
        if self.clean:
            return "season is clean"
        lines = [*self.season_issues, *(str(v) for v in self.violations)]
        return "\n".join(lines)


def validate_season(data: SeasonData) -> ValidationReport:
    """Check every match against the set-score and indicator rules.

    Report-only: nothing is raised and nothing is repaired. Indicator
    mismatches carry the values recomputed from the set counts.
    """
    violations = []
    K = data.teams.K
    for r in data.matches:
        bad = lambda msg, **exp: violations.append(Violation(r.match_id, msg, exp))  # noqa: E731
        if r.home == r.away:
            bad("home and away team are the same")
        for side, code in (("home", r.home), ("away", r.away)):
            if not 1 <= code <= K:
                bad(f"{side} team code {code} outside 1..{K}")
        if r.y_h < 0 or r.y_a < 0:
            bad("negative point count")
        legal = (r.s_h, r.s_a) in LEGAL_SETS
        if not legal:
            bad(f"illegal set score {r.s_h}-{r.s_a}; exactly one side must win 3 sets")
        for name, value in (("d_s", r.d_s), ("d_m", r.d_m)):
            if value not in (0, 1):
                bad(f"{name}={value} is not a binary indicator (malformed or shifted row)")
        if legal:
            d_s, d_m = indicators_from_sets(r.s_h, r.s_a)
            if r.d_s in (0, 1) and r.d_s != d_s:
                bad(f"d_s inconsistent; expected {d_s}", d_s=d_s)
            if r.d_m in (0, 1) and r.d_m != d_m:
                bad(f"d_m inconsistent; expected {d_m}", d_m=d_m)
            if r.d_s not in (0, 1) or r.d_m not in (0, 1):
                violations[-1].expected.update(d_s=d_s, d_m=d_m)
        for side, effs in (("h", r.eff_home), ("a", r.eff_away)):
            for skill, v in zip(SKILLS, effs):
                if not (math.isfinite(v) and -1.0 <= v <= 1.0):
                    bad(f"{skill}_eff_{side}={v} outside [-1, 1]")

    issues = []
    ids = [r.match_id for r in data.matches]
    if len(set(ids)) != len(ids):
        issues.append("duplicate match ids")
    elif sorted(ids) != list(range(1, len(ids) + 1)):
        issues.append("match ids are not contiguous from 1")
    return ValidationReport(violations, issues)


def repair_indicators(data: SeasonData) -> SeasonData:
    """Recompute ``d_s``/``d_m`` from the set counts wherever the set score is legal."""
    fixed = []
    for r in data.matches:
        if (r.s_h, r.s_a) in LEGAL_SETS:
            d_s, d_m = indicators_from_sets(r.s_h, r.s_a)
            r = replace(r, d_s=d_s, d_m=d_m)
        fixed.append(r)
    return replace(data, matches=tuple(fixed))


def covariate_matrix(data: SeasonData) -> np.ndarray:
    """N x 8 matrix of efficiencies in :data:`COVARIATE_COLUMNS` order."""
    return np.array([r.eff_home + r.eff_away for r in data.matches], dtype=float).reshape(-1, 8)


def center_covariates(data: SeasonData) -> SeasonData:
    """Subtract each covariate stream's mean over all matches.

    The subtracted means are added to ``covariate_means``, so centering an
    already centered season leaves both the data and the recorded means as
    they were.
    """
    X = covariate_matrix(data)
    if len(X) == 0:
        return replace(data, centered=True)
    means = X.mean(axis=0)
    means += (X - means).mean(axis=0)  # second pass removes the rounding of the first
    Xc = X - means
    matches = tuple(
        replace(r, eff_home=tuple(map(float, Xc[i, :4])), eff_away=tuple(map(float, Xc[i, 4:])))
        for i, r in enumerate(data.matches)
    )
    recorded = tuple(float(m0 + m) for m0, m in zip(data.covariate_means, means))
    return replace(data, matches=matches, covariate_means=recorded, centered=True)


def season_from_arrays(
    team_names: Iterable[str],
    home: np.ndarray,
    away: np.ndarray,
    y_h: np.ndarray,
    y_a: np.ndarray,
    s_h: np.ndarray,
    s_a: np.ndarray,
    eff_home: np.ndarray,
    eff_away: np.ndarray,
) -> SeasonData:
    """Assemble a season from 0-based team index arrays; indicators derived from sets."""
    teams = TeamIndex(tuple(team_names))
    matches = []
    for i in range(len(home)):
        d_s, d_m = indicators_from_sets(int(s_h[i]), int(s_a[i]))
        matches.append(
            MatchRecord(
                match_id=i + 1,
                home=int(home[i]) + 1,
                away=int(away[i]) + 1,
                y_h=int(y_h[i]),
                y_a=int(y_a[i]),
                s_h=int(s_h[i]),
                s_a=int(s_a[i]),
                d_s=d_s,
                d_m=d_m,
                eff_home=tuple(float(v) for v in eff_home[i]),
                eff_away=tuple(float(v) for v in eff_away[i]),
            )
        )
    return SeasonData(teams=teams, matches=tuple(matches))


def double_round_robin(K: int) -> list[tuple[int, int]]:
    """All ordered (home, away) pairs, 0-based, as a fixture list of K(K-1) matches.

    Pairs are arranged by a circle-method schedule so that each match day
    contains every team at most once.
    """
    teams = list(range(K)) + ([None] if K % 2 else [])
    n = len(teams)
    first_leg = []
    for rnd in range(n - 1):
        for i in range(n // 2):
            a, b = teams[i], teams[n - 1 - i]
            if a is None or b is None:
                continue
            first_leg.append((a, b) if (rnd + i) % 2 == 0 else (b, a))
        teams = [teams[0]] + [teams[-1]] + teams[1:-1]
    return first_leg + [(b, a) for a, b in first_leg]

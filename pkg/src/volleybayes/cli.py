"""Command-line entry point: ``volleybayes {validate,fit,summarize,predict}``.

Every run parameter is a flag. ``--config file.json`` supplies the same
keys (flag names with dashes turned into underscores); a flag given on the
command line wins over the file.

Exit codes: 0 success, 1 validation failure, 2 I/O or parse error,
3 bad configuration.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .diagnostics import format_table, summarize, write_summary_csv, write_summary_json
from .match_data import (
    SeasonFormatError,
    center_covariates,
    parse_season_csv,
    repair_indicators,
    validate_season,
    write_season_csv,
)
from .mcmc import ChainTrace, SamplerConfig, SamplerError, TraceFormatError, run_all_chains
from .predictive import (
    cumulative_points,
    load_fixtures,
    observed_table,
    rank_probabilities,
    replicate_season,
    write_cumulative_points,
    write_league_summary,
    write_rank_matrix,
)
from .priors import PriorSpec

log = logging.getLogger("volleybayes")

EXIT_OK, EXIT_INVALID, EXIT_IO, EXIT_CONFIG = 0, 1, 2, 3
R_HAT_WARN = 1.05

DEFAULTS = {
    "schema": None,
    "prior": "basic",
    "chains": 2,
    "iters": 20000,
    "burn_in": 10000,
    "thin": 1,
    "seed": 20172018,
    "workers": 1,
    "n_rep": 1000,
    "out": ".",
    "select": "default",
    "covariates": "zero",
    "repair": False,
}


class ConfigError(ValueError):
    pass


class CliFailure(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="volleybayes", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, data=True):
        sp.add_argument("--config", type=Path, help="JSON file mirroring these flags")
        if data:
            sp.add_argument("--data", type=Path, help="season CSV")
            sp.add_argument("--schema", choices=("table1", "raw-counts"))
        sp.add_argument("--out", type=Path, help="output directory")
        sp.add_argument("-v", "--verbose", action="store_true")

    sp = sub.add_parser("validate", help="check a season file")
    common(sp)
    sp.add_argument("--repair", action="store_true", default=None,
                    help="recompute five-set/home-win flags from set counts and write the repaired file")

    sp = sub.add_parser("fit", help="run the MCMC sampler")
    common(sp)
    sp.add_argument("--prior", choices=("basic", "scaled-iw"))
    sp.add_argument("--chains", type=int)
    sp.add_argument("--iters", type=int)
    sp.add_argument("--burn-in", type=int)
    sp.add_argument("--thin", type=int)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--workers", type=int, help="processes used to run chains")
    sp.add_argument("--repair", action="store_true", default=None,
                    help="repair inconsistent indicators instead of refusing to fit")

    sp = sub.add_parser("summarize", help="posterior summary table from traces")
    common(sp, data=False)
    sp.add_argument("--traces", type=Path, help="trace directory or a single trace file")
    sp.add_argument("--prior", choices=("basic", "scaled-iw"))
    sp.add_argument("--select", help="comma-separated selector (default, all, home, attack[Team], ...)")

    sp = sub.add_parser("predict", help="posterior-predictive season replicates")
    common(sp)
    sp.add_argument("--traces", type=Path)
    sp.add_argument("--prior", choices=("basic", "scaled-iw"))
    sp.add_argument("--fixtures", type=Path, help="fixture list; defaults to --data")
    sp.add_argument("--n-rep", type=int)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--covariates", choices=("zero", "observed"),
                    help="efficiencies used for replicated matches")
    return p


def _resolve_options(args: argparse.Namespace) -> dict:
    opts = dict(DEFAULTS)
    given: set[str] = set()
    if args.config is not None:
        try:
            cfg = json.loads(args.config.read_text(encoding="utf-8"))
        except OSError as exc:
            raise CliFailure(EXIT_IO, f"cannot read config: {exc}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {args.config}: {exc}") from None
        if not isinstance(cfg, dict):
            raise ConfigError("config must be a JSON object")
        cfg = {k.replace("-", "_"): v for k, v in cfg.items()}
        known = set(DEFAULTS) | {"data", "traces", "fixtures"}
        unknown = sorted(set(cfg) - known)
        if unknown:
            raise ConfigError(f"unknown config key(s): {', '.join(unknown)}")
        opts.update(cfg)
        given |= set(cfg)
    for key, value in vars(args).items():
        if key not in ("command", "config", "verbose") and value is not None:
            opts[key] = value
            given.add(key)
    opts["given"] = given
    for key in ("data", "traces", "fixtures", "out"):
        if opts.get(key) is not None:
            opts[key] = Path(opts[key])
    return opts


def _require(opts, key):
    if opts.get(key) is None:
        raise ConfigError(f"--{key.replace('_', '-')} is required")
    return opts[key]


def _load_season(opts):
    path = _require(opts, "data")
    try:
        return parse_season_csv(path, opts.get("schema"))
    except OSError as exc:
        raise CliFailure(EXIT_IO, f"cannot read {path}: {exc.strerror or exc}") from None
    except SeasonFormatError as exc:
        raise CliFailure(EXIT_IO, f"{path}: {exc}") from None


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


# -- subcommands --------------------------------------------------------------

def cmd_validate(opts) -> int:
    season = _load_season(opts)
    report = validate_season(season)
    print(report)
    if report.clean:
        return EXIT_OK
    if opts.get("repair"):
        fixed = repair_indicators(season)
        after = validate_season(fixed)
        out = Path(opts["out"])
        out.mkdir(parents=True, exist_ok=True)
        target = out / (Path(opts["data"]).stem + "_repaired.csv")
        write_season_csv(fixed, target)
        print(f"repaired file written to {target}")
        if not after.clean:
            print(after)
            return EXIT_INVALID
        return EXIT_OK
    return EXIT_INVALID


def cmd_fit(opts) -> int:
    season = _load_season(opts)
    report = validate_season(season)
    if not report.clean:
        if not opts.get("repair"):
            print(report, file=sys.stderr)
            raise CliFailure(EXIT_INVALID, "season failed validation; rerun with --repair or fix the file")
        season = repair_indicators(season)
        report = validate_season(season)
        if not report.clean:
            print(report, file=sys.stderr)
            raise CliFailure(EXIT_INVALID, "season still invalid after repair")
    if not season.centered:
        season = center_covariates(season)

    try:
        spec = PriorSpec(variant=opts["prior"])
        config = SamplerConfig(n_chains=opts["chains"], n_iter=opts["iters"], burn_in=opts["burn_in"],
                               thin=opts["thin"], seed=opts["seed"], workers=opts["workers"])
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None

    out = Path(opts["out"])
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    try:
        traces = run_all_chains(season, spec, config)
    except SamplerError as exc:
        raise CliFailure(EXIT_INVALID, f"sampler failed: {exc}") from None
    wall = time.perf_counter() - t0

    variant = spec.variant
    trace_files = []
    for c, tr in enumerate(traces):
        path = out / f"trace_{variant}_chain{c}.csv"
        tr.to_csv(path)
        trace_files.append(path.name)
    rows = summarize(traces, "default")
    write_summary_csv(rows, out / f"summary_{variant}.csv")
    write_summary_json(rows, out / f"summary_{variant}.json")
    flagged = [r.name for r in rows if not r.r_hat <= R_HAT_WARN]
    for name in flagged:
        log.warning("r_hat above %.2f for %s; consider more iterations", R_HAT_WARN, name)

    manifest = {
        "version": __version__,
        "command": "fit",
        "data": str(opts["data"]),
        "schema": opts.get("schema"),
        "prior_variant": variant,
        "prior": spec.to_dict(),
        "sampler": config.to_dict(),
        "config_hash": config.digest(),
        "seed": config.seed,
        "teams": season.teams.ordered_names(),
        "covariate_means": list(season.covariate_means),
        "trace_files": trace_files,
        "summary_files": [f"summary_{variant}.csv", f"summary_{variant}.json"],
        "acceptance": [tr.acceptance for tr in traces],
        "r_hat_flagged": flagged,
        "wall_seconds": round(wall, 3),
    }
    _write_json(out / f"manifest_{variant}.json", manifest)
    print(format_table(rows))
    return EXIT_OK


def _load_traces(opts) -> list[ChainTrace]:
    path = _require(opts, "traces")
    if path.is_dir():
        variants = [opts["prior"]] if "prior" in opts["given"] else ["basic", "scaled-iw"]
        files = []
        for v in variants:
            files = sorted(path.glob(f"trace_{v}_chain*.csv"))
            if files:
                break
        if not files:
            raise CliFailure(EXIT_IO, f"no trace files in {path}")
    elif path.exists():
        files = [path]
    else:
        raise CliFailure(EXIT_IO, f"no such trace path: {path}")
    try:
        return [ChainTrace.from_csv(f) for f in files]
    except TraceFormatError as exc:
        raise CliFailure(EXIT_IO, f"malformed trace: {exc}") from None
    except OSError as exc:
        raise CliFailure(EXIT_IO, f"cannot read traces: {exc}") from None


def cmd_summarize(opts) -> int:
    traces = _load_traces(opts)
    if len(traces) < 2:
        log.warning("single chain: r_hat and ess are not available")
    try:
        rows = summarize(traces, opts["select"])
    except KeyError as exc:
        raise ConfigError(str(exc.args[0])) from None
    print(format_table(rows))
    if "out" in opts["given"]:
        out = Path(opts["out"])
        out.mkdir(parents=True, exist_ok=True)
        write_summary_csv(rows, out / "summary_selected.csv")
    return EXIT_OK


def cmd_predict(opts) -> int:
    traces = _load_traces(opts)
    teams = traces[0].meta.get("teams")
    source = opts.get("fixtures") or opts.get("data")
    if source is None:
        raise ConfigError("--fixtures or --data is required")
    try:
        fixtures, observed = load_fixtures(source, teams)
    except KeyError as exc:
        raise CliFailure(EXIT_INVALID, str(exc.args[0])) from None
    except OSError as exc:
        raise CliFailure(EXIT_IO, f"cannot read {source}: {exc.strerror or exc}") from None
    except SeasonFormatError as exc:
        raise CliFailure(EXIT_IO, f"{source}: {exc}") from None

    use_cov = opts["covariates"] == "observed"
    if use_cov:
        if observed is None:
            raise ConfigError("--covariates observed needs fixtures with efficiency columns")
        means = np.asarray(traces[0].meta.get("covariate_means") or np.zeros(8))
        fixtures = [replace(f, eff_home=tuple(np.asarray(f.eff_home) - means[:4]),
                            eff_away=tuple(np.asarray(f.eff_away) - means[4:])) for f in fixtures]
    if opts["n_rep"] < 1:
        raise ConfigError("--n-rep must be >= 1")

    samples = [s for tr in traces for s in tr.samples()]
    rng = np.random.default_rng(np.random.SeedSequence(opts["seed"], spawn_key=(1_000_000,)))
    batch = replicate_season(samples, fixtures, opts["n_rep"], rng, use_covariates=use_cov, K=len(teams))

    out = Path(opts["out"])
    out.mkdir(parents=True, exist_ok=True)
    table = observed_table(observed) if observed is not None else None
    write_league_summary(batch, teams, out / "league_table.csv", observed=table)
    dist = rank_probabilities(batch, teams)
    write_rank_matrix(dist, out / "rank_probabilities.csv")
    obs_traj = cumulative_points(observed) if observed is not None else None
    write_cumulative_points(teams, cumulative_points(batch), out / "cumulative_points.csv", obs_traj)
    _write_json(out / "predict_manifest.json", {
        "version": __version__,
        "command": "predict",
        "traces": str(opts["traces"]),
        "fixtures": str(source),
        "n_rep": opts["n_rep"],
        "seed": opts["seed"],
        "covariates": opts["covariates"],
        "variant": traces[0].variant,
        "config_hash": traces[0].meta.get("config_hash"),
        "outputs": ["league_table.csv", "rank_probabilities.csv", "cumulative_points.csv"],
    })
    print(f"wrote predictions for {len(fixtures)} fixtures x {opts['n_rep']} replicates to {out}")
    return EXIT_OK


COMMANDS = {"validate": cmd_validate, "fit": cmd_fit, "summarize": cmd_summarize, "predict": cmd_predict}


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        opts = _resolve_options(args)
        return COMMANDS[args.command](opts)
    except CliFailure as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())

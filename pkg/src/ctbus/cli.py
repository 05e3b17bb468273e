"""Command line entry point: ``ctbus <subcommand> [options]``.

Settings resolve as built-in defaults < ``--config`` file < ``CTBUS_*``
environment variables < command line flags. The config file holds flat
``key = value`` lines using the long flag names with dashes or
underscores (``k = 20``, ``road_gr = data/city.gr``).

Exit status: 0 on success, 1 for invalid input or configuration, 2 for
failures while computing.
"""

from __future__ import annotations

import argparse
import configparser
import logging
import os
import sys
from collections import Counter
from dataclasses import asdict, replace
from pathlib import Path

from . import __version__
from .candidates import CACHE_VERSION, EdgeTable, load_edge_table, precompute, save_edge_table
from .errors import CTBusError, ConfigurationError, EmptyGraphError, IntegrityError, ParseError
from .evaluation import (
    bound_tightness_report, edge_lengths, monotonicity_experiment, random_bound_instances,
    rows_to_csv, submodularity_experiment, transfer_metrics,
)
from .graph import RoutePath, edge_key
from .netio import dumps, export_geojson, file_digest, load_road_network, load_trajectories, load_transit_network
from .planner import PlannerConfig, plan_multi_route
from .spectral import (
    SpectralParams, estrada_upper_bound, general_upper_bound, natural_connectivity,
    natural_connectivity_exact, path_upper_bound, top_eigenvalues,
)

log = logging.getLogger("ctbus")

ENV_PREFIX = "CTBUS_"
VALIDATION_ERRORS = (ConfigurationError, ParseError, IntegrityError, EmptyGraphError, FileNotFoundError)


def _bool(text) -> bool:
    if isinstance(text, bool):
        return text
    low = str(text).strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _degree(text):
    if text is None or str(text).strip().lower() == "none":
        return None
    return int(text)


def _choice(*allowed):
    def parse(text):
        if text not in allowed:
            raise ValueError(f"expected one of {', '.join(allowed)}")
        return text
    return parse


def _ints(text):
    return [int(x) for x in str(text).split(",") if x.strip()]


# name -> (parser, default, help)
OPTIONS = {
    "road_gr": (str, None, "DIMACS road graph (.gr)"),
    "road_co": (str, None, "DIMACS road coordinates (.co)"),
    "transit": (str, None, "transit network JSON"),
    "trajectories": (str, None, "trajectory file, one road-vertex walk per line"),
    "cache": (str, None, "precomputation cache file"),
    "k": (int, 30, "maximum number of route edges"),
    "w": (float, 0.5, "weight of the demand term in [0, 1]"),
    "tau": (float, 500.0, "candidate edge distance limit in meters"),
    "tn": (int, 3, "turn budget; routes keep fewer than this many sharp turns"),
    "sn": (int, 5000, "number of seed edges"),
    "itmax": (int, 100_000, "iteration cap"),
    "mode": (_choice("online", "pre"), "pre", "objective evaluation: online or pre"),
    "neighbors": (_choice("best", "all"), "best", "expansion policy"),
    "domination": (_choice("on", "off"), "on", "domination pruning"),
    "algorithm": (_choice("eta", "vk-tsp"), "eta", "planner or demand-only baseline"),
    "seed": (int, 0, "random seed"),
    "s": (int, 50, "probe vectors for the connectivity estimator"),
    "t": (int, 10, "Lanczos steps per probe"),
    "taylor_degree": (_degree, 8, "control-variate polynomial degree, or 'none'"),
    "deflate": (int, 1, "top eigenvectors handled outside the random probes"),
    "exact": (_bool, False, "use dense eigendecomposition instead of the estimator"),
    "routes": (int, 1, "number of routes to plan one after another"),
    "record_every": (int, 100, "objective trace interval (iterations)"),
    "threads": (int, os.cpu_count() or 1, "worker threads"),
    "force": (_bool, False, "recompute even if the cache is current"),
    "steps": (int, 10, "route-removal steps"),
    "sizes": (_ints, [1, 5, 10, 15, 20], "comma-separated edge-set sizes"),
    "trials": (int, 20, "samples per size"),
    "sampler": (_choice("path", "random"), "path", "edge-set sampler"),
    "count": (int, 200, "number of random instances"),
    "kind": (_choice("path", "edges"), "path", "added edges form a path or arbitrary pairs"),
    "n_min": (int, 10, "smallest instance size"),
    "n_max": (int, 100, "largest instance size"),
    "k_max": (int, 5, "largest number of added edges"),
    "out": (str, None, "output file"),
    "report": (str, None, "JSON report file"),
    "trace": (str, None, "objective trace CSV"),
}

BOOL_FLAGS = {"exact", "force"}
INPUTS = ["road_gr", "road_co", "transit", "trajectories"]
SPECTRAL = ["seed", "s", "t", "taylor_degree", "deflate", "exact", "threads"]
PLANNER = ["k", "w", "tau", "tn", "sn", "itmax", "mode", "neighbors", "domination", "algorithm",
           "routes", "record_every"]

COMMANDS = {
    "preprocess": INPUTS + ["cache", "tau", "force"] + SPECTRAL,
    "plan": INPUTS + ["cache"] + PLANNER + SPECTRAL + ["out", "report", "trace"],
    "eval": INPUTS + ["report", "out"],
    "connectivity": ["transit"] + SPECTRAL,
    "bounds": ["transit", "k"] + SPECTRAL,
    "experiment monotonicity": ["transit", "steps", "out"] + SPECTRAL,
    "experiment submodularity": INPUTS + ["tau", "sizes", "trials", "sampler", "out"] + SPECTRAL,
    "experiment bounds": ["count", "kind", "n_min", "n_max", "k_max", "seed", "out"],
}

HELP = {
    "preprocess": "generate candidate edges and their gains; write the cache",
    "plan": "plan one or more routes",
    "eval": "transfer metrics of planned routes",
    "connectivity": "natural connectivity of a transit network",
    "bounds": "connectivity upper bounds for adding k edges",
    "experiment": "analysis experiments",
    "experiment monotonicity": "connectivity under cumulative route removal (CSV)",
    "experiment submodularity": "joint versus summed single-edge gains (CSV)",
    "experiment bounds": "bound tightness on random instances (CSV)",
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _add_options(p: argparse.ArgumentParser, names):
    p.add_argument("--config", help="config file with key = value lines")
    p.add_argument("--log-level", default="WARNING", choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    for name in names:
        _, default, text = OPTIONS[name]
        flag = "--" + name.replace("_", "-")
        if name in BOOL_FLAGS:
            p.add_argument(flag, action="store_const", const=True, default=None, help=text)
        else:
            p.add_argument(flag, default=None, help=f"{text} (default: {default})")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="ctbus", description="Plan bus routes that balance commuting demand and "
                                                "transit network connectivity.")
    parser.add_argument("--version", action="version", version=f"ctbus {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for cmd in ("preprocess", "plan", "eval", "connectivity", "bounds"):
        _add_options(sub.add_parser(cmd, help=HELP[cmd], description=HELP[cmd]), COMMANDS[cmd])
    exp = sub.add_parser("experiment", help=HELP["experiment"], description=HELP["experiment"])
    exp_sub = exp.add_subparsers(dest="experiment", required=True, parser_class=_Parser)
    for name in ("monotonicity", "submodularity", "bounds"):
        key = f"experiment {name}"
        _add_options(exp_sub.add_parser(name, help=HELP[key], description=HELP[key]), COMMANDS[key])
    return parser


def resolve_settings(args: argparse.Namespace, names, environ=None) -> dict:
    """Merge defaults, config file, environment and flags for ``names``."""
    environ = os.environ if environ is None else environ
    layers: list[tuple[str, dict]] = []
    if getattr(args, "config", None):
        path = Path(args.config)
        if not path.is_file():
            raise ConfigurationError(f"config file {path} not found")
        cp = configparser.ConfigParser(interpolation=None)
        try:
            cp.read_string("[ctbus]\n" + path.read_text(), source=str(path))
        except configparser.Error as exc:
            raise ConfigurationError(f"{path}: {exc}") from None
        file_vals = {k.replace("-", "_"): v for k, v in cp["ctbus"].items()}
        unknown = sorted(set(file_vals) - set(OPTIONS))
        if unknown:
            raise ConfigurationError(f"{path}: unknown keys {', '.join(unknown)}")
        layers.append((str(path), file_vals))
    layers.append(("environment", {name: environ[ENV_PREFIX + name.upper()] for name in names
                                   if ENV_PREFIX + name.upper() in environ}))
    layers.append(("command line", {name: getattr(args, name) for name in names
                                    if getattr(args, name, None) is not None}))
    out = {}
    for name in names:
        parse, default, _ = OPTIONS[name]
        value, source = default, None
        for where, vals in layers:
            if name in vals:
                value, source = vals[name], where
        if source is not None and value is not None:
            try:
                value = parse(value)
            except (TypeError, ValueError) as exc:
                raise ConfigurationError(f"{source}: invalid value for {name}: {exc}") from None
        out[name] = value
    return out


def _require(cfg, *names):
    for name in names:
        if not cfg.get(name):
            raise ConfigurationError(f"--{name.replace('_', '-')} is required")


def _spectral(cfg) -> SpectralParams:
    return SpectralParams(s=cfg["s"], t=cfg["t"], seed=cfg["seed"], taylor_degree=cfg["taylor_degree"],
                          deflate=cfg["deflate"])


def _planner_config(cfg) -> PlannerConfig:
    return PlannerConfig(k=cfg["k"], w=cfg["w"], tau=cfg["tau"], Tn=cfg["tn"], sn=cfg["sn"],
                         it_max=cfg["itmax"], mode=cfg["mode"], neighbor_policy=cfg["neighbors"],
                         domination=cfg["domination"] == "on", spectral=_spectral(cfg),
                         record_every=cfg["record_every"], exact=cfg["exact"])


def _load_inputs(cfg):
    _require(cfg, "road_gr", "road_co", "transit")
    road = load_road_network(cfg["road_gr"], cfg["road_co"])
    if cfg.get("trajectories"):
        road = road.with_demand(load_trajectories(cfg["trajectories"], road))
    else:
        log.warning("no trajectories given; every road edge carries zero demand")
    transit = load_transit_network(cfg["transit"], road)
    return road, transit


def _cache_settings(cfg) -> dict:
    return {"tau": cfg["tau"], "s": cfg["s"], "t": cfg["t"], "seed": cfg["seed"],
            "taylor_degree": cfg["taylor_degree"], "deflate": cfg["deflate"], "exact": cfg["exact"],
            "version": CACHE_VERSION}


def _input_hash(cfg) -> str:
    paths = [cfg.get(name) for name in INPUTS]
    return file_digest(paths, _cache_settings(cfg))


def _write(text: str, path) -> None:
    if path:
        Path(path).write_text(text)
    else:
        sys.stdout.write(text)


def _read_cache(cfg):
    """Cached table if present and current, else None (with the reason)."""
    path = cfg.get("cache")
    if not path:
        return None, "no --cache given"
    if not Path(path).is_file():
        return None, f"cache file {path} does not exist"
    table, header = load_edge_table(path)
    if header["input_hash"] != _input_hash(cfg):
        return None, f"cache file {path} is stale (inputs or settings changed)"
    return table, None


def cmd_preprocess(cfg) -> int:
    _require(cfg, "cache")
    road, transit = _load_inputs(cfg)
    if not cfg["force"]:
        table, _ = _read_cache(cfg)
        if table is not None:
            log.info("cache %s is current", cfg["cache"])
            return 0
    diag = Counter()
    table = precompute(road, transit, cfg["tau"], _spectral(cfg), exact=cfg["exact"],
                       threads=cfg["threads"], diagnostics=diag)
    save_edge_table(table, cfg["cache"], _input_hash(cfg), _cache_settings(cfg))
    log.info("wrote %s: %d candidates, %d existing edges (%s)", cfg["cache"], len(table.new),
             len(table.existing), dict(diag))
    return 0


def cmd_plan(cfg) -> int:
    pconf = _planner_config(cfg)
    if cfg["algorithm"] == "vk-tsp":
        pconf = replace(pconf, w=1.0, new_edges_only=True)
    if cfg["routes"] < 1:
        raise ConfigurationError("--routes must be >= 1")
    table, why = _read_cache(cfg)
    if table is None and pconf.mode == "pre":
        raise ConfigurationError(f"pre mode needs a current precomputation cache: {why}; "
                                 "run `ctbus preprocess` first")
    road, transit = _load_inputs(cfg)
    if table is None:
        log.info("%s; precomputing in memory", why)
        table = precompute(road, transit, cfg["tau"], _spectral(cfg), exact=cfg["exact"], threads=cfg["threads"])
    result = plan_multi_route(pconf, road, transit, table, cfg["routes"], threads=cfg["threads"])
    settings = {k: cfg[k] for k in PLANNER + ["seed", "s", "t", "taylor_degree", "deflate", "exact"]}
    report = {"settings": settings, "input_hash": _input_hash(cfg),
              "routes": [r.to_dict() for r in result.routes], "error": result.error}
    _write(dumps(report), cfg.get("report"))
    if cfg.get("out"):
        paths = {c.key: c.road_path for c in table.new + table.existing}
        features = []
        for i, r in enumerate(result.routes):
            fc = export_geojson(r.route, result.transit, road, paths)
            for f in fc["features"]:
                f["properties"]["route"] = i + 1
            features += fc["features"]
        Path(cfg["out"]).write_text(dumps({"type": "FeatureCollection", "features": features}))
    if cfg.get("trace"):
        rows = [{"route": i + 1, **asdict(tp)} for i, r in enumerate(result.routes) for tp in r.trace]
        Path(cfg["trace"]).write_text(rows_to_csv(rows, ["route", "iteration", "objective", "demand_term",
                                                         "connectivity_term"]))
    if result.error:
        log.error("planning stopped early: %s", result.error)
        return 2
    return 0


def cmd_eval(cfg) -> int:
    _require(cfg, "report")
    import json

    road, transit = _load_inputs(cfg)
    try:
        report = json.loads(Path(cfg["report"]).read_text())
        routes = report["routes"]
    except (ValueError, KeyError) as exc:
        raise ParseError(f"not a plan report: {exc}", cfg["report"]) from None
    from .candidates import existing_edge_records

    lengths = edge_lengths(existing_edge_records(road, transit))
    out = []
    current = transit
    for i, r in enumerate(routes):
        new_edges = {edge_key(e["u"], e["v"]) for e in r["edges"] if e["new"]}
        lengths.update({edge_key(e["u"], e["v"]): e["length"] for e in r["edges"]})
        mu = RoutePath(tuple(r["stops"]), tuple(r["road_path"]), frozenset(new_edges))
        after = current.with_edges(new_edges, f"planned-{i + 1}")
        diag = Counter()
        metrics = transfer_metrics(mu, current, after, lengths, diag)
        out.append({"route": i + 1, **metrics.to_dict()})
        current = after
    _write(dumps({"routes": out}), cfg.get("out"))
    return 0


def _transit_only(cfg):
    _require(cfg, "transit")
    return load_transit_network(cfg["transit"])


def _lambda(transit, cfg) -> float:
    if transit.n == 0:
        return 0.0
    return natural_connectivity_exact(transit.A) if cfg["exact"] else natural_connectivity(transit.A, _spectral(cfg))


def cmd_connectivity(cfg) -> int:
    transit = _transit_only(cfg)
    lam = _lambda(transit, cfg)
    _write(dumps({"connectivity": lam, "n": transit.n, "m": transit.m,
                  "method": "exact" if cfg["exact"] else "estimate"}), None)
    return 0


def cmd_bounds(cfg) -> int:
    transit = _transit_only(cfg)
    n, k = transit.n, cfg["k"]
    if n == 0:
        raise EmptyGraphError("transit network has no stops")
    if k < 0:
        raise ConfigurationError("--k must be >= 0")
    lam = _lambda(transit, cfg)
    top = top_eigenvalues(transit.A, min(2 * k, n)) if k else []
    doc = {"connectivity": lam, "k": k, "n": n, "m": transit.m,
           "general": general_upper_bound(lam, top, k, n),
           "estrada": estrada_upper_bound(transit.m, n, k)}
    if (k + 1) // 2 <= n:
        doc["path"] = path_upper_bound(lam, list(top)[: (k + 1) // 2], k, n)
    _write(dumps(doc), None)
    return 0


def cmd_monotonicity(cfg) -> int:
    transit = _transit_only(cfg)
    rows = monotonicity_experiment(transit, cfg["steps"], _spectral(cfg), exact=cfg["exact"], seed=cfg["seed"])
    _write(rows_to_csv(rows), cfg.get("out"))
    return 0


def cmd_submodularity(cfg) -> int:
    road, transit = _load_inputs(cfg)
    table = precompute(road, transit, cfg["tau"], _spectral(cfg), exact=cfg["exact"], threads=cfg["threads"])
    rows = submodularity_experiment(transit, table.new, cfg["sizes"], cfg["trials"], _spectral(cfg),
                                    exact=cfg["exact"], seed=cfg["seed"], sampler=cfg["sampler"])
    _write(rows_to_csv(rows, ["size", "trial", "sum_delta", "joint_delta", "theta"]), cfg.get("out"))
    return 0


def cmd_experiment_bounds(cfg) -> int:
    if not 1 <= cfg["n_min"] <= cfg["n_max"]:
        raise ConfigurationError("need 1 <= n-min <= n-max")
    insts = random_bound_instances(cfg["count"], cfg["kind"], (cfg["n_min"], cfg["n_max"]),
                                   (1, cfg["k_max"]), seed=cfg["seed"])
    rows, tally = bound_tightness_report(insts)
    cols = ["n", "m", "k", "kind", "lambda_G", "exact", "increment", "path", "general", "estrada"]
    _write(rows_to_csv(rows, cols), cfg.get("out"))
    sys.stderr.write(dumps(tally))
    return 0


HANDLERS = {
    "preprocess": cmd_preprocess,
    "plan": cmd_plan,
    "eval": cmd_eval,
    "connectivity": cmd_connectivity,
    "bounds": cmd_bounds,
    "experiment monotonicity": cmd_monotonicity,
    "experiment submodularity": cmd_submodularity,
    "experiment bounds": cmd_experiment_bounds,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=args.log_level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    command = args.command if args.command != "experiment" else f"experiment {args.experiment}"
    try:
        cfg = resolve_settings(args, COMMANDS[command])
        if command == "plan":
            _planner_config(cfg)  # validate ranges before touching any file
        return HANDLERS[command](cfg)
    except VALIDATION_ERRORS as exc:
        sys.stderr.write(f"ctbus {command}: error: {exc}\n")
        return 1
    except (CTBusError, OSError, ValueError, ArithmeticError) as exc:
        sys.stderr.write(f"ctbus {command}: failed: {exc}\n")
        return 2


if __name__ == "__main__":
    sys.exit(main())

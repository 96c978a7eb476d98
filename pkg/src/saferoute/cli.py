"""Command-line entry point: ``saferoute {ingest,fit,evaluate,route,bench}``.

Machine-readable output goes to stdout, diagnostics to stderr. Options can
also come from a flat JSON config file (``--config`` or ``$SAFEROUTE_CONFIG``)
whose keys are the option names with dashes replaced by underscores; flags
on the command line win.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import dataclass
from datetime import date
from pathlib import Path

from . import ingest, linear_models, pipeline, recurrent, routing
from ._accel import backend_name
from .errors import (DataError, FitError, NegativeCycleError, NegativeWeightError,
                     PolicyNotConvergedError, SafeRouteError, UnknownStationError)
from .evaluate import ALL_MODELS, ComparisonReport, EvaluationRow, ModelSettings, evaluate_all, rmse
from .graph import SAFETY_MODES, WeightedDigraph

logger = logging.getLogger("saferoute")

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NO_PATH = 3
EXIT_NEGATIVE_CYCLE = 4
EXIT_NOT_CONVERGED = 5
EXIT_DISAGREE = 6

CONFIG_ENV = "SAFEROUTE_CONFIG"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


@dataclass(frozen=True)
class RunConfig:
    stations: Path
    incidents: Path
    radius_km: float = ingest.DEFAULT_RADIUS_KM
    bucket: str = "monthly"
    start: date = ingest.DEFAULT_START
    end: date = ingest.DEFAULT_END
    settings: ModelSettings = ModelSettings()
    seed: int = 0

    @classmethod
    def from_args(cls, args) -> "RunConfig":
        stations = Path(args.stations) if args.stations else Path(str(pipeline.fixture_path("stations.csv")))
        incidents = Path(args.incidents) if args.incidents else Path(str(pipeline.fixture_path("incidents.csv")))
        for p in (stations, incidents):
            if not p.is_file():
                raise DataError(f"no such file: {p}")
        if not args.radius_km > 0:
            raise UsageError(f"--radius-km must be > 0, got {args.radius_km}")
        train = recurrent.TrainConfig(hidden_size=args.hidden_size, window=args.window, epochs=args.epochs,
                                      learning_rate=args.learning_rate, seed=args.seed)
        if not args.lam > 0:
            raise UsageError(f"--lambda must be > 0, got {args.lam}")
        return cls(stations, incidents, args.radius_km, args.bucket, _date(args.start), _date(args.end),
                   ModelSettings(args.lam, train), args.seed)

    def series_kw(self) -> dict:
        return {"radius_km": self.radius_km, "bucket": self.bucket, "start": self.start, "end": self.end}


def _date(text):
    try:
        return date.fromisoformat(str(text))
    except ValueError:
        raise UsageError(f"bad date {text!r}; expected YYYY-MM-DD") from None


def _emit(text: str, out=None):
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
        sys.stdout.flush()


# --------------------------------------------------------------------------
# commands
# --------------------------------------------------------------------------

def _load_series(cfg: RunConfig, series_path=None):
    if series_path:
        path = Path(series_path)
        if not path.is_file():
            raise DataError(f"no such file: {path}")
        series, _ = ingest.load_series(path.read_text(encoding="utf-8"))
        return series
    graph = pipeline.load_graph(cfg.stations)
    return pipeline.station_series(graph, ingest.load_incident_file(cfg.incidents), **cfg.series_kw())


def cmd_ingest(args) -> int:
    cfg = RunConfig.from_args(args)
    graph = pipeline.load_graph(cfg.stations)
    incidents = ingest.load_incident_file(cfg.incidents)
    series = pipeline.station_series(graph, incidents, **cfg.series_kw())
    meta = {"radius_km": cfg.radius_km, "bucket": cfg.bucket,
            "from": cfg.start.isoformat(), "to": cfg.end.isoformat()}
    _emit(ingest.dump_series(series, meta), args.out)
    n_buckets = len(next(iter(series.values()))) if series else 0
    print(f"stations: {len(series)}  buckets: {n_buckets}  malformed rows: {incidents.malformed}",
          file=sys.stderr)
    return EXIT_OK


def _fit_one(kind, values, settings):
    if kind in linear_models.MODEL_KINDS:
        m = linear_models.fit(kind, linear_models.design_for_series(values), settings.lam)
        return dict(m.to_dict(), n_train=len(values))
    model = recurrent.train(values, settings.train, kind)
    return model.to_dict()


def _forecast_saved(doc, values, horizon):
    if doc.get("kind") in recurrent.KINDS:
        return recurrent.forecast(recurrent.RecurrentModel.from_dict(doc), values, horizon)
    m = linear_models.ModelCoefficients.from_dict(doc)
    return linear_models.forecast_trend(m, doc["n_train"], horizon)


def cmd_fit(args) -> int:
    cfg = RunConfig.from_args(args)
    series = _load_series(cfg, args.series)
    fitted, failed = {}, {}
    for sid in sorted(series):
        s = series[sid]
        values = s.values() if args.full else ingest.split_train_test(s).train.values()
        try:
            fitted[sid] = _fit_one(args.model, values, cfg.settings)
        except (SafeRouteError, ValueError, ArithmeticError) as exc:
            logger.warning("%s fit failed for %s: %s", args.model, sid, exc)
            failed[sid] = str(exc)
    doc = {"model": args.model, "seed": cfg.seed, "lambda": cfg.settings.lam,
           "split": "full" if args.full else "train", "stations": fitted, "failures": failed}
    _emit(json.dumps(doc, indent=1, sort_keys=True) + "\n", args.out)
    print(f"fitted {len(fitted)} station(s), {len(failed)} failure(s)", file=sys.stderr)
    return EXIT_OK if fitted else EXIT_DATA


def cmd_evaluate(args) -> int:
    cfg = RunConfig.from_args(args)
    series = _load_series(cfg, args.series)
    if not series:
        raise DataError("no series to evaluate")
    splits = {sid: ingest.split_train_test(s) for sid, s in series.items()}
    saved = {}
    for path in args.fits or ():
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
        if doc.get("split") != "train":
            raise DataError(f"{path}: fits must be made on the train split (omit --full)")
        saved[doc["model"]] = doc
    models = args.models or list(ALL_MODELS)
    unknown = [m for m in models if m not in ALL_MODELS]
    if unknown:
        raise UsageError(f"unknown model(s) {unknown}; choose from {', '.join(ALL_MODELS)}")
    fresh = [m for m in models if m not in saved]
    report = evaluate_all(splits, fresh, cfg.settings)
    rows, failures = list(report.rows), list(report.failures)
    for kind in models:
        if kind not in saved:
            continue
        stations = saved[kind]["stations"]
        for sid in sorted(splits):
            if sid not in stations:
                failures.append({"station": sid, "model": kind, "error": "no saved fit"})
                continue
            sp = splits[sid]
            pred = _forecast_saved(stations[sid], sp.train.values(), len(sp.test))
            rows.append(EvaluationRow(sid, kind, rmse(pred, sp.test.values())))
    order = {m: i for i, m in enumerate(models)}
    rows.sort(key=lambda r: (r.station_id, order[r.model_kind]))
    report = ComparisonReport.from_rows(rows, failures).check()
    _emit(report.to_json() if args.format == "json" else report.to_csv(), args.out)
    for m in models:
        if m in report.per_model_average:
            print(f"{m:8s} average RMSE {report.per_model_average[m]:.4f}", file=sys.stderr)
    return EXIT_OK


def _route_graph(args, cfg_fn):
    if args.graph:
        path = Path(args.graph)
        if not path.is_file():
            raise DataError(f"no such file: {path}")
        return WeightedDigraph.from_json(path.read_text(encoding="utf-8"))
    cfg = cfg_fn()
    model = None if args.uniform_safety else args.safety_model
    return pipeline.safe_graph(cfg.stations, cfg.incidents, model, cfg.settings, args.safety_mode,
                               **cfg.series_kw())


def _q_config(args):
    return routing.QLearningConfig(episodes=args.episodes, seed=args.seed, max_steps=args.max_steps)


def cmd_route(args) -> int:
    graph = _route_graph(args, lambda: RunConfig.from_args(args))
    try:
        res = routing.route(graph, args.source, args.target, args.engine, _q_config(args))
    except PolicyNotConvergedError as exc:
        _emit(json.dumps({"engine": args.engine, "error": str(exc), "partial_path": exc.partial_path}) + "\n")
        raise
    _emit(json.dumps(res.to_dict()) + "\n")
    if not res.found:
        print(f"no path from {args.source!r} to {args.target!r}", file=sys.stderr)
        return EXIT_NO_PATH
    return EXIT_OK


def cmd_bench(args) -> int:
    from . import bench

    graph = _route_graph(args, lambda: RunConfig.from_args(args))
    if args.backends:
        incidents = ingest.load_incident_file(RunConfig.from_args(args).incidents)
        rows = bench.compare_backends(graph, incidents, args.source, args.target, args.repeat)
        lines = [f"{'kernel':28s} {'numba s':>10s} {'numpy s':>10s} {'speedup':>8s}"]
        lines += [f"{r['kernel']:28s} {r['numba_seconds']:10.5f} {r['numpy_seconds']:10.5f} {r['speedup']:8.1f}"
                  for r in rows]
        _emit("\n".join(lines) + "\n")
        return EXIT_OK
    rows, agree = bench.bench_engines(graph, args.source, args.target, args.repeat, _q_config(args))
    lines = [f"# backend: {backend_name()}  repeats: {args.repeat}",
             f"{'engine':14s} {'median s':>10s} {'cost':>10s} {'stations':>8s}"]
    lines += [f"{r['engine']:14s} {r['median_seconds']:10.5f} {r['total_cost']:10.4f} {len(r['path']):8d}"
              for r in rows]
    lines.append("paths agree" if agree else "ENGINES DISAGREE")
    _emit("\n".join(lines) + "\n")
    if not agree:
        bad = [r["engine"] for r in rows if r["path"] != rows[0]["path"]]
        print("engines disagree: " + ", ".join(bad), file=sys.stderr)
        return EXIT_DISAGREE
    return EXIT_OK


# --------------------------------------------------------------------------
# parser
# --------------------------------------------------------------------------

def _data_options(p):
    g = p.add_argument_group("data")
    g.add_argument("--stations", help="station connectivity CSV (default: bundled fixture)")
    g.add_argument("--incidents", help="incident CSV (default: bundled fixture)")
    g.add_argument("--radius-km", type=float, default=ingest.DEFAULT_RADIUS_KM)
    g.add_argument("--bucket", choices=ingest.BUCKETS, default="monthly")
    g.add_argument("--from", dest="start", default=ingest.DEFAULT_START.isoformat())
    g.add_argument("--to", dest="end", default=ingest.DEFAULT_END.isoformat())


def _model_options(p):
    g = p.add_argument_group("models")
    g.add_argument("--lambda", dest="lam", type=float, default=linear_models.DEFAULT_LAMBDA)
    g.add_argument("--hidden-size", type=int, default=8)
    g.add_argument("--window", type=int, default=4)
    g.add_argument("--epochs", type=int, default=3000)
    g.add_argument("--learning-rate", type=float, default=0.05)
    g.add_argument("--seed", type=int, default=0)


def _route_options(p):
    p.add_argument("--from", dest="source", default="116th")
    p.add_argument("--to", dest="target", default="8th")
    p.add_argument("--graph", help="JSON edge list {nodes, edges: [[u, v, w], ...]} with raw weights")
    p.add_argument("--stations")
    p.add_argument("--incidents")
    p.add_argument("--safety-model", choices=ALL_MODELS, default="poisson")
    p.add_argument("--uniform-safety", action="store_true", help="route on travel time alone")
    p.add_argument("--safety-mode", choices=SAFETY_MODES, default="destination")
    p.add_argument("--episodes", type=int, default=routing.QLearningConfig.episodes)
    p.add_argument("--max-steps", type=int, default=routing.QLearningConfig.max_steps)
    p.add_argument("--radius-km", type=float, default=ingest.DEFAULT_RADIUS_KM)
    p.add_argument("--bucket", choices=ingest.BUCKETS, default="monthly")
    p.add_argument("--start", default=ingest.DEFAULT_START.isoformat(), help="first day of incident range")
    p.add_argument("--end", default=ingest.DEFAULT_END.isoformat(), help="day after incident range")
    _model_options(p)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="saferoute", description=__doc__.splitlines()[0])
    parser.add_argument("--config", help=f"flat JSON config file (or ${CONFIG_ENV})")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("ingest", help="aggregate incidents into per-station series")
    _data_options(p)
    _model_options(p)
    p.add_argument("-o", "--out", help="write series JSON here instead of stdout")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("fit", help="fit one model per station")
    _data_options(p)
    _model_options(p)
    p.add_argument("--model", required=True, choices=ALL_MODELS)
    p.add_argument("--series", help="series JSON from `saferoute ingest`")
    p.add_argument("--full", action="store_true", help="fit on the whole series, not the train split")
    p.add_argument("-o", "--out")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("evaluate", help="RMSE of each model on each station's last 5 buckets")
    _data_options(p)
    _model_options(p)
    p.add_argument("--series")
    p.add_argument("--fits", nargs="*", help="model files from `saferoute fit` to reuse")
    p.add_argument("--models", nargs="*", help=f"subset of {', '.join(ALL_MODELS)}")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("-o", "--out")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("route", help="route between two stations")
    _route_options(p)
    p.add_argument("--engine", choices=sorted(routing.ENGINES), default="dijkstra")
    p.set_defaults(func=cmd_route)

    p = sub.add_parser("bench", help="time the three engines (or the numba/numpy kernels)")
    _route_options(p)
    p.add_argument("--repeat", type=int, default=10)
    p.add_argument("--backends", action="store_true", help="compare numba and numpy kernel paths")
    p.set_defaults(func=cmd_bench)
    return parser


def _apply_config(parser, argv):
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    path = known.config or os.environ.get(CONFIG_ENV)
    if not path:
        return
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise DataError(f"cannot read config {path}: {exc}") from None
    except ValueError as exc:
        raise DataError(f"config {path} is not valid JSON: {exc}") from None
    if not isinstance(doc, dict) or any(isinstance(v, (dict, list)) for v in doc.values()):
        raise DataError(f"config {path} must be a flat JSON object")
    aliases = {"from": "start", "to": "end", "lambda": "lam"}
    doc = {aliases.get(k, k).replace("-", "_"): v for k, v in doc.items()}
    for action in parser._subparsers._group_actions:
        for sp in action.choices.values():
            dests = {a.dest for a in sp._actions}
            sp.set_defaults(**{k: v for k, v in doc.items() if k in dests})


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        _apply_config(parser, argv)
    except DataError as exc:
        print(f"saferoute: error: {exc}", file=sys.stderr)
        return EXIT_DATA
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"saferoute {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NegativeCycleError as exc:
        print(f"saferoute: {exc}", file=sys.stderr)
        return EXIT_NEGATIVE_CYCLE
    except PolicyNotConvergedError as exc:
        print(f"saferoute: {exc}; try more --episodes", file=sys.stderr)
        return EXIT_NOT_CONVERGED
    except (UnknownStationError, NegativeWeightError, DataError, FitError, ValueError) as exc:
        print(f"saferoute: error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"saferoute: error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())

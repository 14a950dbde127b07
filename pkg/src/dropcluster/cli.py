"""Command-line entry point: ``dropcluster {ingest,run,synth,metrics}``.

Exit codes: 0 success, 1 usage/configuration error, 2 data error.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import experiment as ex
from .clustering import DropoutParams
from .geo import (
    DataError,
    FormatConfig,
    ProjectionOrigin,
    RegionPolygon,
    filter_region,
    load_region,
    mean_origin,
    project,
    read_ais_path,
    write_planar_csv,
)
from .metrics import detection_probability, dropout_rmsd, group_ships

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2

log = logging.getLogger("dropcluster")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _floats(n):
    def parse(text):
        try:
            vals = tuple(float(v) for v in text.split(","))
        except ValueError:
            raise argparse.ArgumentTypeError(f"expected {n} comma-separated numbers, got {text!r}")
        if len(vals) != n:
            raise argparse.ArgumentTypeError(f"expected {n} comma-separated numbers, got {text!r}")
        return vals
    return parse


def _add_columns(p):
    g = p.add_argument_group("AIS column mapping")
    g.add_argument("--ship-col", default="mmsi")
    g.add_argument("--lat-col", default="lat")
    g.add_argument("--lon-col", default="lon")
    g.add_argument("--time-col", default=None)
    g.add_argument("--delimiter", default=",")


def _add_region(p):
    p.add_argument("--region", help="GeoJSON file with one polygon feature")
    p.add_argument("--bbox", type=_floats(4), metavar="LAT_MIN,LAT_MAX,LON_MIN,LON_MAX",
                   help="bounding-box region, used when --region is absent")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="dropcluster", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="AIS table -> cached planar points")
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True, help="planar cache CSV (ship_id,x_km,y_km)")
    p.add_argument("--origin", type=_floats(2), metavar="LAT,LON",
                   help="projection origin (default: mean of the kept records)")
    _add_region(p)
    _add_columns(p)
    p.add_argument("--config")

    p = sub.add_parser("run", help="run the algorithm comparison")
    p.add_argument("--input", help="AIS table or planar cache (default: bundled synthetic fixture)")
    _add_region(p)
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--p", type=float, default=0.3)
    p.add_argument("--radius-km", type=float, default=10.0)
    p.add_argument("--trials", type=int, default=30)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--algorithms", default=",".join(ex.ALGORITHMS),
                   help="comma-separated subset of: " + ", ".join(ex.ALGORITHMS))
    p.add_argument("--max-iters", type=int, default=ex.cl.DEFAULT_MAX_ITERS)
    p.add_argument("--stochastic-max-iters", type=int, default=ex.cl.STOCHASTIC_MAX_ITERS)
    p.add_argument("--inner-iters", type=int, default=ex.cl.DEFAULT_INNER_ITERS)
    p.add_argument("--tol", type=float, default=ex.cl.DEFAULT_TOL)
    p.add_argument("--init", choices=("kmeans++", "uniform"), default="kmeans++")
    p.add_argument("--out", default="results")
    p.add_argument("--format", action="append", choices=ex.FORMATS,
                   help="repeatable; default: all of " + ", ".join(ex.FORMATS))
    _add_columns(p)
    p.add_argument("--config", help="JSON file whose keys mirror the flags")

    p = sub.add_parser("synth", help="write a synthetic planar dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--fixture", action="store_true", help="write the bundled fixture")
    p.add_argument("--blobs", type=int, default=3)
    p.add_argument("--points-per-blob", type=int, default=100)
    p.add_argument("--spread", type=float, default=20.0)
    p.add_argument("--ships-per-blob", type=int, default=5)
    p.add_argument("--shared-ships", action="store_true")
    p.add_argument("--extent", type=float, default=200.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--config")

    p = sub.add_parser("metrics", help="score a placement against a dataset")
    p.add_argument("--input", help="AIS table or planar cache (default: bundled fixture)")
    _add_region(p)
    p.add_argument("--placement", required=True, help="placements GeoJSON or centers CSV (k,x_km,y_km)")
    p.add_argument("--algorithm")
    p.add_argument("--trial", type=int)
    p.add_argument("--p", type=float, default=0.3)
    p.add_argument("--radius-km", type=float, default=10.0)
    _add_columns(p)
    p.add_argument("--config")
    return parser


def _subparser(parser, command):
    for action in parser._subparsers._group_actions:
        return action.choices[command]


def parse_args(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "config", None):
        try:
            cfg = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            parser.error(f"cannot read config {args.config}: {exc}")
        if not isinstance(cfg, dict):
            parser.error("config file must hold a JSON object")
        sub = _subparser(parser, args.command)
        known = {a.dest for a in sub._actions}
        cfg = {k.replace("-", "_"): v for k, v in cfg.items()}
        unknown = sorted(set(cfg) - known)
        if unknown:
            parser.error(f"unknown config key(s): {', '.join(unknown)}")
        for key in ("bbox", "origin"):
            if isinstance(cfg.get(key), list):
                cfg[key] = tuple(cfg[key])
        if isinstance(cfg.get("algorithms"), list):
            cfg["algorithms"] = ",".join(cfg["algorithms"])
        if isinstance(cfg.get("format"), str):
            cfg["format"] = [cfg["format"]]
        # explicit flags still win over the file
        sub.set_defaults(**cfg)
        args = parser.parse_args(argv)
    return args


def _fmt(args) -> FormatConfig:
    return FormatConfig(args.ship_col, args.lat_col, args.lon_col, args.time_col, args.delimiter)


def _dataset_config(args, **extra) -> ex.ExperimentConfig:
    try:
        return ex.ExperimentConfig(input=args.input, region=args.region, bbox=args.bbox,
                                   fmt=_fmt(args), **extra)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def cmd_ingest(args) -> int:
    records, skipped = read_ais_path(args.input, _fmt(args))
    n_read = len(records)
    if args.region:
        records = filter_region(records, load_region(args.region))
    elif args.bbox:
        records = filter_region(records, RegionPolygon.from_bbox(*args.bbox))
    if not records:
        raise DataError("no AIS records left after parsing/filtering")
    origin = ProjectionOrigin(*args.origin) if args.origin else mean_origin(records)
    points = project(records, origin)
    write_planar_csv(args.out, points, origin)
    ships = len({p.ship_id for p in points})
    print(f"read {n_read} records ({skipped} malformed skipped); kept {len(points)} "
          f"points from {ships} ships; origin=({origin.lat0:.6f}, {origin.lon0:.6f})")
    print(f"wrote {args.out}")
    return EXIT_OK


def cmd_run(args) -> int:
    algorithms = tuple(a.strip() for a in args.algorithms.split(",") if a.strip())
    config = _dataset_config(
        args, K=args.k, p=args.p, r_km=args.radius_km, trials=args.trials, seed=args.seed,
        algorithms=algorithms, max_iters=args.max_iters,
        stochastic_max_iters=args.stochastic_max_iters, inner_iters=args.inner_iters,
        tol=args.tol, init=args.init, out=args.out,
        formats=tuple(args.format) if args.format else ex.FORMATS,
    )
    report = ex.run_experiment(config)
    try:
        written = ex.emit_report(report, config.out, config.formats)
    except OSError as exc:
        raise UsageError(str(exc)) from exc
    print(ex.format_table(report), end="")
    for fmt, path in written.items():
        print(f"wrote {fmt}: {path}")
    return EXIT_OK


def cmd_synth(args) -> int:
    if args.fixture:
        points = ex.bundled_fixture()
    else:
        points = ex.generate_synthetic(args.blobs, args.points_per_blob, args.spread, args.seed,
                                       args.ships_per_blob, args.extent,
                                       shared_ships=args.shared_ships)
    write_planar_csv(args.out, points, ex.SYNTHETIC_ORIGIN)
    print(f"wrote {len(points)} points to {args.out}")
    return EXIT_OK


def cmd_metrics(args) -> int:
    dataset = ex.load_dataset(_dataset_config(args))
    path = Path(args.placement)
    if path.suffix.lower() in (".geojson", ".json"):
        # geographic centers land in the dataset's own planar frame when known
        centers = ex.read_placements(path, dataset.origin, args.algorithm, args.trial)
    else:
        centers = ex.read_centers_csv(path)
    if len(centers) == 0:
        raise DataError(f"no centers in {path}")
    try:
        params = DropoutParams(args.p, len(centers), args.radius_km)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    ships = group_ships(dataset.ship_ids)
    out = {
        "K": len(centers),
        "p": params.p,
        "r_km": params.r,
        "p_d": detection_probability(ships, dataset.points, centers, params),
        "rmsd_km": dropout_rmsd(dataset.points, centers, params.p),
    }
    print(json.dumps(out, indent=2))
    return EXIT_OK


COMMANDS = {"ingest": cmd_ingest, "run": cmd_run, "synth": cmd_synth, "metrics": cmd_metrics}


def main(argv=None) -> int:
    args = parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"dropcluster: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"dropcluster: data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())

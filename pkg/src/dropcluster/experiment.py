"""Repeated-trial comparison of the five placement algorithms.

Every trial draws one k-means++ initialisation and hands the same centers to
each algorithm, then scores the final placement with detection probability
and dropout-weighted RMSD.

Seeding: trial ``t`` of base seed ``s`` uses
``numpy.random.SeedSequence(s, spawn_key=(t, stream))`` with ``stream`` 0 for
the initialisation and 1 for the stochastic baseline's dropout draws. The
derivation only depends on ``(s, t)``, so adding trials never perturbs earlier
ones.
"""
from __future__ import annotations

import csv
import json
import logging
import statistics
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import clustering as cl
from .geo import (
    DataError,
    FormatConfig,
    PlanarPoint,
    ProjectionOrigin,
    RegionPolygon,
    filter_region,
    is_planar_csv,
    load_region,
    mean_origin,
    project,
    project_arrays,
    read_ais_path,
    read_planar_csv,
    unproject,
)
from .metrics import detection_probability, dropout_rmsd, group_ships

logger = logging.getLogger(__name__)

ALGORITHMS = (
    "classic_kmeans",
    "dropout_kmeans",
    "stochastic_dropout_kmeans",
    "classic_kmedian",
    "dropout_kmedian",
)
TABLE_COLUMNS = ("algorithm", "iterations", "runtime_s", "rmsd_km", "p_d")
FORMATS = ("table", "structured", "geo")

# Synthetic data has no geography of its own; placements are anchored here
# (open water off the Gabonese coast) when written as geographic points.
SYNTHETIC_ORIGIN = ProjectionOrigin(-1.5, 8.5)


# ---------------------------------------------------------------------------
# synthetic data
# ---------------------------------------------------------------------------


def generate_synthetic(n_blobs: int, points_per_blob: int, spread, seed=None,
                       ships_per_blob: int = 5, extent: float = 200.0,
                       blob_centers=None, shared_ships: bool = False) -> list[PlanarPoint]:
    """Gaussian blobs in planar km.

    ``spread`` is a standard deviation (km), either one value or one per blob.
    Blob centers are drawn uniformly from ``[-extent, extent]^2`` unless given.
    Within a blob, points are dealt round-robin to ``ships_per_blob`` ships
    named ``b<blob>s<ship>``; with ``shared_ships`` the same ships ``s<ship>``
    appear in every blob, as vessels whose tracks cross several areas.
    """
    rng = np.random.default_rng(seed)
    spreads = np.broadcast_to(np.asarray(spread, dtype=float), (n_blobs,))
    if blob_centers is None:
        blob_centers = rng.uniform(-extent, extent, size=(n_blobs, 2))
    blob_centers = np.asarray(blob_centers, dtype=float).reshape(n_blobs, 2)
    out = []
    for b in range(n_blobs):
        xy = blob_centers[b] + spreads[b] * rng.standard_normal((points_per_blob, 2))
        for i, (x, y) in enumerate(xy):
            ship = f"s{i % ships_per_blob}" if shared_ships else f"b{b}s{i % ships_per_blob}"
            out.append(PlanarPoint(float(x), float(y), ship))
    return out


# A tight port-like hub with four broad approach areas; every vessel has
# reports in all of them, as tracks converging on a common harbour would.
FIXTURE = dict(
    n_blobs=5,
    points_per_blob=120,
    spread=(8.0, 40.0, 40.0, 40.0, 40.0),
    seed=20190710,
    ships_per_blob=30,
    shared_ships=True,
    blob_centers=((0.0, 0.0), (120.0, 0.0), (-120.0, 0.0), (0.0, 120.0), (0.0, -120.0)),
)


def bundled_fixture() -> list[PlanarPoint]:
    return generate_synthetic(**FIXTURE)


# ---------------------------------------------------------------------------
# configuration and report types
# ---------------------------------------------------------------------------


@dataclass
class ExperimentConfig:
    input: str | None = None
    region: str | None = None
    bbox: tuple | None = None  # (lat_min, lat_max, lon_min, lon_max)
    fmt: FormatConfig = field(default_factory=FormatConfig)
    K: int = 5
    p: float = 0.3
    r_km: float = 10.0
    trials: int = 30
    seed: int = 0
    algorithms: tuple = ALGORITHMS
    max_iters: int = cl.DEFAULT_MAX_ITERS
    stochastic_max_iters: int = cl.STOCHASTIC_MAX_ITERS
    inner_iters: int = cl.DEFAULT_INNER_ITERS
    tol: float = cl.DEFAULT_TOL
    init: str = "kmeans++"
    out: str = "results"
    formats: tuple = FORMATS

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        unknown = [a for a in self.algorithms if a not in ALGORITHMS]
        if unknown:
            raise ValueError(f"unknown algorithm(s): {', '.join(unknown)}")
        bad = [f for f in self.formats if f not in FORMATS]
        if bad:
            raise ValueError(f"unknown output format(s): {', '.join(bad)}")
        if self.init not in ("kmeans++", "uniform"):
            raise ValueError(f"unknown initialisation {self.init!r}")
        cl.DropoutParams(self.p, self.K, self.r_km)

    @property
    def params(self) -> cl.DropoutParams:
        return cl.DropoutParams(self.p, self.K, self.r_km)

    def echo(self) -> dict:
        d = asdict(self)
        d["algorithms"] = list(self.algorithms)
        d["formats"] = list(self.formats)
        d["bbox"] = list(self.bbox) if self.bbox else None
        return d


@dataclass
class Dataset:
    points: np.ndarray
    ship_ids: list
    origin: ProjectionOrigin | None

    @classmethod
    def from_planar(cls, pts: Sequence[PlanarPoint], origin=None) -> "Dataset":
        xy = cl.as_xy(pts)
        return cls(xy, [p.ship_id for p in pts], origin)


@dataclass
class ExperimentReport:
    config: dict
    seed: int
    origin: ProjectionOrigin | None
    rows: list = field(default_factory=list)
    summary: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "std_convention": "sample standard deviation (n-1); 0 when trials == 1",
            "seed": self.seed,
            "config": self.config,
            "origin": asdict(self.origin) if self.origin else None,
            "summary": self.summary,
            "rows": self.rows,
        }


def mean_std(values) -> tuple[float, float]:
    vals = [float(v) for v in values]
    mean = statistics.fmean(vals)
    std = statistics.stdev(vals) if len(vals) > 1 else 0.0
    return mean, std


def summarise(rows: list, algorithms: Sequence[str]) -> dict:
    out = {}
    for name in algorithms:
        mine = [r for r in rows if r["algorithm"] == name]
        if not mine:
            continue
        out[name] = {
            col: dict(zip(("mean", "std"), mean_std(r[col] for r in mine)))
            for col in TABLE_COLUMNS[1:]
        }
    return out


# ---------------------------------------------------------------------------
# running
# ---------------------------------------------------------------------------


def load_dataset(config: ExperimentConfig) -> Dataset:
    """Read the configured input; with no input, use the bundled fixture."""
    if config.input is None:
        return Dataset.from_planar(bundled_fixture(), SYNTHETIC_ORIGIN)
    if is_planar_csv(config.input):
        pts, origin = read_planar_csv(config.input)
        return Dataset.from_planar(pts, origin)
    records, skipped = read_ais_path(config.input, config.fmt)
    region = None
    if config.region:
        region = load_region(config.region)
    elif config.bbox:
        region = RegionPolygon.from_bbox(*config.bbox)
    if region is not None:
        records = filter_region(records, region)
    if not records:
        raise DataError("no AIS records left after parsing/filtering")
    logger.info("%d AIS records kept (%d malformed rows skipped)", len(records), skipped)
    origin = mean_origin(records)
    return Dataset.from_planar(project(records, origin), origin)


def trial_seed(base_seed: int, trial: int, stream: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(base_seed, spawn_key=(trial, stream))


def _runner(name: str, cfg: ExperimentConfig) -> Callable:
    if name == "classic_kmeans":
        return lambda X, init, ss: cl.run_classic_kmeans(X, init, cfg.max_iters)
    if name == "dropout_kmeans":
        return lambda X, init, ss: cl.run_dropout_kmeans(X, init, cfg.p, cfg.max_iters)
    if name == "stochastic_dropout_kmeans":
        return lambda X, init, ss: cl.run_stochastic_dropout_kmeans(
            X, init, cfg.p, cfg.r_km, cfg.stochastic_max_iters, seed=ss)
    if name == "classic_kmedian":
        return lambda X, init, ss: cl.run_classic_kmedian(X, init, cfg.max_iters, cfg.inner_iters, cfg.tol)
    if name == "dropout_kmedian":
        return lambda X, init, ss: cl.run_dropout_kmedian(
            X, init, cfg.p, cfg.max_iters, cfg.inner_iters, cfg.tol)
    raise ValueError(f"unknown algorithm {name!r}")


def run_experiment(config: ExperimentConfig, dataset: Dataset | None = None,
                   keep_results: bool = False) -> ExperimentReport:
    if dataset is None:
        dataset = load_dataset(config)
    X = dataset.points
    n_distinct = len(np.unique(X, axis=0))
    if n_distinct < config.K:
        raise DataError(f"need at least K={config.K} distinct points, found {n_distinct}")
    ships = group_ships(dataset.ship_ids)
    params = config.params
    init_fn = cl.kmeanspp_init if config.init == "kmeans++" else cl.uniform_init
    runners = {name: _runner(name, config) for name in config.algorithms}

    report = ExperimentReport(config.echo(), config.seed, dataset.origin)
    for t in range(config.trials):
        init = init_fn(X, config.K, seed=trial_seed(config.seed, t, 0))
        for name, run in runners.items():
            res = run(X, init, trial_seed(config.seed, t, 1))
            row = {
                "trial": t,
                "algorithm": name,
                "iterations": res.iterations,
                "converged": res.converged,
                "runtime_s": res.wall_time,
                "rmsd_km": dropout_rmsd(X, res.centers, params.p),
                "p_d": detection_probability(ships, X, res.centers, params),
                "init": res.init.tolist(),
                "centers": res.centers.tolist(),
            }
            if keep_results:
                row["result"] = res
            report.rows.append(row)
        logger.debug("trial %d done", t)
    report.summary = summarise(report.rows, config.algorithms)
    return report


# ---------------------------------------------------------------------------
# output
# ---------------------------------------------------------------------------


def format_table(report: ExperimentReport) -> str:
    header = list(TABLE_COLUMNS)
    lines = []
    for name, s in report.summary.items():
        lines.append([
            name,
            f"{s['iterations']['mean']:.1f} ± {s['iterations']['std']:.1f}",
            f"{s['runtime_s']['mean']:.3f} ± {s['runtime_s']['std']:.3f}",
            f"{s['rmsd_km']['mean']:.2f} ± {s['rmsd_km']['std']:.2f}",
            f"{s['p_d']['mean']:.4f} ± {s['p_d']['std']:.4f}",
        ])
    widths = [max(len(str(r[i])) for r in [header, *lines]) for i in range(len(header))]
    fmt = lambda r: "  ".join(str(c).ljust(w) for c, w in zip(r, widths)).rstrip()
    cfg = report.config
    out = [
        f"# K={cfg['K']} p={cfg['p']} r_km={cfg['r_km']} trials={cfg['trials']} seed={report.seed}",
        "# mean ± sample std (n-1) over trials",
        fmt(header),
        *[fmt(r) for r in lines],
    ]
    return "\n".join(out) + "\n"


def _json_rows(rows):
    return [{k: v for k, v in r.items() if k != "result"} for r in rows]


def placement_features(report: ExperimentReport, origin: ProjectionOrigin) -> dict:
    feats = []
    for row in report.rows:
        C = np.asarray(row["centers"], dtype=float).reshape(-1, 2)
        lat, lon = unproject(C[:, 0], C[:, 1], origin)
        for k in range(len(C)):
            feats.append({
                "type": "Feature",
                "geometry": {"type": "Point", "coordinates": [float(lon[k]), float(lat[k])]},
                "properties": {"algorithm": row["algorithm"], "trial": row["trial"], "k": k},
            })
    return {
        "type": "FeatureCollection",
        "origin": {"lat0": origin.lat0, "lon0": origin.lon0},
        "features": feats,
    }


def emit_report(report: ExperimentReport, out_dir: str | Path, formats: Sequence[str] = FORMATS) -> dict:
    """Write the requested outputs; returns ``{format: path}``."""
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out_dir}: {exc}") from exc
    written = {}
    if "table" in formats:
        path = out_dir / "results_table.txt"
        path.write_text(format_table(report), encoding="utf-8")
        written["table"] = path
    if "structured" in formats:
        path = out_dir / "results.json"
        doc = report.to_dict()
        doc["rows"] = _json_rows(report.rows)
        path.write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")
        written["structured"] = path
    if "geo" in formats:
        if report.origin is None:
            logger.warning("no projection origin known; skipping geographic placement output")
        else:
            path = out_dir / "placements.geojson"
            path.write_text(json.dumps(placement_features(report, report.origin)) + "\n", encoding="utf-8")
            written["geo"] = path
    return written


# ---------------------------------------------------------------------------
# placement files (CenterSet serialisation)
# ---------------------------------------------------------------------------


def write_centers_csv(path: str | Path, centers) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["k", "x_km", "y_km"])
        for k, (x, y) in enumerate(cl.as_xy(centers)):
            w.writerow([k, repr(float(x)), repr(float(y))])


def read_centers_csv(path: str | Path) -> np.ndarray:
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.DictReader(fh))
        rows.sort(key=lambda r: int(r["k"]))
        return np.array([[float(r["x_km"]), float(r["y_km"])] for r in rows]).reshape(-1, 2)
    except (OSError, KeyError, ValueError) as exc:
        raise DataError(f"cannot read centers from {path}: {exc}") from exc


def read_placements(path: str | Path, origin: ProjectionOrigin | None = None,
                    algorithm: str | None = None, trial: int | None = None) -> np.ndarray:
    """Load one center set from a placement GeoJSON, projected to planar km.

    Uses the file's own ``origin`` member unless ``origin`` is given. When the
    file holds several placements, ``algorithm``/``trial`` must narrow it to one.
    """
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot read placement file {path}: {exc}") from exc
    if origin is None:
        o = doc.get("origin")
        if not o:
            raise DataError(f"{path} carries no projection origin")
        origin = ProjectionOrigin(o["lat0"], o["lon0"])
    groups: dict = {}
    for f in doc.get("features", []):
        props = f.get("properties") or {}
        if algorithm is not None and props.get("algorithm") != algorithm:
            continue
        if trial is not None and props.get("trial") != trial:
            continue
        key = (props.get("algorithm"), props.get("trial"))
        lon, lat = f["geometry"]["coordinates"][:2]
        groups.setdefault(key, []).append((props.get("k", 0), lat, lon))
    if len(groups) != 1:
        raise DataError(f"expected exactly one placement in {path}, found {len(groups)}; "
                        "narrow with algorithm/trial")
    entries = sorted(next(iter(groups.values())))
    x, y = project_arrays([e[1] for e in entries], [e[2] for e in entries], origin)
    return np.column_stack([x, y])

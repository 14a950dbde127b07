"""Sensor placement that stays robust when placed sensors fail.

Classic k-means / k-median, their dropout-weighted variants, a stochastic
dropout baseline, exact detection-probability and RMSD metrics, and an AIS
ingestion + experiment CLI.
"""
from .clustering import (
    DropoutParams,
    RunResult,
    dropout_kmeans_objective,
    dropout_kmedian_objective,
    kmeanspp_init,
    rank_all,
    rank_centers,
    run_classic_kmeans,
    run_classic_kmedian,
    run_dropout_kmeans,
    run_dropout_kmedian,
    run_stochastic_dropout_kmeans,
    survival_weights,
    update_center_dropout_median,
    update_centers_dropout_mean,
)
from .geo import (
    DataError,
    FormatConfig,
    PlanarPoint,
    ProjectionOrigin,
    RawAisRecord,
    RegionPolygon,
    filter_region,
    parse_ais_file,
    project,
    unproject,
)
from .metrics import (
    detection_probability,
    detection_probability_bruteforce,
    dropout_rmsd,
    dropout_rmsd_bruteforce,
)

__version__ = "0.1.0"

"""Detection probability and dropout-weighted RMSD.

The grouped versions run in O(N*K) (plus a per-point sort for the RMSD); the
``*_bruteforce`` versions enumerate every survivor subset and exist to check
the grouped ones.
"""
from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass
from itertools import combinations
from typing import Mapping, Sequence

import numpy as np

from .clustering import DropoutParams, _sqdist, as_xy, dropout_kmeans_objective

BRUTEFORCE_MAX_K = 20


@dataclass(frozen=True)
class MetricsResult:
    p_d: float
    rmsd: float


def group_ships(ship_ids: Sequence[str]) -> "OrderedDict[str, list[int]]":
    """Map each ship id to the indices of its points, in first-seen order."""
    groups: OrderedDict[str, list[int]] = OrderedDict()
    for i, s in enumerate(ship_ids):
        groups.setdefault(s, []).append(i)
    return groups


def _check_grouping(ships: Mapping[str, Sequence[int]], n: int):
    if not ships:
        raise ValueError("detection probability needs at least one ship")
    seen = np.zeros(n, dtype=int)
    for idx in ships.values():
        if len(idx) == 0:
            raise ValueError("every ship must own at least one point")
        np.add.at(seen, np.asarray(idx), 1)
    if np.any(seen != 1):
        raise ValueError("each point index must belong to exactly one ship")


def _coverage(ships, X, C, r) -> np.ndarray:
    """Boolean (ships x K): does center k lie within r of any point of the ship."""
    within = _sqdist(X, C) <= r * r
    return np.array([within[np.asarray(idx)].any(axis=0) for idx in ships.values()])


def detection_probability(ships: Mapping[str, Sequence[int]], points, centers,
                          params: DropoutParams) -> float:
    """Mean over ships of ``1 - p**m`` where ``m`` counts centers within ``r``
    of at least one of the ship's points."""
    X, C = as_xy(points), as_xy(centers)
    _check_grouping(ships, len(X))
    m = _coverage(ships, X, C, params.r).sum(axis=1)
    return float(np.mean(1.0 - np.power(params.p, m)))


def _subset_probability(size: int, K: int, p: float) -> float:
    return (1.0 - p) ** size * p ** (K - size)


def _euclid(X, C) -> np.ndarray:
    return np.linalg.norm(X[:, None, :] - C[None, :, :], axis=2)


def _guard(K: int):
    if K > BRUTEFORCE_MAX_K:
        raise ValueError(f"brute-force enumeration refused for K={K} > {BRUTEFORCE_MAX_K}")


def detection_probability_bruteforce(ships: Mapping[str, Sequence[int]], points, centers,
                                     params: DropoutParams) -> float:
    X, C = as_xy(points), as_xy(centers)
    K = len(C)
    _guard(K)
    _check_grouping(ships, len(X))
    dist = _euclid(X, C)
    # nearest approach of each ship to each center
    ship_dist = np.array([dist[np.asarray(idx)].min(axis=0) for idx in ships.values()])
    total = 0.0
    for size in range(1, K + 1):
        prob = _subset_probability(size, K, params.p)
        for S in combinations(range(K), size):
            detected = ship_dist[:, list(S)].min(axis=1) <= params.r
            total += prob * detected.mean()
    return float(total)


def dropout_rmsd(points, centers, p: float) -> float:
    X = as_xy(points)
    if len(X) == 0:
        raise ValueError("RMSD needs at least one point")
    K = len(as_xy(centers))
    num = dropout_kmeans_objective(X, centers, p)
    return float(np.sqrt(num / ((1.0 - p ** K) * len(X))))


def dropout_objective_bruteforce(points, centers, p: float, power: int = 2) -> float:
    """Sum over non-empty survivor sets S of P(S) * sum_i min_{k in S} |x_i - c_k|**power."""
    X, C = as_xy(points), as_xy(centers)
    K = len(C)
    _guard(K)
    dist = _euclid(X, C) ** power
    total = 0.0
    for size in range(1, K + 1):
        prob = _subset_probability(size, K, p)
        for S in combinations(range(K), size):
            total += prob * dist[:, list(S)].min(axis=1).sum()
    return float(total)


def dropout_rmsd_bruteforce(points, centers, p: float) -> float:
    X, C = as_xy(points), as_xy(centers)
    K = len(C)
    _guard(K)
    num = dropout_objective_bruteforce(X, C, p, power=2)
    den = sum(_subset_probability(s, K, p) * sum(1 for _ in combinations(range(K), s))
              for s in range(1, K + 1)) * len(X)
    return float(np.sqrt(num / den))


def evaluate(ships, points, centers, params: DropoutParams) -> MetricsResult:
    return MetricsResult(
        detection_probability(ships, points, centers, params),
        dropout_rmsd(points, centers, params.p),
    )

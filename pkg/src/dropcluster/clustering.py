"""Classic and dropout-weighted k-means / k-median.

Every center is assumed to fail independently with probability ``p``. For a
point whose centers are ranked by distance, the chance that the center of rank
``j`` (0-based) is the nearest *surviving* one is ``p**j * (1 - p)``. Weighting
each point/center pair by that probability turns the expectation over all
``2**K`` failure outcomes into an ``N x K`` sum, so an iteration costs a sort
of ``K`` distances per point instead of an enumeration of outcomes.

Indices are 0-based throughout; ties in distance go to the lower center index.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

WEISZFELD_EPS = 1e-9
DEFAULT_INNER_ITERS = 50
DEFAULT_TOL = 1e-6
DEFAULT_MAX_ITERS = 1000
STOCHASTIC_MAX_ITERS = 300


@dataclass(frozen=True)
class DropoutParams:
    p: float = 0.3
    K: int = 5
    r: float = 10.0

    def __post_init__(self):
        if not 0.0 <= self.p < 1.0:
            raise ValueError(f"dropout probability must be in [0, 1), got {self.p}")
        if self.K < 1:
            raise ValueError(f"K must be >= 1, got {self.K}")
        if not self.r > 0:
            raise ValueError(f"detection radius must be > 0, got {self.r}")


@dataclass
class RunResult:
    centers: np.ndarray
    init: np.ndarray
    iterations: int
    converged: bool
    objective_trace: list = field(default_factory=list)
    wall_time: float = 0.0
    # iterations (1-based) at which an empty cluster was reseeded
    reseeds: list = field(default_factory=list)
    history: list | None = None


def as_xy(points) -> np.ndarray:
    """Coerce an (N, 2) array or a sequence of objects with ``.x``/``.y``."""
    if isinstance(points, np.ndarray):
        arr = points.astype(float, copy=False)
    else:
        pts = list(points)
        if pts and hasattr(pts[0], "x"):
            arr = np.array([[p.x, p.y] for p in pts], dtype=float)
        else:
            arr = np.asarray(pts, dtype=float)
    return arr.reshape(-1, 2) if arr.size else np.empty((0, 2))


def _sqdist(points: np.ndarray, centers: np.ndarray) -> np.ndarray:
    diff = points[:, None, :] - centers[None, :, :]
    return np.einsum("nkd,nkd->nk", diff, diff)


# ---------------------------------------------------------------------------
# initialisation
# ---------------------------------------------------------------------------


def kmeanspp_init(points, K: int, seed=None) -> np.ndarray:
    """k-means++ seeding: first center uniform, then D^2-weighted draws."""
    X = as_xy(points)
    n = len(X)
    if n == 0:
        raise ValueError("k-means++ needs at least one point")
    if K < 1:
        raise ValueError("K must be >= 1")
    rng = np.random.default_rng(seed)
    chosen = [int(rng.integers(n))]
    d2 = np.sum((X - X[chosen[0]]) ** 2, axis=1)
    for _ in range(1, K):
        total = d2.sum()
        if total <= 0:
            j = int(rng.integers(n))
        else:
            # side="right" never lands on a zero-width (already chosen) slot
            j = int(np.searchsorted(np.cumsum(d2), rng.random() * total, side="right"))
            j = min(j, n - 1)
        chosen.append(j)
        d2 = np.minimum(d2, np.sum((X - X[j]) ** 2, axis=1))
    return X[chosen].copy()


def uniform_init(points, K: int, seed=None) -> np.ndarray:
    """K data points drawn uniformly (without replacement when possible)."""
    X = as_xy(points)
    if len(X) == 0:
        raise ValueError("initialisation needs at least one point")
    rng = np.random.default_rng(seed)
    idx = rng.choice(len(X), size=K, replace=len(X) < K)
    return X[idx].copy()


# ---------------------------------------------------------------------------
# ranking, weights, objectives
# ---------------------------------------------------------------------------


def rank_centers(point, centers) -> np.ndarray:
    """Center indices sorted by distance to ``point`` (stable on ties)."""
    c = as_xy(centers)
    q = np.asarray([point.x, point.y] if hasattr(point, "x") else point, dtype=float)
    return np.argsort(np.sum((c - q) ** 2, axis=1), kind="stable")


def rank_all(points, centers) -> np.ndarray:
    """Row ``i`` is the ranking of all centers for point ``i``."""
    return np.argsort(_sqdist(as_xy(points), as_xy(centers)), axis=1, kind="stable")


def rank_weights(p: float, K: int) -> np.ndarray:
    """Probability that the rank-j center is the nearest survivor."""
    return (1.0 - p) * np.power(p, np.arange(K, dtype=float))


def survival_weights(sigma, p: float) -> np.ndarray:
    """Map rankings (one row or a matrix of rows) to per-center weights.

    ``w[i, sigma[i, j]] = p**j * (1 - p)``.
    """
    sigma = np.asarray(sigma)
    single = sigma.ndim == 1
    sigma = np.atleast_2d(sigma)
    K = sigma.shape[1]
    inv = np.empty_like(sigma)
    np.put_along_axis(inv, sigma, np.broadcast_to(np.arange(K), sigma.shape), axis=1)
    w = rank_weights(p, K)[inv]
    return w[0] if single else w


def _grouped(dist: np.ndarray, p: float) -> float:
    ranked = np.sort(dist, axis=1)
    return float(np.sum(ranked @ rank_weights(p, dist.shape[1])))


def dropout_kmeans_objective(points, centers, p: float) -> float:
    """Expected (over non-empty survivor sets) sum of squared distances to
    the nearest surviving center, unnormalised."""
    return _grouped(_sqdist(as_xy(points), as_xy(centers)), p)


def dropout_kmedian_objective(points, centers, p: float) -> float:
    return _grouped(np.sqrt(_sqdist(as_xy(points), as_xy(centers))), p)


def kmeans_objective(points, centers) -> float:
    return float(np.sum(_sqdist(as_xy(points), as_xy(centers)).min(axis=1)))


def kmedian_objective(points, centers) -> float:
    return float(np.sum(np.sqrt(_sqdist(as_xy(points), as_xy(centers)).min(axis=1))))


# ---------------------------------------------------------------------------
# center updates
# ---------------------------------------------------------------------------


def _reseed_empty(X: np.ndarray, centers: np.ndarray, empty) -> np.ndarray:
    """Move each empty center onto the point farthest from its nearest
    non-empty (or already reseeded) center."""
    centers = centers.copy()
    placed = np.ones(len(centers), dtype=bool)
    placed[list(empty)] = False
    for k in empty:
        if placed.any():
            d2 = _sqdist(X, centers[placed]).min(axis=1)
            centers[k] = X[int(np.argmax(d2))]
        placed[k] = True
    return centers


def update_centers_dropout_mean(points, weights, centers=None) -> np.ndarray:
    """Weighted mean update ``c_k = sum_i w_ik x_i / sum_i w_ik``.

    Columns with zero total weight (only possible at ``p = 0``) fall back to
    the empty-cluster rule, which needs the current ``centers``.
    """
    X = as_xy(points)
    W = np.asarray(weights, dtype=float)
    totals = W.sum(axis=0)
    empty = np.flatnonzero(totals <= 0)
    new = np.zeros((W.shape[1], 2))
    ok = totals > 0
    new[ok] = (W[:, ok].T @ X) / totals[ok, None]
    if len(empty):
        if centers is None:
            raise ValueError(f"centers {empty.tolist()} have zero total weight")
        new[empty] = as_xy(centers)[empty]
        new = _reseed_empty(X, new, empty)
    return new


def _weiszfeld_step(X: np.ndarray, w: np.ndarray, c: np.ndarray, eps: float) -> np.ndarray:
    d = np.linalg.norm(X - c, axis=1)
    at = d < eps
    if not at.any():
        a = w / d
        return (a @ X) / a.sum()
    # Vardi-Zhang step: the points under the center act as a pull of
    # strength ``eta`` that the rest of the data has to overcome.
    eta = w[at].sum()
    a = w[~at] / d[~at]
    if a.sum() <= 0:
        return c
    tilde = (a @ X[~at]) / a.sum()
    r = float(np.linalg.norm(a @ (X[~at] - c)))
    if r <= eta:
        return c
    return (1.0 - eta / r) * tilde + (eta / r) * c


def update_center_dropout_median(points, weights, center, inner_iters: int = DEFAULT_INNER_ITERS,
                                 tol: float = DEFAULT_TOL, eps: float = WEISZFELD_EPS,
                                 trace: list | None = None) -> np.ndarray:
    """Weighted Weiszfeld iterations starting from ``center``.

    Points closer than ``eps`` to the current center count as coincident with
    it and are handled by the Vardi-Zhang modification instead of dividing
    by a vanishing distance. ``trace`` (if given) collects the weighted L1
    objective before the first and after every step.
    """
    X = as_xy(points)
    w = np.asarray(weights, dtype=float)
    c = np.asarray(center, dtype=float).copy()
    keep = w > 0
    X, w = X[keep], w[keep]
    if len(w) == 0:
        return c
    if trace is not None:
        trace.append(float(w @ np.linalg.norm(X - c, axis=1)))
    for _ in range(inner_iters):
        new = _weiszfeld_step(X, w, c, eps)
        moved = float(np.linalg.norm(new - c))
        c = new
        if trace is not None:
            trace.append(float(w @ np.linalg.norm(X - c, axis=1)))
        if moved < tol:
            break
    return c


# ---------------------------------------------------------------------------
# outer loops
# ---------------------------------------------------------------------------

Callback = Callable[[int, np.ndarray, np.ndarray], None]


def _lloyd_loop(X, init, weight_fn, update_fn, objective_fn, stable_cols, max_iters,
                callback, record_history) -> RunResult:
    t0 = time.perf_counter()
    centers = as_xy(init).copy()
    K = len(centers)
    trace = [objective_fn(centers)]
    history = [centers.copy()] if record_history else None
    reseeds = []
    prev = None
    iterations = 0
    converged = False
    while True:
        sigma = rank_all(X, centers)
        key = sigma[:, :stable_cols]
        if prev is not None and np.array_equal(key, prev):
            converged = True
            break
        if iterations >= max_iters:
            break
        prev = key
        W = weight_fn(sigma)
        if callback is not None:
            callback(iterations + 1, centers, W)
        empty_before = np.any(W.sum(axis=0) <= 0)
        centers = update_fn(W, centers)
        iterations += 1
        if empty_before and K > 1:
            reseeds.append(iterations)
        trace.append(objective_fn(centers))
        if record_history:
            history.append(centers.copy())
    return RunResult(centers, as_xy(init).copy(), iterations, converged, trace,
                     time.perf_counter() - t0, reseeds, history)


def _one_hot(sigma: np.ndarray) -> np.ndarray:
    W = np.zeros(sigma.shape)
    W[np.arange(len(sigma)), sigma[:, 0]] = 1.0
    return W


def run_classic_kmeans(points, init, max_iters: int = DEFAULT_MAX_ITERS,
                       callback: Callback | None = None, record_history: bool = False) -> RunResult:
    """Lloyd's algorithm; stops when nearest-center assignments repeat."""
    X = as_xy(points)
    return _lloyd_loop(
        X, init, _one_hot,
        lambda W, c: update_centers_dropout_mean(X, W, c),
        lambda c: kmeans_objective(X, c),
        1, max_iters, callback, record_history,
    )


def run_dropout_kmeans(points, init, p: float, max_iters: int = DEFAULT_MAX_ITERS,
                       callback: Callback | None = None, record_history: bool = False) -> RunResult:
    """Dropout k-means; stops when every point's full center ranking repeats.

    At ``p = 0`` only the nearest center carries weight, so only the first
    ranking column is compared (identical to classic k-means).
    """
    X = as_xy(points)
    K = len(as_xy(init))
    return _lloyd_loop(
        X, init, lambda s: survival_weights(s, p),
        lambda W, c: update_centers_dropout_mean(X, W, c),
        lambda c: dropout_kmeans_objective(X, c, p),
        K if p > 0 else 1, max_iters, callback, record_history,
    )


def _median_step(X, W, centers, inner_iters, tol):
    new = np.array(centers, dtype=float)
    totals = W.sum(axis=0)
    for k in range(len(new)):
        if totals[k] > 0:
            new[k] = update_center_dropout_median(X, W[:, k], new[k], inner_iters, tol)
    empty = np.flatnonzero(totals <= 0)
    if len(empty):
        new = _reseed_empty(X, new, empty)
    return new


def run_classic_kmedian(points, init, max_iters: int = DEFAULT_MAX_ITERS,
                        inner_iters: int = DEFAULT_INNER_ITERS, tol: float = DEFAULT_TOL,
                        callback: Callback | None = None, record_history: bool = False) -> RunResult:
    """Nearest-center assignment, then an unweighted Weiszfeld pass over each
    cluster's own members."""
    X = as_xy(points)

    def update(W, centers):
        labels = np.argmax(W, axis=1)
        new = np.array(centers, dtype=float)
        empty = []
        for k in range(len(new)):
            members = X[labels == k]
            if len(members):
                new[k] = update_center_dropout_median(members, np.ones(len(members)), new[k], inner_iters, tol)
            else:
                empty.append(k)
        return _reseed_empty(X, new, empty) if empty else new

    return _lloyd_loop(
        X, init, _one_hot, update,
        lambda c: kmedian_objective(X, c),
        1, max_iters, callback, record_history,
    )


def run_dropout_kmedian(points, init, p: float, max_iters: int = DEFAULT_MAX_ITERS,
                        inner_iters: int = DEFAULT_INNER_ITERS, tol: float = DEFAULT_TOL,
                        callback: Callback | None = None, record_history: bool = False) -> RunResult:
    X = as_xy(points)
    K = len(as_xy(init))
    return _lloyd_loop(
        X, init, lambda s: survival_weights(s, p),
        lambda W, c: _median_step(X, W, c, inner_iters, tol),
        lambda c: dropout_kmedian_objective(X, c, p),
        K if p > 0 else 1, max_iters, callback, record_history,
    )


def run_stochastic_dropout_kmeans(points, init, p: float, r: float,
                                  max_iters: int = STOCHASTIC_MAX_ITERS, seed=None,
                                  record_history: bool = False) -> RunResult:
    """Baseline: drop each center with probability ``p`` (redrawing if all
    drop), then take one Lloyd step on the survivors only.

    Stops once every center's most recent update moved it less than ``r / 4``,
    or after ``max_iters`` iterations. A surviving center that attracts no
    points goes through the same empty-cluster reseed as classic k-means.
    """
    t0 = time.perf_counter()
    X = as_xy(points)
    centers = as_xy(init).copy()
    K = len(centers)
    rng = np.random.default_rng(seed)
    last_move = np.full(K, np.inf)
    trace = [dropout_kmeans_objective(X, centers, p)]
    history = [centers.copy()] if record_history else None
    reseeds = []
    converged = False
    iterations = 0
    while iterations < max_iters:
        alive = rng.random(K) >= p
        while not alive.any():
            alive = rng.random(K) >= p
        survivors = np.flatnonzero(alive)
        labels = np.argmin(_sqdist(X, centers[survivors]), axis=1)
        new = centers.copy()
        empty = []
        for j, k in enumerate(survivors):
            members = X[labels == j]
            if len(members):
                new[k] = members.mean(axis=0)
            else:
                empty.append(j)
        if empty:
            sub = _reseed_empty(X, new[survivors], empty)
            new[survivors] = sub
            reseeds.append(iterations + 1)
        last_move[survivors] = np.linalg.norm(new[survivors] - centers[survivors], axis=1)
        centers = new
        iterations += 1
        trace.append(dropout_kmeans_objective(X, centers, p))
        if record_history:
            history.append(centers.copy())
        if np.all(last_move < r / 4.0):
            converged = True
            break
    return RunResult(centers, as_xy(init).copy(), iterations, converged, trace,
                     time.perf_counter() - t0, reseeds, history)

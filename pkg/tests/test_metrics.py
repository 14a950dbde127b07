import itertools

import numpy as np
import pytest

from dropcluster.clustering import DropoutParams
from dropcluster.metrics import (
    detection_probability,
    detection_probability_bruteforce,
    dropout_objective_bruteforce,
    dropout_rmsd,
    dropout_rmsd_bruteforce,
    evaluate,
    group_ships,
)


def random_instance(rng, K=None, p=None):
    K = K or int(rng.integers(1, 11))
    n = int(rng.integers(1, 201))
    X = rng.uniform(-40, 40, (n, 2))
    C = rng.uniform(-40, 40, (K, 2))
    ships = group_ships([f"s{j}" for j in rng.integers(0, max(1, n // 5), n)])
    p = p if p is not None else float(rng.choice([0.0, 0.3, 0.7]))
    return X, C, ships, DropoutParams(p, K, 10.0)


class TestGrouping:
    def test_first_seen_order(self):
        g = group_ships(["b", "a", "b", "c"])
        assert list(g) == ["b", "a", "c"]
        assert g["b"] == [0, 2]

    def test_bad_grouping_rejected(self):
        with pytest.raises(ValueError):
            detection_probability({"a": [0, 0]}, [[0, 0], [1, 1]], [[0, 0]], DropoutParams())
        with pytest.raises(ValueError):
            detection_probability({}, [[0, 0]], [[0, 0]], DropoutParams())


class TestDetectionProbability:
    def test_ship_covered_by_two_centers(self):
        X = [[0, 0], [30, 0]]
        C = [[5, 0], [25, 0], [100, 100]]
        ships = {"a": [0, 1]}
        params = DropoutParams(0.3, 3, 10.0)
        assert detection_probability(ships, X, C, params) == pytest.approx(0.91, abs=1e-15)
        assert detection_probability_bruteforce(ships, X, C, params) == pytest.approx(0.91, abs=1e-15)

    def test_nothing_in_range(self):
        assert detection_probability({"a": [0]}, [[0, 0]], [[50, 0], [0, 50]], DropoutParams(0.3, 2, 10)) == 0.0

    def test_radius_is_closed(self):
        assert detection_probability({"a": [0]}, [[0, 0]], [[10, 0]], DropoutParams(0.3, 1, 10)) == pytest.approx(0.7)

    def test_p0_is_fraction_of_covered_ships(self):
        X = [[0, 0], [100, 0], [200, 0]]
        ships = {"a": [0], "b": [1], "c": [2]}
        assert detection_probability(ships, X, [[1, 0], [199, 0]], DropoutParams(0.0, 2, 10)) == pytest.approx(2 / 3)

    def test_k1_covered(self):
        assert detection_probability_bruteforce({"a": [0]}, [[0, 0]], [[1, 1]], DropoutParams(0.4, 1, 5)) == pytest.approx(0.6)

    def test_all_centers_cover_all_ships(self):
        X = [[0, 0], [1, 0]]
        C = [[0, 1], [1, 1], [0.5, 0.5]]
        params = DropoutParams(0.3, 3, 10)
        for f in (detection_probability, detection_probability_bruteforce):
            assert f({"a": [0], "b": [1]}, X, C, params) == pytest.approx(1 - 0.3 ** 3, abs=1e-15)

    def test_bruteforce_refuses_large_k(self):
        with pytest.raises(ValueError):
            detection_probability_bruteforce({"a": [0]}, [[0, 0]], np.zeros((21, 2)), DropoutParams(0.3, 21, 1))

    def test_bruteforce_matches_mask_enumeration(self):
        # independent of both package routes: survivor masks via itertools.product
        rng = np.random.default_rng(123)
        X, C, ships, params = random_instance(rng, K=6, p=0.3)
        d = np.hypot(*(X[:, None, :] - C[None]).transpose(2, 0, 1))
        want = 0.0
        for alive in itertools.product((0, 1), repeat=6):
            alive = np.array(alive, bool)
            prob = np.prod(np.where(alive, 0.7, 0.3))
            hit = [alive.any() and d[np.ix_(idx, alive)].min() <= 10.0 for idx in ships.values()]
            want += prob * np.mean(hit)
        assert detection_probability_bruteforce(ships, X, C, params) == pytest.approx(want, abs=1e-12)
        assert detection_probability(ships, X, C, params) == pytest.approx(want, abs=1e-12)

    @pytest.mark.parametrize("seed", range(50))
    def test_grouped_equals_bruteforce(self, seed):
        X, C, ships, params = random_instance(np.random.default_rng(seed))
        g = detection_probability(ships, X, C, params)
        b = detection_probability_bruteforce(ships, X, C, params)
        assert abs(g - b) <= 1e-12
        assert 0.0 <= g <= 1 - params.p ** params.K + 1e-15

    @pytest.mark.parametrize("seed", range(20))
    def test_monotone_in_centers_and_p(self, seed):
        rng = np.random.default_rng(seed)
        X, C, ships, _ = random_instance(rng, K=4)
        extra = rng.uniform(-40, 40, (1, 2))
        for p in (0.0, 0.3, 0.7):
            base = detection_probability(ships, X, C, DropoutParams(p, 4, 10))
            more = detection_probability(ships, X, np.vstack([C, extra]), DropoutParams(p, 5, 10))
            assert more >= base
        vals = [detection_probability(ships, X, C, DropoutParams(p, 4, 10)) for p in (0.0, 0.2, 0.5, 0.9)]
        assert all(b <= a for a, b in zip(vals, vals[1:]))


class TestRMSD:
    def test_single_point_single_center(self):
        for p in (0.0, 0.3, 0.9):
            assert dropout_rmsd([[3, 4]], [[0, 0]], p) == pytest.approx(5.0)

    def test_p0_is_plain_rmsd(self):
        rng = np.random.default_rng(0)
        X, C = rng.uniform(-5, 5, (30, 2)), rng.uniform(-5, 5, (4, 2))
        sq = []
        for x in X:
            sq.append(min((x[0] - c[0]) ** 2 + (x[1] - c[1]) ** 2 for c in C))
        assert dropout_rmsd(X, C, 0.0) == pytest.approx(np.sqrt(np.mean(sq)), rel=1e-12)

    def test_k1_any_p(self):
        X = np.array([[0, 0], [2, 0], [0, 4]], dtype=float)
        want = np.sqrt((2 + 2 + 10) / 3)
        for p in (0.0, 0.5):
            assert dropout_rmsd_bruteforce(X, [[1, 1]], p) == pytest.approx(want)
            assert dropout_rmsd(X, [[1, 1]], p) == pytest.approx(want)

    def test_coincident(self):
        assert dropout_rmsd_bruteforce([[2, 2]], [[2, 2]], 0.3) == 0.0

    def test_empty_is_error(self):
        with pytest.raises(ValueError):
            dropout_rmsd(np.empty((0, 2)), [[0, 0]], 0.3)

    @pytest.mark.parametrize("seed", range(50))
    def test_grouped_equals_bruteforce(self, seed):
        X, C, _, params = random_instance(np.random.default_rng(1000 + seed))
        assert dropout_rmsd(X, C, params.p) == pytest.approx(dropout_rmsd_bruteforce(X, C, params.p), rel=1e-9)

    def test_objective_bruteforce_power(self):
        X = np.array([[0, 0]], dtype=float)
        C = np.array([[1, 0], [0, 2]], dtype=float)
        # survivors {0}: .7*.3, {1}: .3*.7, {0,1}: .49 -> nearest is c0
        assert dropout_objective_bruteforce(X, C, 0.3, 1) == pytest.approx(0.21 * 1 + 0.21 * 2 + 0.49 * 1)
        assert dropout_objective_bruteforce(X, C, 0.3, 2) == pytest.approx(0.21 * 1 + 0.21 * 4 + 0.49 * 1)


def test_evaluate_bundles_both():
    m = evaluate({"a": [0]}, [[0, 0]], [[3, 4]], DropoutParams(0.3, 1, 5.0))
    assert m.p_d == pytest.approx(0.7) and m.rmsd == pytest.approx(5.0)

import numpy as np
import pytest

from diestudy.baselines import (
    Dendrogram,
    agglomerative,
    cut,
    oracle_best_cut,
    read_dendrogram_csv,
    write_dendrogram_csv,
)
from diestudy.clustering import n_clusters
from diestudy.errors import TooSmall
from diestudy.metrics import ami
from diestudy.simmatrix import DissimilarityMatrix


def dis(matrix):
    matrix = np.asarray(matrix, dtype=np.float64)
    return DissimilarityMatrix([f"c{i}" for i in range(len(matrix))], matrix)


class TestAgglomerative:
    def test_two_points(self):
        d = dis([[0.0, 3.0], [3.0, 0.0]])
        dend = agglomerative(d)
        assert dend.merges == [(0, 1, 3.0)]

    def test_zero_distance_pairs_merge_first(self):
        d = np.full((4, 4), 9.0)
        np.fill_diagonal(d, 0.0)
        d[0, 1] = d[1, 0] = 0.0
        d[2, 3] = d[3, 2] = 0.0
        dend = agglomerative(dis(d))
        assert {tuple(sorted(m[:2])) for m in dend.merges[:2]} == {(0, 1), (2, 3)}
        assert dend.merges[0][2] == 0.0 and dend.merges[1][2] == 0.0

    def test_average_linkage_hand_computed(self):
        # 4-point matrix; average linkage traced by hand:
        # merge (0,1) at 2; then d(01,2) = (6+7)/2 = 6.5, d(01,3) = (10+9)/2 = 9.5
        # merge (01,2) at 6.5; then d(012,3) = (10+9+1)/3 = 20/3
        # final merge at 20/3
        d = dis(
            [
                [0.0, 2.0, 6.0, 10.0],
                [2.0, 0.0, 7.0, 9.0],
                [6.0, 7.0, 0.0, 1.0],
                [10.0, 9.0, 1.0, 0.0],
            ]
        )
        dend = agglomerative(d, "average")
        assert dend.merges[0] == (2, 3, 1.0)
        assert dend.merges[1] == (0, 1, 2.0)
        # cluster 4 is (2,3), cluster 5 is (0,1); d(5,4) = (6+10+7+9)/4 = 8
        assert dend.merges[2] == (5, 4, 8.0)

    def test_single_and_complete_linkage(self):
        d = dis(
            [
                [0.0, 2.0, 6.0, 10.0],
                [2.0, 0.0, 7.0, 9.0],
                [6.0, 7.0, 0.0, 1.0],
                [10.0, 9.0, 1.0, 0.0],
            ]
        )
        single = agglomerative(d, "single")
        complete = agglomerative(d, "complete")
        assert single.merges[2][2] == 6.0   # min(6,10,7,9)
        assert complete.merges[2][2] == 10.0  # max(6,10,7,9)

    def test_heights_nondecreasing(self):
        rng = np.random.default_rng(0)
        for _ in range(10):
            n = int(rng.integers(3, 20))
            d = rng.uniform(0.1, 10.0, (n, n))
            d = (d + d.T) / 2
            np.fill_diagonal(d, 0.0)
            dend = agglomerative(dis(d), "average")
            heights = [m[2] for m in dend.merges]
            assert all(b >= a - 1e-9 for a, b in zip(heights, heights[1:]))

    def test_too_small(self):
        with pytest.raises(TooSmall):
            agglomerative(dis([[0.0]]))

    def test_matches_scipy(self):
        from scipy.cluster.hierarchy import linkage
        from scipy.spatial.distance import squareform

        rng = np.random.default_rng(4)
        for _ in range(5):
            n = 12
            d = rng.uniform(0.1, 10.0, (n, n))
            d = (d + d.T) / 2
            np.fill_diagonal(d, 0.0)
            dend = agglomerative(dis(d), "average")
            ref = linkage(squareform(d), method="average")
            # merge heights agree (pair identities can differ on exact ties)
            np.testing.assert_allclose([m[2] for m in dend.merges], ref[:, 2], atol=1e-9)


class TestCut:
    def fixture(self):
        d = np.full((5, 5), 8.0)
        np.fill_diagonal(d, 0.0)
        d[0, 1] = d[1, 0] = 1.0
        d[2, 3] = d[3, 2] = 2.0
        return agglomerative(dis(d), "average")

    def test_below_first_merge(self):
        dend = self.fixture()
        assert n_clusters(cut(dend, 0.5)) == 5

    def test_above_last_merge(self):
        dend = self.fixture()
        assert n_clusters(cut(dend, 1e9)) == 1

    def test_cut_monotone(self):
        dend = self.fixture()
        heights = sorted(m[2] for m in dend.merges)
        counts = [n_clusters(cut(dend, h)) for h in [0.0] + heights]
        assert counts == sorted(counts, reverse=True)

    def test_intermediate(self):
        dend = self.fixture()
        labels = cut(dend, 2.5)
        groups = {}
        for i, lab in enumerate(labels.tolist()):
            groups.setdefault(lab, set()).add(i)
        assert set(map(frozenset, groups.values())) == {
            frozenset({0, 1}),
            frozenset({2, 3}),
            frozenset({4}),
        }


class TestOracle:
    def test_achievable_ground_truth_scores_one(self):
        dend = TestCut().fixture()
        gt = [0, 0, 1, 1, 2]
        labels, score = oracle_best_cut(dend, gt, metric="ami")
        assert score == 1.0
        assert ami(gt, labels) == 1.0

    def test_oracle_dominates_every_fixed_cut(self):
        rng = np.random.default_rng(9)
        n = 14
        d = rng.uniform(0.1, 10.0, (n, n))
        d = (d + d.T) / 2
        np.fill_diagonal(d, 0.0)
        dend = agglomerative(dis(d), "average")
        gt = rng.integers(0, 4, n)
        for metric in ("ami", "ari", "fmi"):
            _, best = oracle_best_cut(dend, gt, metric=metric)
            from diestudy.baselines import _METRICS

            for h in [0.0] + [m[2] for m in dend.merges]:
                assert best >= _METRICS[metric](gt, cut(dend, h)) - 1e-12

    def test_unknown_metric(self):
        with pytest.raises(ValueError):
            oracle_best_cut(TestCut().fixture(), [0, 0, 1, 1, 2], metric="nope")


def test_dendrogram_csv_round_trip(tmp_path):
    dend = TestCut().fixture()
    p = tmp_path / "dend.csv"
    write_dendrogram_csv(dend, p)
    again = read_dendrogram_csv(p)
    assert again.n_leaves == dend.n_leaves
    assert again.merges == dend.merges


def test_dendrogram_validates_merge_count():
    with pytest.raises(ValueError):
        Dendrogram(4, [(0, 1, 1.0)])

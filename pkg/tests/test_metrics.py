import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from snnl_text.metrics import (
    ContingencyTable,
    adjusted_rand,
    aggregate,
    calinski_harabasz,
    classification_metrics,
    cluster_report_row,
    clustering_accuracy,
    davies_bouldin,
    nmi,
    silhouette,
)

import oracles

TWO_BLOBS = np.array([[-1.0], [1.0], [9.0], [11.0]])
TIGHT_BLOBS = np.array([[0.0], [1.0], [10.0], [11.0]])
SPLIT = [0, 0, 1, 1]


def random_instance(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(10, 201))
    k = int(rng.integers(2, 6))
    m = int(rng.integers(1, 6))
    X = rng.normal(size=(n, m)) + rng.normal(scale=3, size=(k, m))[rng.integers(0, k, n)]
    # every cluster non-empty and at least one non-singleton
    c = np.concatenate([np.arange(k), np.arange(k), rng.integers(0, k, n - 2 * k)])
    rng.shuffle(c)
    y = rng.integers(0, int(rng.integers(2, 6)), n)
    return X, y, c


class TestAnchors:
    def test_dbi(self):
        assert davies_bouldin(TWO_BLOBS, SPLIT) == pytest.approx(0.2, abs=1e-15)

    def test_dbi_singletons(self):
        assert davies_bouldin([[0.0], [5.0]], [0, 1]) == 0.0

    def test_chs(self):
        assert calinski_harabasz(TWO_BLOBS, SPLIT) == pytest.approx(50.0, abs=1e-12)

    def test_silhouette_hand_value(self):
        # outer points: a=1, b=10.5; inner points: a=1, b=9.5
        expected = (2 * 9.5 / 10.5 + 2 * 8.5 / 9.5) / 4
        assert silhouette(TIGHT_BLOBS, SPLIT) == pytest.approx(expected, abs=1e-15)
        assert expected == pytest.approx(0.899749373433584, abs=1e-15)

    def test_external_on_independent_partitions(self):
        y, c = [0, 0, 1, 1], [0, 1, 0, 1]
        assert adjusted_rand(y, c) == pytest.approx(-0.5, abs=1e-15)
        assert nmi(y, c) == pytest.approx(0.0, abs=1e-15)
        assert clustering_accuracy(y, c) == 0.5

    def test_relabeled_identity(self):
        y, c = [0, 0, 1, 1], [1, 1, 0, 0]
        assert nmi(y, c) == 1.0
        assert adjusted_rand(y, c) == 1.0
        assert clustering_accuracy(y, c) == 1.0

    def test_trivial_partitions(self):
        assert nmi([0, 0, 0], [5, 5, 5]) == 1.0
        assert adjusted_rand([0, 0, 0], [5, 5, 5]) == 1.0


class TestErrors:
    def test_coincident_centroids_named(self):
        X = [[0.0], [2.0], [1.0], [1.0], [5.0]]
        with pytest.raises(ValueError, match="clusters 0 and 1"):
            davies_bouldin(X, [0, 0, 1, 1, 2])

    def test_single_cluster(self):
        for fn in (davies_bouldin, silhouette, calinski_harabasz):
            with pytest.raises(ValueError):
                fn([[0.0], [1.0]], [0, 0])

    def test_chs_point_masses(self):
        with pytest.raises(ValueError, match="zero"):
            calinski_harabasz([[0.0], [0.0], [1.0], [1.0]], SPLIT)

    def test_chs_k_equals_n(self):
        with pytest.raises(ValueError):
            calinski_harabasz([[0.0], [1.0]], [0, 1])

    def test_length_mismatch(self):
        for fn in (nmi, adjusted_rand, clustering_accuracy):
            with pytest.raises(ValueError):
                fn([0, 1, 0], [0, 1])
        with pytest.raises(ValueError):
            classification_metrics([0, 1], [0])

    def test_too_many_clusters_for_permutation(self):
        y = np.arange(9)
        with pytest.raises(ValueError, match="hungarian"):
            clustering_accuracy(y, y)
        assert clustering_accuracy(y, y, hungarian=True) == 1.0


class TestOracles:
    @pytest.mark.parametrize("seed", range(100))
    def test_all_metrics_match_reference(self, seed):
        X, y, c = random_instance(seed)
        assert abs(davies_bouldin(X, c) - oracles.davies_bouldin_ref(X, c)) < 1e-10
        assert abs(silhouette(X, c) - oracles.silhouette_ref(X, c)) < 1e-10
        chs, ref = calinski_harabasz(X, c), oracles.calinski_harabasz_ref(X, c)
        assert abs(chs - ref) < 1e-10 * max(1.0, abs(ref))
        y, c = y.tolist(), c.tolist()
        assert abs(nmi(y, c) - oracles.nmi_ref(y, c)) < 1e-10
        assert abs(adjusted_rand(y, c) - oracles.adjusted_rand_ref(y, c)) < 1e-10
        assert abs(clustering_accuracy(y, c) - oracles.clustering_accuracy_ref(y, c)) < 1e-10


class TestProperties:
    @given(st.integers(0, 2**31))
    @settings(max_examples=50, deadline=None)
    def test_ranges(self, seed):
        X, y, c = random_instance(seed)
        assert 0 <= nmi(y, c) <= 1
        assert 0 <= clustering_accuracy(y, c) <= 1
        assert adjusted_rand(y, c) <= 1
        assert -1 <= silhouette(X, c) <= 1
        assert davies_bouldin(X, c) >= 0
        assert calinski_harabasz(X, c) >= 0

    @given(st.integers(0, 2**31))
    @settings(max_examples=50, deadline=None)
    def test_relabel_invariance(self, seed):
        rng = np.random.default_rng(seed)
        y = rng.integers(0, 4, 40)
        c = rng.integers(0, 4, 40)
        perm_y = rng.permutation(4)[y] + 10
        perm_c = rng.permutation(4)[c]
        for fn in (nmi, adjusted_rand, clustering_accuracy):
            assert fn(perm_y, perm_c) == pytest.approx(fn(y, c), abs=1e-12)

    @given(st.integers(0, 2**31))
    @settings(max_examples=50, deadline=None)
    def test_hungarian_equals_permutation(self, seed):
        rng = np.random.default_rng(seed)
        y = rng.integers(0, int(rng.integers(1, 7)), 60)
        c = rng.integers(0, int(rng.integers(1, 7)), 60)
        assert clustering_accuracy(y, c) == pytest.approx(
            clustering_accuracy(y, c, hungarian=True), abs=1e-15)

    def test_chs_scale_invariant(self):
        X, _, c = random_instance(3)
        assert calinski_harabasz(7.5 * X, c) == pytest.approx(calinski_harabasz(X, c), rel=1e-12)

    def test_silhouette_random_split_near_zero(self):
        rng = np.random.default_rng(0)
        X = rng.normal(size=(500, 3))
        assert abs(silhouette(X, rng.integers(0, 2, 500))) < 0.1

    def test_chs_random_assignment_near_one(self):
        rng = np.random.default_rng(0)
        X = rng.normal(size=(1000, 5))
        assert 0.3 <= calinski_harabasz(X, rng.integers(0, 4, 1000)) <= 3

    def test_ari_chance_level(self):
        rng = np.random.default_rng(0)
        scores = [adjusted_rand(rng.integers(0, 4, 200), rng.integers(0, 4, 200))
                  for _ in range(100)]
        assert abs(np.mean(scores)) < 0.02

    def test_silhouette_blocks_agree(self, monkeypatch):
        import snnl_text.metrics as metrics
        X, _, c = random_instance(11)
        full = silhouette(X, c)
        monkeypatch.setattr(metrics, "SILHOUETTE_BLOCK", 7)
        assert silhouette(X, c) == pytest.approx(full, abs=1e-12)

    def test_against_sklearn(self):
        from sklearn import metrics as skm
        X, y, c = random_instance(21)
        assert silhouette(X, c) == pytest.approx(skm.silhouette_score(X, c), abs=1e-10)
        assert davies_bouldin(X, c) == pytest.approx(skm.davies_bouldin_score(X, c), abs=1e-10)
        assert calinski_harabasz(X, c) == pytest.approx(
            skm.calinski_harabasz_score(X, c), rel=1e-10)
        assert nmi(y, c) == pytest.approx(skm.normalized_mutual_info_score(y, c), abs=1e-10)
        assert adjusted_rand(y, c) == pytest.approx(skm.adjusted_rand_score(y, c), abs=1e-10)


class TestContingency:
    def test_marginals(self):
        t = ContingencyTable.from_labels([0, 0, 1, 2], [5, 6, 6, 6])
        assert t.n == 4
        assert t.counts.sum() == 4
        assert t.row_sums.tolist() == [2, 1, 1]
        assert t.col_sums.tolist() == [1, 3]


class TestClassification:
    def test_example(self):
        acc, weighted, macro = classification_metrics([1, 1, 0, 0], [1, 0, 0, 0])
        assert acc == 0.75
        assert macro == pytest.approx((2 / 3 + 0.8) / 2, abs=1e-15)
        assert macro == pytest.approx(0.7333, abs=1e-4)
        assert weighted == pytest.approx(macro, abs=1e-12)

    def test_perfect(self):
        assert classification_metrics([0, 1, 2], [0, 1, 2]) == (1.0, 1.0, 1.0)

    def test_absent_predictions_score_zero(self):
        acc, _, macro = classification_metrics([0, 1], [0, 0], k=2)
        assert acc == 0.5
        assert macro == pytest.approx((2 / 3 + 0) / 2)

    def test_out_of_range(self):
        with pytest.raises(ValueError):
            classification_metrics([0, 3], [0, 1], k=2)


class TestReporting:
    def test_report_row(self):
        row = cluster_report_row(TWO_BLOBS, SPLIT, SPLIT)
        assert set(row) == {"dbi", "sil", "chs", "nmi", "ari", "acc"}
        assert row["acc"] == 1.0 and row["dbi"] == pytest.approx(0.2)

    def test_undefined_internal_becomes_none(self):
        row = cluster_report_row([[0.0], [0.0], [1.0], [1.0]], SPLIT, SPLIT)
        assert row["chs"] is None and row["nmi"] == 1.0

    def test_aggregate(self):
        agg = aggregate({1: {"acc": 0.5, "dbi": None}, 2: {"acc": 1.0, "dbi": None}})
        assert agg["acc"] == {"avg": 0.75, "max": 1.0, "min": 0.5}
        assert agg["dbi"] == {"avg": None, "max": None, "min": None}

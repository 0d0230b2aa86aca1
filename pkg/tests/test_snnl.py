import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from snnl_text.snnl import (
    SNNLWarning,
    TemperatureSchedule,
    annealing_temperature,
    pairwise_cosine_distance,
    snnl,
    snnl_forward,
    snnl_from_distances,
    snnl_gradient,
)

from oracles import central_difference, max_relative_error, snnl_loop

SCHEDULE = TemperatureSchedule(1.0, 0.55)


@pytest.fixture
def four_points():
    x = np.array([[1.0, 0.0], [0.9, 0.1], [0.0, 1.0], [0.1, 0.9]])
    return x / np.linalg.norm(x, axis=1, keepdims=True), np.array([0, 0, 1, 1])


class TestCosineDistance:
    def test_identical_rows(self):
        D = pairwise_cosine_distance([[3.0, 4.0], [3.0, 4.0]])
        assert D[0, 1] == pytest.approx(0.0, abs=1e-15)

    def test_orthogonal(self):
        assert pairwise_cosine_distance([[1.0, 0.0], [0.0, 1.0]])[0, 1] == pytest.approx(1.0)

    def test_antipodal(self):
        assert pairwise_cosine_distance([[1.0, 0.0], [-1.0, 0.0]])[0, 1] == pytest.approx(2.0)

    def test_zero_row_names_index(self):
        with pytest.raises(ValueError, match="row 2"):
            pairwise_cosine_distance([[1.0, 0.0], [0.0, 1.0], [0.0, 0.0]])

    def test_norm_floor_allows_zero_rows(self):
        D = pairwise_cosine_distance([[1.0, 0.0], [0.0, 0.0]], norm_floor=1e-12)
        assert D[0, 1] == 1.0

    @given(st.integers(2, 12), st.integers(1, 6), st.integers(0, 2**31))
    @settings(max_examples=50, deadline=None)
    def test_symmetric_zero_diagonal_bounded(self, b, m, seed):
        x = np.random.default_rng(seed).normal(size=(b, m))
        D = pairwise_cosine_distance(x)
        assert np.array_equal(D, D.T)
        assert np.all(np.diag(D) == 0)
        assert D.min() >= 0 and D.max() <= 2


class TestAnnealingTemperature:
    def test_first_epoch_is_one(self):
        assert annealing_temperature(0, SCHEDULE) == 1.0

    def test_second_epoch(self):
        assert annealing_temperature(1, SCHEDULE) == pytest.approx(0.68302, abs=1e-5)

    def test_last_of_thirty_epochs(self):
        assert annealing_temperature(29, SCHEDULE) == pytest.approx(30 ** -0.55, abs=1e-12)
        assert annealing_temperature(29, SCHEDULE) == pytest.approx(0.154022, abs=1e-6)

    def test_strictly_decreasing(self):
        temps = [annealing_temperature(i, SCHEDULE) for i in range(100)]
        assert all(a > b for a, b in zip(temps, temps[1:]))

    def test_rejects_eta_below_one(self):
        with pytest.raises(ValueError):
            TemperatureSchedule(0.5, 0.55)

    def test_negative_epoch(self):
        with pytest.raises(ValueError):
            annealing_temperature(-1)


class TestForward:
    def test_single_class_is_exactly_zero(self):
        x = np.random.default_rng(0).normal(size=(10, 4))
        assert snnl_forward(x, np.zeros(10, dtype=int), 0.3) == 0.0

    def test_matches_loop_on_fixture(self, four_points):
        x, y = four_points
        for T in (1.0, 0.1):
            assert snnl_forward(x, y, T) == pytest.approx(snnl_loop(x.tolist(), y, T), abs=1e-12)
        assert snnl_forward(x, y, 1.0) == pytest.approx(0.6034161434153906, abs=1e-12)

    def test_lower_temperature_lowers_loss_here(self, four_points):
        x, y = four_points
        assert snnl_forward(x, y, 0.1) < snnl_forward(x, y, 1.0)

    def test_batch_of_one_rejected(self):
        with pytest.raises(ValueError, match="b >= 2"):
            snnl_forward([[1.0, 0.0]], [0], 1.0)

    def test_all_isolated_is_clamped_and_flagged(self):
        x = np.eye(3)
        with pytest.warns(SNNLWarning):
            res = snnl(x, [0, 1, 2], 1.0)
        assert res.all_isolated
        assert np.isfinite(res.loss) and res.loss > 0
        # num is just the epsilon, den = 2 exp(-1) + epsilon
        expected = -math.log(1e-8 / (2 * math.exp(-1.0) + 1e-8))
        assert res.loss == pytest.approx(expected, rel=1e-12)

    def test_isolated_point_mask(self):
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            res = snnl(np.eye(3) + 0.1, [0, 0, 1], 1.0)
        assert res.isolated.tolist() == [False, False, True]

    @given(st.integers(2, 32), st.integers(1, 16), st.integers(2, 5),
           st.sampled_from([1.0, 0.68, 0.15]), st.integers(0, 2**31))
    @settings(max_examples=60, deadline=None)
    def test_matches_loop_random(self, b, m, k, T, seed):
        rng = np.random.default_rng(seed)
        x = rng.normal(size=(b, m))
        y = rng.integers(0, k, size=b)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", SNNLWarning)
            got = snnl_forward(x, y, T)
        assert got == pytest.approx(snnl_loop(x.tolist(), y.tolist(), T), abs=1e-12)
        assert got >= 0


class TestGradient:
    def test_fixture_matches_finite_differences(self, four_points):
        x, y = four_points
        g = snnl_gradient(x, y, 1.0)
        fd = central_difference(lambda z: snnl_forward(z, y, 1.0), x)
        assert max_relative_error(g, fd) < 1e-4

    def test_equidistant_same_class_has_zero_gradient(self):
        # regular simplex: all pairwise cosines equal
        x = np.eye(4) - 0.25
        g = snnl_gradient(x, np.zeros(4, dtype=int), 0.5)
        assert np.linalg.norm(g) <= 1e-8
        fd = central_difference(lambda z: snnl_forward(z, np.zeros(4, dtype=int), 0.5), x)
        assert np.abs(fd).max() < 1e-8

    def test_distance_space_invariance(self):
        rng = np.random.default_rng(3)
        D = pairwise_cosine_distance(rng.normal(size=(6, 3)))
        y = np.array([0, 0, 1, 1, 2, 2])
        loss1, G1, _ = snnl_from_distances(D, y, 0.4)
        loss2, G2, _ = snnl_from_distances(2 * D, y, 0.8)
        assert loss1 == pytest.approx(loss2, rel=1e-14)
        # dL/dD scales by 1/2 when D doubles, so G1 = 2 G2
        np.testing.assert_allclose(G1, 2 * G2, rtol=1e-12, atol=1e-300)

    def test_distance_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(5)
        D = pairwise_cosine_distance(rng.normal(size=(5, 3)))
        y = np.array([0, 1, 0, 1, 1])
        _, G, _ = snnl_from_distances(D, y, 0.5)
        fd = central_difference(lambda d: snnl_from_distances(d, y, 0.5)[0], D)
        np.fill_diagonal(fd, 0.0)
        assert max_relative_error(G, fd) < 1e-4

    def test_norm_floor_gradient_on_zero_row(self):
        x = np.array([[1.0, 0.2], [0.0, 0.0], [0.3, 1.0], [0.5, 0.5]])
        y = np.array([0, 0, 1, 1])
        res = snnl(x, y, 0.7, norm_floor=1e-3)
        fd = central_difference(lambda z: snnl(z, y, 0.7, norm_floor=1e-3).loss, x, h=1e-7)
        assert max_relative_error(res.grad, fd) < 1e-4

    @given(st.integers(2, 10), st.integers(1, 6), st.integers(2, 4),
           st.sampled_from([1.0, 0.68, 0.15]), st.integers(0, 2**31))
    @settings(max_examples=25, deadline=None)
    def test_random_batches_match_finite_differences(self, b, m, k, T, seed):
        rng = np.random.default_rng(seed)
        x = rng.normal(size=(b, m))
        y = rng.integers(0, k, size=b)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", SNNLWarning)
            g = snnl_gradient(x, y, T)
            fd = central_difference(lambda z: snnl_forward(z, y, T), x)
        assert max_relative_error(g, fd, floor=1e-6) < 1e-4


class TestSymmetries:
    @given(st.integers(3, 16), st.integers(0, 2**31))
    @settings(max_examples=30, deadline=None)
    def test_permutation_equivariance(self, b, seed):
        rng = np.random.default_rng(seed)
        x = rng.normal(size=(b, 4))
        y = rng.integers(0, 3, size=b)
        perm = rng.permutation(b)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", SNNLWarning)
            a = snnl(x, y, 0.5)
            p = snnl(x[perm], y[perm], 0.5)
        assert p.loss == pytest.approx(a.loss, abs=1e-12)
        np.testing.assert_allclose(p.grad, a.grad[perm], atol=1e-12)

    @given(st.integers(3, 16), st.integers(0, 2**31))
    @settings(max_examples=30, deadline=None)
    def test_label_relabeling(self, b, seed):
        rng = np.random.default_rng(seed)
        x = rng.normal(size=(b, 4))
        y = rng.integers(0, 3, size=b)
        relabel = np.array([7, 2, 11])[y]
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", SNNLWarning)
            a = snnl(x, y, 0.5)
            r = snnl(x, relabel, 0.5)
        assert r.loss == a.loss
        assert np.array_equal(r.grad, a.grad)

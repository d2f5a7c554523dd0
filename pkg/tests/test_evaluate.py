import math

import numpy as np
import pytest

from qdsb.core.exceptions import DimensionError, EvaluationError
from qdsb.services.evaluation_service import make_mmd_spec, median_bandwidth, mmd, mmd_with_spec


class TestMmd:
    def test_two_points(self):
        expected = math.sqrt(2.0 - 2.0 * math.exp(-0.5))
        assert mmd(np.array([[0.0]]), np.array([[1.0]]), 1.0) == pytest.approx(expected)
        assert expected == pytest.approx(0.887096, abs=1e-6)

    def test_identical_sets_are_zero(self, rng):
        x = rng.standard_normal((40, 2))
        assert mmd(x, x.copy(), 1.0) == 0.0

    def test_symmetric(self, rng):
        x, y = rng.standard_normal((30, 2)), rng.standard_normal((45, 2)) + 1.0
        assert mmd(x, y, 0.7) == mmd(y, x, 0.7)

    def test_permutation_invariant(self, rng):
        x, y = rng.standard_normal((30, 2)), rng.standard_normal((25, 2))
        assert mmd(x, y, 1.3) == mmd(x[rng.permutation(30)], y[rng.permutation(25)], 1.3)

    def test_blocking_matches_single_pass(self, rng):
        x, y = rng.standard_normal((50, 2)), rng.standard_normal((60, 2)) + 0.5
        assert mmd(x, y, 1.0, block=7) == pytest.approx(mmd(x, y, 1.0, block=1024), rel=1e-12)

    def test_matches_naive_double_sum(self, rng):
        x, y = rng.standard_normal((20, 2)), rng.standard_normal((15, 2)) + 1.0
        h = 0.8

        def k(a, b):
            return math.exp(-float(np.sum((a - b) ** 2)) / (2 * h * h))

        kxx = sum(k(a, b) for a in x for b in x) / len(x) ** 2
        kyy = sum(k(a, b) for a in y for b in y) / len(y) ** 2
        kxy = sum(k(a, b) for a in x for b in y) / (len(x) * len(y))
        assert mmd(x, y, h) == pytest.approx(math.sqrt(kxx + kyy - 2 * kxy), abs=1e-12)

    def test_separated_sets_score_higher(self, rng):
        x = rng.standard_normal((100, 2))
        near, far = rng.standard_normal((100, 2)), rng.standard_normal((100, 2)) + 4.0
        assert mmd(x, far, 1.0) > mmd(x, near, 1.0)

    def test_bad_inputs(self):
        with pytest.raises(EvaluationError):
            mmd(np.zeros((2, 1)), np.zeros((2, 1)), 0.0)
        with pytest.raises(EvaluationError):
            mmd(np.zeros((0, 1)), np.zeros((2, 1)), 1.0)
        with pytest.raises(DimensionError):
            mmd(np.zeros((2, 1)), np.zeros((2, 2)), 1.0)


class TestBandwidth:
    def test_lower_median(self):
        assert median_bandwidth(np.array([[0.0], [1.0], [3.0]])) == 2.0

    def test_even_count_takes_lower_middle(self):
        # distances 1, 1, 2, 2, 3, 4 -> lower middle is 2
        points = np.array([[0.0], [1.0], [2.0], [4.0]])
        assert median_bandwidth(points) == 2.0

    def test_cap_limits_reference(self):
        points = np.array([[0.0], [1.0], [100.0]])
        assert median_bandwidth(points, cap=2) == 1.0

    def test_degenerate(self):
        with pytest.raises(EvaluationError):
            median_bandwidth(np.zeros((1, 2)))
        with pytest.raises(EvaluationError):
            median_bandwidth(np.zeros((5, 2)))

    def test_bandwidth_from_reference(self, rng):
        x = rng.standard_normal((20, 2))
        spec = make_mmd_spec(x)
        assert spec.bandwidth == median_bandwidth(x)
        assert mmd_with_spec(x, x, spec) == 0.0

import itertools
import math

import numpy as np
import pandas as pd
import pytest

from qdsb.core.exceptions import OracleSizeError
from qdsb.schemas.verification import RECORD_COLUMNS
from qdsb.services import verification_service
from qdsb.services.dataset_service import gen_eight_gaussians, gen_moons
from qdsb.services.verification_service import (
    check_coupling_stability,
    check_endpoint_bound,
    check_endpoint_pair,
    check_kcenter_approx,
    check_value_convergence,
    non_increasing,
    plan_distance,
    run_suite,
)
from tests.conftest import cloud_of

SMALL_SUITE = dict(
    endpoint_instances=6,
    endpoint_n=12,
    endpoint_k=(2, 3),
    kcenter_instances=3,
    kcenter_n=7,
    kcenter_k=2,
    value_n=32,
    value_grid=(1, 8, 32),
    coupling_n=6,
    coupling_grid=(1, 3, 6),
    coupling_seeds=3,
)


class TestEndpointBound:
    def test_line_example(self, line_cloud):
        record = check_endpoint_bound(line_cloud, 2, init_index=0)
        assert record.epsilon0 == pytest.approx(math.sqrt(1.0 / 3.0))
        assert record.r0 == 1.0
        assert record.W0 == pytest.approx(record.epsilon0, abs=1e-12)
        assert record.passed

    def test_every_point_an_anchor(self, rng):
        cloud = cloud_of(rng.standard_normal((9, 2)))
        record = check_endpoint_bound(cloud, 9, seed=1)
        assert record.epsilon0 == 0.0
        assert record.W0 == pytest.approx(0.0, abs=1e-12)
        assert record.passed

    def test_injected_fault_is_caught(self, rng):
        cloud = cloud_of(rng.standard_normal((10, 2)))
        record = check_endpoint_bound(cloud, 3, seed=2, inject_fault=True)
        assert not record.flags["endpoint_bound"]

    def test_pair_composition(self, rng):
        cloud0, cloud1 = cloud_of(rng.standard_normal((10, 2))), cloud_of(rng.standard_normal((10, 2)))
        record = check_endpoint_pair(cloud0, cloud1, 3, seed=4)
        assert record.delta_a == pytest.approx(math.hypot(record.epsilon0, record.epsilon1))
        assert record.delta_a <= math.hypot(record.r0, record.r1) + 1e-12
        assert record.passed

    def test_radius_violation_is_reported(self, line_cloud, monkeypatch):
        real = verification_service.quantize

        def inflated(*args, **kwargs):
            quant = real(*args, **kwargs)
            return quant.model_copy(update={"quant_error": 2.0 * quant.coverage_radius})

        monkeypatch.setattr(verification_service, "quantize", inflated)
        record = check_endpoint_bound(line_cloud, 2, init_index=0)
        assert "radius_bound" in record.violations

    def test_oracle_size_limit(self, rng):
        with pytest.raises(OracleSizeError):
            check_endpoint_bound(cloud_of(rng.standard_normal((65, 1))), 2)


class TestKCenter:
    def test_tight_instance(self):
        record = check_kcenter_approx(cloud_of([0.0, 1.0, 2.0, 10.0]), 2, init_index=0)
        assert record.greedy_radius == 2.0
        assert record.optimal_radius == 1.0
        assert record.ratio == 2.0
        assert record.passed

    def test_worst_case_over_inits(self):
        record = check_kcenter_approx(cloud_of([0.0, 1.0, 2.0, 10.0]), 2)
        assert record.ratio == 2.0

    def test_duplicate_points(self):
        record = check_kcenter_approx(cloud_of([1.0, 1.0, 1.0]), 2)
        assert record.ratio == 1.0

    def test_oracle_size_limit(self, rng):
        with pytest.raises(OracleSizeError):
            check_kcenter_approx(cloud_of(rng.standard_normal(13)), 2)


class TestValueConvergence:
    def test_gap_vanishes_at_full_resolution(self):
        cloud0, cloud1 = gen_eight_gaussians(32, 0), gen_moons(32, 1)
        records = check_value_convergence(cloud0, cloud1, [1, 8, 32], tau=0.125)
        assert [r.k for r in records] == [1, 8, 32]
        assert records[-1].value_gap <= 1e-8
        assert records[-1].flags["gap_shrinks"]
        assert all(r.passed for r in records)

    def test_oracle_size_limit(self):
        with pytest.raises(OracleSizeError):
            check_value_convergence(gen_moons(300, 0), gen_moons(300, 1), [1], tau=0.125)


class TestCouplingStability:
    def test_distance_vanishes_at_full_resolution(self, rng):
        cloud0 = cloud_of(rng.standard_normal((6, 2)))
        cloud1 = cloud_of(rng.standard_normal((6, 2)) + 2.0)
        records = check_coupling_stability(cloud0, cloud1, [1, 3, 6], tau=0.125, seeds=[0, 1])
        assert records[-1].plan_distance <= 1e-6
        assert records[0].plan_distance > records[-1].plan_distance
        assert all(r.passed for r in records)

    def test_default_grid_over_twenty_seeds(self):
        report = run_suite(endpoint_instances=0, kcenter_instances=0, value_n=0)
        records = [r for r in report.records if r.check == "coupling"]
        assert [r.k for r in records] == [1, 2, 5, 10]
        assert all(np.isfinite(r.plan_distance) for r in records)
        assert report.passed, report.violations

    def test_tiny_plan_entries_are_dropped(self):
        points = np.array([[0.0], [1.0]])
        plan = np.array([[0.5, 5e-41], [8e-32, 0.5]])
        assert plan_distance(plan, plan, points, points) == pytest.approx(0.0, abs=1e-12)

    def test_rising_distance_fails(self, rng, monkeypatch):
        distances = itertools.cycle([0.5, 0.2, 0.4])
        monkeypatch.setattr(verification_service, "plan_distance", lambda *args: next(distances))
        cloud0 = cloud_of(rng.standard_normal((6, 2)))
        cloud1 = cloud_of(rng.standard_normal((6, 2)) + 2.0)
        records = check_coupling_stability(cloud0, cloud1, [1, 3, 5], tau=0.125, seeds=[0, 1])
        assert records[-1].flags["plan_distance_non_increasing"] is False
        assert not records[-1].passed

    def test_non_increasing_slack(self):
        assert non_increasing([0.5, 0.5, 0.1])
        assert non_increasing([0.5, 0.51, 0.1])
        assert not non_increasing([0.5, 0.6, 0.1])


class TestSuite:
    def test_small_suite_passes(self, tmp_path):
        report = run_suite(**SMALL_SUITE)
        assert report.passed, report.violations
        families = {r.check for r in report.records}
        assert families == {"endpoint", "kcenter", "value", "coupling"}

        path = tmp_path / "verify.csv"
        report.to_csv(path)
        frame = pd.read_csv(path)
        assert list(frame.columns) == RECORD_COLUMNS
        assert frame["passed"].all()

    def test_fault_injection_fails(self):
        report = run_suite(**{**SMALL_SUITE, "kcenter_instances": 0, "value_n": 0, "coupling_seeds": 0},
                           inject_fault=True)
        assert not report.passed
        assert any("endpoint_bound0" in v for v in report.violations)

    def test_deterministic(self):
        scale = {**SMALL_SUITE, "value_n": 0, "coupling_seeds": 0}
        a, b = run_suite(**scale), run_suite(**scale)
        np.testing.assert_array_equal(
            a.to_frame()["W0"].to_numpy(), b.to_frame()["W0"].to_numpy()
        )

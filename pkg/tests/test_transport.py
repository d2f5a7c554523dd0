import itertools
import math

import numpy as np
import pytest

from qdsb.core.exceptions import DimensionError, MarginalError, TransportError
from qdsb.services.anchor_service import assign_cells, quantize
from qdsb.services.transport_service import (
    cost_matrix,
    dump_plan_tsv,
    exact_assignment_ot,
    exact_ot,
    kl_to_product,
    round_to_marginals,
    sinkhorn,
    wasserstein_via_expansion,
)
from tests.conftest import cloud_of


def _random_simplex(rng, size):
    w = rng.random(size) + 0.1
    return w / w.sum()


def _entropic(plan, cost, mu, nu, tau):
    return float(np.sum(plan * cost)) + tau * kl_to_product(plan, mu, nu)


class TestCostMatrix:
    def test_kinds(self):
        a = np.array([[0.0, 0.0]])
        b = np.array([[3.0, 4.0]])
        assert cost_matrix(a, b, "euclidean")[0, 0] == pytest.approx(5.0)
        assert cost_matrix(a, b, "sqeuclidean")[0, 0] == pytest.approx(25.0)

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionError):
            cost_matrix(np.zeros((2, 2)), np.zeros((2, 3)))


class TestSinkhorn:
    def test_two_by_two_example(self):
        cost = np.array([[0.0, 1.0], [1.0, 0.0]])
        half = np.array([0.5, 0.5])
        plan = sinkhorn(cost, half, half, tau=1.0)
        expected = 0.5 / (1.0 + math.exp(-1.0))
        assert plan.plan[0, 0] == pytest.approx(expected, abs=1e-9)
        assert plan.plan[0, 0] == pytest.approx(0.365529, abs=1e-6)
        assert plan.converged

    def test_large_tau_approaches_product(self, rng):
        cost = rng.random((4, 5))
        mu, nu = _random_simplex(rng, 4), _random_simplex(rng, 5)
        plan = sinkhorn(cost, mu, nu, tau=1e6)
        np.testing.assert_allclose(plan.plan, np.outer(mu, nu), atol=1e-4)

    def test_marginals_after_rounding(self, rng):
        cost = rng.random((6, 4)) * 5
        mu, nu = _random_simplex(rng, 6), _random_simplex(rng, 4)
        plan = sinkhorn(cost, mu, nu, tau=0.05)
        np.testing.assert_allclose(plan.plan.sum(axis=1), mu, atol=1e-12)
        np.testing.assert_allclose(plan.plan.sum(axis=0), nu, atol=1e-12)
        assert np.all(plan.plan >= 0)
        assert plan.marginal_error < 1e-10

    @pytest.mark.parametrize("shape", [(17, 9), (64, 128), (256, 256)])
    def test_marginals_on_larger_instances(self, rng, shape):
        x, y = rng.standard_normal((shape[0], 2)), rng.standard_normal((shape[1], 2)) + 1.0
        mu, nu = _random_simplex(rng, shape[0]), _random_simplex(rng, shape[1])
        plan = sinkhorn(cost_matrix(x, y), mu, nu, tau=0.125)
        l1 = np.abs(plan.plan.sum(axis=1) - mu).sum() + np.abs(plan.plan.sum(axis=0) - nu).sum()
        assert l1 < 1e-9
        assert plan.marginal_error < 1e-9

    def test_optimality_against_feasible_two_by_two_plans(self, rng):
        for _ in range(20):
            cost = rng.random((2, 2))
            mu, nu = _random_simplex(rng, 2), _random_simplex(rng, 2)
            tau = 0.3
            value = sinkhorn(cost, mu, nu, tau).entropic_value
            assert value <= _entropic(np.outer(mu, nu), cost, mu, nu, tau) + 1e-9
            lo = max(0.0, mu[0] + nu[0] - 1.0)
            hi = min(mu[0], nu[0])
            for weight in rng.random(100):
                p11 = lo + weight * (hi - lo)
                plan = np.array([[p11, mu[0] - p11], [nu[0] - p11, 1.0 - mu[0] - nu[0] + p11]])
                plan = np.clip(plan, 0.0, None)
                assert value <= _entropic(plan, cost, mu, nu, tau) + 1e-9

    def test_kl_non_increasing_in_tau(self, rng):
        for _ in range(5):
            cost = rng.random((5, 5))
            mu, nu = _random_simplex(rng, 5), _random_simplex(rng, 5)
            kls = [sinkhorn(cost, mu, nu, tau).kl for tau in (0.01, 0.1, 1.0, 10.0)]
            assert all(b <= a + 1e-9 for a, b in zip(kls, kls[1:]))

    def test_single_atom(self):
        plan = sinkhorn(np.array([[3.0]]), [1.0], [1.0], tau=0.5)
        assert plan.plan[0, 0] == 1.0
        assert plan.cost_value == 3.0

    def test_non_convergence_is_flagged(self, rng):
        cost = rng.random((8, 8)) * 50
        mu, nu = _random_simplex(rng, 8), _random_simplex(rng, 8)
        plan = sinkhorn(cost, mu, nu, tau=0.01, max_iter=2)
        assert not plan.converged
        assert plan.n_iter == 2
        np.testing.assert_allclose(plan.plan.sum(axis=1), mu, atol=1e-12)

    def test_rejects_bad_inputs(self):
        cost = np.zeros((2, 2))
        with pytest.raises(TransportError):
            sinkhorn(cost, [0.5, 0.5], [0.5, 0.5], tau=0.0)
        with pytest.raises(MarginalError):
            sinkhorn(cost, [0.5, 0.6], [0.5, 0.5], tau=1.0)
        with pytest.raises(MarginalError):
            sinkhorn(cost, [1.0, 0.0], [0.5, 0.5], tau=1.0)
        with pytest.raises(DimensionError):
            sinkhorn(np.zeros((2, 3)), [0.5, 0.5], [0.5, 0.5], tau=1.0)


class TestExact:
    def test_identity_matching(self, rng):
        x = rng.standard_normal((6, 2))
        plan = exact_assignment_ot(x, x)
        assert plan.matching.tolist() == list(range(6))
        assert plan.cost_value == 0.0

    def test_small_examples(self):
        x = np.array([[0.0], [1.0]])
        plan = exact_assignment_ot(x, np.array([[0.1], [0.9]]))
        assert plan.matching.tolist() == [0, 1]
        assert plan.cost_value == pytest.approx(0.01)
        swapped = exact_assignment_ot(x, np.array([[0.9], [0.1]]))
        assert swapped.matching.tolist() == [1, 0]
        assert swapped.cost_value == pytest.approx(0.01)

    def test_matches_enumeration(self, rng):
        for n in range(1, 7):
            x, y = rng.standard_normal((n, 2)), rng.standard_normal((n, 2))
            cost = cost_matrix(x, y)
            best = min(sum(cost[i, p[i]] for i in range(n)) / n for p in itertools.permutations(range(n)))
            assert exact_assignment_ot(x, y).cost_value == pytest.approx(best, abs=1e-12)

    def test_size_errors(self):
        with pytest.raises(TransportError):
            exact_assignment_ot(np.zeros((2, 1)), np.zeros((3, 1)))
        with pytest.raises(TransportError):
            exact_assignment_ot(np.zeros((0, 1)), np.zeros((0, 1)))

    def test_lp_agrees_with_assignment_on_uniform(self, rng):
        x, y = rng.standard_normal((5, 2)), rng.standard_normal((5, 2))
        uniform = np.full(5, 0.2)
        lp = exact_ot(cost_matrix(x, y), uniform, uniform)
        assert lp.cost_value == pytest.approx(exact_assignment_ot(x, y).cost_value, abs=1e-9)
        assert lp.tau == 0.0 and lp.entropic_value == lp.cost_value

    def test_lp_lower_bounds_entropic_cost(self, rng):
        cost = rng.random((4, 6))
        mu, nu = _random_simplex(rng, 4), _random_simplex(rng, 6)
        assert exact_ot(cost, mu, nu).cost_value <= sinkhorn(cost, mu, nu, 0.1).cost_value + 1e-9


class TestExpansion:
    def test_line_example(self, line_cloud):
        quant = assign_cells(line_cloud, [0, 2])
        assert wasserstein_via_expansion(line_cloud, quant) == pytest.approx(math.sqrt(1 / 3))

    def test_k_equals_n_is_zero(self, rng):
        cloud = cloud_of(rng.standard_normal((10, 2)))
        quant = quantize(cloud, 10, seed=0)
        assert wasserstein_via_expansion(cloud, quant) == pytest.approx(0.0, abs=1e-12)

    def test_bounded_by_quantization_error(self, rng):
        for trial in range(20):
            cloud = cloud_of(rng.standard_normal((32, 2)))
            quant = quantize(cloud, 2 + trial % 7, seed=trial)
            assert wasserstein_via_expansion(cloud, quant) <= quant.quant_error + 1e-10


def test_round_to_marginals_repairs_mass(rng):
    mu, nu = _random_simplex(rng, 3), _random_simplex(rng, 4)
    rounded = round_to_marginals(rng.random((3, 4)), mu, nu)
    np.testing.assert_allclose(rounded.sum(axis=1), mu, atol=1e-14)
    np.testing.assert_allclose(rounded.sum(axis=0), nu, atol=1e-14)


def test_dump_plan_tsv(tmp_path):
    cost = np.array([[0.0, 1.0], [1.0, 0.0]])
    plan = exact_ot(cost, [0.5, 0.5], [0.5, 0.5])
    path = tmp_path / "plan.tsv"
    dump_plan_tsv(plan, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "row\tcol\tmass"
    assert len(lines) == 3

import math

import numpy as np
import pytest

from src.errors import ScaleCapError, StepDownError
from src.sim.multitest import (
    CriticalValueOracle,
    DataMatrix,
    Decision,
    TestStatistics,
    bootstrap_statistics,
    compute_test_statistics,
    critical_value,
    monotonicity_violations,
    quantile_rank,
    random_nested_pairs,
    stepdown_kfwer,
)


class StubOracle:
    """ĉ_K = max over K of fixed per-index constants"""

    def __init__(self, constants, k=1, alpha=0.05):
        self.constants = np.asarray(constants, dtype=float)
        self.k = k
        self.alpha = alpha
        self.p = len(constants)

    def critical_value(self, index_set):
        return float(self.constants[list(index_set)].max())


def max_t_stepdown(t, boot, alpha):
    """Textbook single-step-at-a-time max-T procedure, for comparison at k = 1"""
    b = boot.shape[0]
    rank = math.ceil(round((1 - alpha) * b, 9))
    active = list(range(len(t)))
    rejected = set()
    while active:
        maxima = np.sort(boot[:, active].max(axis=1))
        threshold = maxima[rank - 1]
        newly = [j for j in active if t[j] > threshold]
        if not newly:
            break
        rejected.update(newly)
        active = [j for j in active if j not in rejected]
    return rejected


class TestStatisticsAndData:
    def test_zero_column(self):
        assert np.array_equal(compute_test_statistics(DataMatrix(np.zeros((4, 2)))).t, [0.0, 0.0])

    def test_constant_column(self):
        assert np.array_equal(compute_test_statistics(DataMatrix(np.ones((4, 3)))).t, [2.0, 2.0, 2.0])

    def test_matches_compensated_sum(self, rng):
        u = rng.standard_normal((500, 6)) * 1e3
        t = compute_test_statistics(DataMatrix(u)).t
        expected = [math.fsum(u[:, j]) / math.sqrt(500) for j in range(6)]
        assert np.allclose(t, expected, rtol=1e-12, atol=1e-9)

    @pytest.mark.parametrize("shape", [(1, 3), (5, 0)])
    def test_data_shape_invariants(self, shape):
        with pytest.raises(ValueError):
            DataMatrix(np.zeros(shape))

    def test_statistics_must_be_finite(self):
        with pytest.raises(ValueError):
            TestStatistics(np.array([1.0, np.inf]))


class TestBootstrap:
    def test_identical_rows_give_zero(self, rng):
        data = DataMatrix(np.tile([1.0, -2.0, 3.5], (10, 1)))
        assert np.all(bootstrap_statistics(data, 200, rng) == 0)

    def test_centered(self, rng):
        data = DataMatrix(rng.standard_normal((60, 4)) + 3.0)
        boot = bootstrap_statistics(data, 2000, rng)
        assert boot.shape == (2000, 4)
        sd = boot.std(axis=0)
        assert np.all(np.abs(boot.mean(axis=0)) <= 4 * sd / math.sqrt(2000))

    def test_deterministic(self):
        data = DataMatrix(np.arange(40, dtype=float).reshape(10, 4))
        a = bootstrap_statistics(data, 150, np.random.Generator(np.random.PCG64(9)))
        b = bootstrap_statistics(data, 150, np.random.Generator(np.random.PCG64(9)))
        assert np.array_equal(a, b)

    def test_minimum_replications(self, rng):
        with pytest.raises(ValueError):
            bootstrap_statistics(DataMatrix(np.zeros((5, 2))), 99, rng)


class TestCriticalValue:
    def test_quantile_definition(self, rng):
        boot = rng.standard_normal((100, 3))
        oracle = CriticalValueOracle(boot, 0.05, 1)
        assert oracle.rank == 95
        assert critical_value(oracle, [0, 1, 2]) == np.sort(boot.max(axis=1))[94]

    def test_rank_guards_representation_error(self):
        assert quantile_rank(0.1, 500) == 450
        assert quantile_rank(0.3, 10) == 7

    def test_cached_regardless_of_order(self, rng):
        oracle = CriticalValueOracle(rng.standard_normal((200, 5)), 0.1, 2)
        first = oracle.critical_value([4, 0, 2])
        assert oracle.critical_value((2, 4, 0)) == first
        assert len(oracle.cache) == 1

    def test_k_equal_to_set_size_is_minimum(self, rng):
        boot = rng.standard_normal((300, 6))
        oracle = CriticalValueOracle(boot, 0.1, 3)
        expected = np.sort(boot[:, [1, 3, 5]].min(axis=1))[quantile_rank(0.1, 300) - 1]
        assert oracle.critical_value([1, 3, 5]) == expected

    def test_set_smaller_than_k(self, rng):
        oracle = CriticalValueOracle(rng.standard_normal((100, 4)), 0.1, 3)
        with pytest.raises(StepDownError):
            oracle.critical_value([0, 1])

    def test_monotone_on_nested_pairs(self, rng):
        oracle = CriticalValueOracle(rng.standard_normal((500, 12)), 0.1, 2)
        pairs = random_nested_pairs(12, 2, 100, rng)
        assert len(pairs) == 100
        for inner, outer in pairs:
            assert set(inner) < set(outer)
            assert len(inner) >= 2
        assert monotonicity_violations(oracle, pairs) == 0

    def test_check_monotone_requires_subset(self, rng):
        oracle = CriticalValueOracle(rng.standard_normal((100, 4)), 0.1, 1)
        with pytest.raises(ValueError):
            oracle.check_monotone([0, 3], [0, 1, 2])


class TestStepDown:
    def test_no_rejections(self, rng):
        oracle = CriticalValueOracle(rng.standard_normal((200, 4)), 0.1, 2)
        result = stepdown_kfwer(TestStatistics(np.full(4, -5.0)), oracle, 2, 0.1)
        assert result.rejected == frozenset()
        assert len(result.trace) == 1
        assert result.decisions == [Decision.FAIL_TO_REJECT] * 4

    def test_everything_rejected(self, rng):
        oracle = CriticalValueOracle(rng.standard_normal((200, 5)), 0.1, 2)
        result = stepdown_kfwer(TestStatistics(np.full(5, 1e6)), oracle, 2, 0.1)
        assert result.rejected == frozenset(range(5))
        assert len(result.trace) <= 5
        assert result.decisions == [Decision.REJECT] * 5

    def test_hand_traced_holm_style(self):
        oracle = StubOracle([1.0, 2.0, 3.0])
        result = stepdown_kfwer(TestStatistics(np.array([1.5, 2.5, 3.5])), oracle, 1, 0.05)
        assert [step.critical_value for step in result.trace] == [3.0, 2.0, 1.0]
        assert [step.newly_rejected for step in result.trace] == [(2,), (1,), (0,)]
        assert result.rejected == frozenset({0, 1, 2})

    def test_hand_traced_stop(self):
        oracle = StubOracle([1.0, 2.0, 3.0])
        result = stepdown_kfwer(TestStatistics(np.array([0.5, 2.5, 3.5])), oracle, 1, 0.05)
        assert result.rejected == frozenset({1, 2})
        assert [step.critical_value for step in result.trace] == [3.0, 2.0, 1.0]
        assert result.trace[-1].newly_rejected == ()

    def test_trace_invariants(self, rng):
        for _ in range(50):
            boot = rng.standard_normal((200, 8))
            oracle = CriticalValueOracle(boot, 0.1, 3)
            result = stepdown_kfwer(TestStatistics(rng.standard_normal(8) * 3), oracle, 3, 0.1)
            crits = [step.critical_value for step in result.trace]
            assert all(a >= b for a, b in zip(crits, crits[1:]))
            newly = [set(step.newly_rejected) for step in result.trace]
            assert sum(len(s) for s in newly) == len(result.rejected)
            assert set().union(*newly) == set(result.rejected)

    def test_larger_statistics_never_shrink_rejections(self, rng):
        for _ in range(50):
            oracle = CriticalValueOracle(rng.standard_normal((200, 6)), 0.1, 2)
            t = rng.standard_normal(6) * 2
            bumped = t.copy()
            bumped[int(rng.integers(6))] += abs(rng.standard_normal()) + 0.5
            base = stepdown_kfwer(TestStatistics(t), oracle, 2, 0.1).rejected
            more = stepdown_kfwer(TestStatistics(bumped), oracle, 2, 0.1).rejected
            assert base <= more

    def test_strict_inequality(self):
        oracle = StubOracle([1.0, 1.0])
        result = stepdown_kfwer(TestStatistics(np.array([1.0, 1.0])), oracle, 1, 0.05)
        assert result.rejected == frozenset()

    def test_mismatched_oracle(self, rng):
        oracle = CriticalValueOracle(rng.standard_normal((100, 3)), 0.1, 2)
        with pytest.raises(StepDownError):
            stepdown_kfwer(TestStatistics(np.zeros(3)), oracle, 1, 0.1)
        with pytest.raises(StepDownError):
            stepdown_kfwer(TestStatistics(np.zeros(4)), oracle, 2, 0.1)

    def test_subset_cap(self):
        constants = np.zeros(40)
        t = np.r_[np.ones(35), -np.ones(5)]
        with pytest.raises(ScaleCapError):
            stepdown_kfwer(TestStatistics(t), StubOracle(constants, k=6), 6, 0.05)

    def test_k_one_matches_max_t(self, rng):
        for _ in range(100):
            data = DataMatrix(rng.standard_normal((50, 5)) + rng.uniform(-0.2, 0.6, size=5))
            t = compute_test_statistics(data)
            boot = bootstrap_statistics(data, 200, rng)
            oracle = CriticalValueOracle(boot, 0.1, 1)
            assert set(stepdown_kfwer(t, oracle, 1, 0.1).rejected) == max_t_stepdown(t.t, boot, 0.1)

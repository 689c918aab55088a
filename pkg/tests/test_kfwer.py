import numpy as np
import pytest

from src.errors import StepDownError
from src.sim.gauss_core import build_covariance
from src.sim.kfwer import (
    KfwerScenario,
    estimate_bound_inputs,
    kfwer_upper_bound,
    level_tolerance,
    simulate_kfwer,
)


def scenario(mu=0.0, family="identity", p=4, params=(), k=2, n=40, alpha=0.1, b=100, n_sim=40, seed=3):
    return KfwerScenario(mu=mu, model=build_covariance(family, p, params), n=n, k=k, alpha=alpha, b=b,
                         n_sim=n_sim, seed=seed)


class TestUpperBound:
    def test_perfect_critical_values(self):
        assert kfwer_upper_bound(0.1, 2, 0.0, 123.0, 0.0) == 0.1

    def test_formula(self):
        assert kfwer_upper_bound(0.05, 1, 0.01, 2.0, 0.01) == pytest.approx(0.12, abs=1e-15)

    def test_rejects_negative_inputs(self):
        with pytest.raises(ValueError):
            kfwer_upper_bound(0.1, 1, -0.01, 1.0, 0.0)
        with pytest.raises(ValueError):
            kfwer_upper_bound(1.0, 1, 0.0, 1.0, 0.0)


class TestScenario:
    def test_scalar_mu_broadcast(self):
        s = scenario(mu=0.0, p=3, k=1)
        assert s.mu.shape == (3,)
        assert s.true_nulls == (0, 1, 2)

    def test_true_nulls(self):
        s = scenario(mu=[0.0, 0.5, -1.0, 2.0])
        assert s.true_nulls == (0, 2)

    @pytest.mark.parametrize("kwargs", [{"alpha": 1.0}, {"k": 5}, {"n": 1}, {"n_sim": 0}])
    def test_invalid(self, kwargs):
        with pytest.raises(ValueError):
            scenario(**kwargs)


class TestSimulate:
    def test_far_negative_means_never_reject(self):
        result = simulate_kfwer(scenario(mu=-10.0, n=100, n_sim=30))
        assert result.kfwer_hat == 0.0
        assert result.mean_rejections == 0.0
        assert len(result.traces) == 30

    def test_all_false_nulls_have_no_false_rejections(self):
        result = simulate_kfwer(scenario(mu=1.0, n_sim=10))
        assert result.kfwer_hat == 0.0
        assert result.mean_false_rejections == 0.0
        assert result.mean_rejections > 0
        assert result.null_critical_values.size == 0

    def test_level_control_when_every_hypothesis_must_fail(self):
        s = scenario(p=2, k=2, n_sim=200)
        result = simulate_kfwer(s)
        assert result.kfwer_hat <= level_tolerance(0.1, 200)

    def test_worker_count_does_not_change_results(self):
        serial = simulate_kfwer(scenario(mu=0.0, family="equicorrelated", params=[0.5], n_sim=12), workers=1)
        threaded = simulate_kfwer(scenario(mu=0.0, family="equicorrelated", params=[0.5], n_sim=12), workers=4)
        assert serial.kfwer == threaded.kfwer
        assert [t.rejected for t in serial.traces] == [t.rejected for t in threaded.traces]
        assert np.array_equal(serial.null_critical_values, threaded.null_critical_values)

    def test_monotonicity_audit(self):
        result = simulate_kfwer(scenario(p=8, k=2, n_sim=3))
        assert result.audit == {"pairs": 100, "violations": 0}

    def test_false_rejections_count_only_true_nulls(self):
        s = scenario(mu=[0.0, 0.0, 3.0, 3.0], k=1, n=60, n_sim=20)
        result = simulate_kfwer(s)
        for outcome in result.replicates:
            assert outcome.false_rejections == len(outcome.result.rejected & {0, 1})

    @pytest.mark.slow
    @pytest.mark.parametrize("family,params", [("identity", []), ("equicorrelated", [0.5])])
    def test_acceptance_level_control(self, family, params):
        s = scenario(family=family, params=params, p=10, k=2, n=100, alpha=0.1, b=500, n_sim=2000, seed=17)
        result = simulate_kfwer(s, workers=8)
        assert result.kfwer_hat <= 0.13
        assert result.audit["violations"] == 0


class TestBoundInputs:
    def test_bound_dominates_empirical_rate(self):
        s = scenario(p=5, k=2, n=50, n_sim=60)
        result = simulate_kfwer(s)
        inputs = estimate_bound_inputs(s, result, n_direct=50_000, gamma_level=0.9)
        assert inputs.gamma >= 0
        assert 0 <= inputs.delta <= 1
        assert inputs.bound == pytest.approx(
            kfwer_upper_bound(0.1, 2, inputs.gamma, inputs.e_max_norm.mean, inputs.delta))
        assert inputs.bound >= result.kfwer_hat - 3 * result.se

    def test_needs_enough_true_nulls(self):
        s = scenario(mu=[0.0, 1.0, 1.0, 1.0], k=2, n_sim=5)
        result = simulate_kfwer(s)
        with pytest.raises(StepDownError):
            estimate_bound_inputs(s, result, n_direct=20_000)

    def test_direct_draw_floor(self):
        s = scenario(n_sim=5)
        result = simulate_kfwer(s)
        with pytest.raises(ValueError):
            estimate_bound_inputs(s, result, n_direct=100)

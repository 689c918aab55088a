import numpy as np
import pytest

from src.errors import DiagnosticError
from src.sim.base_diagnostics import BaseDiagnostic, DiagnosticReport
from src.sim.diagnostics import (
    density_mills_check,
    dkw_max_check,
    draw_order_statistics,
    gtilde_monotonicity_check,
    histogram_density,
    reduction_chain_check,
)


class TestHistogramDensity:
    def test_integrates_to_band_mass(self, rng):
        hist = histogram_density(rng.standard_normal(200_000), 20)
        mass = hist["density"].sum() * hist["width"]
        assert mass == pytest.approx(0.98, abs=0.005)
        assert np.all(hist["se"] > 0)

    def test_sparse_bins_rejected(self, rng):
        with pytest.raises(DiagnosticError, match="need at least 50"):
            histogram_density(rng.standard_normal(1000), 40)


class TestOrderStatisticDraws:
    def test_shared_draws_are_ordered(self, sampler_factory, streams):
        draws = draw_order_statistics(sampler_factory("identity", 5), 2, 20_000, streams)
        assert np.all(draws["kmax"] <= draws["ktilde"])
        assert np.all(draws["ktilde"] <= draws["max"])


class TestGTildeMonotonicity:
    def test_flat_in_one_dimension(self, sampler_factory, streams):
        report = gtilde_monotonicity_check(sampler_factory("identity", 1), 1, 200_000, streams, bins=20)
        assert report.passed
        g = np.array(report.bins["g_hat"])
        assert np.all(np.abs(g - 1.0) < 5 * np.array(report.bins["g_se"]) + 0.02)

    def test_identity_passes(self, sampler_factory, streams):
        report = gtilde_monotonicity_check(sampler_factory("identity", 8), 2, 200_000, streams, bins=30)
        assert report.passed
        assert report.statistic <= 0

    def test_requires_enough_draws(self, sampler_factory, streams):
        with pytest.raises(DiagnosticError):
            gtilde_monotonicity_check(sampler_factory("identity", 2), 1, 50_000, streams)

    @pytest.mark.slow
    @pytest.mark.parametrize("family,params", [("identity", []), ("equicorrelated", [0.9])])
    @pytest.mark.parametrize("k", [2, 3])
    def test_acceptance(self, sampler_factory, streams, family, params, k):
        report = gtilde_monotonicity_check(sampler_factory(family, 8, params), k, 1_000_000, streams,
                                           bins=40, workers=4)
        assert report.passed


class TestDensityMills:
    def test_identity_passes(self, sampler_factory, streams):
        report = density_mills_check(sampler_factory("identity", 4), 2, 200_000, streams, bins=30)
        assert report.passed
        assert report.details["ordering_violations"] == 0

    def test_univariate_equality_case(self, sampler_factory, streams):
        report = density_mills_check(sampler_factory("identity", 1), 1, 200_000, streams, bins=20)
        assert report.passed
        density = np.array(report.bins["density"])
        bound = np.array(report.bins["mills_bound"])
        assert np.allclose(density, bound, atol=0.06)

    def test_correlated(self, sampler_factory, streams):
        report = density_mills_check(sampler_factory("ar1", 16, [0.7]), 4, 200_000, streams, bins=30)
        assert report.passed

    @pytest.mark.slow
    @pytest.mark.parametrize("family,params", [("identity", []), ("equicorrelated", [0.9])])
    @pytest.mark.parametrize("k", [2, 3])
    def test_acceptance(self, sampler_factory, streams, family, params, k):
        report = density_mills_check(sampler_factory(family, 8, params), k, 1_000_000, streams,
                                     bins=40, workers=4)
        assert report.passed


class TestReductionChain:
    def test_passes(self, sampler_factory, streams):
        report = reduction_chain_check(sampler_factory("equicorrelated", 6, [0.5]), 3, 0.1, 50_000, streams)
        assert report.passed

    def test_k_one_is_identity(self, sampler_factory, streams):
        report = reduction_chain_check(sampler_factory("identity", 3), 1, 0.1, 20_000, streams)
        assert report.passed
        assert report.statistic <= 0


class TestDkwMax:
    def test_identity(self, sampler_factory, streams):
        report = dkw_max_check(sampler_factory("identity", 8), 50_000, streams)
        assert report.passed
        assert report.details["ks_distance"] <= report.details["dkw_band"]

    def test_requires_identity(self, sampler_factory, streams):
        with pytest.raises(DiagnosticError):
            dkw_max_check(sampler_factory("ar1", 4, [0.5]), 10_000, streams)


class _Broken(BaseDiagnostic):
    name = "broken"

    def _check(self, sampler, k, m, rng, workers, **options):
        raise RuntimeError("boom")


class _Strict(BaseDiagnostic):
    name = "strict"

    def _check(self, sampler, k, m, rng, workers, **options):
        raise DiagnosticError("not enough draws")


def test_unexpected_errors_become_failed_reports(sampler_factory, streams):
    report = _Broken().check(sampler_factory("identity", 2), 1, 10, streams)
    assert isinstance(report, DiagnosticReport)
    assert not report.passed
    assert np.isnan(report.statistic)
    assert "boom" in report.issues[0]["message"]


def test_precondition_errors_propagate(sampler_factory, streams):
    with pytest.raises(DiagnosticError):
        _Strict().check(sampler_factory("identity", 2), 1, 10, streams)

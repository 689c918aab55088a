"""Monte Carlo diagnostics for the density factorization of the randomized statistic.

Histograms use fixed-width bins between the 1% and 99% empirical quantiles of
k-t̃ilde-max, with exact binomial standard errors per bin. Tails outside that
band are not tested.
"""
import logging
import math
from typing import Dict, Optional, Tuple

import numpy as np
from scipy import stats
from sklearn.isotonic import IsotonicRegression

from ..errors import DiagnosticError
from .anticonc import Grid, MIN_DRAWS
from .base_diagnostics import BaseDiagnostic, DiagnosticReport
from .bounds import mills_ratio
from .gauss_core import Family, GaussianSampler, map_blocks
from .order_stats import k_max_rows, k_tilde_max_rows
from .streams import RandomStreams

logger = logging.getLogger(__name__)

MIN_DIAGNOSTIC_DRAWS = 100_000
MIN_BIN_COUNT = 50
DEFAULT_BINS = 40
QUANTILE_BAND = (0.01, 0.99)
DKW_LEVEL = 0.001


def draw_order_statistics(sampler: GaussianSampler, k: int, m: int, rng: RandomStreams,
                          workers: int = 1) -> Dict[str, np.ndarray]:
    """k-t̃ilde-max, k-max and max of the same M draws"""

    def block_stats(block: np.ndarray, aux: np.random.Generator) -> Tuple[np.ndarray, ...]:
        return k_tilde_max_rows(block, k, aux), k_max_rows(block, k), np.max(block, axis=1)

    parts = map_blocks(sampler, m, block_stats, rng.child("order_statistics", k), workers)
    return {
        "ktilde": np.concatenate([part[0] for part in parts]),
        "kmax": np.concatenate([part[1] for part in parts]),
        "max": np.concatenate([part[2] for part in parts]),
    }


def histogram_density(values: np.ndarray, bins: int,
                      band: Tuple[float, float] = QUANTILE_BAND) -> Dict[str, np.ndarray]:
    """Fixed-width histogram density on the inner quantile band, with binomial SEs"""
    m = values.size
    lo, hi = np.quantile(values, band)
    edges = np.linspace(lo, hi, bins + 1)
    counts, _ = np.histogram(values, bins=edges)
    if counts.min() < MIN_BIN_COUNT:
        sparse = int(np.argmin(counts))
        raise DiagnosticError(
            f"bin {sparse} [{edges[sparse]:.4f}, {edges[sparse + 1]:.4f}) holds {counts[sparse]} draws,"
            f" need at least {MIN_BIN_COUNT}"
        )
    width = edges[1] - edges[0]
    density = counts / (m * width)
    se = np.sqrt(counts * (1.0 - counts / m)) / (m * width)
    return {"edges": edges, "mids": 0.5 * (edges[:-1] + edges[1:]), "counts": counts,
            "density": density, "se": se, "width": width}


def _validate(m: int, bins: int) -> None:
    if m < MIN_DIAGNOSTIC_DRAWS:
        raise DiagnosticError(f"need M >= {MIN_DIAGNOSTIC_DRAWS} draws, got {m}")
    if bins < 2:
        raise DiagnosticError(f"need at least 2 bins, got {bins}")


class GTildeMonotonicityCheck(BaseDiagnostic):
    """Ĝ(y) = f̂(y)/φ(y) must be nondecreasing up to Monte Carlo noise"""

    name = "gtilde_monotonicity"

    def _check(self, sampler, k, m, rng, workers, bins: int = DEFAULT_BINS, **options) -> DiagnosticReport:
        _validate(m, bins)
        values = draw_order_statistics(sampler, k, m, rng, workers)["ktilde"]
        hist = histogram_density(values, bins)

        # Dividing by the bin average of φ keeps a flat G flat after binning
        edges = hist["edges"]
        phi_bar = np.diff(stats.norm.cdf(edges)) / hist["width"]
        g_hat = hist["density"] / phi_bar
        g_se = hist["se"] / phi_bar

        fitted = IsotonicRegression(increasing=True).fit_transform(
            hist["mids"], g_hat, sample_weight=1.0 / g_se ** 2
        )
        violation = g_hat - fitted
        excess = violation - 3.0 * g_se
        worst = int(np.argmax(excess))

        issues = [
            {'severity': 'high', 'message': f'G decreases beyond noise near y={hist["mids"][i]:.4f}'}
            for i in np.flatnonzero(excess > 0)
        ]
        return DiagnosticReport(
            name=self.name,
            passed=bool(excess[worst] <= 0),
            statistic=float(excess[worst]),
            n_draws=m,
            issues=issues,
            bins={
                "y": hist["mids"].tolist(),
                "g_hat": g_hat.tolist(),
                "g_isotonic": fitted.tolist(),
                "g_se": g_se.tolist(),
            },
            details={"max_violation": float(np.max(violation)), "band_at_max": float(3.0 * g_se[worst]),
                     "bins": bins, "range": [float(edges[0]), float(edges[-1])]},
        )


class DensityMillsCheck(BaseDiagnostic):
    """f̂(y) ≤ M(y)·P̂(max(X) ≥ y) + 3·SE on every bin"""

    name = "density_mills"

    def _check(self, sampler, k, m, rng, workers, bins: int = DEFAULT_BINS, **options) -> DiagnosticReport:
        _validate(m, bins)
        draws = draw_order_statistics(sampler, k, m, rng, workers)
        hist = histogram_density(draws["ktilde"], bins)
        sorted_max = np.sort(draws["max"])
        sorted_tilde = np.sort(draws["ktilde"])

        def upper_tail(sorted_values: np.ndarray, y: np.ndarray) -> np.ndarray:
            return (sorted_values.size - np.searchsorted(sorted_values, y, side="left")) / sorted_values.size

        # The bound is evaluated at both edges and the midpoint; its largest value
        # bounds the bin average of the density.
        edges = hist["edges"]
        points = np.stack([edges[:-1], hist["mids"], edges[1:]])
        tail = upper_tail(sorted_max, points)
        rhs = mills_ratio(points) * tail
        pick = np.argmax(rhs, axis=0)
        cols = np.arange(bins)
        rhs_best = rhs[pick, cols]
        tail_se = np.sqrt(tail[pick, cols] * (1.0 - tail[pick, cols]) / m)
        combined_se = np.sqrt(hist["se"] ** 2 + (mills_ratio(points[pick, cols]) * tail_se) ** 2)

        excess = hist["density"] - rhs_best - 3.0 * combined_se
        worst = int(np.argmax(excess))

        # k-t̃ilde-max never exceeds max, draw by draw
        ordering_violations = int(np.count_nonzero(
            upper_tail(sorted_tilde, edges) > upper_tail(sorted_max, edges)
        ))

        issues = [
            {'severity': 'high', 'message': f'density exceeds Mills bound near y={hist["mids"][i]:.4f}'}
            for i in np.flatnonzero(excess > 0)
        ]
        if ordering_violations:
            issues.append({'severity': 'high',
                           'message': f'{ordering_violations} grid points with P(ktilde >= y) > P(max >= y)'})
        return DiagnosticReport(
            name=self.name,
            passed=bool(excess[worst] <= 0 and ordering_violations == 0),
            statistic=float(excess[worst]),
            n_draws=m,
            issues=issues,
            bins={
                "y": hist["mids"].tolist(),
                "density": hist["density"].tolist(),
                "mills_bound": rhs_best.tolist(),
                "se": combined_se.tolist(),
            },
            details={"worst_margin": float(-excess[worst]), "ordering_violations": ordering_violations,
                     "bins": bins, "range": [float(edges[0]), float(edges[-1])]},
        )


class ReductionChainCheck(BaseDiagnostic):
    """Pr(k-max ∈ I) ≤ k·Pr(k-t̃ilde-max ∈ I) on every grid window, from one shared batch"""

    name = "reduction_chain"

    def _check(self, sampler, k, m, rng, workers, epsilon: float = 0.1,
               grid: Optional[Grid] = None, **options) -> DiagnosticReport:
        if m < MIN_DRAWS:
            raise DiagnosticError(f"need M >= {MIN_DRAWS} draws, got {m}")
        grid = grid or Grid.default(sampler.p, epsilon)
        grid.validate(sampler.p, epsilon)
        draws = draw_order_statistics(sampler, k, m, rng, workers)
        ys = grid.points()

        def window_probs(values: np.ndarray) -> np.ndarray:
            s = np.sort(values)
            return (np.searchsorted(s, ys + epsilon, side="right") - np.searchsorted(s, ys, side="left")) / m

        p_kmax = window_probs(draws["kmax"])
        p_tilde = window_probs(draws["ktilde"])
        se = np.sqrt(p_kmax * (1 - p_kmax) / m + k * k * p_tilde * (1 - p_tilde) / m)
        excess = p_kmax - k * p_tilde - 3.0 * se
        worst = int(np.argmax(excess))
        return DiagnosticReport(
            name=self.name,
            passed=bool(excess[worst] <= 0),
            statistic=float(excess[worst]),
            n_draws=m,
            details={"epsilon": epsilon, "y_at_worst": float(ys[worst]), "grid_points": int(ys.size)},
        )


def gtilde_monotonicity_check(sampler: GaussianSampler, k: int, m: int, rng: RandomStreams,
                              bins: int = DEFAULT_BINS, workers: int = 1) -> DiagnosticReport:
    return GTildeMonotonicityCheck().check(sampler, k, m, rng, workers, bins=bins)


def density_mills_check(sampler: GaussianSampler, k: int, m: int, rng: RandomStreams,
                        bins: int = DEFAULT_BINS, workers: int = 1) -> DiagnosticReport:
    return DensityMillsCheck().check(sampler, k, m, rng, workers, bins=bins)


def reduction_chain_check(sampler: GaussianSampler, k: int, epsilon: float, m: int, rng: RandomStreams,
                          grid: Optional[Grid] = None, workers: int = 1) -> DiagnosticReport:
    return ReductionChainCheck().check(sampler, k, m, rng, workers, epsilon=epsilon, grid=grid)


def dkw_max_check(sampler: GaussianSampler, n: int, rng: RandomStreams, workers: int = 1) -> DiagnosticReport:
    """Empirical CDF of max(X) under Σ = I_p against Φ(y)^p inside the DKW band"""
    if sampler.model.family is not Family.IDENTITY:
        raise DiagnosticError("the max-CDF comparison needs an identity covariance")
    p = sampler.p
    values = np.concatenate(map_blocks(sampler, n, lambda b, _aux: np.max(b, axis=1), rng.child("dkw"), workers))
    distance = float(stats.kstest(values, lambda y: stats.norm.cdf(y) ** p).statistic)
    band = math.sqrt(math.log(2.0 / DKW_LEVEL) / (2.0 * n))
    return DiagnosticReport(
        name="dkw_max",
        passed=distance <= band,
        statistic=distance - band,
        n_draws=n,
        details={"ks_distance": distance, "dkw_band": band},
    )

"""Monte Carlo estimators for interval-hitting probabilities and bound inputs."""
from dataclasses import asdict, dataclass, field
from itertools import combinations
import logging
import math
from typing import Any, Dict, Optional, Tuple

import numpy as np

from ..errors import GridError, ScaleCapError
from ..models.results import MeanEstimate
from .bounds import nazarov_bound, theorem1_bound
from .gauss_core import GaussianSampler, map_blocks
from .order_stats import k_max_rows, k_tilde_max_rows
from .streams import RandomStreams

logger = logging.getLogger(__name__)

MIN_DRAWS = 10_000
ANCHORED_MAX_DRAWS = 1_000_000
SUBSET_CAP = 200_000
W_BATCHES = 20
W_MAX_DRAWS = 100_000
_CHUNK_ELEMENTS = 5_000_000
STATISTICS = ("kmax", "ktilde")


def required_halfwidth(p: int) -> float:
    """√(2 ln 2p) + 2, the half-width every sup-grid must cover"""
    return math.sqrt(2.0 * math.log(2.0 * p)) + 2.0


@dataclass(frozen=True)
class Grid:
    """Left endpoints y of the windows [y, y+ε]"""
    y_min: float
    y_max: float
    step: float

    @classmethod
    def default(cls, p: int, epsilon: float) -> 'Grid':
        half = required_halfwidth(p)
        return cls(y_min=-half, y_max=half, step=epsilon / 4.0)

    def points(self) -> np.ndarray:
        count = int(math.floor((self.y_max - self.y_min) / self.step + 1e-9)) + 1
        return self.y_min + self.step * np.arange(count)

    def validate(self, p: int, epsilon: float) -> None:
        half = required_halfwidth(p)
        if self.step <= 0:
            raise GridError(f"grid step must be positive, got {self.step}")
        if self.y_min > -half or self.y_max < half:
            raise GridError(
                f"grid [{self.y_min}, {self.y_max}] narrower than required [-{half:.6f}, {half:.6f}]"
            )
        if self.step > epsilon / 4.0 * (1 + 1e-12):
            raise GridError(f"grid step {self.step} coarser than epsilon/4 = {epsilon / 4.0}")

    def to_dict(self) -> Dict[str, float]:
        return asdict(self)


@dataclass(frozen=True)
class ConcentrationEstimate:
    """Estimated sup_y Pr(statistic ∈ [y, y+ε]) with the binomial SE at the maximizing window"""
    sup_hat: float
    argmax_y: float
    epsilon: float
    k: int
    grid: Grid
    n_draws: int
    se: float
    statistic: str = "kmax"


@dataclass
class BoundReport:
    """The 2εk(1 + E‖X‖∞) bound (and, at desk scale, the Nazarov bound) at estimated inputs"""
    theorem1: float
    e_max_norm: MeanEstimate
    nazarov: Optional[float] = None
    min_var_w: Optional[MeanEstimate] = None
    inputs: Dict[str, Any] = field(default_factory=dict)

    @property
    def e_max_norm_hat(self) -> float:
        return self.e_max_norm.mean


def sup_interval_prob_from_values(values: np.ndarray, epsilon: float, grid: Grid,
                                  anchored: Optional[bool] = None) -> Tuple[float, float, float]:
    """(sup_hat, argmax_y, se) over grid windows and, optionally, data-anchored windows.

    Sorting once and locating both window edges by binary search costs
    O(N log N + grid). Anchored windows start at every sorted value inside the
    grid range, and their maximum dominates the grid maximum.
    """
    s = np.sort(np.asarray(values, dtype=float))
    n = s.size
    if anchored is None:
        anchored = n <= ANCHORED_MAX_DRAWS

    ys = grid.points()
    counts = np.searchsorted(s, ys + epsilon, side="right") - np.searchsorted(s, ys, side="left")
    best = int(np.argmax(counts))
    sup_count, argmax_y = int(counts[best]), float(ys[best])

    if anchored:
        inside = (s >= grid.y_min) & (s <= grid.y_max)
        anchors = np.unique(s[inside])
        if anchors.size:
            anchor_counts = (np.searchsorted(s, anchors + epsilon, side="right")
                             - np.searchsorted(s, anchors, side="left"))
            top = int(np.argmax(anchor_counts))
            if anchor_counts[top] > sup_count:
                sup_count, argmax_y = int(anchor_counts[top]), float(anchors[top])

    sup_hat = sup_count / n
    return sup_hat, argmax_y, math.sqrt(sup_hat * (1.0 - sup_hat) / n)


def draw_statistic(sampler: GaussianSampler, k: int, n: int, rng: RandomStreams,
                   statistic: str = "kmax", workers: int = 1) -> np.ndarray:
    """N draws of k-max (or k-t̃ilde-max) in block order"""
    if statistic not in STATISTICS:
        raise ValueError(f"statistic must be one of {STATISTICS}, got {statistic!r}")

    def block_stat(block: np.ndarray, aux: np.random.Generator) -> np.ndarray:
        if statistic == "kmax":
            return k_max_rows(block, k)
        return k_tilde_max_rows(block, k, aux)

    return np.concatenate(map_blocks(sampler, n, block_stat, rng.child("sup", statistic), workers))


def estimate_sup_interval_prob(sampler: GaussianSampler, k: int, epsilon: float, grid: Optional[Grid],
                               n: int, rng: RandomStreams, statistic: str = "kmax",
                               workers: int = 1) -> ConcentrationEstimate:
    """Monte Carlo estimate of sup_y Pr(k-max(X) ∈ [y, y+ε])"""
    if epsilon <= 0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    if n < MIN_DRAWS:
        raise ValueError(f"need N >= {MIN_DRAWS} draws, got {n}")
    grid = grid or Grid.default(sampler.p, epsilon)
    grid.validate(sampler.p, epsilon)

    values = draw_statistic(sampler, k, n, rng, statistic, workers)
    sup_hat, argmax_y, se = sup_interval_prob_from_values(values, epsilon, grid)
    logger.debug("sup estimate %.6f at y=%.4f (%s, k=%d, eps=%g)", sup_hat, argmax_y, statistic, k, epsilon)
    return ConcentrationEstimate(sup_hat=sup_hat, argmax_y=argmax_y, epsilon=epsilon, k=k, grid=grid,
                                 n_draws=n, se=se, statistic=statistic)


def estimate_e_max_norm(sampler: GaussianSampler, n: int, rng: RandomStreams, workers: int = 1) -> MeanEstimate:
    """Monte Carlo mean of max_j |X_j| with a maximal-inequality sanity ceiling"""
    if n < MIN_DRAWS:
        raise ValueError(f"need N >= {MIN_DRAWS} draws, got {n}")

    def moments(block: np.ndarray, _aux: np.random.Generator) -> Tuple[float, float]:
        norms = np.max(np.abs(block), axis=1)
        return float(np.sum(norms)), float(np.sum(norms * norms))

    parts = map_blocks(sampler, n, moments, rng.child("e_max_norm"), workers)
    total = math.fsum(s for s, _ in parts)
    total_sq = math.fsum(q for _, q in parts)
    mean = total / n
    variance = max(0.0, (total_sq - n * mean * mean) / (n - 1))
    se = math.sqrt(variance / n)

    ceiling = math.sqrt(2.0 * math.log(2.0 * sampler.p))
    exceeds = mean > ceiling + 3.0 * se
    if exceeds:
        logger.warning("E||X||_inf estimate %.6f exceeds sqrt(2 ln 2p) = %.6f", mean, ceiling)
    return MeanEstimate(mean=mean, se=se, n=n, ceiling=ceiling, exceeds_ceiling=exceeds)


def subset_count(p: int, k: int) -> int:
    return math.comb(p, k)


def estimate_w_min_var(sampler: GaussianSampler, k: int, n: int, rng: RandomStreams,
                       workers: int = 1, n_batches: int = W_BATCHES) -> MeanEstimate:
    """Smallest variance of min_{j∈A} X_j over |A| = k, with a batch-means SE"""
    p = sampler.p
    if not 1 <= k <= p:
        raise ValueError(f"k must satisfy 1 <= k <= {p}, got {k}")
    if subset_count(p, k) > SUBSET_CAP:
        raise ScaleCapError(f"C({p},{k}) = {subset_count(p, k)} exceeds the desk-scale cap {SUBSET_CAP}")
    if n < MIN_DRAWS:
        raise ValueError(f"need N >= {MIN_DRAWS} draws, got {n}")

    x = np.concatenate(map_blocks(sampler, n, lambda b, _aux: b, rng.child("w_min_var"), workers))
    subsets = np.array(list(combinations(range(p), k)), dtype=np.intp)
    chunk = max(1, _CHUNK_ELEMENTS // (n * k))

    variances = np.empty(len(subsets))
    for start in range(0, len(subsets), chunk):
        mins = np.min(x[:, subsets[start:start + chunk]], axis=2)
        variances[start:start + chunk] = np.var(mins, axis=0, ddof=1)
    best = int(np.argmin(variances))

    w_best = np.min(x[:, subsets[best]], axis=1)
    batch_vars = [np.var(part, ddof=1) for part in np.array_split(w_best, n_batches)]
    se = float(np.std(batch_vars, ddof=1) / math.sqrt(n_batches))
    return MeanEstimate(mean=float(variances[best]), se=se, n=n)


def bound_report(sampler: GaussianSampler, k: int, epsilon: float, n: int, rng: RandomStreams,
                 workers: int = 1, with_nazarov: bool = True) -> BoundReport:
    """Evaluate the 2εk(1 + E‖X‖∞) bound, plus the Nazarov bound when C(p,k) is at desk scale"""
    e_max = estimate_e_max_norm(sampler, n, rng, workers)
    report = BoundReport(
        theorem1=theorem1_bound(epsilon, k, e_max.mean),
        e_max_norm=e_max,
        inputs={"epsilon": epsilon, "k": k, "p": sampler.p, "n_draws": n, **sampler.model.metadata()},
    )
    if with_nazarov and subset_count(sampler.p, k) <= SUBSET_CAP:
        min_var = estimate_w_min_var(sampler, k, min(n, W_MAX_DRAWS), rng, workers)
        report.min_var_w = min_var
        if min_var.mean > 0:
            report.nazarov = nazarov_bound(epsilon, sampler.p, k, min_var.mean)
    return report


def theorem1_margin(estimate: ConcentrationEstimate, report: BoundReport) -> float:
    """bound + 3·(sup SE + 2εk'·E-max SE) − sup_hat; non-negative means the bound holds.

    k' is k for the order statistic and 1 for the randomized statistic.
    """
    k_factor = estimate.k if estimate.statistic == "kmax" else 1
    bound = theorem1_bound(estimate.epsilon, k_factor, report.e_max_norm.mean)
    tolerance = 3.0 * (estimate.se + 2.0 * estimate.epsilon * k_factor * report.e_max_norm.se)
    return bound + tolerance - estimate.sup_hat

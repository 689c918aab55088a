"""Bootstrap critical values and the k-FWER step-down procedure.

Test statistics are T_j = n^{-1/2} Σ_i U_ij for H_0j: μ_j ≤ 0. Critical values
ĉ_K(1−α, k) are empirical quantiles of k-max(T*_j : j ∈ K) over one shared
bootstrap matrix, which makes ĉ monotone in K draw by draw.
"""
from dataclasses import dataclass
from enum import Enum
from itertools import combinations
import logging
import math
from typing import Dict, FrozenSet, Iterable, List, Tuple

import numpy as np

from ..errors import ScaleCapError, StepDownError
from .order_stats import k_max_rows

logger = logging.getLogger(__name__)

MIN_BOOTSTRAP = 100
STEP_SUBSET_CAP = 100_000
_BOOTSTRAP_CHUNK = 2_000_000


class Decision(str, Enum):
    REJECT = "Reject"
    FAIL_TO_REJECT = "FailToReject"


@dataclass(frozen=True)
class DataMatrix:
    """n observations of p hypotheses' data"""
    u: np.ndarray

    def __post_init__(self):
        if self.u.ndim != 2:
            raise ValueError(f"data must be an n x p matrix, got shape {self.u.shape}")
        if self.n < 2 or self.p < 1:
            raise ValueError(f"need n >= 2 and p >= 1, got n={self.n}, p={self.p}")

    @property
    def n(self) -> int:
        return self.u.shape[0]

    @property
    def p(self) -> int:
        return self.u.shape[1]


@dataclass(frozen=True)
class TestStatistics:
    t: np.ndarray

    __test__ = False

    def __post_init__(self):
        if not np.all(np.isfinite(self.t)):
            raise ValueError("test statistics must be finite")

    @property
    def p(self) -> int:
        return self.t.size


@dataclass(frozen=True)
class StepRecord:
    step: int
    critical_value: float
    newly_rejected: Tuple[int, ...]


@dataclass
class StepDownResult:
    """Final rejections, per-step trace and per-hypothesis decisions"""
    rejected: FrozenSet[int]
    trace: List[StepRecord]
    decisions: List[Decision]

    @property
    def n_rejected(self) -> int:
        return len(self.rejected)


def compute_test_statistics(data: DataMatrix) -> TestStatistics:
    """t_j = n^{-1/2} Σ_i u_ij"""
    return TestStatistics(t=data.u.sum(axis=0) / math.sqrt(data.n))


def bootstrap_statistics(data: DataMatrix, b: int, rng: np.random.Generator) -> np.ndarray:
    """B×p matrix of centered empirical-bootstrap statistics T*_j"""
    if b < MIN_BOOTSTRAP:
        raise ValueError(f"need at least {MIN_BOOTSTRAP} bootstrap replications, got {b}")
    n, p = data.u.shape
    centered = data.u - data.u.mean(axis=0)
    out = np.empty((b, p))

    # Index draws happen in one call so the stream does not depend on chunking
    rows = rng.integers(0, n, size=(b, n))
    chunk = max(1, _BOOTSTRAP_CHUNK // (n * p))
    for start in range(0, b, chunk):
        out[start:start + chunk] = centered[rows[start:start + chunk]].sum(axis=1)
    return out / math.sqrt(n)


def quantile_rank(alpha: float, b: int) -> int:
    """⌈(1−α)·B⌉, guarded against representation error in (1−α)·B"""
    return max(1, min(b, math.ceil(round((1.0 - alpha) * b, 9))))


class CriticalValueOracle:
    """K ↦ ĉ_K(1−α, k) over one bootstrap matrix, cached per index set"""

    def __init__(self, bootstrap_stats: np.ndarray, alpha: float, k: int):
        if not 0 < alpha < 1:
            raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
        if k < 1:
            raise ValueError(f"k must be >= 1, got {k}")
        self.bootstrap_stats = np.asarray(bootstrap_stats, dtype=float)
        self.alpha = alpha
        self.k = k
        self.b, self.p = self.bootstrap_stats.shape
        self.rank = quantile_rank(alpha, self.b)
        self.cache: Dict[Tuple[int, ...], float] = {}

    def critical_value(self, index_set: Iterable[int]) -> float:
        """⌈(1−α)B⌉-th ascending order statistic of the per-row k-max over K"""
        key = tuple(sorted(set(int(j) for j in index_set)))
        if key in self.cache:
            return self.cache[key]
        if len(key) < self.k:
            raise StepDownError(f"|K| = {len(key)} is smaller than k = {self.k}")
        row_stats = k_max_rows(self.bootstrap_stats[:, key], self.k)
        value = float(np.partition(row_stats, self.rank - 1)[self.rank - 1])
        self.cache[key] = value
        return value

    def check_monotone(self, inner: Iterable[int], outer: Iterable[int]) -> bool:
        """ĉ_K ≥ ĉ_I for I ⊆ K"""
        inner, outer = set(inner), set(outer)
        if not inner <= outer:
            raise ValueError("inner set must be contained in the outer set")
        return self.critical_value(outer) >= self.critical_value(inner)


def critical_value(oracle: CriticalValueOracle, index_set: Iterable[int]) -> float:
    return oracle.critical_value(index_set)


def stepdown_kfwer(t: TestStatistics, oracle: CriticalValueOracle, k: int, alpha: float) -> StepDownResult:
    """Generalized step-down: reject against ĉ over all hypotheses, then against the
    largest ĉ over (not yet rejected) ∪ I for (k−1)-subsets I of the rejected set."""
    if oracle.k != k or oracle.alpha != alpha:
        raise StepDownError(f"oracle built for (k={oracle.k}, alpha={oracle.alpha}), asked for ({k}, {alpha})")
    p = t.p
    if oracle.p != p:
        raise StepDownError(f"oracle covers {oracle.p} hypotheses, statistics have {p}")
    if k > p:
        raise StepDownError(f"k = {k} exceeds the number of hypotheses {p}")

    rejected: set = set()
    trace: List[StepRecord] = []
    step = 1
    while True:
        remaining = [j for j in range(p) if j not in rejected]
        if step == 1:
            crit = oracle.critical_value(range(p))
        else:
            crit = _step_critical_value(oracle, remaining, sorted(rejected), k)

        if trace and crit > trace[-1].critical_value:
            raise StepDownError(f"critical value increased at step {step}: {crit} > {trace[-1].critical_value}")

        newly = tuple(j for j in remaining if t.t[j] > crit)
        trace.append(StepRecord(step=step, critical_value=crit, newly_rejected=newly))
        rejected.update(newly)
        if not newly or len(rejected) == p:
            break
        step += 1

    decisions = [Decision.REJECT if j in rejected else Decision.FAIL_TO_REJECT for j in range(p)]
    logger.debug("step-down finished after %d step(s) with %d rejection(s)", step, len(rejected))
    return StepDownResult(rejected=frozenset(rejected), trace=trace, decisions=decisions)


def _step_critical_value(oracle: CriticalValueOracle, remaining: List[int], rejected: List[int], k: int) -> float:
    size = min(k - 1, len(rejected))
    count = math.comb(len(rejected), size)
    if count > STEP_SUBSET_CAP:
        raise ScaleCapError(f"C({len(rejected)}, {size}) = {count} subsets exceeds the step cap {STEP_SUBSET_CAP}")
    return max(oracle.critical_value(remaining + list(subset)) for subset in combinations(rejected, size))


def random_nested_pairs(p: int, k: int, count: int, rng: np.random.Generator) -> List[Tuple[Tuple[int, ...], Tuple[int, ...]]]:
    """Random pairs I ⊊ K ⊆ {0..p−1} with |I| ≥ k"""
    if p <= k:
        return []
    pairs = []
    for _ in range(count):
        outer_size = int(rng.integers(k + 1, p + 1))
        outer = rng.choice(p, size=outer_size, replace=False)
        inner_size = int(rng.integers(k, outer_size))
        inner = rng.choice(outer, size=inner_size, replace=False)
        pairs.append((tuple(sorted(int(j) for j in inner)), tuple(sorted(int(j) for j in outer))))
    return pairs


def monotonicity_violations(oracle: CriticalValueOracle, pairs) -> int:
    """Number of nested pairs with ĉ_K < ĉ_I"""
    return sum(0 if oracle.check_monotone(inner, outer) else 1 for inner, outer in pairs)

"""k-FWER simulation of the bootstrap step-down procedure under a Gaussian mean model."""
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
import logging
import math
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from ..errors import StepDownError
from ..models.results import MeanEstimate, RateEstimate
from .anticonc import estimate_e_max_norm
from .gauss_core import CovarianceModel, GaussianSampler, make_sampler, map_blocks
from .multitest import (
    CriticalValueOracle,
    DataMatrix,
    StepDownResult,
    bootstrap_statistics,
    compute_test_statistics,
    monotonicity_violations,
    quantile_rank,
    random_nested_pairs,
    stepdown_kfwer,
)
from .order_stats import k_max_rows
from .streams import RandomStreams

logger = logging.getLogger(__name__)

AUDIT_PAIRS = 100
DEFAULT_GAMMA_LEVEL = 0.9
MIN_DIRECT_DRAWS = 10_000


@dataclass(eq=False)
class KfwerScenario:
    """Rows U_i ~ N(μ, Σ); hypotheses H_0j: μ_j ≤ 0"""
    mu: np.ndarray
    model: CovarianceModel
    n: int
    k: int
    alpha: float
    b: int
    n_sim: int
    seed: int

    def __post_init__(self):
        self.mu = np.broadcast_to(np.asarray(self.mu, dtype=float), (self.model.p,)).copy()
        if not 0 < self.alpha < 1:
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha}")
        if not 1 <= self.k <= self.p:
            raise ValueError(f"k must satisfy 1 <= k <= p={self.p}, got {self.k}")
        if self.n < 2:
            raise ValueError(f"sample size n must be >= 2, got {self.n}")
        if self.n_sim < 1:
            raise ValueError(f"n_sim must be >= 1, got {self.n_sim}")

    @property
    def p(self) -> int:
        return self.model.p

    @property
    def true_nulls(self) -> Tuple[int, ...]:
        return tuple(int(j) for j in np.flatnonzero(self.mu <= 0))


@dataclass
class ReplicateOutcome:
    result: StepDownResult
    false_rejections: int
    null_critical_value: Optional[float]


@dataclass
class KfwerResult:
    """Empirical k-FWER with per-replicate traces"""
    kfwer: RateEstimate
    mean_rejections: float
    mean_false_rejections: float
    replicates: List[ReplicateOutcome]
    audit: Dict[str, Any] = field(default_factory=dict)

    @property
    def kfwer_hat(self) -> float:
        return self.kfwer.estimate

    @property
    def se(self) -> float:
        return self.kfwer.se

    @property
    def traces(self) -> List[StepDownResult]:
        return [r.result for r in self.replicates]

    @property
    def null_critical_values(self) -> np.ndarray:
        return np.array([r.null_critical_value for r in self.replicates
                         if r.null_critical_value is not None])


@dataclass
class BoundInputs:
    """Estimated inputs of α + 2kγ(1 + E‖U‖∞) + δ"""
    q_direct: float
    gamma: float
    delta: float
    e_max_norm: MeanEstimate
    bound: float
    n_direct: int
    gamma_level: float

    def to_dict(self) -> Dict[str, Any]:
        return {
            "q_direct": self.q_direct,
            "gamma": self.gamma,
            "delta": self.delta,
            "e_max_norm": self.e_max_norm.to_dict(),
            "bound": self.bound,
            "n_direct": self.n_direct,
            "gamma_level": self.gamma_level,
        }


def kfwer_upper_bound(alpha: float, k: int, gamma: float, e_max_norm: float, delta: float) -> float:
    """α + 2·k·γ·(1 + E‖U‖∞) + δ"""
    if not 0 < alpha < 1:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    if min(gamma, e_max_norm, delta) < 0 or k < 1:
        raise ValueError("gamma, e_max_norm and delta must be non-negative and k >= 1")
    return alpha + 2.0 * k * gamma * (1.0 + e_max_norm) + delta


def run_replicate(scenario: KfwerScenario, sampler: GaussianSampler, streams: RandomStreams,
                  index: int, audit: bool = False) -> Tuple[ReplicateOutcome, Optional[int]]:
    """One dataset: draw, bootstrap, step down, count false rejections"""
    node = streams.child("replicate", index)
    u = sampler.draw_block(node.generator("data"), scenario.n) + scenario.mu
    data = DataMatrix(u=u)
    t = compute_test_statistics(data)
    oracle = CriticalValueOracle(bootstrap_statistics(data, scenario.b, node.generator("bootstrap")),
                                 scenario.alpha, scenario.k)
    result = stepdown_kfwer(t, oracle, scenario.k, scenario.alpha)

    nulls = scenario.true_nulls
    false_rejections = len(result.rejected.intersection(nulls))
    null_crit = oracle.critical_value(nulls) if len(nulls) >= scenario.k else None

    violations = None
    if audit:
        pairs = random_nested_pairs(scenario.p, scenario.k, AUDIT_PAIRS, node.generator("audit"))
        violations = monotonicity_violations(oracle, pairs)
    return ReplicateOutcome(result=result, false_rejections=false_rejections,
                            null_critical_value=null_crit), violations


def simulate_kfwer(scenario: KfwerScenario, streams: Optional[RandomStreams] = None,
                   workers: int = 1) -> KfwerResult:
    """Fraction of replicates with at least k false rejections, with binomial SE"""
    streams = streams or RandomStreams(scenario.seed).child("kfwer")
    sampler = make_sampler(scenario.model, scenario.seed)

    def task(index: int):
        return run_replicate(scenario, sampler, streams, index, audit=index == 0)

    logger.info("simulating %d replicates (p=%d, k=%d, n=%d, B=%d)",
                scenario.n_sim, scenario.p, scenario.k, scenario.n, scenario.b)
    if workers <= 1:
        outputs = [task(i) for i in range(scenario.n_sim)]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            outputs = list(pool.map(task, range(scenario.n_sim)))

    replicates = [outcome for outcome, _ in outputs]
    violations = outputs[0][1]
    hits = sum(1 for r in replicates if r.false_rejections >= scenario.k)
    audit = {"pairs": AUDIT_PAIRS if scenario.p > scenario.k else 0, "violations": violations or 0}
    if violations:
        logger.error("critical values not monotone on %d nested pair(s)", violations)

    return KfwerResult(
        kfwer=RateEstimate.from_counts(hits, scenario.n_sim),
        mean_rejections=float(np.mean([r.result.n_rejected for r in replicates])),
        mean_false_rejections=float(np.mean([r.false_rejections for r in replicates])),
        replicates=replicates,
        audit=audit,
    )


def direct_null_quantile(scenario: KfwerScenario, n_direct: int, streams: RandomStreams,
                         workers: int = 1) -> float:
    """q_{1−α} of k-max(T_j : j ∈ I) under the exact centered law N(0, Σ_II)"""
    nulls = list(scenario.true_nulls)
    if len(nulls) < scenario.k:
        raise StepDownError(f"only {len(nulls)} true nulls, fewer than k = {scenario.k}")
    if n_direct < MIN_DIRECT_DRAWS:
        raise ValueError(f"need at least {MIN_DIRECT_DRAWS} direct draws, got {n_direct}")
    sampler = make_sampler(scenario.model, scenario.seed)
    values = np.concatenate(map_blocks(sampler, n_direct, lambda b, _aux: k_max_rows(b[:, nulls], scenario.k),
                                       streams.child("direct"), workers))
    rank = quantile_rank(scenario.alpha, n_direct)
    return float(np.partition(values, rank - 1)[rank - 1])


def estimate_bound_inputs(scenario: KfwerScenario, result: KfwerResult, streams: Optional[RandomStreams] = None,
                          n_direct: int = 1_000_000, gamma_level: float = DEFAULT_GAMMA_LEVEL,
                          workers: int = 1) -> BoundInputs:
    """γ̂, δ̂ and E‖U‖∞ from the replicate gaps β = q_{1−α} − ĉ_I, then the k-FWER bound"""
    if not 0 < gamma_level < 1:
        raise ValueError(f"gamma_level must lie in (0, 1), got {gamma_level}")
    streams = streams or RandomStreams(scenario.seed).child("kfwer_bound")
    crit = result.null_critical_values
    if crit.size == 0:
        raise StepDownError("no replicate has a null critical value to compare against")

    q = direct_null_quantile(scenario, n_direct, streams, workers)
    beta = q - crit
    gamma = max(0.0, float(np.quantile(beta, gamma_level)))
    delta = float(np.mean(beta >= gamma))

    sampler = make_sampler(scenario.model, scenario.seed)
    e_max = estimate_e_max_norm(sampler, min(n_direct, 100_000), streams.child("e_max_norm"), workers)
    bound = kfwer_upper_bound(scenario.alpha, scenario.k, gamma, e_max.mean, delta)
    logger.info("bound inputs: q=%.6f gamma=%.6f delta=%.4f bound=%.6f", q, gamma, delta, bound)
    return BoundInputs(q_direct=q, gamma=gamma, delta=delta, e_max_norm=e_max, bound=bound,
                       n_direct=n_direct, gamma_level=gamma_level)


def level_tolerance(alpha: float, n_sim: int) -> float:
    """α + 3·√(α(1−α)/n_sim), the acceptance ceiling for empirical k-FWER"""
    return alpha + 3.0 * math.sqrt(alpha * (1.0 - alpha) / n_sim)

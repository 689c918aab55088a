from dataclasses import asdict, dataclass
import math
from typing import Any, Dict, Optional


@dataclass(frozen=True)
class RateEstimate:
    """Monte Carlo proportion with its binomial standard error"""
    estimate: float
    se: float
    hits: int
    n: int

    @classmethod
    def from_counts(cls, hits: int, n: int) -> 'RateEstimate':
        p_hat = hits / n
        return cls(estimate=p_hat, se=math.sqrt(p_hat * (1.0 - p_hat) / n), hits=hits, n=n)

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


@dataclass(frozen=True)
class MeanEstimate:
    """Monte Carlo mean with its standard error"""
    mean: float
    se: float
    n: int
    ceiling: Optional[float] = None
    exceeds_ceiling: bool = False

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

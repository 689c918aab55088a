from dataclasses import dataclass, field
import logging
from typing import Any, Dict, List

from ..errors import DiagnosticError
from .gauss_core import GaussianSampler
from .streams import RandomStreams

logger = logging.getLogger(__name__)


@dataclass
class DiagnosticReport:
    """Outcome of a Monte Carlo diagnostic.

    ``statistic`` is the worst excess over the noise band (pass iff <= 0);
    ``bins`` holds per-bin arrays for inspection.
    """
    name: str
    passed: bool
    statistic: float
    n_draws: int
    issues: List[Dict[str, Any]] = field(default_factory=list)
    bins: Dict[str, List[float]] = field(default_factory=dict)
    details: Dict[str, Any] = field(default_factory=dict)


class BaseDiagnostic:
    """Base class for all diagnostics"""

    name = "diagnostic"

    def check(self, sampler: GaussianSampler, k: int, m: int, rng: RandomStreams,
              workers: int = 1, **options) -> DiagnosticReport:
        """Run the diagnostic; precondition failures raise, anything else becomes a failed report"""
        try:
            return self._check(sampler, k, m, rng, workers, **options)
        except DiagnosticError:
            raise
        except Exception as e:
            logger.error("Error in %s: %s", self.__class__.__name__, e)
            return DiagnosticReport(
                name=self.name,
                passed=False,
                statistic=float("nan"),
                n_draws=m,
                issues=[{
                    'severity': 'high',
                    'message': f'{self.__class__.__name__} failed: {e}',
                }],
            )

    def _check(self, sampler: GaussianSampler, k: int, m: int, rng: RandomStreams,
               workers: int, **options) -> DiagnosticReport:
        """Internal check method to be implemented by subclasses"""
        raise NotImplementedError(f"{self.__class__.__name__} must implement _check method")

import functools
import logging
import traceback
from typing import Any, Callable, Dict, Optional

logger = logging.getLogger(__name__)


class KmaxError(Exception):
    """Base class for all library errors"""


class CovarianceError(KmaxError, ValueError):
    """Covariance parameters do not give a unit-diagonal PSD matrix"""


class FactorizationError(KmaxError):
    """Factor could not reproduce the covariance within tolerance"""


class SelectionError(KmaxError, ValueError):
    """Order statistic index out of range"""


class ScaleCapError(KmaxError, ValueError):
    """Subset enumeration would exceed its cap"""


class GridError(KmaxError, ValueError):
    """Evaluation grid does not satisfy estimator preconditions"""


class DiagnosticError(KmaxError, ValueError):
    """Diagnostic preconditions (draw counts, bin occupancy) not met"""


class StepDownError(KmaxError, ValueError):
    """Step-down procedure preconditions violated"""


class ConfigError(KmaxError, ValueError):
    """Invalid run configuration"""

    def __init__(self, message: str, scenario_id: Optional[str] = None, key: Optional[str] = None):
        self.scenario_id = scenario_id
        self.key = key
        prefix = ""
        if scenario_id is not None:
            prefix += f"scenario '{scenario_id}': "
        if key is not None:
            prefix += f"key '{key}': "
        super().__init__(prefix + message)


class ReportError(KmaxError):
    """Report directory missing, incomplete or corrupt"""


class ErrorHandler:
    """Handle errors raised while running scenarios"""

    @staticmethod
    def handle_error(error: Exception, context: str = "") -> Dict[str, Any]:
        """Log an error and return a serializable record of it"""
        error_msg = f"Error {context}: {error}" if context else f"Error: {error}"
        logger.error(error_msg)
        logger.debug("".join(traceback.format_exception(type(error), error, error.__traceback__)))
        return {
            "context": context,
            "type": type(error).__name__,
            "message": str(error),
        }

    @staticmethod
    def capture(context: str) -> Callable:
        """Decorator returning (result, error_record) instead of raising"""
        def decorator(func: Callable) -> Callable:
            @functools.wraps(func)
            def wrapper(*args, **kwargs):
                try:
                    return func(*args, **kwargs), None
                except Exception as e:
                    return None, ErrorHandler.handle_error(e, context)
            return wrapper
        return decorator

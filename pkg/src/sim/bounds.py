"""Closed-form anticoncentration bounds and the Mills ratio."""
import math

import numpy as np
from scipy.special import erfcx, gammaln

SQRT_2_OVER_PI = math.sqrt(2.0 / math.pi)


def theorem1_bound(epsilon: float, k: int, e_max_norm: float) -> float:
    """Dimension-free bound 2·ε·k·(1 + E‖X‖∞) on sup_y Pr(k-max(X) ∈ [y, y+ε])"""
    if epsilon <= 0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if e_max_norm < 0:
        raise ValueError(f"E||X||_inf must be non-negative, got {e_max_norm}")
    return 2.0 * epsilon * k * (1.0 + e_max_norm)


def mills_ratio(y):
    """φ(y) / (1 − Φ(y)), written as √(2/π) / erfcx(y/√2) so it stays finite for large y"""
    result = SQRT_2_OVER_PI / erfcx(np.asarray(y, dtype=float) / math.sqrt(2.0))
    return float(result) if np.ndim(result) == 0 else result


def log_binomial(p: int, k: int) -> float:
    """ln C(p, k) through log-gamma"""
    if not 0 <= k <= p:
        raise ValueError(f"need 0 <= k <= p, got p={p}, k={k}")
    return max(0.0, float(gammaln(p + 1) - gammaln(k + 1) - gammaln(p - k + 1)))


def nazarov_bound(epsilon: float, p: int, k: int, min_var_w: float) -> float:
    """(ε / √min var(W)) · (√(2 ln C(p,k)) + 2) for the subset-minimum Gaussian W"""
    if min_var_w <= 0:
        raise ValueError(f"min var(W) must be positive, got {min_var_w}")
    if epsilon <= 0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    return (epsilon / math.sqrt(min_var_w)) * (math.sqrt(2.0 * log_binomial(p, k)) + 2.0)

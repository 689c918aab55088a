"""k-th order statistics and the randomized top-k statistic.

The randomized statistic picks a uniform element of the size-k subset with the
largest average. That subset is always a set of k largest components, so it is
obtained by partial selection; exact ties at the k-th boundary are broken
uniformly among the boundary indices.
"""
from dataclasses import dataclass
from itertools import combinations
import logging
import math
from typing import FrozenSet, Set, Tuple

import numpy as np

from ..errors import ScaleCapError, SelectionError
from ..models.results import RateEstimate
from .gauss_core import GaussianSampler, map_blocks
from .streams import RandomStreams

logger = logging.getLogger(__name__)

ORACLE_MAX_LENGTH = 20
ORACLE_MAX_SUBSETS = 200_000


@dataclass(frozen=True)
class TopKSelection:
    """The argmax-average set A*, the index drawn from it, and the k-th value"""
    a_star: Tuple[int, ...]
    iota_star: int
    kth_value: float
    tie_broken: bool


@dataclass(frozen=True)
class KTildeMaxDraw:
    value: float
    selection: TopKSelection


def _check_k(length: int, k: int) -> None:
    if not 1 <= k <= length:
        raise SelectionError(f"k must satisfy 1 <= k <= {length}, got {k}")


def k_max(x, k: int) -> float:
    """k-th largest value of x, counting multiplicity"""
    x = np.asarray(x, dtype=float).ravel()
    _check_k(x.size, k)
    return float(np.partition(x, x.size - k)[x.size - k])


def k_max_rows(x: np.ndarray, k: int) -> np.ndarray:
    """k-th largest value of every row"""
    p = x.shape[1]
    _check_k(p, k)
    return np.partition(x, p - k, axis=1)[:, p - k]


def top_k_selection(x, k: int, rng: np.random.Generator) -> TopKSelection:
    """Uniformly tie-broken index set of k largest components, plus ι* uniform on it"""
    x = np.asarray(x, dtype=float).ravel()
    _check_k(x.size, k)
    kth = float(np.partition(x, x.size - k)[x.size - k])

    above = np.flatnonzero(x > kth)
    boundary = np.flatnonzero(x == kth)
    needed = k - above.size
    tie_broken = boundary.size > needed
    if tie_broken:
        boundary = rng.choice(boundary, size=needed, replace=False)

    a_star = tuple(sorted(int(i) for i in np.concatenate([above, boundary])))
    iota_star = a_star[int(rng.integers(k))]
    return TopKSelection(a_star=a_star, iota_star=iota_star, kth_value=kth, tie_broken=bool(tie_broken))


def k_tilde_max(x, k: int, rng: np.random.Generator) -> KTildeMaxDraw:
    """Randomized k-t̃ilde-max: the component at a uniform index of A*"""
    x = np.asarray(x, dtype=float).ravel()
    selection = top_k_selection(x, k, rng)
    return KTildeMaxDraw(value=float(x[selection.iota_star]), selection=selection)


def k_tilde_max_rows(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """k-t̃ilde-max value of every row.

    Only the value is returned: whichever way ties at the boundary are broken,
    A* holds the same multiset of values, so a uniform pick among the k largest
    entries has the law of X_ι*.
    """
    n, p = x.shape
    _check_k(p, k)
    top = np.partition(x, p - k, axis=1)[:, p - k:]
    picks = rng.integers(k, size=n)
    return top[np.arange(n), picks]


def brute_force_astar(x, k: int) -> Set[FrozenSet[int]]:
    """All size-k subsets maximizing the subset average, by exhaustive enumeration"""
    x = np.asarray(x, dtype=float).ravel()
    _check_k(x.size, k)
    if x.size > ORACLE_MAX_LENGTH or math.comb(x.size, k) > ORACLE_MAX_SUBSETS:
        raise ScaleCapError(
            f"oracle limited to length <= {ORACLE_MAX_LENGTH} and C(n,k) <= {ORACLE_MAX_SUBSETS}"
        )

    # fsum is correctly rounded, so subsets holding equal multisets tie exactly
    best = -math.inf
    winners: Set[FrozenSet[int]] = set()
    for subset in combinations(range(x.size), k):
        total = math.fsum(x[list(subset)])
        if total > best:
            best = total
            winners = {frozenset(subset)}
        elif total == best:
            winners.add(frozenset(subset))
    return winners


def coupling_rate(sampler: GaussianSampler, k: int, n: int, rng: RandomStreams,
                  workers: int = 1) -> RateEstimate:
    """Fraction of draws where k-t̃ilde-max equals k-max exactly"""
    _check_k(sampler.p, k)
    if n < 1000:
        raise ValueError(f"coupling_rate needs N >= 1000, got {n}")

    def count_hits(block: np.ndarray, aux: np.random.Generator) -> int:
        kth = k_max_rows(block, k)
        tilde = k_tilde_max_rows(block, k, aux)
        return int(np.count_nonzero(tilde == kth))

    hits = sum(map_blocks(sampler, n, count_hits, rng.child("coupling"), workers))
    return RateEstimate.from_counts(hits, n)

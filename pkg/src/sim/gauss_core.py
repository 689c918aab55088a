from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
import logging
from typing import Any, Callable, Dict, List, Optional, Sequence, Union

import numpy as np

from ..errors import CovarianceError, FactorizationError
from ..utils import NumberUtils
from .streams import GENERATOR_NAME, RandomStreams

logger = logging.getLogger(__name__)

PSD_TOLERANCE = -1e-10
RECONSTRUCTION_TOLERANCE = 1e-8
BLOCK_ROWS = 1 << 15


class Family(str, Enum):
    """Generating family of a covariance model"""
    IDENTITY = "identity"
    EQUICORRELATED = "equicorrelated"
    AR1 = "ar1"
    BLOCK = "block"
    EXPLICIT = "explicit"


@dataclass(frozen=True, eq=False)
class CovarianceModel:
    """Unit-diagonal PSD covariance matrix with its generating family"""
    p: int
    entries: np.ndarray
    family: Family
    params: Dict[str, Any] = field(default_factory=dict)

    @property
    def model_id(self) -> str:
        label = NumberUtils.params_label(self.params)
        return f"{self.family.value}[{label}]p={self.p}" if label else f"{self.family.value}p={self.p}"

    @property
    def min_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(self.entries)[0])

    @property
    def has_exact_duplicates(self) -> bool:
        """True when some pair of components is perfectly correlated (X_i = X_j a.s.)"""
        off = self.entries - np.eye(self.p)
        return bool(np.any(off == 1.0))

    def metadata(self) -> Dict[str, Any]:
        """Serializable description for reports"""
        params = {k: (v if not isinstance(v, np.ndarray) else v.tolist()) for k, v in self.params.items()}
        return {"family": self.family.value, "p": self.p, "params": params}


@dataclass
class GaussianSampler:
    """Seeded sampler of N(0, Σ) rows via a factor L with LLᵀ ≈ Σ"""
    model: CovarianceModel
    factor: np.ndarray
    seed: int
    generator_name: str = GENERATOR_NAME
    calls: int = 0

    def __post_init__(self):
        self.streams = RandomStreams(self.seed).child("sampler")
        self._columns = _duplicate_column_map(self.model.entries)
        self._unique = np.unique(self._columns)
        self._unique_factor = self.factor[self._unique]
        self._column_index = np.searchsorted(self._unique, self._columns)

    @property
    def p(self) -> int:
        return self.model.p

    def draw_block(self, rng: np.random.Generator, rows: int) -> np.ndarray:
        """rows×p draws of LZ; perfectly correlated components are exact copies"""
        z = rng.standard_normal((rows, self.p))
        x_unique = z @ self._unique_factor.T
        return x_unique[:, self._column_index]


@dataclass
class SampleBatch:
    """N×p matrix of draws"""
    draws: np.ndarray
    n_draws: int
    model_id: str

    def __post_init__(self):
        if self.draws.shape[0] != self.n_draws:
            raise ValueError(f"batch has {self.draws.shape[0]} rows, expected {self.n_draws}")


def build_covariance(family: Union[Family, str], p: int, params: Sequence[float] = (),
                     entries: Optional[Sequence[Sequence[float]]] = None) -> CovarianceModel:
    """Construct a unit-diagonal covariance model from a named family.

    params by family: equicorrelated [rho], ar1 [rho], block [rho, block_size],
    identity and explicit take none (explicit reads ``entries``).
    """
    family = Family(family)
    if p < 1:
        raise CovarianceError(f"dimension p must be >= 1, got {p}")
    params = list(params)

    if family is Family.IDENTITY:
        _expect_params(family, params, 0)
        sigma = np.eye(p)
        meta: Dict[str, Any] = {}
    elif family is Family.EQUICORRELATED:
        _expect_params(family, params, 1)
        rho = float(params[0])
        lower = -1.0 / (p - 1) if p > 1 else -1.0
        if not lower <= rho <= 1.0:
            raise CovarianceError(f"equicorrelated rho must lie in [{lower}, 1], got {rho}")
        sigma = np.full((p, p), rho)
        np.fill_diagonal(sigma, 1.0)
        meta = {"rho": rho}
    elif family is Family.AR1:
        _expect_params(family, params, 1)
        rho = float(params[0])
        if not -1.0 < rho < 1.0:
            raise CovarianceError(f"ar1 rho must lie in (-1, 1), got {rho}")
        lags = np.abs(np.subtract.outer(np.arange(p), np.arange(p)))
        sigma = rho ** lags.astype(float)
        meta = {"rho": rho}
    elif family is Family.BLOCK:
        _expect_params(family, params, 2)
        rho, block_size = float(params[0]), params[1]
        if float(block_size) != int(block_size) or int(block_size) < 1:
            raise CovarianceError(f"block_size must be a positive integer, got {block_size}")
        block_size = int(block_size)
        if p % block_size:
            raise CovarianceError(f"block_size {block_size} does not divide p={p}")
        lower = -1.0 / (block_size - 1) if block_size > 1 else -1.0
        if not lower <= rho <= 1.0:
            raise CovarianceError(f"block rho must lie in [{lower}, 1], got {rho}")
        blocks = np.arange(p) // block_size
        sigma = np.where(np.equal.outer(blocks, blocks), rho, 0.0)
        np.fill_diagonal(sigma, 1.0)
        meta = {"rho": rho, "block_size": block_size}
    else:
        _expect_params(family, params, 0)
        if entries is None:
            raise CovarianceError("explicit family requires entries")
        sigma = np.array(entries, dtype=float)
        if sigma.shape != (p, p):
            raise CovarianceError(f"explicit entries must be {p}x{p}, got {sigma.shape}")
        if not np.array_equal(sigma, sigma.T):
            raise CovarianceError("explicit entries must be exactly symmetric")
        if not np.all(np.diag(sigma) == 1.0):
            raise CovarianceError("explicit entries must have exactly unit diagonal")
        meta = {"entries": sigma.copy()}

    min_eig = float(np.linalg.eigvalsh(sigma)[0])
    if min_eig < PSD_TOLERANCE:
        raise CovarianceError(f"matrix is not PSD: smallest eigenvalue {min_eig:.3e} < {PSD_TOLERANCE}")

    sigma.setflags(write=False)
    return CovarianceModel(p=p, entries=sigma, family=family, params=meta)


def _expect_params(family: Family, params: List[float], count: int) -> None:
    if len(params) != count:
        raise CovarianceError(f"{family.value} takes {count} parameter(s), got {len(params)}")


def factorize(model: CovarianceModel) -> np.ndarray:
    """Factor L with LLᵀ = Σ; Cholesky first, clamped eigendecomposition for singular Σ"""
    sigma = model.entries
    factor = None
    try:
        factor = np.linalg.cholesky(sigma)
        if _reconstruction_error(factor, sigma) > RECONSTRUCTION_TOLERANCE:
            factor = None
    except np.linalg.LinAlgError:
        logger.debug("cholesky failed for %s, using eigendecomposition", model.model_id)

    if factor is None:
        eigvals, eigvecs = np.linalg.eigh(sigma)
        if eigvals[0] < PSD_TOLERANCE:
            raise FactorizationError(f"indefinite input: smallest eigenvalue {eigvals[0]:.3e}")
        eigvals = np.clip(eigvals, 0.0, None)
        factor = eigvecs * np.sqrt(eigvals)

    # Perfectly correlated components share one factor row.
    columns = _duplicate_column_map(sigma)
    factor = factor[columns]

    error = _reconstruction_error(factor, sigma)
    if error > RECONSTRUCTION_TOLERANCE:
        raise FactorizationError(f"reconstruction error {error:.3e} exceeds {RECONSTRUCTION_TOLERANCE}")
    factor.setflags(write=False)
    return factor


def _reconstruction_error(factor: np.ndarray, sigma: np.ndarray) -> float:
    return float(np.linalg.norm(factor @ factor.T - sigma) / max(1.0, np.linalg.norm(sigma)))


def _duplicate_column_map(sigma: np.ndarray) -> np.ndarray:
    """Index of the first component each component is perfectly correlated with"""
    p = sigma.shape[0]
    columns = np.arange(p)
    for j in range(1, p):
        twins = np.flatnonzero(sigma[j, :j] == 1.0)
        if twins.size:
            columns[j] = columns[twins[0]]
    return columns


def make_sampler(model: CovarianceModel, seed: int) -> GaussianSampler:
    """Factorize and wrap in a seeded sampler"""
    return GaussianSampler(model=model, factor=factorize(model), seed=seed)


def block_sizes(n: int, block_rows: int = BLOCK_ROWS) -> List[int]:
    """Fixed partition of n rows into blocks, independent of worker count"""
    full, rest = divmod(n, block_rows)
    return [block_rows] * full + ([rest] if rest else [])


def map_blocks(sampler: GaussianSampler, n: int, fn: Callable[[np.ndarray, np.random.Generator], Any],
               streams: RandomStreams, workers: int = 1) -> List[Any]:
    """Apply fn to n fresh draws, block by block, returning results in block order.

    Block b draws from stream (streams, "draws", b) and hands fn its own
    auxiliary generator (streams, "aux", b) for any extra randomization.
    """
    sizes = block_sizes(n)
    draw_streams = streams.child("draws")
    aux_streams = streams.child("aux")

    def task(index: int) -> Any:
        x = sampler.draw_block(draw_streams.generator(index), sizes[index])
        return fn(x, aux_streams.generator(index))

    logger.debug("drawing %d rows in %d blocks with %d worker(s)", n, len(sizes), workers)
    if workers <= 1 or len(sizes) == 1:
        return [task(i) for i in range(len(sizes))]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(task, range(len(sizes))))


def sample(sampler: GaussianSampler, n: int, workers: int = 1) -> SampleBatch:
    """N independent rows of LZ; the k-th call on a sampler uses the k-th substream"""
    if n < 1:
        raise ValueError(f"N must be >= 1, got {n}")
    streams = sampler.streams.child("call", sampler.calls)
    sampler.calls += 1
    blocks = map_blocks(sampler, n, lambda x, _aux: x, streams, workers)
    return SampleBatch(draws=np.concatenate(blocks, axis=0), n_draws=n, model_id=sampler.model.model_id)

"""YAML run configuration: parsing, validation and round-trip writing."""
from dataclasses import asdict, dataclass, fields
import logging
import math
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import yaml

from .errors import ConfigError, CovarianceError, GridError
from .sim.anticonc import MIN_DRAWS, SUBSET_CAP, Grid, subset_count
from .sim.diagnostics import DEFAULT_BINS, MIN_DIAGNOSTIC_DRAWS
from .sim.gauss_core import CovarianceModel, Family, build_covariance
from .sim.kfwer import DEFAULT_GAMMA_LEVEL, MIN_DIRECT_DRAWS
from .sim.multitest import MIN_BOOTSTRAP

logger = logging.getLogger(__name__)

KINDS = ("anticonc", "coupling", "density", "nazarov", "kfwer")
DEFAULT_OUT = "reports"
MIN_COUPLING_DRAWS = 1000
GLOBAL_KEYS = ("seed", "out", "workers")


@dataclass
class ScenarioConfig:
    """One scenario; ``n`` is the draw count, or the sample size for kfwer"""
    id: str
    kind: str
    family: str
    p: int
    k: int
    n: int
    rho: Optional[float] = None
    block_size: Optional[int] = None
    entries: Optional[List[List[float]]] = None
    epsilon: Optional[float] = None
    grid: Optional[Dict[str, float]] = None
    bins: int = DEFAULT_BINS
    alpha: Optional[float] = None
    b: Optional[int] = None
    n_sim: Optional[int] = None
    mu: Union[float, List[float]] = 0.0
    estimate_bound: bool = False
    n_direct: int = 1_000_000
    gamma_level: float = DEFAULT_GAMMA_LEVEL
    reference: Optional[float] = None

    def family_params(self) -> List[float]:
        if self.family in (Family.EQUICORRELATED.value, Family.AR1.value):
            return [self.rho]
        if self.family == Family.BLOCK.value:
            return [self.rho, self.block_size]
        return []

    def build_model(self) -> CovarianceModel:
        return build_covariance(self.family, self.p, self.family_params(), entries=self.entries)

    def build_grid(self) -> Optional[Grid]:
        return Grid(**self.grid) if self.grid else None


@dataclass
class RunConfig:
    """Global settings plus the scenario list"""
    seed: int
    scenarios: List[ScenarioConfig]
    out: str = DEFAULT_OUT
    workers: int = 1


SCENARIO_KEYS = tuple(f.name for f in fields(ScenarioConfig))
REQUIRED_KEYS = ("kind", "family", "p", "k", "n")


def parse_config(path: Union[str, Path], overrides: Optional[Dict[str, Any]] = None) -> RunConfig:
    """Load and fully validate a YAML config; ``overrides`` (seed/out/workers) win over the file"""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        document = yaml.safe_load(path.read_text())
    except yaml.YAMLError as e:
        raise ConfigError(f"cannot parse {path}: {e}") from e
    return config_from_dict(document, overrides)


def config_from_dict(document: Any, overrides: Optional[Dict[str, Any]] = None) -> RunConfig:
    """Validate a loaded document in either the full or the flat single-scenario form"""
    if not isinstance(document, dict):
        raise ConfigError("config must be a mapping")
    document = dict(document)

    if "scenario" in document:
        # Flat form: the scenario keys sit next to the global ones
        if "scenarios" in document:
            raise ConfigError("use either 'scenario' or 'scenarios', not both")
        scenario = {key: value for key, value in document.items() if key not in GLOBAL_KEYS}
        scenario["kind"] = scenario.pop("scenario")
        scenario.setdefault("id", scenario["kind"])
        document = {key: document[key] for key in GLOBAL_KEYS if key in document}
        document["scenarios"] = [scenario]

    unknown = set(document) - set(GLOBAL_KEYS) - {"scenarios"}
    if unknown:
        raise ConfigError("unknown top-level key", key=sorted(unknown)[0])
    document.update({key: value for key, value in (overrides or {}).items() if value is not None})

    seed = document.get("seed")
    if seed is None:
        raise ConfigError("missing required key", key="seed")
    if not _is_int(seed) or not 0 <= seed < 2 ** 64:
        raise ConfigError(f"seed must be an unsigned 64-bit integer, got {seed!r}", key="seed")
    workers = document.get("workers", 1)
    if not _is_int(workers) or workers < 1:
        raise ConfigError(f"workers must be a positive integer, got {workers!r}", key="workers")
    out = str(document.get("out", DEFAULT_OUT))

    raw = document.get("scenarios")
    if not isinstance(raw, list) or not raw:
        raise ConfigError("'scenarios' must be a non-empty list", key="scenarios")

    scenarios = [_parse_scenario(entry, index) for index, entry in enumerate(raw)]
    seen = set()
    for s in scenarios:
        if s.id in seen:
            raise ConfigError("duplicate scenario id", scenario_id=s.id, key="id")
        seen.add(s.id)

    for s in scenarios:
        validate_scenario(s)
    return RunConfig(seed=int(seed), scenarios=scenarios, out=out, workers=int(workers))


def _parse_scenario(entry: Any, index: int) -> ScenarioConfig:
    if not isinstance(entry, dict):
        raise ConfigError(f"scenario #{index} must be a mapping")
    scenario_id = str(entry.get("id", f"scenario_{index}"))
    unknown = set(entry) - set(SCENARIO_KEYS)
    if unknown:
        raise ConfigError("unknown key", scenario_id=scenario_id, key=sorted(unknown)[0])
    for key in REQUIRED_KEYS:
        if entry.get(key) is None:
            raise ConfigError("missing required key", scenario_id=scenario_id, key=key)

    values = dict(entry)
    values["id"] = scenario_id
    for key in ("p", "k", "n", "bins", "b", "n_sim", "block_size", "n_direct"):
        if values.get(key) is not None:
            if not _is_int(values[key]):
                raise ConfigError(f"must be an integer, got {values[key]!r}", scenario_id=scenario_id, key=key)
            values[key] = int(values[key])
    for key in ("rho", "epsilon", "alpha", "gamma_level", "reference"):
        if values.get(key) is not None:
            values[key] = _as_float(values[key], scenario_id, key)
    if "mu" in values:
        mu = values["mu"]
        values["mu"] = ([_as_float(v, scenario_id, "mu") for v in mu] if isinstance(mu, list)
                        else _as_float(mu, scenario_id, "mu"))
    if values.get("grid") is not None:
        values["grid"] = _parse_grid(values["grid"], scenario_id)
    if values.get("entries") is not None:
        values["entries"] = [[_as_float(v, scenario_id, "entries") for v in row] for row in values["entries"]]
    if "estimate_bound" in values and not isinstance(values["estimate_bound"], bool):
        raise ConfigError("must be true or false", scenario_id=scenario_id, key="estimate_bound")
    return ScenarioConfig(**values)


def _parse_grid(grid: Any, scenario_id: str) -> Dict[str, float]:
    if not isinstance(grid, dict) or set(grid) != {"y_min", "y_max", "step"}:
        raise ConfigError("grid needs exactly y_min, y_max and step", scenario_id=scenario_id, key="grid")
    return {key: _as_float(grid[key], scenario_id, "grid") for key in ("y_min", "y_max", "step")}


def validate_scenario(s: ScenarioConfig) -> None:
    """Check every precondition the scenario's estimators will impose"""
    def fail(message: str, key: str):
        raise ConfigError(message, scenario_id=s.id, key=key)

    if s.kind not in KINDS:
        fail(f"kind must be one of {KINDS}, got {s.kind!r}", "kind")
    if s.family not in [f.value for f in Family]:
        fail(f"unknown family {s.family!r}", "family")
    if s.p < 1:
        fail(f"p must be >= 1, got {s.p}", "p")
    if not 1 <= s.k <= s.p:
        fail(f"k must satisfy 1 <= k <= p={s.p}, got {s.k}", "k")

    needs_rho = s.family in (Family.EQUICORRELATED.value, Family.AR1.value, Family.BLOCK.value)
    if needs_rho and s.rho is None:
        fail(f"{s.family} needs rho", "rho")
    if s.family == Family.BLOCK.value and s.block_size is None:
        fail("block family needs block_size", "block_size")
    if s.family == Family.EXPLICIT.value and s.entries is None:
        fail("explicit family needs entries", "entries")
    try:
        s.build_model()
    except CovarianceError as e:
        key = "entries" if s.family == Family.EXPLICIT.value else ("rho" if needs_rho else "family")
        if s.family == Family.BLOCK.value and "block_size" in str(e):
            key = "block_size"
        fail(str(e), key)

    if s.kind in ("anticonc", "nazarov"):
        if s.epsilon is None or not s.epsilon > 0:
            fail(f"epsilon must be positive, got {s.epsilon}", "epsilon")
        if s.n < MIN_DRAWS:
            fail(f"needs at least {MIN_DRAWS} draws, got {s.n}", "n")
    if s.kind == "anticonc" and s.grid is not None:
        try:
            s.build_grid().validate(s.p, s.epsilon)
        except GridError as e:
            fail(str(e), "grid")
    if s.kind == "nazarov" and subset_count(s.p, s.k) > SUBSET_CAP:
        fail(f"C({s.p},{s.k}) exceeds the subset cap {SUBSET_CAP}", "k")
    if s.kind == "coupling" and s.n < MIN_COUPLING_DRAWS:
        fail(f"needs at least {MIN_COUPLING_DRAWS} draws, got {s.n}", "n")
    if s.kind == "density":
        if s.n < MIN_DIAGNOSTIC_DRAWS:
            fail(f"needs at least {MIN_DIAGNOSTIC_DRAWS} draws, got {s.n}", "n")
        if s.bins < 2:
            fail(f"needs at least 2 bins, got {s.bins}", "bins")
    if s.kind == "kfwer":
        _validate_kfwer(s, fail)


def _validate_kfwer(s: ScenarioConfig, fail) -> None:
    if s.n < 2:
        fail(f"sample size must be >= 2, got {s.n}", "n")
    if s.alpha is None or not 0 < s.alpha < 1:
        fail(f"alpha must lie in (0, 1), got {s.alpha}", "alpha")
    if s.b is None or s.b < MIN_BOOTSTRAP:
        fail(f"b must be >= {MIN_BOOTSTRAP}, got {s.b}", "b")
    if s.n_sim is None or s.n_sim < 1:
        fail(f"n_sim must be >= 1, got {s.n_sim}", "n_sim")
    if isinstance(s.mu, list) and len(s.mu) != s.p:
        fail(f"mu has {len(s.mu)} entries, expected {s.p}", "mu")
    if not 0 < s.gamma_level < 1:
        fail(f"gamma_level must lie in (0, 1), got {s.gamma_level}", "gamma_level")
    if s.estimate_bound:
        if s.n_direct < MIN_DIRECT_DRAWS:
            fail(f"n_direct must be >= {MIN_DIRECT_DRAWS}, got {s.n_direct}", "n_direct")
        mu = s.mu if isinstance(s.mu, list) else [s.mu] * s.p
        if sum(1 for m in mu if m <= 0) < s.k:
            fail("estimate_bound needs at least k true nulls (mu_j <= 0)", "estimate_bound")


def config_to_dict(config: RunConfig) -> Dict[str, Any]:
    """Full-form mapping, omitting unset optional keys"""
    scenarios = [{key: value for key, value in asdict(s).items() if value is not None}
                 for s in config.scenarios]
    return {"seed": config.seed, "out": config.out, "workers": config.workers, "scenarios": scenarios}


def write_config(config: RunConfig, path: Union[str, Path]) -> Path:
    """Write the expanded full form; parse_config reads it back unchanged"""
    path = Path(path)
    path.write_text(yaml.safe_dump(config_to_dict(config), sort_keys=False, default_flow_style=False))
    return path


def _is_int(value: Any) -> bool:
    return isinstance(value, int) and not isinstance(value, bool)


def _as_float(value: Any, scenario_id: str, key: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"must be a number, got {value!r}", scenario_id=scenario_id, key=key)
    value = float(value)
    if not math.isfinite(value):
        raise ConfigError(f"must be finite, got {value}", scenario_id=scenario_id, key=key)
    return value

"""Report bundle: summary.json plus one CSV table per row kind."""
from dataclasses import dataclass, field
import logging
import math
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import numpy as np
import pandas as pd

from .errors import ReportError
from .sim.streams import GENERATOR_NAME
from .utils import FLOAT_FORMAT, FileUtils, NumberUtils

logger = logging.getLogger(__name__)

SUMMARY_FILE = "summary.json"

ANTICONC_COLUMNS = [
    "scenario_id", "family", "params", "p", "k", "epsilon", "n_draws", "sup_hat", "sup_se", "argmax_y",
    "e_max_norm_hat", "e_max_norm_se", "bound_theorem1", "bound_nazarov", "min_var_w_hat", "pass", "seed",
    "generator",
]
KFWER_COLUMNS = [
    "scenario_id", "n", "p", "k", "alpha", "b", "n_sim", "rho_or_params", "kfwer_hat", "kfwer_se",
    "mean_rejections", "mean_false_rejections", "bound_formula_value", "pass", "seed", "generator",
]
DIAGNOSTICS_COLUMNS = [
    "scenario_id", "kind", "check", "family", "params", "p", "k", "n_draws", "value", "se", "reference",
    "criterion", "pass", "seed", "generator",
]
TABLES = {
    "anticonc.csv": ("anticonc_rows", ANTICONC_COLUMNS),
    "kfwer.csv": ("kfwer_rows", KFWER_COLUMNS),
    "diagnostics.csv": ("diagnostics_rows", DIAGNOSTICS_COLUMNS),
}
CRITERIA = ("abs_within_3se", "at_least_minus_3se", "nonpositive", "zero", "report")


def criterion_passed(criterion: str, value: Optional[float], se: Optional[float],
                     reference: Optional[float]) -> bool:
    """Pass rule of a diagnostics row, recomputable from its numbers"""
    if criterion == "report":
        return True
    if _missing(value):
        return False
    se = 0.0 if _missing(se) else se
    if criterion == "nonpositive":
        return value <= 0
    if criterion == "zero":
        return value == 0
    if _missing(reference):
        return False
    if criterion == "abs_within_3se":
        return abs(value - reference) <= 3.0 * se
    if criterion == "at_least_minus_3se":
        return value >= reference - 3.0 * se
    raise ReportError(f"unknown criterion {criterion!r}")


def _missing(value: Optional[float]) -> bool:
    return value is None or (isinstance(value, float) and math.isnan(value))


@dataclass
class ReportBundle:
    """Everything one run writes to disk"""
    summary: Dict[str, Any]
    timing: Dict[str, Any]
    anticonc_rows: List[Dict[str, Any]] = field(default_factory=list)
    kfwer_rows: List[Dict[str, Any]] = field(default_factory=list)
    diagnostics_rows: List[Dict[str, Any]] = field(default_factory=list)

    @classmethod
    def from_outcomes(cls, outcomes, config: Dict[str, Any], timing: Dict[str, Any]) -> 'ReportBundle':
        """Collect scenario outcomes in config order"""
        scenarios = []
        bundle = cls(summary={}, timing=timing)
        for outcome in outcomes:
            scenarios.append({
                "id": outcome.scenario_id,
                "kind": outcome.kind,
                "seed": outcome.seed,
                "status": "error" if outcome.error else "ok",
                "pass": bool(outcome.passed),
                "results": outcome.summary,
                "error": outcome.error,
            })
            bundle.anticonc_rows.extend(outcome.anticonc_rows)
            bundle.kfwer_rows.extend(outcome.kfwer_rows)
            bundle.diagnostics_rows.extend(outcome.diagnostics_rows)
        bundle.summary = {
            "generator": GENERATOR_NAME,
            "config": config,
            "scenarios": scenarios,
            "passed": all(s["pass"] for s in scenarios),
        }
        return bundle

    @property
    def passed(self) -> bool:
        return bool(self.summary.get("passed"))

    def table(self, name: str) -> pd.DataFrame:
        """Rows of one CSV file as a frame in the normative column order"""
        attribute, columns = TABLES[name]
        return pd.DataFrame(getattr(self, attribute), columns=columns)

    def write(self, out: Union[str, Path]) -> Path:
        """Write summary.json and every CSV, header-only when a table is empty"""
        out = FileUtils.ensure_directory(Path(out))
        for name in TABLES:
            frame = self.table(name)
            frame.to_csv(out / name, index=False, float_format=FLOAT_FORMAT, na_rep="")
        FileUtils.write_json_file(out / SUMMARY_FILE, {**_serializable(self.summary), "timing": self.timing})
        logger.info("report written to %s", out)
        return out


def _serializable(value: Any) -> Any:
    """Plain JSON types, floats rounded to the reported precision"""
    if isinstance(value, dict):
        return {str(k): _serializable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_serializable(v) for v in value]
    if isinstance(value, np.ndarray):
        return _serializable(value.tolist())
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return NumberUtils.round_sig(value) if math.isfinite(value) else None
    return value


def load_summary(out: Union[str, Path]) -> Dict[str, Any]:
    """Read summary.json; missing or unparseable files raise ReportError"""
    path = Path(out) / SUMMARY_FILE
    try:
        summary = FileUtils.read_json_file(path)
    except ValueError as e:
        raise ReportError(f"corrupt {path}: {e}") from e
    if summary is None:
        raise ReportError(f"missing {path}")
    return summary


def load_table(out: Union[str, Path], name: str) -> pd.DataFrame:
    """Read one CSV and check its header against the normative columns"""
    path = Path(out) / name
    if not path.exists():
        raise ReportError(f"missing {path}")
    try:
        frame = pd.read_csv(path, dtype={"scenario_id": str, "seed": str})
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as e:
        raise ReportError(f"corrupt {path}: {e}") from e
    expected = TABLES[name][1]
    if list(frame.columns) != expected:
        raise ReportError(f"{path} has columns {list(frame.columns)}, expected {expected}")
    return frame

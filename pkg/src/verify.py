"""Recompute pass/fail of a finished report from its CSV numbers alone."""
from dataclasses import dataclass, field
import logging
import math
from pathlib import Path
from typing import Any, Dict, List, Union

import pandas as pd

from .errors import ReportError
from .report import CRITERIA, TABLES, criterion_passed, load_summary, load_table

logger = logging.getLogger(__name__)


@dataclass
class VerifyResult:
    """Outcome of re-checking a report directory"""
    passed: bool
    checked: Dict[str, int] = field(default_factory=dict)
    failures: List[str] = field(default_factory=list)

    def to_dict(self) -> Dict[str, Any]:
        return {"passed": self.passed, "checked": self.checked, "failures": self.failures}


def _value(row: pd.Series, column: str):
    value = row[column]
    return None if pd.isna(value) else float(value)


def _stored_pass(row: pd.Series) -> bool:
    value = row["pass"]
    if isinstance(value, str):
        return value.strip().lower() == "true"
    return bool(value)


def verify_anticonc(frame: pd.DataFrame) -> List[str]:
    """sup_hat <= bound + 3·(sup SE + 2εk·E-max SE) on every row"""
    failures = []
    for index, row in frame.iterrows():
        tolerance = 3.0 * (row["sup_se"] + 2.0 * row["epsilon"] * row["k"] * row["e_max_norm_se"])
        ok = row["sup_hat"] <= row["bound_theorem1"] + tolerance
        label = f"anticonc.csv row {index + 2} (scenario {row['scenario_id']})"
        if not ok:
            failures.append(f"{label}: sup_hat {row['sup_hat']} exceeds bound {row['bound_theorem1']}"
                            f" + {tolerance:.6g}")
        elif not _stored_pass(row):
            failures.append(f"{label}: recorded as failed")
    return failures


def verify_kfwer(frame: pd.DataFrame) -> List[str]:
    """kfwer_hat <= α + 3·√(α(1−α)/n_sim) on every row"""
    failures = []
    for index, row in frame.iterrows():
        alpha = row["alpha"]
        ceiling = alpha + 3.0 * math.sqrt(alpha * (1.0 - alpha) / row["n_sim"])
        label = f"kfwer.csv row {index + 2} (scenario {row['scenario_id']})"
        if not row["kfwer_hat"] <= ceiling:
            failures.append(f"{label}: kfwer_hat {row['kfwer_hat']} exceeds {ceiling:.6g}")
        elif not _stored_pass(row):
            failures.append(f"{label}: recorded as failed")
    return failures


def verify_diagnostics(frame: pd.DataFrame) -> List[str]:
    """Re-apply each row's criterion to its value, se and reference"""
    failures = []
    for index, row in frame.iterrows():
        label = f"diagnostics.csv row {index + 2} (scenario {row['scenario_id']}, {row['check']})"
        criterion = row["criterion"]
        if criterion not in CRITERIA:
            failures.append(f"{label}: unknown criterion {criterion!r}")
            continue
        recomputed = criterion_passed(criterion, _value(row, "value"), _value(row, "se"), _value(row, "reference"))
        if not recomputed:
            failures.append(f"{label}: {criterion} fails for value {row['value']}")
        elif recomputed != _stored_pass(row):
            failures.append(f"{label}: recorded pass flag disagrees with the numbers")
    return failures


VERIFIERS = {
    "anticonc.csv": verify_anticonc,
    "kfwer.csv": verify_kfwer,
    "diagnostics.csv": verify_diagnostics,
}


def verify_reports(path: Union[str, Path]) -> VerifyResult:
    """Check a completed output directory; missing or corrupt files raise ReportError"""
    path = Path(path)
    if not path.is_dir():
        raise ReportError(f"report directory not found: {path}")
    if not any(path.iterdir()):
        raise ReportError(f"report directory is empty: {path}")

    summary = load_summary(path)
    result = VerifyResult(passed=True)

    # Scenarios that errored out produce no rows, so the summary is the only record of them
    scenarios = summary.get("scenarios")
    if not isinstance(scenarios, list) or not scenarios:
        raise ReportError(f"{path / 'summary.json'} lists no scenarios")
    for scenario in scenarios:
        if scenario.get("status") != "ok":
            message = (scenario.get("error") or {}).get("message", "unknown error")
            result.failures.append(f"scenario {scenario.get('id')}: {message}")
    result.checked["scenarios"] = len(scenarios)

    for name in TABLES:
        frame = load_table(path, name)
        result.checked[name] = len(frame)
        result.failures.extend(VERIFIERS[name](frame))

    result.passed = not result.failures
    for failure in result.failures:
        logger.error("verify: %s", failure)
    logger.info("verified %s: %s", path, "pass" if result.passed else f"{len(result.failures)} failure(s)")
    return result

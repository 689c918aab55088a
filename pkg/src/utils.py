from typing import Any, Dict, Optional, Union
import hashlib
import json
import logging
import math
from pathlib import Path

import numpy as np

logger = logging.getLogger(__name__)

SIGNIFICANT_DIGITS = 12
FLOAT_FORMAT = f"%.{SIGNIFICANT_DIGITS}g"


class FileUtils:
    """File handling utilities"""

    @staticmethod
    def read_json_file(path: Path) -> Optional[Dict[str, Any]]:
        """Read and parse JSON file; None when it does not exist"""
        if not path.exists():
            return None
        return json.loads(path.read_text())

    @staticmethod
    def write_json_file(path: Path, data: Dict[str, Any], indent: int = 2) -> None:
        """Write data to JSON file with stable key order"""
        path.write_text(json.dumps(data, indent=indent, sort_keys=True) + "\n")

    @staticmethod
    def ensure_directory(path: Path) -> Path:
        """Ensure directory exists"""
        path.mkdir(parents=True, exist_ok=True)
        return path


class HashUtils:
    """Stable hashing for stream keys and identifiers"""

    @staticmethod
    def stable_int(value: Union[int, str]) -> int:
        """Map an int or string to a non-negative 32-bit integer, identically on every run"""
        if isinstance(value, (int, np.integer)) and not isinstance(value, bool):
            if value < 0:
                raise ValueError(f"stream key parts must be non-negative, got {value}")
            return int(value)
        digest = hashlib.sha256(str(value).encode("utf-8")).digest()
        return int.from_bytes(digest[:4], "little")


class NumberUtils:
    """Numeric formatting helpers"""

    @staticmethod
    def fmt(value: Optional[float]) -> str:
        """Format with 12 significant digits; blank for missing values"""
        if value is None or (isinstance(value, float) and math.isnan(value)):
            return ""
        return FLOAT_FORMAT % value

    @staticmethod
    def round_sig(value: float) -> float:
        """Round to the serialized precision"""
        return float(FLOAT_FORMAT % value)

    @staticmethod
    def params_label(params: Dict[str, Any]) -> str:
        """Compact, deterministic 'key=value;...' label for family parameters"""
        parts = []
        for key in sorted(params):
            value = params[key]
            if isinstance(value, float):
                value = NumberUtils.fmt(value)
            elif isinstance(value, (list, tuple, np.ndarray)):
                value = "matrix" if np.ndim(value) > 1 else ",".join(NumberUtils.fmt(float(v)) for v in value)
            parts.append(f"{key}={value}")
        return ";".join(parts)
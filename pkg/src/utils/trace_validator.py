"""
Schema validation utilities for emitted CSV files.
"""

import logging
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import pandas as pd

from ..models.trace_schemas import HapticTraceSchema, TraceSchema

logger = logging.getLogger(__name__)


class TraceValidator:
    """Validates CSV frames against the documented file schemas."""

    def __init__(self, schemas: Optional[Dict[str, TraceSchema]] = None):
        self.schemas = schemas or HapticTraceSchema.get_all_schemas()

    def validate(self, frame: pd.DataFrame, kind: str) -> Dict[str, object]:
        """
        Check a frame against one schema.

        Args:
            frame: Parsed CSV contents
            kind: Schema name, e.g. "device_trace"

        Returns:
            Dictionary with 'valid', 'missing', 'unexpected' and 'non_numeric'
        """
        if kind not in self.schemas:
            raise KeyError(f"Unknown file kind: {kind}")
        schema = self.schemas[kind]
        columns = list(frame.columns)

        missing = [c for c in schema.column_names if c not in columns]
        unexpected: List[str] = []
        if not schema.allow_extra_columns:
            unexpected = [c for c in columns if c not in schema.column_names]
        elif kind == "matrix_report":
            # Predicted-id columns between actual_id and recognition_pct
            unexpected = [c for c in columns if c not in schema.column_names and not str(c).isdigit()]

        order_ok = not missing and not unexpected and (
            schema.allow_extra_columns or columns == schema.column_names
        )

        non_numeric = []
        for name in schema.get_numeric_columns():
            if frame.empty or name not in frame.columns:
                continue
            if not pd.api.types.is_numeric_dtype(frame[name]):
                non_numeric.append(name)

        return {
            "kind": kind,
            "valid": order_ok and not non_numeric,
            "missing": missing,
            "unexpected": unexpected,
            "non_numeric": non_numeric,
            "row_count": len(frame),
        }

    def detect_kind(self, frame: pd.DataFrame) -> Optional[str]:
        """Name of the first schema the frame satisfies, or None."""
        for kind in self.schemas:
            if self.validate(frame, kind)["valid"]:
                return kind
        return None

    def load(self, path: Union[str, Path], kind: Optional[str] = None) -> Tuple[str, pd.DataFrame]:
        """
        Read a CSV file and validate it.

        Returns:
            (kind, frame)

        Raises:
            ValueError: when the file matches no (or not the given) schema
        """
        frame = pd.read_csv(path)
        if kind is None:
            kind = self.detect_kind(frame)
            if kind is None:
                raise ValueError(f"{path} matches no known file schema (columns {list(frame.columns)})")
            return kind, frame

        result = self.validate(frame, kind)
        if not result["valid"]:
            raise ValueError(f"{path} is not a valid {kind}: {result}")
        logger.debug("Validated %s as %s (%d rows)", path, kind, len(frame))
        return kind, frame

"""
Column schemas for every CSV file the engine reads or writes.
Defines the column order, types and meaning of each file.
"""

from dataclasses import dataclass, field
from typing import Dict, List, Optional


@dataclass
class ColumnInfo:
    """Information about a CSV column."""
    name: str
    data_type: str
    comment: Optional[str] = None
    unit: Optional[str] = None


@dataclass
class TraceSchema:
    """Schema definition for one CSV file kind."""
    kind: str
    columns: List[ColumnInfo]
    description: str = ""
    allow_extra_columns: bool = False
    key_columns: List[str] = field(default_factory=list)

    @property
    def column_names(self) -> List[str]:
        return [col.name for col in self.columns]

    def get_column(self, name: str) -> Optional[ColumnInfo]:
        """Get column info by name."""
        for col in self.columns:
            if col.name == name:
                return col
        return None

    def get_numeric_columns(self) -> List[str]:
        """Get list of numeric column names."""
        return [col.name for col in self.columns if col.data_type in ("INT", "FLOAT")]

    def get_integer_columns(self) -> List[str]:
        return [col.name for col in self.columns if col.data_type == "INT"]


DEVICE_TRACE_COLUMNS = [
    "time_s", "unit", "cmd_x_mm", "cmd_y_mm", "act_x_mm", "act_y_mm", "palm_y_mm", "force_n",
]
IMPEDANCE_TRACE_COLUMNS = ["time_s", "commanded_y_mm", "actual_y_mm", "palm_y_mm", "force_n"]
TRIAL_LOG_COLUMNS = ["trial", "actual_id", "predicted_id"]
PATTERN_TABLE_COLUMNS = ["pattern_id", "label", "unit", "column"]
FORCE_PROFILE_COLUMNS = ["force_n"]


class HapticTraceSchema:
    """Schema definitions for the engine's CSV files."""

    @staticmethod
    def get_device_trace_schema() -> TraceSchema:
        """One row per unit per tick of a device run."""
        columns = [
            ColumnInfo("time_s", "FLOAT", "Simulation clock after the tick", "s"),
            ColumnInfo("unit", "INT", "Mechanism unit 0..2"),
            ColumnInfo("cmd_x_mm", "FLOAT", "Commanded end-effector x", "mm"),
            ColumnInfo("cmd_y_mm", "FLOAT", "Commanded end-effector y", "mm"),
            ColumnInfo("act_x_mm", "FLOAT", "Actual end-effector x", "mm"),
            ColumnInfo("act_y_mm", "FLOAT", "Actual end-effector y", "mm"),
            ColumnInfo("palm_y_mm", "FLOAT", "Palm surface height", "mm"),
            ColumnInfo("force_n", "FLOAT", "Sensed contact force", "N"),
        ]
        return TraceSchema(
            kind="device_trace",
            columns=columns,
            key_columns=["time_s", "unit"],
            description="Per-unit device trace of a closed-loop or pattern run",
        )

    @staticmethod
    def get_impedance_trace_schema() -> TraceSchema:
        """Single-contact impedance rendering trace, starting at t = 0."""
        columns = [
            ColumnInfo("time_s", "FLOAT", "Sample time", "s"),
            ColumnInfo("commanded_y_mm", "FLOAT", "Nominal height plus impedance displacement", "mm"),
            ColumnInfo("actual_y_mm", "FLOAT", "Rate-limited end-effector height", "mm"),
            ColumnInfo("palm_y_mm", "FLOAT", "Palm surface height", "mm"),
            ColumnInfo("force_n", "FLOAT", "Sensed force of the rendering unit", "N"),
        ]
        return TraceSchema(
            kind="impedance_trace",
            columns=columns,
            key_columns=["time_s"],
            description="Commanded vs actual contact height under an impedance law",
        )

    @staticmethod
    def get_trial_log_schema() -> TraceSchema:
        columns = [
            ColumnInfo("trial", "INT", "Trial index, from 1"),
            ColumnInfo("actual_id", "INT", "Delivered pattern or preset id"),
            ColumnInfo("predicted_id", "INT", "Id reported by the participant"),
        ]
        return TraceSchema(
            kind="trial_log",
            columns=columns,
            key_columns=["trial"],
            description="Experiment responses, one row per trial",
        )

    @staticmethod
    def get_matrix_report_schema() -> TraceSchema:
        """Confusion matrix report; one predicted-id column per label sits between the two below."""
        columns = [
            ColumnInfo("actual_id", "STRING", "Delivered id, or the summary row name"),
            ColumnInfo("recognition_pct", "FLOAT", "Row recognition percentage", "%"),
        ]
        return TraceSchema(
            kind="matrix_report",
            columns=columns,
            allow_extra_columns=True,
            key_columns=["actual_id"],
            description="Row percentages of the confusion matrix with recognition rates",
        )

    @staticmethod
    def get_pattern_table_schema() -> TraceSchema:
        columns = [
            ColumnInfo("pattern_id", "INT", "Pattern id 1..11"),
            ColumnInfo("label", "STRING", "Short pattern name"),
            ColumnInfo("unit", "INT", "Mechanism unit 0..2"),
            ColumnInfo("column", "STRING", "left, mid, right or off"),
        ]
        return TraceSchema(
            kind="pattern_table",
            columns=columns,
            key_columns=["pattern_id", "unit"],
            description="Placement of each unit for each tactile pattern",
        )

    @staticmethod
    def get_force_profile_schema() -> TraceSchema:
        columns = [ColumnInfo("force_n", "FLOAT", "External force held over one tick", "N")]
        return TraceSchema(
            kind="force_profile",
            columns=columns,
            description="Force input of the impedance command, one row per tick",
        )

    @staticmethod
    def get_all_schemas() -> Dict[str, TraceSchema]:
        """Get all file schemas."""
        return {
            "device_trace": HapticTraceSchema.get_device_trace_schema(),
            "impedance_trace": HapticTraceSchema.get_impedance_trace_schema(),
            "trial_log": HapticTraceSchema.get_trial_log_schema(),
            "matrix_report": HapticTraceSchema.get_matrix_report_schema(),
            "pattern_table": HapticTraceSchema.get_pattern_table_schema(),
            "force_profile": HapticTraceSchema.get_force_profile_schema(),
        }


# Pattern grid columns as x offsets from the unit midline (mm); None is inactive.
COLUMN_OFFSETS = {
    "left": -15.0,
    "mid": 0.0,
    "right": 15.0,
    "off": None,
}

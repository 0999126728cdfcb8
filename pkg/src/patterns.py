"""
Tactile pattern library, trial scheduling and confusion-matrix arithmetic.

Patterns place each of the three units on a 3x3 grid: rows are the
mechanism units, columns are x offsets of -15, 0 and +15 mm about each
unit's midline. The default layout lives in ``config/patterns.csv``.
"""

import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from .config import DEFAULT_PATTERNS_PATH, DeviceSettings, load_geometry
from .device_sim import UNIT_COUNT, DeviceSimulator, DeviceState, DeviceTrace, concat_traces
from .exceptions import ConfigError, TrialCountMismatch, UnknownPatternError
from .linkage_kinematics import ContactPoint, LinkageGeometry, workspace_contains
from .models.trace_schemas import COLUMN_OFFSETS, PATTERN_TABLE_COLUMNS

logger = logging.getLogger(__name__)

PATTERN_COUNT = 11
DEFAULT_DURATION_S = 2.0
DEFAULT_REPETITIONS = 5
TRAINING_REPETITIONS = 2
HOMING_DURATION_S = 0.2

Placement = Optional[ContactPoint]


@dataclass(frozen=True)
class TactilePattern:
    """A static placement of the three contact points; None leaves a unit at home."""

    id: int
    placements: Tuple[Placement, Placement, Placement]
    duration: float = DEFAULT_DURATION_S
    label: str = ""

    def __post_init__(self) -> None:
        if self.id < 1:
            raise ValueError(f"pattern id must be >= 1, got {self.id}")
        if len(self.placements) != UNIT_COUNT:
            raise ValueError(f"pattern {self.id} needs {UNIT_COUNT} placements")
        if all(p is None for p in self.placements):
            raise ValueError(f"pattern {self.id} has no active placement")
        if not self.duration > 0:
            raise ValueError(f"pattern {self.id} duration must be > 0")

    @property
    def active_units(self) -> List[int]:
        return [unit for unit, p in enumerate(self.placements) if p is not None]

    def validate_workspace(self, geometry: LinkageGeometry) -> None:
        for unit in self.active_units:
            point = self.placements[unit]
            if not workspace_contains(geometry, point):
                raise ValueError(f"pattern {self.id} unit {unit} at ({point.x}, {point.y}) is unreachable")


@dataclass(frozen=True)
class TrialSchedule:
    """Ordered trial ids, repetitions per id and the seed that ordered them."""

    trials: Tuple[int, ...]
    repetitions: int
    seed: Optional[int] = None

    def __len__(self) -> int:
        return len(self.trials)

    def counts(self) -> Dict[int, int]:
        ids, counts = np.unique(np.array(self.trials), return_counts=True)
        return {int(i): int(c) for i, c in zip(ids, counts)}


def build_schedule(ids: Sequence[int], repetitions: int = DEFAULT_REPETITIONS, seed: int = 0) -> TrialSchedule:
    """
    Seeded random order in which every id appears exactly `repetitions` times.

    Args:
        ids: Distinct pattern (or preset) ids
        repetitions: Deliveries per id
        seed: Seed of the permutation

    Returns:
        TrialSchedule
    """
    if len(ids) == 0:
        raise ValueError("schedule needs at least one id")
    if len(set(ids)) != len(ids):
        raise ValueError(f"duplicate ids in {list(ids)}")
    if repetitions < 1:
        raise ValueError(f"repetitions must be >= 1, got {repetitions}")

    multiset = np.repeat(np.asarray(ids, dtype=int), repetitions)
    order = np.random.default_rng(seed).permutation(multiset)
    return TrialSchedule(trials=tuple(int(i) for i in order), repetitions=repetitions, seed=seed)


def build_training_schedule(ids: Sequence[int], repetitions: int = TRAINING_REPETITIONS) -> TrialSchedule:
    """Training block: the ids in library order, cycled `repetitions` times."""
    if len(ids) == 0:
        raise ValueError("schedule needs at least one id")
    if repetitions < 1:
        raise ValueError(f"repetitions must be >= 1, got {repetitions}")
    return TrialSchedule(trials=tuple(int(i) for i in ids) * repetitions, repetitions=repetitions)


def pattern_library(
    path: Union[str, Path, None] = None,
    geometry: Optional[LinkageGeometry] = None,
    settings: Optional[DeviceSettings] = None,
) -> Tuple[TactilePattern, ...]:
    """
    Load the tactile pattern library from a placement table.

    Every active unit is placed at palm surface + contact depth, at the x
    offset of its grid column.

    Args:
        path: Pattern table CSV; the bundled ``config/patterns.csv`` when None
        geometry: Unit geometry; the bundled one when None. Active
            placements must lie in its workspace.
        settings: Palm height, contact depth; defaults when None

    Returns:
        Patterns sorted by id

    Raises:
        ConfigError: when the table cannot be read or is inconsistent
    """
    source = Path(path) if path is not None else DEFAULT_PATTERNS_PATH
    settings = settings or DeviceSettings()
    geometry = geometry or load_geometry()

    try:
        table = pd.read_csv(source, dtype={"label": str, "column": str}, comment="#")
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise ConfigError(f"Cannot read pattern table {source}: {e}") from e

    missing = [c for c in PATTERN_TABLE_COLUMNS if c not in table.columns]
    if missing:
        raise ConfigError(f"Pattern table {source} lacks columns: {', '.join(missing)}")

    contact_y = settings.palm_surface_y_mm + settings.contact_depth_mm
    patterns = []
    try:
        for pattern_id, rows in table.groupby("pattern_id", sort=True):
            units = sorted(int(u) for u in rows["unit"])
            if units != list(range(UNIT_COUNT)):
                raise ConfigError(f"pattern {pattern_id} must list units 0..2 once each, got {units}")
            placements: List[Placement] = [None] * UNIT_COUNT
            for _, row in rows.iterrows():
                column = str(row["column"]).strip().lower()
                if column not in COLUMN_OFFSETS:
                    raise ConfigError(f"pattern {pattern_id}: unknown column {row['column']!r}")
                offset = COLUMN_OFFSETS[column]
                if offset is not None:
                    placements[int(row["unit"])] = ContactPoint(geometry.midline_x + offset, contact_y)
            pattern = TactilePattern(
                id=int(pattern_id),
                placements=tuple(placements),  # type: ignore[arg-type]
                label=str(rows["label"].iloc[0]),
            )
            pattern.validate_workspace(geometry)
            patterns.append(pattern)
    except (ValueError, TypeError) as e:
        if isinstance(e, ConfigError):
            raise
        raise ConfigError(f"Invalid pattern table {source}: {e}") from e

    logger.debug("Loaded %d patterns from %s", len(patterns), source)
    return tuple(patterns)


def library_by_id(patterns: Iterable[TactilePattern]) -> Dict[int, TactilePattern]:
    return {p.id: p for p in patterns}


class PatternRenderer:
    """Delivers patterns through the device simulator."""

    def __init__(self, simulator: DeviceSimulator, tick: float = 0.01):
        if not tick > 0:
            raise ValueError(f"tick must be > 0, got {tick}")
        self.simulator = simulator
        self.tick = tick

    def commands_for(self, pattern: TactilePattern) -> List[ContactPoint]:
        home = self.simulator.home_point
        return [p if p is not None else home for p in pattern.placements]

    def render(self, pattern: TactilePattern, device: DeviceState) -> DeviceTrace:
        """Hold the pattern for its duration; inactive units stay home."""
        ticks = int(round(pattern.duration / self.tick))
        logger.debug("Rendering pattern %d for %d ticks", pattern.id, ticks)
        return self.simulator.run(device, self.commands_for(pattern), ticks, self.tick)

    def home(self, device: DeviceState, duration: float = HOMING_DURATION_S) -> DeviceTrace:
        """Send every unit back to its no-contact home."""
        ticks = int(round(duration / self.tick))
        return self.simulator.run(device, [self.simulator.home_point] * UNIT_COUNT, ticks, self.tick)

    def deliver(self, pattern: TactilePattern, device: DeviceState) -> DeviceTrace:
        """Render then home."""
        rendered = self.render(pattern, device)
        return concat_traces([rendered, self.home(rendered.final_state)])


def render_pattern(pattern: TactilePattern, simulator: DeviceSimulator, device: DeviceState, tick: float = 0.01) -> DeviceTrace:
    """Render one pattern on the device; see PatternRenderer.render."""
    return PatternRenderer(simulator, tick).render(pattern, device)


def _round_half_up(value: float, decimals: int = 1) -> float:
    scale = 10**decimals
    return math.floor(value * scale + 0.5) / scale


class ConfusionMatrix:
    """Actual x predicted trial counts over a fixed label set."""

    def __init__(self, counts: np.ndarray, labels: Sequence[int]):
        counts = np.asarray(counts, dtype=np.int64)
        if counts.shape != (len(labels), len(labels)):
            raise ValueError(f"counts must be {len(labels)}x{len(labels)}, got {counts.shape}")
        if (counts < 0).any():
            raise ValueError("counts must be non-negative")
        self.counts = counts
        self.labels = tuple(int(label) for label in labels)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def row_totals(self) -> np.ndarray:
        return self.counts.sum(axis=1)

    def recognition_rate(self) -> float:
        """Trace over total, in [0, 1]; 0 for an empty matrix."""
        if self.total == 0:
            return 0.0
        return float(np.trace(self.counts)) / self.total

    def row_percentages(self, rounded: bool = True) -> np.ndarray:
        """Row-normalized percentages, rounded half-up to one decimal by default."""
        totals = self.row_totals()
        percentages = np.zeros(self.counts.shape, dtype=float)
        for i, total in enumerate(totals):
            if total > 0:
                percentages[i] = self.counts[i] * 100.0 / total
        if rounded:
            percentages = np.vectorize(_round_half_up)(percentages)
        return percentages

    def per_label_rates(self) -> Dict[int, float]:
        """Diagonal percentage per actual label (unrounded)."""
        raw = self.row_percentages(rounded=False)
        return {label: float(raw[i, i]) for i, label in enumerate(self.labels)}

    def average_recognition_rate(self) -> float:
        """Mean of the diagonal percentages over labels that were delivered."""
        raw = self.row_percentages(rounded=False)
        delivered = [i for i, total in enumerate(self.row_totals()) if total > 0]
        if not delivered:
            return 0.0
        return float(np.mean([raw[i, i] for i in delivered]))

    def report(self) -> pd.DataFrame:
        """
        Matrix report: one row per actual label with rounded row percentages
        and the row's recognition percentage, then overall and average rows.
        """
        percentages = self.row_percentages()
        rows = []
        for i, label in enumerate(self.labels):
            row = {"actual_id": str(label)}
            row.update({str(p): percentages[i, j] for j, p in enumerate(self.labels)})
            row["recognition_pct"] = percentages[i, i]
            rows.append(row)
        rows.append({"actual_id": "overall", "recognition_pct": _round_half_up(100.0 * self.recognition_rate())})
        rows.append({"actual_id": "average", "recognition_pct": _round_half_up(self.average_recognition_rate())})
        columns = ["actual_id"] + [str(p) for p in self.labels] + ["recognition_pct"]
        return pd.DataFrame(rows, columns=columns)


def confusion_matrix(log: Iterable[Tuple[int, int]], labels: Optional[Sequence[int]] = None) -> ConfusionMatrix:
    """
    Count (actual, predicted) pairs.

    Args:
        log: Trial pairs
        labels: Label set; ids 1..11 when None

    Raises:
        UnknownPatternError: when an id is outside the label set
    """
    labels = tuple(labels) if labels is not None else tuple(range(1, PATTERN_COUNT + 1))
    index = {label: i for i, label in enumerate(labels)}
    counts = np.zeros((len(labels), len(labels)), dtype=np.int64)
    for actual, predicted in log:
        for value in (actual, predicted):
            if value not in index:
                raise UnknownPatternError(f"id {value} is not one of {list(labels)}")
        counts[index[actual], index[predicted]] += 1
    return ConfusionMatrix(counts, labels)


def trial_log_frame(schedule: TrialSchedule, responses: Sequence[int]) -> pd.DataFrame:
    """
    Pair a schedule with its responses as a trial log.

    Raises:
        TrialCountMismatch: when there is not exactly one response per trial
    """
    if len(responses) != len(schedule):
        raise TrialCountMismatch(f"{len(responses)} responses for {len(schedule)} trials")
    return pd.DataFrame(
        {
            "trial": np.arange(1, len(schedule) + 1),
            "actual_id": list(schedule.trials),
            "predicted_id": [int(r) for r in responses],
        }
    )

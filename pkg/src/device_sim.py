"""
Fixed-tick simulation of the three-unit palm display.

Each unit is a five-bar linkage driven by two rate-limited servos. The
end-effector presses a compliant palm and a force-sensitive resistor reads
the contact force with additive Gaussian noise, a constant bias and a
calibration offset. States are immutable; the simulator owns the noise
generator so a fixed seed reproduces a trace bit for bit.
"""

import logging
import math
from dataclasses import dataclass, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from .config import DeviceSettings
from .exceptions import NoIntersection, NotInNonTouchPose
from .linkage_kinematics import (
    ContactPoint,
    JointAngles,
    LinkageGeometry,
    forward_kinematics,
    inverse_kinematics,
)
from .models.trace_schemas import DEVICE_TRACE_COLUMNS

logger = logging.getLogger(__name__)

UNIT_COUNT = 3
DEFAULT_RATE_LIMIT = (math.pi / 3.0) / 0.07


@dataclass(frozen=True)
class ServoModel:
    """One servo: current angle (rad) and rated speed (rad/s)."""

    angle: float
    rate_limit: float = DEFAULT_RATE_LIMIT

    def __post_init__(self) -> None:
        if not math.isfinite(self.angle):
            raise ValueError("servo angle must be finite")
        if not self.rate_limit > 0:
            raise ValueError(f"rate_limit must be > 0, got {self.rate_limit}")

    def max_step(self, dt: float) -> float:
        return self.rate_limit * dt

    def toward(self, target: float, dt: float) -> "ServoModel":
        """Move toward target by at most rate_limit * dt."""
        limit = self.max_step(dt)
        delta = min(limit, max(-limit, target - self.angle))
        return replace(self, angle=self.angle + delta)


@dataclass(frozen=True)
class PalmModel:
    """Palm surface height per unit (mm) and skin stiffness (N/m)."""

    surface_y: Tuple[float, float, float]
    compliance: float

    def __post_init__(self) -> None:
        if len(self.surface_y) != UNIT_COUNT:
            raise ValueError(f"surface_y needs {UNIT_COUNT} entries")
        if not self.compliance > 0:
            raise ValueError(f"compliance must be > 0, got {self.compliance}")

    def penetration_mm(self, unit: int, y: float) -> float:
        return max(0.0, y - self.surface_y[unit])

    def raw_force(self, unit: int, y: float) -> float:
        return max(0.0, self.compliance * self.penetration_mm(unit, y) / 1000.0)


@dataclass(frozen=True)
class FsrSensor:
    """Force-sensitive resistor reading model, all values in newtons."""

    noise_sigma: float = 0.02
    calibration_offset: float = 0.0
    saturation: float = 10.0
    bias: float = 0.0

    def __post_init__(self) -> None:
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")
        if not self.saturation > 0:
            raise ValueError("saturation must be > 0")

    def uncalibrated(self, raw: float, noise: float) -> float:
        return raw + self.bias + noise

    def sense(self, raw: float, noise: float) -> float:
        reading = self.uncalibrated(raw, noise) - self.calibration_offset
        return min(self.saturation, max(0.0, reading))


@dataclass(frozen=True)
class UnitState:
    """Servo pair, commanded and actual end-effector, and forces of one unit."""

    left: ServoModel
    right: ServoModel
    contact: ContactPoint
    command: ContactPoint
    sensor: FsrSensor
    raw_force: float = 0.0
    sensed_force: float = 0.0

    @property
    def angles(self) -> JointAngles:
        return JointAngles(self.left.angle, self.right.angle)


@dataclass(frozen=True)
class DeviceState:
    """The three units and the simulation clock (s)."""

    units: Tuple[UnitState, UnitState, UnitState]
    clock: float = 0.0

    def __post_init__(self) -> None:
        if len(self.units) != UNIT_COUNT:
            raise ValueError(f"device has exactly {UNIT_COUNT} units")

    @property
    def contacts(self) -> Tuple[ContactPoint, ...]:
        return tuple(u.contact for u in self.units)

    @property
    def sensed_forces(self) -> Tuple[float, ...]:
        return tuple(u.sensed_force for u in self.units)


@dataclass
class DeviceTrace:
    """A run's per-unit, per-tick trace and the state it ended in."""

    frame: pd.DataFrame
    final_state: DeviceState

    @property
    def tick_count(self) -> int:
        return len(self.frame) // UNIT_COUNT

    def to_csv(self, path) -> None:
        self.frame.to_csv(path, index=False)


class DeviceSimulator:
    """
    Steps the three units of the device.

    The simulator carries the geometry, the palm, the servo speed and the
    seeded noise generator. Everything that changes from tick to tick lives
    in DeviceState.
    """

    def __init__(
        self,
        geometry: LinkageGeometry,
        palm: PalmModel,
        sensor: Optional[FsrSensor] = None,
        rate_limit: float = DEFAULT_RATE_LIMIT,
        calibration_samples: int = 100,
        home_y: float = 35.0,
        seed: int = 0,
    ):
        if calibration_samples < 1:
            raise ValueError("calibration_samples must be >= 1")
        self.geometry = geometry
        self.palm = palm
        self.sensor = sensor or FsrSensor()
        self.rate_limit = rate_limit
        self.calibration_samples = calibration_samples
        self.home_y = home_y
        self.seed = seed
        self.rng = np.random.default_rng(seed)

    @classmethod
    def from_settings(cls, geometry: LinkageGeometry, settings: DeviceSettings) -> "DeviceSimulator":
        """Build a simulator from loaded device settings."""
        return cls(
            geometry=geometry,
            palm=PalmModel(settings.palm_surfaces(), settings.palm_compliance_n_per_m),
            sensor=FsrSensor(
                noise_sigma=settings.fsr_noise_sigma_n,
                saturation=settings.fsr_saturation_n,
                bias=settings.fsr_bias_n,
            ),
            rate_limit=settings.servo_rate_limit,
            calibration_samples=settings.calibration_samples,
            home_y=settings.home_y_mm,
            seed=settings.seed,
        )

    @property
    def home_point(self) -> ContactPoint:
        return ContactPoint(self.geometry.midline_x, self.home_y)

    def _noise(self) -> np.ndarray:
        if self.sensor.noise_sigma == 0:
            return np.zeros(UNIT_COUNT)
        return self.rng.normal(0.0, self.sensor.noise_sigma, size=UNIT_COUNT)

    def initial_state(self, positions: Optional[Sequence[ContactPoint]] = None) -> DeviceState:
        """
        Device resting at the given end-effector positions (home by default).

        Raises:
            Unreachable: when a position is outside the workspace
        """
        positions = list(positions) if positions is not None else [self.home_point] * UNIT_COUNT
        if len(positions) != UNIT_COUNT:
            raise ValueError(f"expected {UNIT_COUNT} positions, got {len(positions)}")

        noise = self._noise()
        units = []
        for unit, target in enumerate(positions):
            angles = inverse_kinematics(self.geometry, target)
            contact = forward_kinematics(self.geometry, angles)
            raw = self.palm.raw_force(unit, contact.y)
            units.append(
                UnitState(
                    left=ServoModel(angles.left, self.rate_limit),
                    right=ServoModel(angles.right, self.rate_limit),
                    contact=contact,
                    command=target,
                    sensor=self.sensor,
                    raw_force=raw,
                    sensed_force=self.sensor.sense(raw, float(noise[unit])),
                )
            )
        return DeviceState(units=tuple(units), clock=0.0)

    def _move(self, unit: UnitState, goal: JointAngles, dt: float) -> Tuple[ServoModel, ServoModel, ContactPoint]:
        left = unit.left.toward(goal.left, dt)
        right = unit.right.toward(goal.right, dt)
        try:
            return left, right, forward_kinematics(self.geometry, JointAngles(left.angle, right.angle))
        except NoIntersection:
            pass

        # Independent clamping left the linkage open: move both servos by the
        # same fraction of their remaining travel instead.
        d_left = goal.left - unit.left.angle
        d_right = goal.right - unit.right.angle
        fraction = min(1.0, unit.left.max_step(dt) / max(abs(d_left), abs(d_right)))
        left = replace(unit.left, angle=unit.left.angle + fraction * d_left)
        right = replace(unit.right, angle=unit.right.angle + fraction * d_right)
        try:
            return left, right, forward_kinematics(self.geometry, JointAngles(left.angle, right.angle))
        except NoIntersection:
            logger.warning("Unit cannot move toward %s this tick, holding pose", goal.as_degrees())
            return unit.left, unit.right, unit.contact

    def tick(self, state: DeviceState, commands: Sequence[ContactPoint], dt: float) -> DeviceState:
        """
        Advance the device by one tick.

        Args:
            state: Current device state
            commands: Target end-effector position for each unit
            dt: Tick length in seconds

        Returns:
            The next DeviceState

        Raises:
            Unreachable: when a command is outside its unit's workspace
        """
        if not dt > 0:
            raise ValueError(f"dt must be > 0, got {dt}")
        if len(commands) != UNIT_COUNT:
            raise ValueError(f"expected {UNIT_COUNT} commands, got {len(commands)}")

        goals = [inverse_kinematics(self.geometry, command) for command in commands]
        noise = self._noise()

        units = []
        for index, (unit, command, goal) in enumerate(zip(state.units, commands, goals)):
            left, right, contact = self._move(unit, goal, dt)
            raw = self.palm.raw_force(index, contact.y)
            units.append(
                replace(
                    unit,
                    left=left,
                    right=right,
                    contact=contact,
                    command=command,
                    raw_force=raw,
                    sensed_force=unit.sensor.sense(raw, float(noise[index])),
                )
            )
        return DeviceState(units=tuple(units), clock=state.clock + dt)

    def calibrate(self, state: DeviceState) -> DeviceState:
        """
        Zero every force sensor in a non-touch pose.

        Each sensor offset becomes the mean of ``calibration_samples``
        uncalibrated readings.

        Raises:
            NotInNonTouchPose: when any unit presses the palm
        """
        touching = [
            index
            for index, unit in enumerate(state.units)
            if self.palm.penetration_mm(index, unit.contact.y) > 0
        ]
        if touching:
            raise NotInNonTouchPose(f"units {touching} touch the palm; calibrate in a non-touch pose")

        samples = np.zeros((self.calibration_samples, UNIT_COUNT))
        for row in range(self.calibration_samples):
            samples[row] = self._noise()

        units = []
        for index, unit in enumerate(state.units):
            readings = [unit.sensor.uncalibrated(unit.raw_force, float(n)) for n in samples[:, index]]
            sensor = replace(unit.sensor, calibration_offset=float(np.mean(readings)))
            units.append(replace(unit, sensor=sensor, sensed_force=sensor.sense(unit.raw_force, 0.0)))

        logger.info("Calibrated offsets: %s", [round(u.sensor.calibration_offset, 6) for u in units])
        return replace(state, units=tuple(units))

    def read_forces(self, state: DeviceState) -> Tuple[float, float, float]:
        """One fresh sensed reading per unit."""
        noise = self._noise()
        return tuple(  # type: ignore[return-value]
            unit.sensor.sense(unit.raw_force, float(noise[index])) for index, unit in enumerate(state.units)
        )

    def trace_rows(self, state: DeviceState) -> List[Dict[str, float]]:
        """Device trace rows (one per unit) for a state."""
        return [
            {
                "time_s": state.clock,
                "unit": index,
                "cmd_x_mm": unit.command.x,
                "cmd_y_mm": unit.command.y,
                "act_x_mm": unit.contact.x,
                "act_y_mm": unit.contact.y,
                "palm_y_mm": self.palm.surface_y[index],
                "force_n": unit.sensed_force,
            }
            for index, unit in enumerate(state.units)
        ]

    def run(self, state: DeviceState, commands: Sequence[ContactPoint], ticks: int, dt: float) -> DeviceTrace:
        """Hold one command set for a number of ticks."""
        rows: List[Dict[str, float]] = []
        for _ in range(ticks):
            state = self.tick(state, commands, dt)
            rows.extend(self.trace_rows(state))
        return DeviceTrace(frame=trace_frame(rows), final_state=state)


def trace_frame(rows: List[Dict[str, float]]) -> pd.DataFrame:
    """Device trace rows as a DataFrame with the documented column order."""
    frame = pd.DataFrame(rows, columns=DEVICE_TRACE_COLUMNS)
    return frame.astype({"unit": "int64"}) if not frame.empty else frame


def concat_traces(traces: Sequence[DeviceTrace]) -> DeviceTrace:
    """Join consecutive runs into one trace."""
    if not traces:
        raise ValueError("no traces to join")
    frame = pd.concat([t.frame for t in traces], ignore_index=True)
    return DeviceTrace(frame=frame, final_state=traces[-1].final_state)

"""
Tactile-interaction controllers: limit-force approach and per-point impedance.

Both controllers are pure state machines (state in, state out). ``closed_loop``
wires one of them to the device simulator tick by tick.
"""

import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import List, Optional, Sequence, Tuple

from .device_sim import UNIT_COUNT, DeviceSimulator, DeviceState, DeviceTrace, trace_frame
from .impedance_core import DiscreteModel, ImpedanceState, discretize, step
from .linkage_kinematics import ContactPoint, reachable_y_range
from .models.presets import StiffnessPreset

logger = logging.getLogger(__name__)

ARRIVAL_TOL_MM = 0.01


@dataclass(frozen=True)
class ForceControlConfig:
    """Limit force (N), approach speed (mm/s) and no-contact height (mm)."""

    limit_force: float
    approach_speed: float = 20.0
    home_y: float = 35.0

    def __post_init__(self) -> None:
        if not self.limit_force > 0:
            raise ValueError(f"limit_force must be > 0, got {self.limit_force}")
        if not self.approach_speed > 0:
            raise ValueError(f"approach_speed must be > 0, got {self.approach_speed}")
        if not math.isfinite(self.home_y):
            raise ValueError("home_y must be finite")

    def check_palm(self, palm_surface_y: float) -> None:
        """Home must sit strictly off the palm (smaller y)."""
        if not self.home_y < palm_surface_y:
            raise ValueError(f"home_y {self.home_y} must be below the palm surface {palm_surface_y}")


class ForceControlPhase(Enum):
    APPROACHING = "approaching"
    RETRACTING = "retracting"
    HOME = "home"


@dataclass(frozen=True)
class ControllerOutput:
    """Commanded height per unit (mm)."""

    target_y: Tuple[float, float, float]

    def __post_init__(self) -> None:
        if len(self.target_y) != UNIT_COUNT:
            raise ValueError(f"target_y needs {UNIT_COUNT} entries")
        if not all(math.isfinite(y) for y in self.target_y):
            raise ValueError("controller targets must be finite")

    def clamped(self, bands: Sequence[Tuple[float, float]]) -> "ControllerOutput":
        """Clamp each target into its unit's reachable height band."""
        return ControllerOutput(
            tuple(min(hi, max(lo, y)) for y, (lo, hi) in zip(self.target_y, bands))  # type: ignore[arg-type]
        )


def force_control_step(
    config: ForceControlConfig,
    phase: ForceControlPhase,
    sensed: Sequence[float],
    current_y: Sequence[float],
    dt: float,
) -> Tuple[ControllerOutput, ForceControlPhase]:
    """
    One tick of the limit-force controller.

    Approaching: every target advances toward the palm by approach_speed * dt,
    until some sensed force reaches the limit; that tick already retracts.
    Retracting: targets move back toward home_y at the same speed and the
    phase becomes Home once every unit is within 0.01 mm of home.

    Args:
        config: Limit force, speed and home height
        phase: Current phase
        sensed: Sensed force per unit (N)
        current_y: Actual end-effector height per unit (mm)
        dt: Tick length (s)

    Returns:
        Targets for this tick and the next phase
    """
    if not dt > 0:
        raise ValueError(f"dt must be > 0, got {dt}")

    travel = config.approach_speed * dt

    if phase is ForceControlPhase.APPROACHING:
        if max(sensed) >= config.limit_force:
            logger.debug("Limit force %.3f N reached (sensed %s)", config.limit_force, list(sensed))
            phase = ForceControlPhase.RETRACTING
        else:
            return ControllerOutput(tuple(y + travel for y in current_y)), phase  # type: ignore[arg-type]

    if phase is ForceControlPhase.RETRACTING:
        if all(abs(y - config.home_y) <= ARRIVAL_TOL_MM for y in current_y):
            return ControllerOutput((config.home_y,) * UNIT_COUNT), ForceControlPhase.HOME
        targets = tuple(_toward(y, config.home_y, travel) for y in current_y)
        return ControllerOutput(targets), phase  # type: ignore[arg-type]

    return ControllerOutput((config.home_y,) * UNIT_COUNT), ForceControlPhase.HOME


def _toward(value: float, goal: float, travel: float) -> float:
    if abs(goal - value) <= travel:
        return goal
    return value + math.copysign(travel, goal - value)


def impedance_control_step(
    models: Sequence[DiscreteModel],
    states: Sequence[ImpedanceState],
    sensed: Sequence[float],
    nominal_y: Sequence[float],
) -> Tuple[ControllerOutput, Tuple[ImpedanceState, ...]]:
    """
    One tick of the per-point impedance controller.

    Each contact point is evaluated on its own.

    Sign convention: each link is stepped with F_ext = -sensed, the palm
    reaction along -y, not with the sensed reading itself. A sensed load
    moves the target away from the palm, softer presets by more.

    Returns:
        target_y = nominal_y + displacement (mm), and the advanced states
    """
    sample_times = {m.sample_time for m in models}
    if len(sample_times) != 1:
        raise ValueError("impedance models must share one sample time")

    next_states = tuple(step(model, state, -force) for model, state, force in zip(models, states, sensed))
    targets = tuple(y + 1000.0 * s.displacement for y, s in zip(nominal_y, next_states))
    return ControllerOutput(targets), next_states  # type: ignore[arg-type]


def closed_loop(
    preset: StiffnessPreset,
    simulator: DeviceSimulator,
    device: DeviceState,
    duration: float,
    tick: float = 0.01,
    approach_speed: float = 20.0,
    impedance_depth: float = 4.0,
) -> DeviceTrace:
    """
    Run a preset's controller against the simulated device.

    The units keep their current x positions. Force presets approach from the
    current height and retract to the simulator's home height. Impedance
    presets hold each unit at palm surface + impedance_depth, displaced by
    the impedance response to the sensed force.

    Args:
        preset: Stiffness preset to render
        simulator: Device simulator
        device: Starting device state
        duration: Run length (s); 0 gives an empty trace
        tick: Loop period (s)
        approach_speed: Force-control speed (mm/s)
        impedance_depth: Nominal depth of impedance rendering into the palm (mm)

    Returns:
        DeviceTrace with one row per unit per tick
    """
    if duration < 0:
        raise ValueError(f"duration must be >= 0, got {duration}")
    if not tick > 0:
        raise ValueError(f"tick must be > 0, got {tick}")

    ticks = int(round(duration / tick))
    xs = [c.x for c in device.contacts]
    bands = [reachable_y_range(simulator.geometry, x) for x in xs]

    force_config: Optional[ForceControlConfig] = None
    models: List[DiscreteModel] = []
    if preset.is_impedance:
        models = [discretize(preset.impedance, tick)] * UNIT_COUNT
        states: Tuple[ImpedanceState, ...] = (ImpedanceState(),) * UNIT_COUNT
        nominal = [s + impedance_depth for s in simulator.palm.surface_y]
    else:
        force_config = ForceControlConfig(preset.limit_force, approach_speed, simulator.home_y)
        for surface in simulator.palm.surface_y:
            force_config.check_palm(surface)
        phase = ForceControlPhase.APPROACHING

    logger.info("Closed loop %s for %d ticks of %.4f s", preset.name, ticks, tick)
    rows = []
    for _ in range(ticks):
        sensed = device.sensed_forces
        if force_config is not None:
            current_y = [c.y for c in device.contacts]
            output, phase = force_control_step(force_config, phase, sensed, current_y, tick)
        else:
            output, states = impedance_control_step(models, states, sensed, nominal)
        output = output.clamped(bands)
        commands = [ContactPoint(x, y) for x, y in zip(xs, output.target_y)]
        device = simulator.tick(device, commands, tick)
        rows.extend(simulator.trace_rows(device))

    return DeviceTrace(frame=trace_frame(rows), final_state=device)

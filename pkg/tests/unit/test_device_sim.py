"""Unit tests for the device simulator."""

import math

import numpy as np
import pandas as pd
import pytest

from src.device_sim import (
    DEFAULT_RATE_LIMIT,
    DeviceSimulator,
    FsrSensor,
    PalmModel,
    ServoModel,
    concat_traces,
    trace_frame,
)
from src.exceptions import NotInNonTouchPose, Unreachable
from src.linkage_kinematics import (
    ContactPoint,
    JointAngles,
    LinkageGeometry,
    forward_kinematics,
    inverse_kinematics,
    travel_time,
)
from src.models.trace_schemas import DEVICE_TRACE_COLUMNS

DT = 0.01


class TestComponents:
    """Test cases for servo, palm and sensor models."""

    def test_servo_step_is_rate_limited(self) -> None:
        servo = ServoModel(0.0)
        moved = servo.toward(1.0, DT)
        assert moved.angle == pytest.approx(DEFAULT_RATE_LIMIT * DT)
        assert servo.angle == 0.0

    def test_servo_reaches_close_target(self) -> None:
        servo = ServoModel(1.0)
        assert servo.toward(1.01, DT).angle == 1.01

    def test_servo_validation(self) -> None:
        with pytest.raises(ValueError):
            ServoModel(float("nan"))
        with pytest.raises(ValueError):
            ServoModel(0.0, rate_limit=0.0)

    def test_palm_force(self) -> None:
        """Test 2 mm into a 500 N/m palm gives 1 N."""
        palm = PalmModel((42.0, 42.0, 42.0), 500.0)
        assert palm.raw_force(0, 44.0) == pytest.approx(1.0)
        assert palm.raw_force(1, 41.0) == 0.0
        assert palm.penetration_mm(2, 40.0) == 0.0

    def test_palm_validation(self) -> None:
        with pytest.raises(ValueError):
            PalmModel((42.0, 42.0), 500.0)
        with pytest.raises(ValueError):
            PalmModel((42.0, 42.0, 42.0), 0.0)

    def test_sensor_clamps(self) -> None:
        sensor = FsrSensor(noise_sigma=0.0, saturation=5.0, bias=-0.5)
        assert sensor.sense(0.0, 0.0) == 0.0
        assert sensor.sense(9.0, 0.0) == 5.0
        assert sensor.sense(2.0, 0.1) == pytest.approx(1.6)

    def test_sensor_offset(self) -> None:
        sensor = FsrSensor(noise_sigma=0.0, calibration_offset=0.25, bias=0.25)
        assert sensor.sense(1.0, 0.0) == pytest.approx(1.0)


class TestInitialState:
    """Test cases for the resting state."""

    def test_defaults_to_home(self, simulator: DeviceSimulator) -> None:
        state = simulator.initial_state()
        assert state.clock == 0.0
        for contact in state.contacts:
            assert contact.x == pytest.approx(20.0, abs=1e-9)
            assert contact.y == pytest.approx(35.0, abs=1e-9)
        assert state.sensed_forces == (0.0, 0.0, 0.0)

    def test_unreachable_position(self, simulator: DeviceSimulator) -> None:
        with pytest.raises(Unreachable):
            simulator.initial_state([ContactPoint(20.0, 10.0)] * 3)

    def test_position_count(self, simulator: DeviceSimulator) -> None:
        with pytest.raises(ValueError):
            simulator.initial_state([ContactPoint(20.0, 35.0)] * 2)


class TestTick:
    """Test cases for one device tick."""

    def test_clock_advances(self, simulator: DeviceSimulator) -> None:
        state = simulator.initial_state()
        state = simulator.tick(state, [simulator.home_point] * 3, DT)
        assert state.clock == pytest.approx(DT)

    @pytest.mark.parametrize("target", [(20.0, 44.0), (5.0, 44.0), (35.0, 44.0), (12.0, 40.0), (28.0, 50.0)])
    def test_reaches_target(self, simulator: DeviceSimulator, geometry: LinkageGeometry, target: tuple) -> None:
        """Test a held command is attained within travel_time + 2 ticks."""
        goal = ContactPoint(*target)
        state = simulator.initial_state()
        start = state.units[0].angles
        budget = int(math.ceil(travel_time(start, inverse_kinematics(geometry, goal)) / DT)) + 2
        for _ in range(budget):
            state = simulator.tick(state, [goal] * 3, DT)
        for contact in state.contacts:
            assert contact.distance_to(goal) < 0.01

    def test_rate_limit_respected(self, simulator: DeviceSimulator) -> None:
        """Test no servo moves more than rate_limit * dt per tick."""
        state = simulator.initial_state()
        goals = [ContactPoint(5.0, 44.0), ContactPoint(35.0, 50.0), ContactPoint(20.0, 55.0)]
        for _ in range(20):
            nxt = simulator.tick(state, goals, DT)
            for before, after in zip(state.units, nxt.units):
                assert abs(after.left.angle - before.left.angle) <= DEFAULT_RATE_LIMIT * DT * (1 + 1e-12)
                assert abs(after.right.angle - before.right.angle) <= DEFAULT_RATE_LIMIT * DT * (1 + 1e-12)
            state = nxt

    def test_single_servo_sweep(self, simulator: DeviceSimulator, geometry: LinkageGeometry) -> None:
        """Test (80, 90) -> (140, 90) deg: the left servo advances 60/7 deg per tick."""
        start = forward_kinematics(geometry, JointAngles.from_degrees(80, 90))
        goal = forward_kinematics(geometry, JointAngles.from_degrees(140, 90))
        state = simulator.initial_state([start] * 3)
        step_deg = math.degrees(DEFAULT_RATE_LIMIT * DT)
        assert step_deg == pytest.approx(60.0 / 7.0)

        for k in range(1, 7):
            state = simulator.tick(state, [goal] * 3, DT)
            left, right = state.units[0].angles.as_degrees()
            assert left == pytest.approx(80.0 + k * step_deg, abs=1e-6)
            assert right == pytest.approx(90.0, abs=1e-6)

        state = simulator.tick(state, [goal] * 3, DT)
        assert state.units[0].angles.as_degrees()[0] == pytest.approx(140.0, abs=1e-6)
        assert state.contacts[0].distance_to(goal) < 1e-6

    def test_units_are_independent(self, simulator: DeviceSimulator) -> None:
        """Test changing one unit's command leaves the others untouched."""
        first = simulator.run(simulator.initial_state(), [ContactPoint(5.0, 44.0), ContactPoint(20.0, 44.0), ContactPoint(35.0, 44.0)], 20, DT)
        second = simulator.run(simulator.initial_state(), [ContactPoint(35.0, 50.0), ContactPoint(20.0, 44.0), ContactPoint(35.0, 44.0)], 20, DT)
        for unit in (1, 2):
            pd.testing.assert_frame_equal(
                first.frame[first.frame["unit"] == unit].reset_index(drop=True),
                second.frame[second.frame["unit"] == unit].reset_index(drop=True),
            )

    def test_contact_force(self, make_simulator) -> None:
        """Test a 2 mm press on a 500 N/m palm senses 1 N without noise."""
        sim = make_simulator()
        state = sim.initial_state()
        goal = ContactPoint(20.0, 44.0)
        for _ in range(10):
            state = sim.tick(state, [goal] * 3, DT)
        for force in state.sensed_forces:
            assert force == pytest.approx(1.0, abs=1e-6)

    def test_saturation(self, make_simulator) -> None:
        sim = make_simulator(saturation=2.0)
        state = sim.initial_state()
        goal = ContactPoint(20.0, 52.0)
        for _ in range(10):
            state = sim.tick(state, [goal] * 3, DT)
        assert state.sensed_forces == (2.0, 2.0, 2.0)
        assert all(u.raw_force > 2.0 for u in state.units)

    def test_forces_never_negative(self, make_simulator) -> None:
        sim = make_simulator(noise_sigma=0.05, bias=-0.02)
        state = sim.initial_state()
        for _ in range(50):
            state = sim.tick(state, [sim.home_point] * 3, DT)
            assert min(state.sensed_forces) >= 0.0

    @pytest.mark.parametrize("commands,dt", [
        ([ContactPoint(20.0, 44.0)] * 3, 0.0),
        ([ContactPoint(20.0, 44.0)] * 2, DT),
    ])
    def test_invalid_arguments(self, simulator: DeviceSimulator, commands: list, dt: float) -> None:
        with pytest.raises(ValueError):
            simulator.tick(simulator.initial_state(), commands, dt)

    def test_unreachable_command(self, simulator: DeviceSimulator) -> None:
        with pytest.raises(Unreachable):
            simulator.tick(simulator.initial_state(), [ContactPoint(20.0, 80.0)] * 3, DT)


class TestCalibration:
    """Test cases for sensor calibration."""

    def test_offset_estimates_bias(self, make_simulator) -> None:
        """Test the offset is within 4 sigma / sqrt(n) of the bias."""
        sim = make_simulator(noise_sigma=0.05, bias=0.3, seed=5)
        state = sim.calibrate(sim.initial_state())
        for unit in state.units:
            assert abs(unit.sensor.calibration_offset - 0.3) < 4 * 0.05 / math.sqrt(100)

    def test_calibrated_reading_removes_bias(self, make_simulator) -> None:
        sim = make_simulator(noise_sigma=0.0, bias=0.4)
        state = sim.initial_state()
        assert state.sensed_forces == pytest.approx((0.4, 0.4, 0.4))
        state = sim.calibrate(state)
        assert state.sensed_forces == pytest.approx((0.0, 0.0, 0.0), abs=1e-12)

    def test_rejects_touch_pose(self, simulator: DeviceSimulator) -> None:
        state = simulator.initial_state([simulator.home_point, ContactPoint(20.0, 44.0), simulator.home_point])
        with pytest.raises(NotInNonTouchPose):
            simulator.calibrate(state)

    def test_read_forces_mean(self, make_simulator) -> None:
        """Test the mean of 1000 reads of a 1 N contact is within 0.005 N."""
        sim = make_simulator(noise_sigma=0.05, seed=9)
        state = sim.initial_state([ContactPoint(20.0, 44.0)] * 3)
        reads = np.array([sim.read_forces(state) for _ in range(1000)])
        assert np.all(np.abs(reads.mean(axis=0) - 1.0) < 0.005)


class TestTrace:
    """Test cases for trace output."""

    def test_run_trace(self, simulator: DeviceSimulator) -> None:
        trace = simulator.run(simulator.initial_state(), [ContactPoint(20.0, 44.0)] * 3, 5, DT)
        assert list(trace.frame.columns) == DEVICE_TRACE_COLUMNS
        assert len(trace.frame) == 15
        assert trace.tick_count == 5
        assert trace.frame["unit"].dtype == np.int64
        assert trace.frame["unit"].tolist() == [0, 1, 2] * 5
        np.testing.assert_allclose(trace.frame["time_s"].unique(), np.arange(1, 6) * DT)
        assert trace.final_state.clock == pytest.approx(0.05)

    def test_same_seed_same_trace(self, make_simulator) -> None:
        """Test a fixed seed reproduces a noisy trace exactly."""
        frames = []
        for _ in range(2):
            sim = make_simulator(noise_sigma=0.05, seed=42)
            frames.append(sim.run(sim.initial_state(), [ContactPoint(20.0, 44.0)] * 3, 30, DT).frame)
        pd.testing.assert_frame_equal(frames[0], frames[1])

    def test_different_seed_different_noise(self, make_simulator) -> None:
        sims = [make_simulator(noise_sigma=0.05, seed=s) for s in (1, 2)]
        forces = [s.run(s.initial_state(), [ContactPoint(20.0, 44.0)] * 3, 10, DT).frame["force_n"] for s in sims]
        assert not np.array_equal(forces[0].to_numpy(), forces[1].to_numpy())

    def test_empty_trace_has_columns(self) -> None:
        assert list(trace_frame([]).columns) == DEVICE_TRACE_COLUMNS

    def test_concat_traces(self, simulator: DeviceSimulator) -> None:
        first = simulator.run(simulator.initial_state(), [ContactPoint(20.0, 40.0)] * 3, 3, DT)
        second = simulator.run(first.final_state, [simulator.home_point] * 3, 2, DT)
        joined = concat_traces([first, second])
        assert joined.tick_count == 5
        assert joined.final_state is second.final_state
        with pytest.raises(ValueError):
            concat_traces([])

    def test_to_csv(self, simulator: DeviceSimulator, tmp_path) -> None:
        trace = simulator.run(simulator.initial_state(), [simulator.home_point] * 3, 2, DT)
        path = tmp_path / "trace.csv"
        trace.to_csv(path)
        assert pd.read_csv(path).columns.tolist() == DEVICE_TRACE_COLUMNS

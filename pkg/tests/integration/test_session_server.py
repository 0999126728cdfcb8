"""
Protocol server tests over real loopback sockets.

The device loop runs in simulated time: the test decides when ticks happen
by awaiting ``advance``.
"""

import asyncio
from typing import List, Optional, Tuple

import pytest

from src.device_sim import DeviceSimulator
from src.linkage_kinematics import ContactPoint
from src.protocol import ForceReport, decode
from src.session_server import (
    DeviceLoop,
    SessionPhase,
    SessionState,
    Snapshot,
    bound_port,
    read_client_line,
    serve,
)

TIMEOUT = 5.0


class Harness:
    """A device loop, a listening server and helpers for client connections."""

    def __init__(self, simulator: DeviceSimulator):
        self.device_loop = DeviceLoop(simulator, record=True)
        self.listener: Optional[asyncio.AbstractServer] = None
        self.clients: List[asyncio.StreamWriter] = []

    async def __aenter__(self) -> "Harness":
        self.listener = await serve(self.device_loop, "127.0.0.1", 0)
        return self

    async def __aexit__(self, *exc) -> None:
        for writer in self.clients:
            writer.close()
        self.device_loop.stop()
        await asyncio.sleep(0.05)
        assert self.listener is not None
        self.listener.close()
        await asyncio.wait_for(self.listener.wait_closed(), TIMEOUT)

    async def connect(self) -> Tuple[asyncio.StreamReader, asyncio.StreamWriter]:
        assert self.listener is not None
        reader, writer = await asyncio.open_connection("127.0.0.1", bound_port(self.listener))
        self.clients.append(writer)
        return reader, writer

    async def hello(self) -> Tuple[asyncio.StreamReader, asyncio.StreamWriter]:
        reader, writer = await self.connect()
        await send(writer, b"HELLO 1\n")
        assert await reply(reader) == b"HELLO 1\n"
        return reader, writer


async def send(writer: asyncio.StreamWriter, data: bytes) -> None:
    writer.write(data)
    await writer.drain()


async def read_line(reader: asyncio.StreamReader) -> bytes:
    return await asyncio.wait_for(reader.readline(), TIMEOUT)


async def reply(reader: asyncio.StreamReader) -> bytes:
    """Next line that is not force telemetry."""
    while True:
        line = await read_line(reader)
        if not line.startswith(b"FRC "):
            return line


async def sync(reader: asyncio.StreamReader, writer: asyncio.StreamWriter) -> None:
    """Round-trip a bad line so every earlier line is known to be processed."""
    await send(writer, b"PING\n")
    line = await reply(reader)
    assert line.startswith(b"ERR 1 unknown verb"), line


def fed_reader(data: bytes, limit: int = 8) -> asyncio.StreamReader:
    reader = asyncio.StreamReader(limit=limit)
    reader.feed_data(data)
    reader.feed_eof()
    return reader


@pytest.mark.integration
class TestReadClientLine:
    """Line framing with a small reader limit."""

    @pytest.mark.asyncio
    async def test_short_lines(self) -> None:
        reader = fed_reader(b"CAL\nHELLO 1")
        assert await read_client_line(reader) == b"CAL\n"
        assert await read_client_line(reader) == b"HELLO 1"
        assert await read_client_line(reader) == b""

    @pytest.mark.asyncio
    async def test_overlong_line_reported_once(self) -> None:
        reader = fed_reader(b"X" * 50 + b"\nCAL\n")
        assert await read_client_line(reader) is None
        assert await read_client_line(reader) == b"CAL\n"
        assert await read_client_line(reader) == b""

    @pytest.mark.asyncio
    async def test_overlong_line_at_end_of_stream(self) -> None:
        reader = fed_reader(b"X" * 50)
        assert await read_client_line(reader) is None
        assert await read_client_line(reader) == b""


@pytest.mark.integration
class TestDeviceLoop:
    """Device loop without sockets."""

    @pytest.mark.asyncio
    async def test_advance_publishes_snapshots(self, simulator: DeviceSimulator) -> None:
        loop = DeviceLoop(simulator)
        queue = loop.subscribe()
        state = await loop.advance(5)
        assert state.clock == pytest.approx(0.05)
        snapshots = [queue.get_nowait() for _ in range(5)]
        assert all(isinstance(s, Snapshot) and len(s.forces) == 3 for s in snapshots)
        assert queue.empty()

    @pytest.mark.asyncio
    async def test_unsubscribe_and_stop(self, simulator: DeviceSimulator) -> None:
        loop = DeviceLoop(simulator)
        kept, dropped = loop.subscribe(), loop.subscribe()
        loop.unsubscribe(dropped)
        loop.unsubscribe(dropped)
        await loop.advance(1)
        loop.stop()
        assert dropped.empty()
        assert isinstance(kept.get_nowait(), Snapshot)
        assert kept.get_nowait() is None

    @pytest.mark.asyncio
    async def test_records_trace(self, simulator: DeviceSimulator) -> None:
        loop = DeviceLoop(simulator, record=True)
        await loop.advance(4)
        assert len(loop.trace()) == 12
        assert DeviceLoop(simulator).trace().empty

    @pytest.mark.asyncio
    async def test_run_ticks_until_stopped(self, simulator: DeviceSimulator) -> None:
        loop = DeviceLoop(simulator, tick_period=0.005)
        task = asyncio.ensure_future(loop.run())
        await asyncio.sleep(0.1)
        loop.stop()
        await asyncio.wait_for(task, TIMEOUT)
        assert loop.state.clock > 0

    def test_rejects_bad_tick_period(self, simulator: DeviceSimulator) -> None:
        with pytest.raises(ValueError):
            DeviceLoop(simulator, tick_period=0.0)

    def test_session_state(self) -> None:
        state = SessionState()
        assert state.phase is SessionPhase.AWAITING_HELLO
        assert not state.accepts_targets()
        state.phase = SessionPhase.ACTIVE
        assert state.accepts_targets()


@pytest.mark.integration
class TestSessionServer:
    """End-to-end protocol sessions."""

    @pytest.mark.asyncio
    async def test_telemetry_three_lines_per_tick(self, simulator: DeviceSimulator) -> None:
        """Test 100 ticks after HELLO stream exactly 300 FRC lines."""
        async with Harness(simulator) as harness:
            reader, _ = await harness.hello()
            await harness.device_loop.advance(100)
            lines = [await read_line(reader) for _ in range(300)]
            messages = [decode(line) for line in lines]
            assert all(isinstance(m, ForceReport) for m in messages)
            assert [m.unit for m in messages] == [0, 1, 2] * 100

    @pytest.mark.asyncio
    async def test_set_before_hello(self, simulator: DeviceSimulator) -> None:
        async with Harness(simulator) as harness:
            reader, writer = await harness.connect()
            await send(writer, b"SET 0 20 44\n")
            assert await read_line(reader) == b"ERR 1 expected HELLO\n"
            await send(writer, b"HELLO 1\n")
            assert await read_line(reader) == b"HELLO 1\n"

    @pytest.mark.asyncio
    async def test_set_moves_unit(self, simulator: DeviceSimulator) -> None:
        async with Harness(simulator) as harness:
            reader, writer = await harness.hello()
            await send(writer, b"SET 1 20 44\n")
            await sync(reader, writer)
            state = await harness.device_loop.advance(20)
            assert state.contacts[1].distance_to(ContactPoint(20.0, 44.0)) < 0.01
            assert state.contacts[0].distance_to(simulator.home_point) < 1e-6

    @pytest.mark.asyncio
    async def test_unreachable_set_keeps_previous_target(self, simulator: DeviceSimulator) -> None:
        async with Harness(simulator) as harness:
            reader, writer = await harness.hello()
            await send(writer, b"SET 0 20 44\n")
            await send(writer, b"SET 0 20 80\n")
            assert await reply(reader) == b"ERR 2 target unreachable\n"
            await harness.device_loop.advance(20)
            assert harness.device_loop.targets[0] == ContactPoint(20.0, 44.0)

    @pytest.mark.asyncio
    async def test_second_client_is_busy(self, simulator: DeviceSimulator) -> None:
        async with Harness(simulator) as harness:
            await harness.hello()
            reader, _ = await harness.connect()
            assert await read_line(reader) == b"ERR 1 busy\n"
            assert await read_line(reader) == b""

    @pytest.mark.asyncio
    async def test_next_client_after_disconnect(self, simulator: DeviceSimulator) -> None:
        async with Harness(simulator) as harness:
            _, first = await harness.hello()
            first.close()
            await first.wait_closed()
            for _ in range(50):
                reader, writer = await harness.connect()
                await send(writer, b"HELLO 1\n")
                if await read_line(reader) == b"HELLO 1\n":
                    break
                await asyncio.sleep(0.02)
            else:
                pytest.fail("server stayed busy after the first client left")

    @pytest.mark.asyncio
    async def test_calibrate_in_contact_fails(self, simulator: DeviceSimulator) -> None:
        async with Harness(simulator) as harness:
            reader, writer = await harness.hello()
            await send(writer, b"SET 0 20 44\n")
            await sync(reader, writer)
            await harness.device_loop.advance(10)
            await send(writer, b"CAL\n")
            await sync(reader, writer)
            await harness.device_loop.advance(1)
            assert await reply(reader) == b"ERR 3 not in non-touch pose\n"

    @pytest.mark.asyncio
    async def test_calibrate_at_home_is_silent(self, make_simulator) -> None:
        """Test a successful CAL sends nothing and zeroes the sensor bias."""
        async with Harness(make_simulator(bias=0.2)) as harness:
            reader, writer = await harness.hello()
            await send(writer, b"CAL\n")
            await sync(reader, writer)
            state = await harness.device_loop.advance(1)
            await sync(reader, writer)
            for unit in state.units:
                assert unit.sensor.calibration_offset == pytest.approx(0.2)
            assert state.sensed_forces == pytest.approx((0.0, 0.0, 0.0), abs=1e-12)

    @pytest.mark.asyncio
    async def test_garbage_then_hello(self, simulator: DeviceSimulator) -> None:
        async with Harness(simulator) as harness:
            reader, writer = await harness.connect()
            await send(writer, b"\xff\xfe garbage\n")
            assert (await read_line(reader)).startswith(b"ERR 1 ")
            await send(writer, b"HELLO 1\n")
            assert await read_line(reader) == b"HELLO 1\n"

    @pytest.mark.asyncio
    @pytest.mark.parametrize("chunks", [
        [b"X" * 300_000 + b"\n", b"HELLO 1\n"],
        [b"X" * 300_000 + b"\nHELLO 1\n"],
        [b"X" * 70_000, b"X" * 70_000 + b"\n", b"HELLO 1\n"],
    ])
    async def test_overlong_line_gets_one_reply(self, simulator: DeviceSimulator, chunks: List[bytes]) -> None:
        async with Harness(simulator) as harness:
            reader, writer = await harness.connect()
            for chunk in chunks:
                await send(writer, chunk)
            assert await read_line(reader) == b"ERR 1 line too long\n"
            assert await read_line(reader) == b"HELLO 1\n"

    @pytest.mark.asyncio
    async def test_protocol_misuse(self, simulator: DeviceSimulator) -> None:
        async with Harness(simulator) as harness:
            reader, writer = await harness.hello()
            await send(writer, b"HELLO 1\n")
            assert await reply(reader) == b"ERR 1 session already active\n"
            await send(writer, b"FRC 0 1\n")
            assert await reply(reader) == b"ERR 1 unexpected message\n"
            await send(writer, b"SET 0 20\n")
            assert (await reply(reader)).startswith(b"ERR 1 SET takes 3 arguments")

    @pytest.mark.asyncio
    async def test_bind_conflict_raises(self, simulator: DeviceSimulator) -> None:
        async with Harness(simulator) as harness:
            assert harness.listener is not None
            with pytest.raises(OSError):
                await serve(DeviceLoop(simulator), "127.0.0.1", bound_port(harness.listener))

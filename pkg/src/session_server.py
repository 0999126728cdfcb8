"""
Device loop and protocol server.

The device loop owns the simulated device state. Session handlers never
touch that state: they submit commands on the loop's command queue and
receive per-tick force snapshots on their own subscriber queue. A None on
a subscriber queue signals shutdown.
"""

import asyncio
import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional, Set, Tuple, Union

from .device_sim import DeviceSimulator, DeviceState, trace_frame
from .exceptions import MalformedLine, NotInNonTouchPose
from .linkage_kinematics import ContactPoint, workspace_contains
from .protocol import (
    ERR_MALFORMED,
    ERR_NOT_IN_NON_TOUCH_POSE,
    ERR_UNREACHABLE,
    PROTOCOL_VERSION,
    Calibrate,
    Error,
    ForceReport,
    Hello,
    Message,
    SetTarget,
    decode,
    encode,
)

logger = logging.getLogger(__name__)

DEFAULT_TICK_PERIOD = 0.01
_MAX_SUBSCRIBER_QUEUE = 10_000


class SessionPhase(Enum):
    AWAITING_HELLO = "awaiting_hello"
    ACTIVE = "active"
    CLOSED = "closed"


@dataclass
class SessionState:
    """Protocol state of one connection."""

    phase: SessionPhase = SessionPhase.AWAITING_HELLO
    tick_period: float = DEFAULT_TICK_PERIOD

    def accepts_targets(self) -> bool:
        return self.phase is SessionPhase.ACTIVE


@dataclass(frozen=True)
class Snapshot:
    """Sensed forces after one device tick."""

    clock: float
    forces: Tuple[float, ...]


@dataclass(frozen=True)
class TargetCommand:
    unit: int
    point: ContactPoint


@dataclass
class CalibrateCommand:
    done: "asyncio.Future[None]" = field(default_factory=lambda: asyncio.get_running_loop().create_future())


Command = Union[TargetCommand, CalibrateCommand]


class DeviceLoop:
    """
    Single owner of the simulated device.

    In simulated-time mode ticks happen only when ``advance`` is awaited,
    which makes tests deterministic. ``run`` ticks on the wall clock.
    """

    def __init__(
        self,
        simulator: DeviceSimulator,
        state: Optional[DeviceState] = None,
        tick_period: float = DEFAULT_TICK_PERIOD,
        record: bool = False,
    ):
        if not tick_period > 0:
            raise ValueError(f"tick_period must be > 0, got {tick_period}")
        self.simulator = simulator
        self.state = state if state is not None else simulator.initial_state()
        self.tick_period = tick_period
        self.targets: List[ContactPoint] = [u.command for u in self.state.units]
        self.commands: "asyncio.Queue[Command]" = asyncio.Queue()
        self._subscribers: List["asyncio.Queue[Optional[Snapshot]]"] = []
        self._record = record
        self._rows: List[Dict[str, float]] = []
        self._running = False

    @property
    def geometry(self):
        return self.simulator.geometry

    def subscribe(self) -> "asyncio.Queue[Optional[Snapshot]]":
        q: "asyncio.Queue[Optional[Snapshot]]" = asyncio.Queue(maxsize=_MAX_SUBSCRIBER_QUEUE)
        self._subscribers.append(q)
        return q

    def unsubscribe(self, q: "asyncio.Queue[Optional[Snapshot]]") -> None:
        try:
            self._subscribers.remove(q)
        except ValueError:
            pass

    async def submit(self, command: Command) -> None:
        await self.commands.put(command)

    def _drain_commands(self) -> None:
        while not self.commands.empty():
            command = self.commands.get_nowait()
            if isinstance(command, TargetCommand):
                self.targets[command.unit] = command.point
            elif isinstance(command, CalibrateCommand):
                try:
                    self.state = self.simulator.calibrate(self.state)
                except NotInNonTouchPose as e:
                    if not command.done.done():
                        command.done.set_exception(e)
                else:
                    if not command.done.done():
                        command.done.set_result(None)

    def _publish(self, snapshot: Snapshot) -> None:
        for q in self._subscribers:
            try:
                q.put_nowait(snapshot)
            except asyncio.QueueFull:
                pass  # slow consumer, drop

    async def advance(self, ticks: int = 1) -> DeviceState:
        """Apply queued commands and step the device `ticks` times."""
        for _ in range(ticks):
            self._drain_commands()
            self.state = self.simulator.tick(self.state, self.targets, self.tick_period)
            if self._record:
                self._rows.extend(self.simulator.trace_rows(self.state))
            self._publish(Snapshot(self.state.clock, self.state.sensed_forces))
            await asyncio.sleep(0)
        return self.state

    async def run(self) -> None:
        """Tick on the wall clock until ``stop`` is called."""
        self._running = True
        loop = asyncio.get_running_loop()
        next_tick = loop.time()
        while self._running:
            await self.advance(1)
            next_tick += self.tick_period
            await asyncio.sleep(max(0.0, next_tick - loop.time()))

    def stop(self) -> None:
        self._running = False
        for q in self._subscribers:
            try:
                q.put_nowait(None)
            except asyncio.QueueFull:
                pass

    def trace(self):
        """Recorded device trace (empty unless the loop records)."""
        return trace_frame(self._rows)


class SessionServer:
    """Serves the line protocol to one client at a time."""

    def __init__(self, device_loop: DeviceLoop):
        self.device_loop = device_loop
        self._busy = False
        self._tasks: Set["asyncio.Task[None]"] = set()

    async def _send(self, writer: asyncio.StreamWriter, msg: Message) -> None:
        writer.write(encode(msg))
        await writer.drain()

    async def _telemetry(self, writer: asyncio.StreamWriter, q: "asyncio.Queue[Optional[Snapshot]]") -> None:
        while True:
            snapshot = await q.get()
            if snapshot is None:
                return
            payload = b"".join(encode(ForceReport(unit, f)) for unit, f in enumerate(snapshot.forces))
            writer.write(payload)
            await writer.drain()

    async def _await_calibration(self, writer: asyncio.StreamWriter, command: CalibrateCommand) -> None:
        try:
            await command.done
        except NotInNonTouchPose:
            await self._send(writer, Error(ERR_NOT_IN_NON_TOUCH_POSE, "not in non-touch pose"))

    def _spawn(self, coro) -> None:
        task = asyncio.ensure_future(coro)
        self._tasks.add(task)
        task.add_done_callback(self._tasks.discard)

    async def handle(self, reader: asyncio.StreamReader, writer: asyncio.StreamWriter) -> None:
        """Run one client session until the client disconnects."""
        peer = writer.get_extra_info("peername")
        if self._busy:
            logger.info("Rejecting %s: a session is already active", peer)
            await self._send(writer, Error(ERR_MALFORMED, "busy"))
            writer.close()
            return

        self._busy = True
        session = SessionState(tick_period=self.device_loop.tick_period)
        subscription: Optional["asyncio.Queue[Optional[Snapshot]]"] = None
        telemetry: Optional["asyncio.Task[None]"] = None
        logger.info("Session opened for %s", peer)
        try:
            while True:
                line = await read_client_line(reader)
                if line is None:
                    await self._send(writer, Error(ERR_MALFORMED, "line too long"))
                    continue
                if not line:
                    break
                try:
                    msg = decode(line)
                except MalformedLine as e:
                    await self._send(writer, Error(ERR_MALFORMED, _printable(e.reason)))
                    continue

                if isinstance(msg, Hello):
                    if session.phase is SessionPhase.ACTIVE:
                        await self._send(writer, Error(ERR_MALFORMED, "session already active"))
                        continue
                    session.phase = SessionPhase.ACTIVE
                    subscription = self.device_loop.subscribe()
                    await self._send(writer, Hello(PROTOCOL_VERSION))
                    telemetry = asyncio.ensure_future(self._telemetry(writer, subscription))
                elif not session.accepts_targets():
                    await self._send(writer, Error(ERR_MALFORMED, "expected HELLO"))
                elif isinstance(msg, SetTarget):
                    point = ContactPoint(msg.x, msg.y)
                    if not workspace_contains(self.device_loop.geometry, point):
                        await self._send(writer, Error(ERR_UNREACHABLE, "target unreachable"))
                        continue
                    await self.device_loop.submit(TargetCommand(msg.unit, point))
                elif isinstance(msg, Calibrate):
                    command = CalibrateCommand()
                    await self.device_loop.submit(command)
                    self._spawn(self._await_calibration(writer, command))
                else:
                    await self._send(writer, Error(ERR_MALFORMED, "unexpected message"))
        except (ConnectionError, asyncio.IncompleteReadError) as e:
            logger.info("Session with %s dropped: %s", peer, e)
        finally:
            session.phase = SessionPhase.CLOSED
            if subscription is not None:
                self.device_loop.unsubscribe(subscription)
            if telemetry is not None:
                telemetry.cancel()
            self._busy = False
            writer.close()
            logger.info("Session closed for %s", peer)


async def read_client_line(reader: asyncio.StreamReader) -> Optional[bytes]:
    """
    Next line from a client, b"" at end of stream.

    A line longer than the reader limit is drained up to and including its
    linefeed and reported once, as None.
    """
    overlong = False
    while True:
        try:
            line = await reader.readuntil(b"\n")
        except asyncio.LimitOverrunError as e:
            await reader.readexactly(e.consumed)
            overlong = True
            continue
        except asyncio.IncompleteReadError as e:
            return None if overlong else e.partial
        return None if overlong else line


def _printable(text: str) -> str:
    cleaned = "".join(ch if " " <= ch <= "~" else "?" for ch in text).strip(" ")
    return cleaned[:120]


async def serve(device_loop: DeviceLoop, host: str = "127.0.0.1", port: int = 8765) -> asyncio.AbstractServer:
    """
    Start listening for protocol sessions.

    Args:
        device_loop: Running (or test-driven) device loop
        host: Listen address
        port: Listen port, 0 for any free port

    Returns:
        The listening asyncio server

    Raises:
        OSError: when the endpoint cannot be bound
    """
    server = SessionServer(device_loop)
    listener = await asyncio.start_server(server.handle, host, port)
    sockets = listener.sockets or []
    logger.info("Serving protocol v%d on %s", PROTOCOL_VERSION, [s.getsockname() for s in sockets])
    return listener


def bound_port(listener: asyncio.AbstractServer) -> int:
    """The port a listener is bound to (useful with port 0)."""
    sockets = listener.sockets or []
    if not sockets:
        raise RuntimeError("server has no bound socket")
    return int(sockets[0].getsockname()[1])



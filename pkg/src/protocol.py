"""
Line protocol between the haptics server and the device.

Every message is one ASCII line terminated by a single linefeed::

    HELLO <version>
    SET <unit> <x> <y>
    FRC <unit> <force>
    CAL
    ERR <code> <text>

Numbers are written as the shortest decimal that reads back to the same
float (integral values without a fraction), separated by single spaces.
"""

import math
import re
from dataclasses import dataclass
from typing import Union

from .exceptions import MalformedLine

PROTOCOL_VERSION = 1
UNIT_IDS = (0, 1, 2)

ERR_MALFORMED = 1
ERR_UNREACHABLE = 2
ERR_NOT_IN_NON_TOUCH_POSE = 3

_NUMBER = re.compile(r"[+-]?(?:\d+(?:\.\d*)?|\.\d+)(?:[eE][+-]?\d+)?")
_INTEGER = re.compile(r"[+-]?\d+")


def _check_unit(unit: int) -> None:
    if isinstance(unit, bool) or not isinstance(unit, int) or unit not in UNIT_IDS:
        raise ValueError(f"unit must be one of {UNIT_IDS}, got {unit!r}")


def _check_finite(name: str, value: float) -> None:
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
        raise ValueError(f"{name} must be a finite number, got {value!r}")


@dataclass(frozen=True)
class Hello:
    version: int = PROTOCOL_VERSION

    def __post_init__(self) -> None:
        if isinstance(self.version, bool) or not isinstance(self.version, int) or self.version < 0:
            raise ValueError(f"version must be a non-negative integer, got {self.version!r}")


@dataclass(frozen=True)
class SetTarget:
    unit: int
    x: float
    y: float

    def __post_init__(self) -> None:
        _check_unit(self.unit)
        _check_finite("x", self.x)
        _check_finite("y", self.y)


@dataclass(frozen=True)
class ForceReport:
    unit: int
    force: float

    def __post_init__(self) -> None:
        _check_unit(self.unit)
        _check_finite("force", self.force)


@dataclass(frozen=True)
class Calibrate:
    pass


@dataclass(frozen=True)
class Error:
    """Error reply; text is printable ASCII without surrounding spaces."""

    code: int
    text: str = ""

    def __post_init__(self) -> None:
        if isinstance(self.code, bool) or not isinstance(self.code, int) or self.code < 0:
            raise ValueError(f"code must be a non-negative integer, got {self.code!r}")
        if any(not (" " <= ch <= "~") for ch in self.text):
            raise ValueError("text must be printable ASCII on one line")
        if self.text != self.text.strip(" "):
            raise ValueError("text must not start or end with a space")


Message = Union[Hello, SetTarget, ForceReport, Calibrate, Error]


def format_number(value: float) -> str:
    """Shortest round-trippable decimal; integral values below 1e16 print without a fraction."""
    value = float(value)
    if value.is_integer() and abs(value) < 1e16:
        return str(int(value))
    return repr(value)


def encode(msg: Message) -> bytes:
    """One protocol line for a message, linefeed included."""
    if isinstance(msg, Hello):
        line = f"HELLO {msg.version}"
    elif isinstance(msg, SetTarget):
        line = f"SET {msg.unit} {format_number(msg.x)} {format_number(msg.y)}"
    elif isinstance(msg, ForceReport):
        line = f"FRC {msg.unit} {format_number(msg.force)}"
    elif isinstance(msg, Calibrate):
        line = "CAL"
    elif isinstance(msg, Error):
        line = f"ERR {msg.code} {msg.text}" if msg.text else f"ERR {msg.code}"
    else:
        raise TypeError(f"not a protocol message: {msg!r}")
    return (line + "\n").encode("ascii")


def _parse_number(token: str) -> float:
    if not _NUMBER.fullmatch(token):
        raise MalformedLine(f"not a number: {token!r}")
    value = float(token)
    if not math.isfinite(value):
        raise MalformedLine(f"number out of range: {token!r}")
    return value


def _parse_integer(token: str) -> int:
    if not _INTEGER.fullmatch(token):
        raise MalformedLine(f"not an integer: {token!r}")
    return int(token)


def _arity(verb: str, parts: list, count: int) -> None:
    if len(parts) != count:
        raise MalformedLine(f"{verb} takes {count - 1} arguments, got {len(parts) - 1}")


def decode(line: bytes) -> Message:
    """
    Parse one protocol line (the trailing linefeed is optional).

    Raises:
        MalformedLine: for anything that is not exactly one valid message
    """
    if line.endswith(b"\n"):
        line = line[:-1]
    try:
        text = line.decode("ascii")
    except UnicodeDecodeError:
        raise MalformedLine("line is not ASCII") from None
    if any(not (" " <= ch <= "~") for ch in text):
        raise MalformedLine("control character in line")
    if not text:
        raise MalformedLine("empty line")

    verb = text.split(" ", 1)[0]
    try:
        if verb == "ERR":
            parts = text.split(" ", 2)
            if len(parts) < 2:
                raise MalformedLine("ERR takes a code")
            if len(parts) == 3 and parts[2] == "":
                raise MalformedLine("trailing space")
            return Error(_parse_integer(parts[1]), parts[2] if len(parts) == 3 else "")

        parts = text.split(" ")
        if verb == "HELLO":
            _arity(verb, parts, 2)
            return Hello(_parse_integer(parts[1]))
        if verb == "SET":
            _arity(verb, parts, 4)
            return SetTarget(_parse_integer(parts[1]), _parse_number(parts[2]), _parse_number(parts[3]))
        if verb == "FRC":
            _arity(verb, parts, 3)
            return ForceReport(_parse_integer(parts[1]), _parse_number(parts[2]))
        if verb == "CAL":
            _arity(verb, parts, 1)
            return Calibrate()
    except MalformedLine:
        raise
    except ValueError as e:
        raise MalformedLine(str(e)) from None

    raise MalformedLine(f"unknown verb {verb[:16]!r}")

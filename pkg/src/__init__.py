"""
Palm Haptics - rendering engine and desk-scale simulator

This package renders tactile interaction on a three-contact palm display
and simulates the device at desk scale.

Main Components:
- impedance_core: exact discrete-time impedance model per contact point
- linkage_kinematics: five-bar unit kinematics and servo timing
- device_sim: rate-limited servos, compliant palm, force sensing
- controllers: limit-force and impedance control, closed loop
- patterns: tactile pattern library, trial schedules, confusion matrices
- protocol / session_server: line protocol and device server
- cli: batch front end
"""

from .config import DeviceSettings, load_device_settings, load_geometry
from .exceptions import HapticError
from .linkage_kinematics import LinkageGeometry

__all__ = [
    "DeviceSettings",
    "HapticError",
    "LinkageGeometry",
    "load_device_settings",
    "load_geometry",
]

"""
Configuration loading for the palm haptics engine.

Configuration lives in flat key/value files under ``config/`` and can be
overridden per key through ``PALM_HAPTICS_<KEY>`` environment variables
(a ``.env`` file in the working directory is honoured).
"""

import logging
import math
import os
from dataclasses import dataclass, fields, replace
from pathlib import Path
from typing import Any, Dict, Optional, Union

from dotenv import dotenv_values, load_dotenv

from .exceptions import ConfigError
from .linkage_kinematics import LinkageGeometry

logger = logging.getLogger(__name__)

CONFIG_DIR = Path(__file__).resolve().parent.parent / "config"
DEFAULT_GEOMETRY_PATH = CONFIG_DIR / "geometry.env"
DEFAULT_DEVICE_PATH = CONFIG_DIR / "device.env"
DEFAULT_PATTERNS_PATH = CONFIG_DIR / "patterns.csv"

ENV_PREFIX = "PALM_HAPTICS_"

GEOMETRY_KEYS = (
    "base_separation_mm",
    "proximal_mm",
    "distal_mm",
    "servo_min_deg",
    "servo_max_deg",
)

PathLike = Union[str, Path]


@dataclass(frozen=True)
class DeviceSettings:
    """Palm, sensor, controller, loop and endpoint settings."""

    palm_surface_y_mm: float = 42.0
    palm_compliance_n_per_m: float = 500.0
    fsr_noise_sigma_n: float = 0.02
    fsr_saturation_n: float = 10.0
    fsr_bias_n: float = 0.0
    calibration_samples: int = 100
    servo_seconds_per_60deg: float = 0.07
    approach_speed_mm_s: float = 20.0
    home_y_mm: float = 35.0
    contact_depth_mm: float = 2.0
    impedance_depth_mm: float = 4.0
    tick_s: float = 0.01
    seed: int = 0
    host: str = "127.0.0.1"
    port: int = 8765

    def __post_init__(self) -> None:
        if self.palm_compliance_n_per_m <= 0:
            raise ConfigError("palm_compliance_n_per_m must be > 0")
        if self.fsr_noise_sigma_n < 0:
            raise ConfigError("fsr_noise_sigma_n must be >= 0")
        if self.fsr_saturation_n <= 0:
            raise ConfigError("fsr_saturation_n must be > 0")
        if self.calibration_samples < 1:
            raise ConfigError("calibration_samples must be >= 1")
        if self.servo_seconds_per_60deg <= 0:
            raise ConfigError("servo_seconds_per_60deg must be > 0")
        if self.approach_speed_mm_s <= 0:
            raise ConfigError("approach_speed_mm_s must be > 0")
        if self.tick_s <= 0:
            raise ConfigError("tick_s must be > 0")
        if not self.home_y_mm < self.palm_surface_y_mm:
            raise ConfigError("home_y_mm must be below palm_surface_y_mm")
        if not 0 <= self.port <= 65535:
            raise ConfigError(f"port out of range: {self.port}")

    @property
    def servo_rate_limit(self) -> float:
        """Servo speed in rad/s."""
        return (math.pi / 3.0) / self.servo_seconds_per_60deg

    def palm_surfaces(self) -> tuple:
        """Palm surface height for each of the three units."""
        return (self.palm_surface_y_mm,) * 3


def load_flat_config(path: PathLike) -> Dict[str, str]:
    """
    Read a flat ``key=value`` file.

    Args:
        path: File to read

    Returns:
        Mapping of keys to raw string values (comments and blanks dropped)
    """
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"Config file not found: {path}")

    values = dotenv_values(path)
    missing = [key for key, value in values.items() if value is None]
    if missing:
        raise ConfigError(f"Keys without a value in {path}: {', '.join(missing)}")
    return {key: str(value) for key, value in values.items()}


def _coerce(name: str, raw: str, target: Any) -> Any:
    try:
        if isinstance(target, bool):
            return raw.strip().lower() in ("1", "true", "yes", "on")
        if isinstance(target, int):
            return int(raw)
        if isinstance(target, float):
            value = float(raw)
            if not math.isfinite(value):
                raise ValueError("non-finite")
            return value
        return raw.strip()
    except ValueError as e:
        raise ConfigError(f"Invalid value for {name}: {raw!r}") from e


def _env_overrides(keys: Any) -> Dict[str, str]:
    load_dotenv(override=False)
    overrides = {}
    for key in keys:
        value = os.getenv(ENV_PREFIX + key.upper())
        if value is not None:
            overrides[key] = value
    return overrides


def load_device_settings(path: Optional[PathLike] = None) -> DeviceSettings:
    """
    Build device settings from defaults, a config file and the environment.

    Args:
        path: Flat config file; the bundled ``config/device.env`` when None

    Returns:
        Validated DeviceSettings
    """
    defaults = DeviceSettings()
    known = {f.name: getattr(defaults, f.name) for f in fields(DeviceSettings)}

    raw: Dict[str, str] = {}
    source = Path(path) if path is not None else DEFAULT_DEVICE_PATH
    if path is not None or source.is_file():
        raw.update(load_flat_config(source))
    raw.update(_env_overrides(known))

    unknown = sorted(set(raw) - set(known))
    if unknown:
        raise ConfigError(f"Unknown device settings: {', '.join(unknown)}")

    changes = {key: _coerce(key, value, known[key]) for key, value in raw.items()}
    settings = replace(defaults, **changes)
    logger.debug("Loaded device settings from %s: %s", source, changes)
    return settings


def load_geometry(path: Optional[PathLike] = None) -> LinkageGeometry:
    """
    Load one five-bar unit geometry (identical for the three units).

    Args:
        path: Flat config file; the bundled ``config/geometry.env`` when None

    Returns:
        LinkageGeometry in millimeters and radians
    """
    source = Path(path) if path is not None else DEFAULT_GEOMETRY_PATH
    raw = load_flat_config(source)
    raw.update(_env_overrides(GEOMETRY_KEYS))

    missing = [key for key in GEOMETRY_KEYS if key not in raw]
    if missing:
        raise ConfigError(f"Geometry keys missing in {source}: {', '.join(missing)}")

    values = {key: _coerce(key, raw[key], 0.0) for key in GEOMETRY_KEYS}
    try:
        geometry = LinkageGeometry(
            base_separation=values["base_separation_mm"],
            proximal_length=values["proximal_mm"],
            distal_length=values["distal_mm"],
            servo_min=math.radians(values["servo_min_deg"]),
            servo_max=math.radians(values["servo_max_deg"]),
        )
    except ValueError as e:
        raise ConfigError(f"Invalid geometry in {source}: {e}") from e

    logger.debug("Loaded geometry from %s: %s", source, geometry)
    return geometry

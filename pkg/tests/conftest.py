"""Pytest configuration and shared fixtures."""

import os
import sys
from pathlib import Path
from typing import Generator

import pandas as pd
import pytest

# Add the repository root to the Python path for `src` imports
sys.path.insert(0, os.path.join(os.path.dirname(__file__), ".."))

from src.config import DeviceSettings, load_geometry  # noqa: E402
from src.device_sim import DeviceSimulator, FsrSensor, PalmModel  # noqa: E402
from src.linkage_kinematics import LinkageGeometry  # noqa: E402
from src.patterns import pattern_library  # noqa: E402


@pytest.fixture(autouse=True)
def clean_env() -> Generator[None, None, None]:
    """Keep PALM_HAPTICS_* variables from the caller's shell out of tests."""
    with pytest.MonkeyPatch.context() as m:
        for key in list(os.environ):
            if key.startswith("PALM_HAPTICS_"):
                m.delenv(key)
        yield


@pytest.fixture
def geometry() -> LinkageGeometry:
    """Default five-bar geometry: 40/30/35 mm, servos 30..150 deg."""
    return load_geometry()


@pytest.fixture
def settings() -> DeviceSettings:
    """Default device settings."""
    return DeviceSettings()


@pytest.fixture
def quiet_settings() -> DeviceSettings:
    """Default settings without sensor noise."""
    return DeviceSettings(fsr_noise_sigma_n=0.0)


@pytest.fixture
def simulator(geometry: LinkageGeometry, quiet_settings: DeviceSettings) -> DeviceSimulator:
    """Noise-free simulator with the default palm and home height."""
    return DeviceSimulator.from_settings(geometry, quiet_settings)


@pytest.fixture
def make_simulator(geometry: LinkageGeometry):
    """Factory for simulators with a custom palm or sensor."""

    def _make(
        surface_y: float = 42.0,
        compliance: float = 500.0,
        noise_sigma: float = 0.0,
        bias: float = 0.0,
        saturation: float = 10.0,
        home_y: float = 35.0,
        seed: int = 0,
    ) -> DeviceSimulator:
        return DeviceSimulator(
            geometry=geometry,
            palm=PalmModel((surface_y,) * 3, compliance),
            sensor=FsrSensor(noise_sigma=noise_sigma, saturation=saturation, bias=bias),
            home_y=home_y,
            seed=seed,
        )

    return _make


@pytest.fixture
def library(geometry: LinkageGeometry, settings: DeviceSettings):
    """The bundled pattern library."""
    return pattern_library(geometry=geometry, settings=settings)


@pytest.fixture
def repo_root() -> Path:
    return Path(__file__).resolve().parent.parent


@pytest.fixture
def sample_trial_log() -> pd.DataFrame:
    """Small trial log over patterns 1..3."""
    return pd.DataFrame({
        'trial': [1, 2, 3, 4, 5, 6],
        'actual_id': [1, 2, 3, 1, 2, 3],
        'predicted_id': [1, 2, 2, 1, 3, 3],
    })

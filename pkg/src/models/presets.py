"""
The six stiffness presets of the tactile-interaction experiment.

P1..P3 render an impedance law, P4..P6 a limit-force approach.
"""

from dataclasses import dataclass
from enum import Enum
from typing import Dict, Optional

from ..impedance_core import ImpedanceParams


@dataclass(frozen=True)
class PresetSpec:
    """What one preset renders: impedance parameters or a limit force (N)."""
    label: str
    impedance: Optional[ImpedanceParams] = None
    limit_force: Optional[float] = None

    def __post_init__(self) -> None:
        if (self.impedance is None) == (self.limit_force is None):
            raise ValueError("a preset renders either an impedance or a limit force")


class StiffnessPreset(Enum):
    """Stiffness presets; damping in N*s/m and stiffness in N/m."""

    P1 = PresetSpec("P1", impedance=ImpedanceParams(mass=1.2, damping=1.0, stiffness=20.0))
    P2 = PresetSpec("P2", impedance=ImpedanceParams(mass=0.6, damping=1.0, stiffness=3.0))
    P3 = PresetSpec("P3", impedance=ImpedanceParams(mass=0.6, damping=1.0, stiffness=1.0))
    P4 = PresetSpec("P4", limit_force=4.0)
    P5 = PresetSpec("P5", limit_force=2.5)
    P6 = PresetSpec("P6", limit_force=1.0)

    @property
    def number(self) -> int:
        return int(self.name[1:])

    @property
    def is_impedance(self) -> bool:
        return self.value.impedance is not None

    @property
    def impedance(self) -> ImpedanceParams:
        if self.value.impedance is None:
            raise ValueError(f"{self.name} is a force-control preset")
        return self.value.impedance

    @property
    def limit_force(self) -> float:
        if self.value.limit_force is None:
            raise ValueError(f"{self.name} is an impedance preset")
        return self.value.limit_force

    @classmethod
    def parse(cls, name: str) -> "StiffnessPreset":
        """Look up a preset by name, case-insensitive ('p1' or 'P1')."""
        try:
            return cls[name.strip().upper()]
        except KeyError:
            valid = ", ".join(p.name for p in cls)
            raise ValueError(f"Unknown preset {name!r}; expected one of {valid}") from None


IMPEDANCE_PRESETS = (StiffnessPreset.P1, StiffnessPreset.P2, StiffnessPreset.P3)
FORCE_PRESETS = (StiffnessPreset.P4, StiffnessPreset.P5, StiffnessPreset.P6)

PRESETS_BY_NUMBER: Dict[int, StiffnessPreset] = {p.number: p for p in StiffnessPreset}

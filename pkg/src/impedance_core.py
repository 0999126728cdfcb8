"""
Exact discrete-time realization of the per-contact-point impedance model.

Each contact point carries a virtual mass-spring-damper link along the palm
normal::

    M_d * ddy + D_d * dy + K_d * y = F_ext

written in state space as x' = A x + B F with x = (displacement, velocity),
then sampled with a zero-order hold: x[k+1] = A_d x[k] + B_d F[k] where
A_d = e^{AT} and B_d = (e^{AT} - I) A^{-1} B.

The matrix exponential of the 2x2 companion matrix is evaluated in closed
form from its eigenstructure (Cayley-Hamilton), so no numerical expm is
needed at runtime.
"""

import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import List, Sequence, Tuple

import numpy as np

logger = logging.getLogger(__name__)

# Relative tolerance on D^2 vs 4MK for the critically damped class.
CRITICAL_RTOL = 1e-9
# Relative size of the last kept term in the K_d = 0 input-gain series.
SERIES_RTOL = 1e-14
_SERIES_MAX_TERMS = 500


def _frozen(values: Sequence, shape: Tuple[int, ...]) -> np.ndarray:
    array = np.array(values, dtype=float).reshape(shape)
    array.setflags(write=False)
    return array


@dataclass(frozen=True)
class ImpedanceParams:
    """Desired mass (kg), damping (N*s/m) and stiffness (N/m) of one link."""

    mass: float
    damping: float
    stiffness: float

    def __post_init__(self) -> None:
        for name in ("mass", "damping", "stiffness"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        if self.mass <= 0:
            raise ValueError(f"mass must be > 0, got {self.mass}")
        if self.damping < 0:
            raise ValueError(f"damping must be >= 0, got {self.damping}")
        if self.stiffness < 0:
            raise ValueError(f"stiffness must be >= 0, got {self.stiffness}")


@dataclass(frozen=True, eq=False)
class ContinuousModel:
    """State matrix A (2x2) and input matrix B (2,) of the impedance link."""

    state_matrix: np.ndarray
    input_matrix: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "state_matrix", _frozen(self.state_matrix, (2, 2)))
        object.__setattr__(self, "input_matrix", _frozen(self.input_matrix, (2,)))
        if self.state_matrix[0, 0] != 0.0 or self.state_matrix[0, 1] != 1.0:
            raise ValueError("state matrix row 0 must be [0, 1]")
        if self.input_matrix[0] != 0.0:
            raise ValueError("input matrix element 0 must be 0")

    @property
    def coefficients(self) -> "CharacteristicCoefficients":
        a = float(self.state_matrix[1, 1])
        b = float(self.state_matrix[1, 0])
        c = float(self.input_matrix[1])
        return CharacteristicCoefficients.from_abc(a, b, c)


@dataclass(frozen=True)
class CharacteristicCoefficients:
    """
    a = -D/M, b = -K/M, c = 1/M and the eigenvalues of A.

    The eigenvalues are the roots of lambda^2 - a*lambda - b = 0.
    """

    a: float
    b: float
    c: float
    eigenvalues: Tuple[complex, complex]

    @classmethod
    def from_abc(cls, a: float, b: float, c: float) -> "CharacteristicCoefficients":
        root = np.sqrt(complex(a * a + 4.0 * b))
        # Stable quadratic roots: avoid cancellation in the larger-magnitude root.
        if a >= 0:
            first = (a + root) / 2.0
        else:
            first = (a - root) / 2.0
        second = -b / first if first != 0 else (a - first)
        return cls(a=a, b=b, c=c, eigenvalues=(complex(first), complex(second)))

    @classmethod
    def from_params(cls, params: ImpedanceParams) -> "CharacteristicCoefficients":
        return cls.from_abc(
            -params.damping / params.mass,
            -params.stiffness / params.mass,
            1.0 / params.mass,
        )


class DampingClass(Enum):
    """Response regime of the impedance link."""

    UNDERDAMPED = "underdamped"
    CRITICALLY_DAMPED = "critically_damped"
    OVERDAMPED = "overdamped"
    RIGID_BODY_DEGENERATE = "rigid_body_degenerate"


@dataclass(frozen=True, eq=False)
class DiscreteModel:
    """Zero-order-hold model: transition A_d, input gain B_d, sample time T."""

    transition: np.ndarray
    input_gain: np.ndarray
    sample_time: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "transition", _frozen(self.transition, (2, 2)))
        object.__setattr__(self, "input_gain", _frozen(self.input_gain, (2,)))
        if not self.sample_time > 0:
            raise ValueError(f"sample_time must be > 0, got {self.sample_time}")

    @property
    def spectral_radius(self) -> float:
        return float(np.max(np.abs(np.linalg.eigvals(self.transition))))


@dataclass(frozen=True)
class ImpedanceState:
    """Displacement correction (m) and its rate (m/s) of one contact point."""

    displacement: float = 0.0
    velocity: float = 0.0

    def __post_init__(self) -> None:
        if not (math.isfinite(self.displacement) and math.isfinite(self.velocity)):
            raise ValueError("impedance state must be finite")

    def as_vector(self) -> np.ndarray:
        return np.array([self.displacement, self.velocity])


def continuous_matrices(params: ImpedanceParams) -> ContinuousModel:
    """State-space form of the impedance link."""
    m, d, k = params.mass, params.damping, params.stiffness
    return ContinuousModel(
        state_matrix=[[0.0, 1.0], [-k / m, -d / m]],
        input_matrix=[0.0, 1.0 / m],
    )


def classify_damping(params: ImpedanceParams) -> DampingClass:
    """
    Classify the regime from the discriminant D^2 - 4MK.

    Equality with 4MK is accepted within a relative tolerance of 1e-9.
    """
    if params.stiffness == 0:
        return DampingClass.RIGID_BODY_DEGENERATE

    damping_sq = params.damping**2
    critical_sq = 4.0 * params.mass * params.stiffness
    if abs(damping_sq - critical_sq) <= CRITICAL_RTOL * max(damping_sq, critical_sq):
        return DampingClass.CRITICALLY_DAMPED
    if damping_sq < critical_sq:
        return DampingClass.UNDERDAMPED
    return DampingClass.OVERDAMPED


def matrix_exponential(model: ContinuousModel, t: float) -> np.ndarray:
    """
    e^{At} of the 2x2 companion matrix in closed form.

    With s = a/2 (half the trace) and q^2 = s^2 + b, Cayley-Hamilton gives
    e^{At} = e^{st} [f0(t) I + f1(t) (A - sI)] where

    - distinct real eigenvalues (q^2 > 0): f0 = cosh(qt), f1 = sinh(qt)/q
    - repeated eigenvalue (q^2 = 0): f0 = 1, f1 = t
    - complex pair (q^2 < 0, w^2 = -q^2): f0 = cos(wt), f1 = sin(wt)/w

    Args:
        model: Continuous impedance model
        t: Time in seconds, t >= 0

    Returns:
        2x2 state transition matrix
    """
    if t < 0:
        raise ValueError(f"t must be >= 0, got {t}")

    a = float(model.state_matrix[1, 1])
    b = float(model.state_matrix[1, 0])
    s = a / 2.0
    q_sq = s * s + b

    if q_sq > 0:
        q = math.sqrt(q_sq)
        f0 = math.cosh(q * t)
        f1 = math.sinh(q * t) / q
    elif q_sq < 0:
        w = math.sqrt(-q_sq)
        f0 = math.cos(w * t)
        f1 = math.sin(w * t) / w
    else:
        f0 = 1.0
        f1 = t

    shifted = np.array(model.state_matrix, dtype=float) - s * np.eye(2)
    return math.exp(s * t) * (f0 * np.eye(2) + f1 * shifted)


def repeated_root_transition(coefficients: CharacteristicCoefficients, t: float) -> np.ndarray:
    """
    Closed-form e^{At} for a repeated eigenvalue lambda = a/2.

    Only valid in the critically damped (or zero-damping rigid body) case.
    """
    lam = coefficients.a / 2.0
    return math.exp(lam * t) * np.array(
        [
            [1.0 - lam * t, t],
            [coefficients.b * t, 1.0 - lam * t + coefficients.a * t],
        ]
    )


def _input_gain_series(model: ContinuousModel, sample_time: float) -> np.ndarray:
    """Integral of e^{As} B over [0, T] as T*B + T^2/2 AB + T^3/6 A^2 B + ..."""
    a_matrix = np.array(model.state_matrix, dtype=float)
    term = sample_time * np.array(model.input_matrix, dtype=float)
    total = term.copy()
    for n in range(2, _SERIES_MAX_TERMS):
        term = (sample_time / n) * (a_matrix @ term)
        total = total + term
        if np.max(np.abs(term)) <= SERIES_RTOL * np.max(np.abs(total)):
            break
    else:
        logger.warning("Input gain series did not converge for T=%s", sample_time)
    return total


def discretize(params: ImpedanceParams, sample_time: float) -> DiscreteModel:
    """
    Zero-order-hold discretization of the impedance link.

    Args:
        params: Desired mass, damping, stiffness
        sample_time: Sampling period T in seconds

    Returns:
        DiscreteModel with A_d = e^{AT} and B_d = (A_d - I) A^{-1} B
    """
    if not sample_time > 0:
        raise ValueError(f"sample_time must be > 0, got {sample_time}")

    model = continuous_matrices(params)
    transition = matrix_exponential(model, sample_time)

    if params.stiffness > 0:
        coefficients = model.coefficients
        # A^{-1} B = [c/b, 0]
        input_gain = (transition - np.eye(2)) @ np.array([coefficients.c / coefficients.b, 0.0])
    else:
        input_gain = _input_gain_series(model, sample_time)

    return DiscreteModel(transition=transition, input_gain=input_gain, sample_time=sample_time)


def step(model: DiscreteModel, state: ImpedanceState, external_force: float) -> ImpedanceState:
    """Advance one sample: x[k+1] = A_d x[k] + B_d F[k]."""
    ad = model.transition
    bd = model.input_gain
    y, v = state.displacement, state.velocity
    return ImpedanceState(
        displacement=float(ad[0, 0] * y + ad[0, 1] * v + bd[0] * external_force),
        velocity=float(ad[1, 0] * y + ad[1, 1] * v + bd[1] * external_force),
    )


def simulate(
    params: ImpedanceParams,
    sample_time: float,
    force_profile: Sequence[float],
) -> List[ImpedanceState]:
    """
    Run the discrete impedance model over a force profile.

    Args:
        params: Impedance parameters
        sample_time: Sampling period in seconds
        force_profile: Force applied during each sample, in newtons

    Returns:
        len(force_profile) + 1 states, starting from the zero state
    """
    if len(force_profile) == 0:
        raise ValueError("force_profile must not be empty")

    model = discretize(params, sample_time)
    states = [ImpedanceState()]
    for force in force_profile:
        states.append(step(model, states[-1], float(force)))
    return states

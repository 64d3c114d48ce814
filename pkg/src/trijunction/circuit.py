"""Device parameters, flux/winding configurations and phase coordinates.

Energies are measured in units of ``Phi0**2 / (2 * L_s)``, so the Josephson
energies are plain ratios to the inductive scale of the main loop.
Inductances may be given in any common unit; only ratios enter.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, fields
from typing import Optional

import numpy as np

TWO_PI = 2.0 * math.pi

# L_K / L_s above this is outside the usual three-junction qubit regime
KINETIC_RATIO_WARN = 0.1


class ParameterError(ValueError):
    """Invalid circuit parameter; the message names the offending field."""


class ConstraintError(ValueError):
    """Trijunction phases do not sum to 2*pi*n'."""


@dataclass(frozen=True)
class CircuitParams:
    """Inductances and junction energies of one device.

    ``Lp_*`` belong to each of the three side branches, ``Lt_*`` to the
    central branch of the outside-trijunction layout (design B only).
    """

    L_K: float
    L_s: float
    Lp_K: float
    Lp_s: float
    E_J: float
    E_Jp: float
    Lt_K: Optional[float] = None
    Lt_s: Optional[float] = None
    E_M: float = 0.1
    alpha: float = 0.002

    @property
    def L_eff(self) -> float:
        return self.L_K + self.L_s

    @property
    def Lp_eff(self) -> float:
        return self.L_K + self.L_s + 9.0 * (self.Lp_K + self.Lp_s)

    @property
    def Lt_eff(self) -> Optional[float]:
        if self.Lt_K is None or self.Lt_s is None:
            return None
        return self.L_K + self.L_s + 3.0 * (self.Lp_K + self.Lp_s) + 6.0 * (self.Lt_K + self.Lt_s)

    @property
    def has_central_branch(self) -> bool:
        return self.Lt_K is not None and self.Lt_s is not None

    def replace(self, **changes) -> "CircuitParams":
        values = {f.name: getattr(self, f.name) for f in fields(self)}
        values.update(changes)
        return CircuitParams(**values)

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


def validate_params(raw: CircuitParams) -> CircuitParams:
    """Check positivity of inductances and non-negativity of energies.

    Returns the same (immutable) object. Emits a ``UserWarning`` when the
    kinetic inductance is not small compared with the geometric one.
    """
    inductances = ["L_K", "L_s", "Lp_K", "Lp_s"]
    if raw.Lt_K is not None or raw.Lt_s is not None:
        inductances += ["Lt_K", "Lt_s"]
    for name in inductances:
        value = getattr(raw, name)
        if value is None:
            raise ParameterError(f"{name} must be given together with the other central-branch inductance")
        if not math.isfinite(value) or value <= 0:
            raise ParameterError(f"{name} must be > 0, got {value!r}")
    for name in ("E_J", "E_Jp", "E_M", "alpha"):
        value = getattr(raw, name)
        if not math.isfinite(value) or value < 0:
            raise ParameterError(f"{name} must be >= 0, got {value!r}")
    if raw.L_K / raw.L_s > KINETIC_RATIO_WARN:
        warnings.warn(
            f"L_K/L_s = {raw.L_K / raw.L_s:.3g} is large; typical devices have L_K/L_s ~ 1e-3",
            stacklevel=2,
        )
    return raw


# E_Jp / E_J placing the f = 0.42 minimum at phi_p / 2pi = 0.124
# (output of trijunction.groundstate.calibrate on the reference device)
CALIBRATED_E_JP_RATIO = 0.10111605329911277


def default_params(E_Jp_ratio: float = CALIBRATED_E_JP_RATIO) -> CircuitParams:
    """Reference device: L_K/L_s = 1e-3, identical side and central branches.

    ``E_Jp_ratio`` is E_Jp / E_J. The default is the calibrated value; rerun
    :func:`trijunction.groundstate.calibrate` after changing any inductance.
    """
    E_J = 1e-3
    return CircuitParams(
        L_K=1e-3, L_s=1.0,
        Lp_K=1e-4, Lp_s=0.1,
        Lt_K=1e-4, Lt_s=0.1,
        E_J=E_J, E_Jp=E_Jp_ratio * E_J,
        E_M=0.1, alpha=0.002,
    )


@dataclass(frozen=True)
class FluxConfig:
    """External fluxes threading the three small loops, in units of Phi0."""

    f1: float = 0.0
    f2: float = 0.0
    f3: float = 0.0

    def __post_init__(self):
        for name in ("f1", "f2", "f3"):
            value = float(getattr(self, name))
            if not math.isfinite(value):
                raise ValueError(f"{name} must be finite, got {value!r}")
            object.__setattr__(self, name, value)

    def as_array(self) -> np.ndarray:
        return np.array([self.f1, self.f2, self.f3], dtype=float)

    @classmethod
    def single(cls, loop: int, magnitude: float) -> "FluxConfig":
        if loop not in (1, 2, 3):
            raise ValueError(f"loop must be 1, 2 or 3, got {loop!r}")
        values = [0.0, 0.0, 0.0]
        values[loop - 1] = magnitude
        return cls(*values)


@dataclass(frozen=True)
class WindingNumbers:
    m1: int = 0
    m2: int = 0
    m3: int = 0
    n: int = 0
    n_prime: int = 0

    def m(self) -> np.ndarray:
        return np.array([self.m1, self.m2, self.m3], dtype=float)


@dataclass(frozen=True)
class PhaseState:
    """Junction phases: loop junctions ``phi1..3`` and trijunction ``phip1..3``."""

    phi1: float
    phi2: float
    phi3: float
    phip1: float
    phip2: float
    phip3: float

    @classmethod
    def constrained(cls, phi1, phi2, phi3, phip2, phip3, n_prime: int = 0) -> "PhaseState":
        """Build a state whose ``phip1`` closes the trijunction constraint."""
        phip1 = TWO_PI * n_prime - phip2 - phip3
        return cls(float(phi1), float(phi2), float(phi3), float(phip1), float(phip2), float(phip3))

    @classmethod
    def from_array(cls, values) -> "PhaseState":
        return cls(*(float(v) for v in values))

    def as_array(self) -> np.ndarray:
        return np.array([self.phi1, self.phi2, self.phi3, self.phip1, self.phip2, self.phip3])

    def constraint_residual(self, n_prime: int = 0) -> float:
        return self.phip1 + self.phip2 + self.phip3 - TWO_PI * n_prime


@dataclass(frozen=True)
class ReducedCoords:
    """Symmetric/antisymmetric combinations of the 2-3 junction pairs."""

    phi_p: float
    phi_m: float
    phip_p: float
    phip_m: float
    phi1: float

    def as_array(self) -> np.ndarray:
        return np.array([self.phi_p, self.phi_m, self.phip_p, self.phip_m, self.phi1])

    @classmethod
    def from_array(cls, values) -> "ReducedCoords":
        return cls(*(float(v) for v in values))


CONSTRAINT_TOL = 1e-9

# d(phi1, phi2, phi3, phip1, phip2, phip3) / d(phi_p, phi_m, phip_p, phip_m, phi1)
REDUCED_JACOBIAN = np.array([
    [0.0, 0.0, 0.0, 0.0, 1.0],
    [1.0, 1.0, 0.0, 0.0, 0.0],
    [1.0, -1.0, 0.0, 0.0, 0.0],
    [0.0, 0.0, -2.0, 0.0, 0.0],
    [0.0, 0.0, 1.0, 1.0, 0.0],
    [0.0, 0.0, 1.0, -1.0, 0.0],
])


def phases_from_reduced_array(x: np.ndarray, n_prime: int = 0) -> np.ndarray:
    """Array form of :func:`from_reduced` for use inside optimisers."""
    phases = REDUCED_JACOBIAN @ np.asarray(x, dtype=float)
    phases[3] += TWO_PI * n_prime
    return phases


def to_reduced(state: PhaseState, w: WindingNumbers = WindingNumbers()) -> ReducedCoords:
    residual = state.constraint_residual(w.n_prime)
    if abs(residual) > CONSTRAINT_TOL:
        raise ConstraintError(
            f"phip1 + phip2 + phip3 - 2*pi*n' = {residual:.3e}, exceeds {CONSTRAINT_TOL:g} rad"
        )
    return ReducedCoords(
        phi_p=0.5 * (state.phi2 + state.phi3),
        phi_m=0.5 * (state.phi2 - state.phi3),
        phip_p=0.5 * (state.phip2 + state.phip3),
        phip_m=0.5 * (state.phip2 - state.phip3),
        phi1=state.phi1,
    )


def from_reduced(rc: ReducedCoords, w: WindingNumbers = WindingNumbers()) -> PhaseState:
    return PhaseState(
        phi1=rc.phi1,
        phi2=rc.phi_p + rc.phi_m,
        phi3=rc.phi_p - rc.phi_m,
        phip1=TWO_PI * w.n_prime - 2.0 * rc.phip_p,
        phip2=rc.phip_p + rc.phip_m,
        phip3=rc.phip_p - rc.phip_m,
    )

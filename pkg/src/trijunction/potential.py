"""Effective potentials, wave vectors, branch currents and Kirchhoff residuals.

Every potential has the form::

    U = v^T K v - E_J * sum(cos phi_i) - E_Jp * sum(cos phip_i)

with the loop fluxoid deficits ``v = (a1, a2, a3, b)``::

    a_i = m_i + f_i - (phi_i + phip_i) / 2pi
    b   = n + f1 + f2 + f3 - (phi1 + phi2 + phi3) / 2pi

and a design-specific symmetric matrix ``K``. Energies are in units of
``Phi0**2 / (2 L_s)``; currents in units of ``Phi0 / L_s``. Wave vectors are
reported as ``k * l / 2pi`` (dimensionless).

The wave vectors are evaluated from their own closed forms, not from ``K``;
the Kirchhoff residuals compare the two routes.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .circuit import (
    REDUCED_JACOBIAN,
    TWO_PI,
    CircuitParams,
    FluxConfig,
    ParameterError,
    PhaseState,
    WindingNumbers,
    phases_from_reduced_array,
)


class Design(str, enum.Enum):
    A = "A"              # trijunction inside the loop
    B = "B"              # trijunction outside, distinct central branch
    A_LIMIT = "A_limit"  # side branches shrunk to zero length

    @classmethod
    def parse(cls, value) -> "Design":
        if isinstance(value, Design):
            return value
        for member in cls:
            if member.value.lower() == str(value).lower():
                return member
        raise ValueError(f"unknown design {value!r}; expected one of A, B, A_limit")


@dataclass(frozen=True)
class WaveVectors:
    k1: float
    k2: float
    k3: float
    kp1: float
    kp2: float
    kp3: float

    def loop(self) -> np.ndarray:
        return np.array([self.k1, self.k2, self.k3])

    def branch(self) -> np.ndarray:
        return np.array([self.kp1, self.kp2, self.kp3])

    def conservation_residual(self) -> np.ndarray:
        """Node conservation ``k1 = k3 + kp2, k2 = k1 + kp3, k3 = k2 + kp1``."""
        return np.array([
            self.k1 - self.k3 - self.kp2,
            self.k2 - self.k1 - self.kp3,
            self.k3 - self.k2 - self.kp1,
        ])


@dataclass(frozen=True)
class CurrentReport:
    I1: float
    I2: float
    I3: float
    Ip1: float
    Ip2: float
    Ip3: float

    def loop(self) -> np.ndarray:
        return np.array([self.I1, self.I2, self.I3])

    def branch(self) -> np.ndarray:
        return np.array([self.Ip1, self.Ip2, self.Ip3])


# (a1, a2, a3, b) = offsets - D @ phases / 2pi
_DEFICIT_MATRIX = np.array([
    [1.0, 0.0, 0.0, 1.0, 0.0, 0.0],
    [0.0, 1.0, 0.0, 0.0, 1.0, 0.0],
    [0.0, 0.0, 1.0, 0.0, 0.0, 1.0],
    [1.0, 1.0, 1.0, 0.0, 0.0, 0.0],
])


def deficits(f: FluxConfig, w: WindingNumbers, phases: np.ndarray) -> np.ndarray:
    offsets = np.array([
        w.m1 + f.f1,
        w.m2 + f.f2,
        w.m3 + f.f3,
        w.n + f.f1 + f.f2 + f.f3,
    ])
    return offsets - _DEFICIT_MATRIX @ phases / TWO_PI


def _require_central(p: CircuitParams) -> float:
    if not p.has_central_branch:
        raise ParameterError("design B needs the central-branch inductances Lt_K and Lt_s")
    return p.Lt_eff


def quadratic_form(design: Design, p: CircuitParams) -> np.ndarray:
    """Matrix ``K`` of the inductive energy ``v^T K v``."""
    design = Design.parse(design)
    Ls = p.L_s
    if design is Design.A_LIMIT:
        return np.diag([3.0, 3.0, 3.0, 0.0])
    loop = Ls / p.L_eff
    side = Ls / p.Lp_eff
    if design is Design.A:
        return np.diag([3.0 * side, 3.0 * side, 3.0 * side, loop - side])
    central = Ls / _require_central(p)
    diag = 1.5 * (side + central)
    cross = 1.5 * (side - central)  # half of the a2*a3 coefficient
    return np.array([
        [3.0 * side, 0.0, 0.0, 0.0],
        [0.0, diag, cross, 0.0],
        [0.0, cross, diag, 0.0],
        [0.0, 0.0, 0.0, loop - side],
    ])


def energy_from_phases(design, p: CircuitParams, f: FluxConfig, w: WindingNumbers,
                       phases: np.ndarray) -> float:
    v = deficits(f, w, phases)
    K = quadratic_form(design, p)
    josephson = p.E_J * np.cos(phases[:3]).sum() + p.E_Jp * np.cos(phases[3:]).sum()
    return float(v @ K @ v - josephson)


def u_eff(design, p: CircuitParams, f: FluxConfig, w: WindingNumbers, s: PhaseState) -> float:
    return energy_from_phases(design, p, f, w, s.as_array())


def u_eff_a(p: CircuitParams, f: FluxConfig, w: WindingNumbers, s: PhaseState) -> float:
    """Trijunction inside the loop."""
    return u_eff(Design.A, p, f, w, s)


def u_eff_a_limit(p: CircuitParams, f: FluxConfig, w: WindingNumbers, s: PhaseState) -> float:
    """Zero-length side branches: three loops of inductance L_s/3 meeting at the trijunction."""
    return u_eff(Design.A_LIMIT, p, f, w, s)


def u_eff_b(p: CircuitParams, f: FluxConfig, w: WindingNumbers, s: PhaseState) -> float:
    """Trijunction outside the loop, general fluxes in all three loops."""
    return u_eff(Design.B, p, f, w, s)


def grad_phases(design, p: CircuitParams, f: FluxConfig, w: WindingNumbers,
                phases: np.ndarray) -> np.ndarray:
    """Partial derivatives with respect to all six phases taken as independent."""
    v = deficits(f, w, phases)
    K = quadratic_form(design, p)
    g = -(_DEFICIT_MATRIX.T @ (2.0 * K @ v)) / TWO_PI
    g[:3] += p.E_J * np.sin(phases[:3])
    g[3:] += p.E_Jp * np.sin(phases[3:])
    return g


def hessian_phases(design, p: CircuitParams, phases: np.ndarray) -> np.ndarray:
    K = quadratic_form(design, p)
    H = _DEFICIT_MATRIX.T @ (2.0 * K) @ _DEFICIT_MATRIX / TWO_PI**2
    H[np.diag_indices(3)] += p.E_J * np.cos(phases[:3])
    H[3 + np.arange(3), 3 + np.arange(3)] += p.E_Jp * np.cos(phases[3:])
    return H


def energy_reduced(design, p, f, w, x: np.ndarray) -> float:
    return energy_from_phases(design, p, f, w, phases_from_reduced_array(x, w.n_prime))


def grad_reduced(design, p, f, w, x: np.ndarray) -> np.ndarray:
    phases = phases_from_reduced_array(x, w.n_prime)
    return REDUCED_JACOBIAN.T @ grad_phases(design, p, f, w, phases)


def hessian_reduced(design, p, f, w, x: np.ndarray) -> np.ndarray:
    phases = phases_from_reduced_array(x, w.n_prime)
    return REDUCED_JACOBIAN.T @ hessian_phases(design, p, phases) @ REDUCED_JACOBIAN


def grad_u_eff(design, p: CircuitParams, f: FluxConfig, w: WindingNumbers,
               s: PhaseState) -> np.ndarray:
    """Gradient over ``(phi_p, phi_m, phip_p, phip_m, phi1)``.

    The trijunction constraint is built into the coordinates, so ``phip1``
    moves with ``phip_p``.
    """
    return REDUCED_JACOBIAN.T @ grad_phases(design, p, f, w, s.as_array())


def wavevectors(design, p: CircuitParams, f: FluxConfig, w: WindingNumbers,
                s: PhaseState) -> WaveVectors:
    design = Design.parse(design)
    a1, a2, a3, b = deficits(f, w, s.as_array())
    LK = p.L_K
    if design is Design.B:
        Lp, Lt, L = p.Lp_eff, _require_central(p), p.L_eff
        side, central, loop = LK / Lp, LK / Lt, LK / L
        plus = 1.5 * (side + central)
        minus = 1.5 * (side - central)
        k1 = 3.0 * side * a1 + (loop - side) * b
        k2 = plus * a2 + minus * a3 + (loop - side) * b
        k3 = plus * a3 + minus * a2 + (loop - side) * b
        kp1 = 3.0 * central * (a3 - a2)
        kp2 = 3.0 * side * a1 - plus * a3 - minus * a2
        kp3 = plus * a2 + minus * a3 - 3.0 * side * a1
        return WaveVectors(k1, k2, k3, kp1, kp2, kp3)
    if design is Design.A_LIMIT:
        side = loop = LK / p.L_s
    else:
        side, loop = LK / p.Lp_eff, LK / p.L_eff
    a = (a1, a2, a3)
    k = [3.0 * side * a[i] + (loop - side) * b for i in range(3)]
    kp = [3.0 * side * (a[(i + 2) % 3] - a[(i + 1) % 3]) for i in range(3)]
    return WaveVectors(*k, *kp)


def currents(wv: WaveVectors, p: CircuitParams) -> CurrentReport:
    """Cooper-pair currents ``I = -(Phi0 / L_K) * k l / 2pi`` in units of Phi0 / L_s."""
    scale = -p.L_s / p.L_K
    return CurrentReport(*(scale * np.concatenate([wv.loop(), wv.branch()])))


def _kirchhoff_prefactor(p: CircuitParams) -> float:
    # Phi0^2 / (2 pi L_K) expressed in Phi0^2 / (2 L_s)
    return p.L_s / (math.pi * p.L_K)


def verify_kirchhoff_loop(design, p, f, w, s: PhaseState, grad_fn=grad_phases) -> np.ndarray:
    """Residual of the loop-junction Kirchhoff relation, one entry per junction."""
    phases = s.as_array()
    k = wavevectors(design, p, f, w, s).loop()
    g = grad_fn(design, p, f, w, phases)[:3]
    return _kirchhoff_prefactor(p) * k - p.E_J * np.sin(phases[:3]) + g


def verify_kirchhoff_trijunction(design, p, f, w, s: PhaseState, grad_fn=grad_phases) -> np.ndarray:
    """Residual of the trijunction Kirchhoff relation, one entry per branch."""
    phases = s.as_array()
    kp = wavevectors(design, p, f, w, s).branch()
    inductive = grad_fn(design, p, f, w, phases)[3:] - p.E_Jp * np.sin(phases[3:])
    out = np.empty(3)
    for i in range(3):
        out[i] = _kirchhoff_prefactor(p) * kp[i] + inductive[(i + 2) % 3] - inductive[(i + 1) % 3]
    return out

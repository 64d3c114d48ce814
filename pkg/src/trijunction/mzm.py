"""Majorana tunnelling at the trijunction and the adiabatic braid.

Majorana order is ``(g1, g2, g3, gp1, gp2, gp3)``: the outer modes at the
far ends of the three branches, then the three modes coupled across the
trijunction. The quadratic Hamiltonian is written

    H = (i/2) * sum_{j<k} A_jk g_j g_k

with the tunnelling amplitudes entered in ``A`` at full strength
(``A[gp1, gp2] = E_M cos(phip3 / 2)`` and cyclic, ``A[g_i, gp_i] = alpha``).
Single-particle energies are the non-negative eigenvalues of ``iA``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Sequence, Tuple

import numpy as np
from scipy.linalg import schur

from .circuit import CircuitParams, FluxConfig, PhaseState
from .groundstate import (
    ConvergenceError,
    MinimizeOptions,
    MinimizeResult,
    minimize,
    minimize_from,
    report_currents,
)
from .potential import CurrentReport, Design

OUTER = slice(0, 3)
PRIMED = (3, 4, 5)
MIN_STEPS_PER_LEG = 20
AMBIGUITY_TOL = 1e-3


class TrackingError(RuntimeError):
    pass


@dataclass(frozen=True)
class MajoranaCoupling:
    A: np.ndarray

    def __post_init__(self):
        if self.A.shape != (6, 6) or not np.array_equal(self.A, -self.A.T):
            raise ValueError("coupling matrix must be a 6x6 real antisymmetric array")


@dataclass(frozen=True)
class MajoranaSpectrum:
    """Canonical decomposition ``O @ A @ O.T = blockdiag(eps_k * [[0, 1], [-1, 0]])``.

    Rows ``2k`` and ``2k + 1`` of ``modes`` are the two Majorana components of
    the k-th fermion mode; ``energies`` ascend. ``covariance`` holds
    ``M_jk = <i g_j g_k>`` (j != k) in the state with every mode empty.
    """

    energies: np.ndarray
    modes: np.ndarray
    covariance: np.ndarray


@dataclass(frozen=True)
class BraidStep:
    flux: FluxConfig
    result: MinimizeResult
    currents: CurrentReport
    spectrum: MajoranaSpectrum
    mzm_currents: Tuple[float, float, float]
    tracked: np.ndarray  # 2 x 6, rows are the transported Majorana vectors

    @property
    def weights_a(self) -> np.ndarray:
        return _outer_unit(self.tracked[0])

    @property
    def weights_b(self) -> np.ndarray:
        return _outer_unit(self.tracked[1])


@dataclass(frozen=True)
class BraidTrace:
    steps: List[BraidStep]
    overlap: np.ndarray  # 2 x 2, initial rows against final rows
    min_step_overlap: float

    @property
    def rotation_angle(self) -> float:
        """Angle of the net rotation of the tracked pair, radians."""
        return math.atan2(self.overlap[0, 1], self.overlap[0, 0])

    @property
    def verdict(self) -> str:
        O = np.abs(self.overlap)
        if O[0, 1] > 0.99 and O[1, 0] > 0.99 and O[0, 0] < 0.1 and O[1, 1] < 0.1:
            return "exchange"
        if O[0, 0] > 0.99 and O[1, 1] > 0.99:
            return "identity"
        return "partial"


def _outer_unit(vec: np.ndarray) -> np.ndarray:
    outer = vec[OUTER]
    norm = np.linalg.norm(outer)
    return outer / norm if norm > 0 else outer


def build_coupling(s: PhaseState, E_M: float, alpha: float) -> MajoranaCoupling:
    A = np.zeros((6, 6))
    A[3, 4] = E_M * math.cos(s.phip3 / 2)
    A[4, 5] = E_M * math.cos(s.phip1 / 2)
    A[5, 3] = E_M * math.cos(s.phip2 / 2)
    for i in range(3):
        A[i, 3 + i] = alpha
    return MajoranaCoupling(A - A.T)


_J = np.array([[0.0, 1.0], [-1.0, 0.0]])


def diagonalize(coupling: MajoranaCoupling) -> MajoranaSpectrum:
    A = coupling.A
    T, Z = schur(A, output="real")
    # Z.T A Z = T: quasi-diagonal with 2x2 blocks [[0, t], [-t, 0]] and 1x1 zeros
    blocks, zeros = [], []
    i = 0
    while i < 6:
        if i < 5 and abs(T[i + 1, i]) > 0.0:
            t = T[i, i + 1]
            a, b = Z[:, i], Z[:, i + 1]
            if t < 0:
                a, b, t = b, a, -t
            blocks.append((t, a, b))
            i += 2
        else:
            zeros.append(Z[:, i])
            i += 1
    for j in range(0, len(zeros), 2):
        blocks.append((0.0, zeros[j], zeros[j + 1]))
    blocks.sort(key=lambda blk: blk[0])
    energies = np.array([blk[0] for blk in blocks])
    modes = np.vstack([row for blk in blocks for row in blk[1:]])
    canonical = np.kron(np.eye(3), _J)
    covariance = -modes.T @ canonical @ modes
    return MajoranaSpectrum(energies, modes, covariance)


def mzm_currents(s: PhaseState, spec: MajoranaSpectrum, E_M: float) -> Tuple[float, float, float]:
    """Currents carried by the trijunction Majoranas, in units of 2pi / Phi0 times energy.

    ``I_i = -E_M <i gp_{i+1} gp_{i+2}> sin(phip_i / 2)``: 4pi-periodic in ``phip_i``.
    """
    phip = (s.phip1, s.phip2, s.phip3)
    M = spec.covariance
    out = []
    for i in range(3):
        j, k = PRIMED[(i + 1) % 3], PRIMED[(i + 2) % 3]
        out.append(-E_M * M[j, k] * math.sin(phip[i] / 2))
    return tuple(out)


def braid_schedule(steps_per_leg: int, f_mag: float = 0.42,
                   loops: Sequence[int] = (1, 3, 2, 1)) -> List[FluxConfig]:
    """Piecewise-linear hand-over of the flux between loops.

    The default order realises f1 -> f3 -> f2 -> f1: three moving legs, one
    static starting point, ``3 * steps_per_leg + 1`` configurations.
    """
    if steps_per_leg < MIN_STEPS_PER_LEG:
        raise ValueError(
            f"steps_per_leg = {steps_per_leg} is too coarse for adiabatic tracking "
            f"(need >= {MIN_STEPS_PER_LEG})"
        )
    corners = [FluxConfig.single(loop, f_mag).as_array() for loop in loops]
    out = [FluxConfig(*corners[0])]
    for start, end in zip(corners[:-1], corners[1:]):
        for k in range(1, steps_per_leg + 1):
            out.append(FluxConfig(*(start + (end - start) * k / steps_per_leg)))
    # pin corners exactly
    for leg, corner in enumerate(corners):
        out[leg * steps_per_leg] = FluxConfig(*corner)
    return out


def _lowest_pair(spec: MajoranaSpectrum) -> np.ndarray:
    return spec.modes[:2].copy()


def _initial_gauge(pair: np.ndarray) -> np.ndarray:
    """Rotate the pair so the first vector carries the most weight on g3."""
    theta = math.atan2(pair[1, 2], pair[0, 2])
    c, s = math.cos(theta), math.sin(theta)
    return np.array([c * pair[0] + s * pair[1], -s * pair[0] + c * pair[1]])


def _transport(prev: np.ndarray, new: np.ndarray) -> Tuple[np.ndarray, float]:
    """Rotate ``new`` within its plane to best match ``prev``.

    Only proper rotations keep the ``(a, b)`` orientation of the block, so the
    optimum of ``trace(prev @ R(new).T)`` is found in closed form.
    """
    O = prev @ new.T
    sv = np.linalg.svd(O, compute_uv=False)
    if sv[-1] < AMBIGUITY_TOL:
        raise TrackingError("adiabatic tracking degenerate: increase steps")
    theta = math.atan2(O[0, 1] - O[1, 0], O[0, 0] + O[1, 1])
    c, s = math.cos(theta), math.sin(theta)
    rotated = np.array([c * new[0] + s * new[1], -s * new[0] + c * new[1]])
    return rotated, float(sv[-1])


def run_braid(design, p: CircuitParams, schedule: Sequence[FluxConfig],
              opts: MinimizeOptions = MinimizeOptions()) -> BraidTrace:
    """Follow the ground state and the lowest Majorana pair along ``schedule``."""
    design = Design.parse(design)
    if not (p.E_M > 0 and p.alpha > 0):
        raise ValueError("run_braid needs E_M > 0 and alpha > 0")
    if not schedule:
        raise ValueError("schedule must not be empty")
    steps: List[BraidStep] = []
    prev_res = None
    tracked = None
    worst = 1.0
    for f in schedule:
        try:
            if prev_res is None:
                res = minimize(design, p, f, opts=opts)
            else:
                res = minimize_from(design, p, f, prev_res.windings_used, prev_res.reduced, opts)
        except ConvergenceError as exc:
            raise TrackingError(f"ground state lost at {f}: {exc}") from exc
        spec = diagonalize(build_coupling(res.state, p.E_M, p.alpha))
        pair = _lowest_pair(spec)
        if tracked is None:
            tracked = _initial_gauge(pair)
        else:
            tracked, quality = _transport(tracked, pair)
            worst = min(worst, quality)
        steps.append(BraidStep(
            flux=f,
            result=res,
            currents=report_currents(design, p, f, res),
            spectrum=spec,
            mzm_currents=mzm_currents(res.state, spec, p.E_M),
            tracked=tracked,
        ))
        prev_res = res
    overlap = steps[0].tracked @ steps[-1].tracked.T
    return BraidTrace(steps, overlap, worst)

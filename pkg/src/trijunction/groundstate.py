"""Ground states of the effective potential, circulator routing and flux sweeps."""
from __future__ import annotations

import itertools
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import brentq
from scipy.stats import qmc

from .circuit import (
    TWO_PI,
    CircuitParams,
    FluxConfig,
    PhaseState,
    ReducedCoords,
    WindingNumbers,
    phases_from_reduced_array,
    to_reduced,
)
from .potential import (
    CurrentReport,
    Design,
    currents,
    energy_reduced,
    grad_reduced,
    hessian_reduced,
    wavevectors,
)

log = logging.getLogger(__name__)

DEGENERACY_ENERGY_TOL = 1e-9
CLUSTER_PHASE_TOL = 1e-4
ROUTING_RATIO = 10.0
# routing table: flux in loop i silences branch i
EXPECTED_ISOLATED = {1: 1, 2: 2, 3: 3}


class ConvergenceError(RuntimeError):
    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class DegenerateRoutingError(RuntimeError):
    pass


class SweepError(RuntimeError):
    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial or []


class CalibrationError(RuntimeError):
    pass


@dataclass(frozen=True)
class MinimizeOptions:
    n_restarts: int = 16
    max_iter: int = 200
    grad_tol: float = 1e-10
    seed: int = 0
    winding_search: bool = False

    def __post_init__(self):
        if self.n_restarts < 8:
            raise ValueError(f"n_restarts must be >= 8, got {self.n_restarts}")
        if self.max_iter < 1:
            raise ValueError("max_iter must be positive")


@dataclass(frozen=True)
class MinimizeResult:
    state: PhaseState
    reduced: ReducedCoords
    energy: float
    grad_norm: float
    windings_used: WindingNumbers
    converged: bool
    n_restarts_used: int
    # outer-loop fluxoid deficit n + f1 + f2 + f3 - (phi1 + phi2 + phi3) / 2pi
    circulation: float = 0.0


@dataclass(frozen=True)
class Routing:
    isolated_branch: int
    conducting_pair: Tuple[int, int]
    currents: CurrentReport
    active_loop: int
    flux: FluxConfig

    @property
    def matches_table(self) -> bool:
        return EXPECTED_ISOLATED[self.active_loop] == self.isolated_branch


@dataclass(frozen=True)
class SweepRow:
    flux: FluxConfig
    result: MinimizeResult
    currents: CurrentReport


# --- local minimiser -------------------------------------------------------

@dataclass
class _Local:
    x: np.ndarray
    energy: float
    grad_norm: float
    converged: bool
    iterations: int


def _newton(design, p, f, w, x0, max_iter, grad_tol) -> _Local:
    """Damped Newton descent with eigenvalue-modified Hessian.

    Each accepted step satisfies the Armijo condition, so the energy is
    non-increasing. Near the minimum the full Newton step is taken even if
    the energy change is below round-off.
    """
    x = np.array(x0, dtype=float)
    u = energy_reduced(design, p, f, w, x)
    g = grad_reduced(design, p, f, w, x)
    for it in range(max_iter):
        gn = float(np.linalg.norm(g))
        H = hessian_reduced(design, p, f, w, x)
        evals, evecs = np.linalg.eigh(H)
        if gn < grad_tol:
            if evals[0] > -1e-12 * max(1.0, abs(evals[-1])):
                return _Local(x, u, gn, True, it)
            # stalled on a saddle: leave along the downhill curvature direction
            d = evecs[:, 0] * 1e-3
            if energy_reduced(design, p, f, w, x + d) > energy_reduced(design, p, f, w, x - d):
                d = -d
            x = x + d
            u = energy_reduced(design, p, f, w, x)
            g = grad_reduced(design, p, f, w, x)
            continue
        floor = 1e-8 * max(1.0, float(np.abs(evals).max()))
        step = -(evecs @ ((evecs.T @ g) / np.maximum(np.abs(evals), floor)))
        norm = np.linalg.norm(step)
        if norm > math.pi:
            step *= math.pi / norm
        slope = float(g @ step)
        t = 1.0
        accepted = False
        for _ in range(60):
            x_new = x + t * step
            u_new = energy_reduced(design, p, f, w, x_new)
            if u_new <= u + 1e-4 * t * slope:
                accepted = True
                break
            t *= 0.5
        if not accepted:
            x_new = x + step
            u_new = energy_reduced(design, p, f, w, x_new)
            g_new = grad_reduced(design, p, f, w, x_new)
            round_off = 1e-14 * max(1.0, abs(u))
            if evals[0] > 0 and u_new <= u + round_off and np.linalg.norm(g_new) < gn:
                x, u, g = x_new, u_new, g_new
                continue
            return _Local(x, u, gn, False, it)
        x, u = x_new, u_new
        g = grad_reduced(design, p, f, w, x)
    gn = float(np.linalg.norm(g))
    return _Local(x, u, gn, gn < grad_tol, max_iter)


def _canonical(x: np.ndarray, n_prime: int) -> np.ndarray:
    """Move phi2, phi3 into [-pi, pi) by charge-neutral 2pi transfers with phi1.

    Shifting (phi_j, phip_j, phi1, phip1) by (-2pi k, +2pi k, +2pi k, -2pi k)
    leaves every fluxoid deficit, the trijunction sum and all cosines intact.
    """
    ph = phases_from_reduced_array(x, n_prime)
    for j in (1, 2):
        k = math.floor((ph[j] + math.pi) / TWO_PI)
        if k:
            ph[j] -= TWO_PI * k
            ph[3 + j] += TWO_PI * k
            ph[0] += TWO_PI * k
            ph[3] -= TWO_PI * k
    return np.array([
        0.5 * (ph[1] + ph[2]),
        0.5 * (ph[1] - ph[2]),
        0.5 * (ph[4] + ph[5]),
        0.5 * (ph[4] - ph[5]),
        ph[0],
    ])


def start_points(n: int, seed: int) -> np.ndarray:
    """Scrambled Halton points on [-pi, pi)^5."""
    sampler = qmc.Halton(d=5, scramble=True, seed=seed)
    return -math.pi + TWO_PI * sampler.random(n)


def _result(design, p, f, w, local: _Local, n_used: int) -> MinimizeResult:
    x = _canonical(local.x, w.n_prime)
    state = PhaseState.from_array(phases_from_reduced_array(x, w.n_prime))
    circ = w.n + f.f1 + f.f2 + f.f3 - (state.phi1 + state.phi2 + state.phi3) / TWO_PI
    return MinimizeResult(
        state=state,
        reduced=to_reduced(state, w),
        energy=local.energy,
        grad_norm=local.grad_norm,
        windings_used=w,
        converged=local.converged,
        n_restarts_used=n_used,
        circulation=float(circ),
    )


def _sectors(w: WindingNumbers, opts: MinimizeOptions) -> List[WindingNumbers]:
    if not opts.winding_search:
        return [w]
    return [
        WindingNumbers(m1, m2, m3, n, w.n_prime)
        for m1, m2, m3, n in itertools.product((-1, 0, 1), repeat=4)
    ]


def local_minima(design, p: CircuitParams, f: FluxConfig, w: WindingNumbers = WindingNumbers(),
                 opts: MinimizeOptions = MinimizeOptions()) -> List[MinimizeResult]:
    """Endpoints of every restart, in restart order."""
    design = Design.parse(design)
    starts = start_points(opts.n_restarts, opts.seed)
    out = []
    for sector in _sectors(w, opts):
        for x0 in starts:
            local = _newton(design, p, f, sector, x0, opts.max_iter, opts.grad_tol)
            out.append(_result(design, p, f, sector, local, opts.n_restarts))
    return out


def _pick_best(endpoints: Sequence[MinimizeResult], opts: MinimizeOptions) -> MinimizeResult:
    converged = [r for r in endpoints if r.converged]
    if not converged:
        best = min(endpoints, key=lambda r: r.energy)
        raise ConvergenceError(
            f"no restart reached |grad| < {opts.grad_tol:g} within {opts.max_iter} iterations "
            f"(best |grad| = {best.grad_norm:.3e})",
            best=best,
        )
    return min(converged, key=lambda r: r.energy)


def minimize(design, p: CircuitParams, f: FluxConfig, w: WindingNumbers = WindingNumbers(),
             opts: MinimizeOptions = MinimizeOptions()) -> MinimizeResult:
    """Lowest converged minimum over a seeded multi-start on the 5-torus."""
    return _pick_best(local_minima(design, p, f, w, opts), opts)


def minimize_from(design, p: CircuitParams, f: FluxConfig, w: WindingNumbers,
                  start: ReducedCoords, opts: MinimizeOptions = MinimizeOptions()) -> MinimizeResult:
    """Single local minimisation from a given point (warm start)."""
    design = Design.parse(design)
    local = _newton(design, p, f, w, start.as_array(), opts.max_iter, opts.grad_tol)
    res = _result(design, p, f, w, local, 1)
    if not res.converged:
        raise ConvergenceError(
            f"warm start did not converge at f={f} (|grad| = {res.grad_norm:.3e})", best=res
        )
    return res


def torus_distance(a: PhaseState, b: PhaseState) -> float:
    d = a.as_array() - b.as_array()
    d = (d + math.pi) % TWO_PI - math.pi
    return float(np.abs(d).max())


def distinct_minima(design, p: CircuitParams, f: FluxConfig, w: WindingNumbers = WindingNumbers(),
                    opts: MinimizeOptions = MinimizeOptions(),
                    energy_tol: float = DEGENERACY_ENERGY_TOL) -> List[MinimizeResult]:
    """Converged restart endpoints clustered on the six-phase torus, lowest first.

    Two endpoints are the same minimum when every junction phase agrees
    modulo 2pi within ``CLUSTER_PHASE_TOL`` and their energies agree within
    ``energy_tol``.
    """
    endpoints = [r for r in local_minima(design, p, f, w, opts) if r.converged]
    if not endpoints:
        _pick_best(local_minima(design, p, f, w, opts), opts)
    clusters: List[MinimizeResult] = []
    for r in sorted(endpoints, key=lambda r: r.energy):
        if not any(
            abs(r.energy - c.energy) <= energy_tol and torus_distance(r.state, c.state) < CLUSTER_PHASE_TOL
            for c in clusters
        ):
            clusters.append(r)
    return clusters


def find_degenerate_minima(design, p: CircuitParams, f: FluxConfig, w: WindingNumbers = WindingNumbers(),
                           opts: MinimizeOptions = MinimizeOptions(),
                           energy_tol: float = DEGENERACY_ENERGY_TOL) -> List[MinimizeResult]:
    """Distinct minima whose energy lies within ``energy_tol`` of the ground state."""
    minima = distinct_minima(design, p, f, w, opts, energy_tol)
    ground = minima[0].energy
    return [m for m in minima if m.energy - ground <= energy_tol]


def report_currents(design, p: CircuitParams, f: FluxConfig, res: MinimizeResult) -> CurrentReport:
    return currents(wavevectors(design, p, f, res.windings_used, res.state), p)


def classify(ip: np.ndarray) -> Tuple[int, Tuple[int, int]]:
    """Isolated branch (1-based) and conducting pair from branch currents."""
    mags = np.abs(ip)
    order = np.argsort(mags, kind="stable")
    if mags[order[1]] < ROUTING_RATIO * mags[order[0]] or mags[order[2]] == 0.0:
        raise DegenerateRoutingError(
            f"degenerate routing: branch currents {np.array2string(ip, precision=4)} "
            f"have no single isolated branch"
        )
    isolated = int(order[0]) + 1
    pair = tuple(sorted(int(i) + 1 for i in order[1:]))
    return isolated, pair


def route(design, p: CircuitParams, active_loop: int, f_mag: float = 0.42,
          w: WindingNumbers = WindingNumbers(), opts: MinimizeOptions = MinimizeOptions()) -> Routing:
    """Thread ``f_mag`` through one loop and report which branch carries no current."""
    f = FluxConfig.single(active_loop, f_mag)
    minima = find_degenerate_minima(design, p, f, w, opts)
    if len(minima) > 1:
        raise DegenerateRoutingError(
            f"degenerate routing: {len(minima)} minima within {DEGENERACY_ENERGY_TOL:g} "
            f"of the ground-state energy at f={f_mag}; current direction undetermined"
        )
    cur = report_currents(design, p, f, minima[0])
    isolated, pair = classify(cur.branch())
    return Routing(isolated, pair, cur, active_loop, f)


# --- sweeps ----------------------------------------------------------------

def ramp(start: FluxConfig, end: FluxConfig, n_points: int) -> List[FluxConfig]:
    if n_points < 1:
        raise ValueError("n_points must be >= 1")
    if n_points == 1:
        return [start]
    a, b = start.as_array(), end.as_array()
    inner = [FluxConfig(*(a + (b - a) * k / (n_points - 1))) for k in range(1, n_points - 1)]
    return [start, *inner, end]


def _sweep_point(args):
    design, p, f, w, opts = args
    res = minimize(design, p, f, w, opts)
    return SweepRow(f, res, report_currents(design, p, f, res))


def sweep(design, p: CircuitParams, schedule: Sequence[FluxConfig], w: WindingNumbers = WindingNumbers(),
          opts: MinimizeOptions = MinimizeOptions(), warm_start: bool = True, jobs: int = 1) -> List[SweepRow]:
    """Ground state and currents along a flux schedule.

    With ``warm_start`` each point is minimised from the previous minimum
    (sequential continuation). Otherwise every point gets a full multi-start
    and ``jobs > 1`` spreads the points over worker processes.
    """
    design = Design.parse(design)
    if not schedule:
        raise ValueError("schedule must not be empty")
    if not warm_start:
        tasks = [(design, p, f, w, opts) for f in schedule]
        if jobs > 1:
            with ProcessPoolExecutor(max_workers=jobs) as pool:
                return list(pool.map(_sweep_point, tasks))
        return [_sweep_point(t) for t in tasks]

    rows: List[SweepRow] = []
    prev: Optional[MinimizeResult] = None
    for f in schedule:
        try:
            if prev is None:
                res = minimize(design, p, f, w, opts)
            else:
                res = minimize_from(design, p, f, prev.windings_used, prev.reduced, opts)
        except ConvergenceError as exc:
            raise SweepError(f"sweep failed at point {len(rows)} ({f}): {exc}", partial=rows) from exc
        rows.append(SweepRow(f, res, report_currents(design, p, f, res)))
        prev = res
    return rows


# --- calibration -----------------------------------------------------------

def calibrate(design, p: CircuitParams, target_phi_p: float = 0.124, f: float = 0.42,
              bracket: Tuple[float, float] = (0.02, 0.3), opts: MinimizeOptions = MinimizeOptions(),
              tol: float = 1e-3) -> CircuitParams:
    """Tune E_Jp / E_J so the f-in-loop-1 minimum sits at ``phi_p / 2pi = target_phi_p``.

    ``phi_p`` decreases monotonically with the trijunction-to-loop junction
    ratio, so a bracketing root search over that ratio suffices. E_J itself is
    kept; it sets how stiffly the inductive terms pin the fluxoid deficits.
    """
    design = Design.parse(design)
    flux = FluxConfig(f, 0.0, 0.0)

    def achieved(ratio: float) -> float:
        trial = p.replace(E_Jp=ratio * p.E_J)
        return minimize(design, trial, flux, WindingNumbers(), opts).reduced.phi_p / TWO_PI

    lo, hi = bracket
    at_lo, at_hi = achieved(lo) - target_phi_p, achieved(hi) - target_phi_p
    if abs(at_lo) <= tol and abs(at_hi) <= tol:
        ratio = 0.5 * (lo + hi)
    elif at_lo * at_hi > 0:
        raise CalibrationError(
            f"target phi_p/2pi = {target_phi_p} not bracketed: E_Jp/E_J in [{lo}, {hi}] gives "
            f"phi_p/2pi in [{at_hi + target_phi_p:.4f}, {at_lo + target_phi_p:.4f}]"
        )
    else:
        ratio = brentq(lambda r: achieved(r) - target_phi_p, lo, hi, xtol=1e-12, rtol=1e-12)
    out = p.replace(E_Jp=ratio * p.E_J)
    final = achieved(ratio)
    if abs(final - target_phi_p) > tol:
        raise CalibrationError(f"calibration ended at phi_p/2pi = {final:.5f}, target {target_phi_p}")
    log.info("calibrated E_Jp/E_J = %.10g (phi_p/2pi = %.6f)", ratio, final)
    return out

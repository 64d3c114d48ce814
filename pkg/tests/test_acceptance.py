"""Acceptance gate: one group of tests per criterion.

Run ``pytest tests/test_acceptance.py`` (or this file directly); the terminal
summary lists PASS/FAIL per criterion. Tolerances are pinned here.
"""
import json
import math
import time

import numpy as np
import pytest

import oracles
from trijunction.circuit import CircuitParams, FluxConfig, PhaseState, WindingNumbers, default_params, to_reduced
from trijunction.cli import main
from trijunction.groundstate import calibrate, find_degenerate_minima, minimize, ramp, route, sweep
from trijunction.mzm import braid_schedule, build_coupling, diagonalize, mzm_currents, run_braid
from trijunction.potential import (
    Design,
    energy_reduced,
    grad_u_eff,
    u_eff_a,
    u_eff_a_limit,
    u_eff_b,
    verify_kirchhoff_loop,
    verify_kirchhoff_trijunction,
)

TAU = 2 * math.pi
P = default_params()
P_DISTINCT = P.replace(Lt_K=3e-4, Lt_s=0.37)

KIRCHHOFF_TOL = 1e-10
GRADIENT_TOL = 1e-6
LIMIT_TOL = 1e-12
B_TO_A_TOL = 1e-10
ROUTING_RATIO_TOL = 1e-6
EQUIVARIANCE_TOL = 1e-8
DEGENERACY_TOL = 1e-9
DIP_FRACTION = 1e-3
ASYMMETRY_EQUAL_TOL = 1e-8
ASYMMETRY_MARGIN = 1.2
EXCHANGE_OFFDIAG = 0.99
STEP_DOUBLING_TOL = 1e-3

criterion = pytest.mark.criterion


def random_inputs(rng):
    f = FluxConfig(*rng.uniform(0, 1, 3))
    w = WindingNumbers(*(int(v) for v in rng.integers(-2, 3, 5)))
    s = PhaseState.constrained(*rng.uniform(-math.pi, math.pi, 5), n_prime=w.n_prime)
    return f, w, s


# 1 ---------------------------------------------------------------------------

@criterion(1, "Kirchhoff identities < 1e-10 over 1000 random states, designs A and B, < 5 s")
def test_kirchhoff_identity_suite():
    t0 = time.perf_counter()
    worst = {}
    for design, p in ((Design.A, P), (Design.B, P), (Design.B, P_DISTINCT)):
        rng = np.random.default_rng(1)
        loop = trij = 0.0
        for _ in range(1000):
            f, w, s = random_inputs(rng)
            loop = max(loop, np.abs(verify_kirchhoff_loop(design, p, f, w, s)).max())
            trij = max(trij, np.abs(verify_kirchhoff_trijunction(design, p, f, w, s)).max())
        worst[(design.value, p.Lt_s)] = (loop, trij)
    elapsed = time.perf_counter() - t0
    print(f"max residuals {worst}, {elapsed:.2f} s")
    assert all(max(v) < KIRCHHOFF_TOL for v in worst.values())
    assert elapsed < 5.0


# 2 ---------------------------------------------------------------------------

@criterion(2, "analytic vs central-difference gradient, relative error < 1e-6, 100 points, both designs")
@pytest.mark.parametrize("design", [Design.A, Design.B])
def test_gradient_check(design):
    rng = np.random.default_rng(2)
    h = 1e-6
    worst = 0.0
    for _ in range(100):
        f, w, s = random_inputs(rng)
        x = to_reduced(s, w).as_array()
        g = grad_u_eff(design, P_DISTINCT, f, w, s)
        fd = np.array([
            (energy_reduced(design, P_DISTINCT, f, w, x + h * e)
             - energy_reduced(design, P_DISTINCT, f, w, x - h * e)) / (2 * h)
            for e in np.eye(5)
        ])
        worst = max(worst, np.linalg.norm(fd - g) / np.linalg.norm(g))
    print(f"worst relative gradient error {worst:.2e}")
    assert worst < GRADIENT_TOL


# 3 ---------------------------------------------------------------------------

@criterion(3, "short-branch limit pointwise <= 1e-12; identical-branch outside design equals inside <= 1e-10")
def test_short_branch_limit():
    limit = CircuitParams(L_K=0.0, L_s=1.0, Lp_K=0.0, Lp_s=0.0, E_J=P.E_J, E_Jp=P.E_Jp)
    rng = np.random.default_rng(3)
    worst = 0.0
    for _ in range(1000):
        f, w, s = random_inputs(rng)
        worst = max(worst, abs(u_eff_a(limit, f, w, s) - u_eff_a_limit(limit, f, w, s)))
        worst = max(worst, abs(oracles.u_inside(limit, f, w, s) - oracles.u_short_branches(limit, f, w, s)))
    assert worst <= LIMIT_TOL


@criterion(3, "short-branch limit pointwise <= 1e-12; identical-branch outside design equals inside <= 1e-10")
def test_outside_reduces_to_inside():
    twin = P_DISTINCT.replace(Lt_K=P_DISTINCT.Lp_K, Lt_s=P_DISTINCT.Lp_s)
    rng = np.random.default_rng(4)
    worst = 0.0
    for _ in range(1000):
        f, w, s = random_inputs(rng)
        f1 = FluxConfig(f.f1, 0, 0)
        worst = max(worst, abs(u_eff_b(twin, f1, w, s) - u_eff_a(twin, f1, w, s)))
        worst = max(worst, abs(oracles.u_outside_general(twin, f1, w, s) - oracles.u_inside(twin, f1, w, s)))
    assert worst <= B_TO_A_TOL


# 4 ---------------------------------------------------------------------------

@criterion(4, "calibrated f=(0.42,0,0) minimum: phi_p/2pi = 0.124 +- 0.001, phip = (0.246, -0.123, -0.123) +- 0.005, < 10 s")
def test_calibrated_ground_state():
    t0 = time.perf_counter()
    p = calibrate(Design.B, default_params(0.1), target_phi_p=0.124, f=0.42)
    res = minimize(Design.B, p, FluxConfig(0.42, 0, 0))
    elapsed = time.perf_counter() - t0
    rc, s = res.reduced, res.state
    print(f"E_Jp/E_J = {p.E_Jp / p.E_J:.10g}; phi_p/2pi = {rc.phi_p / TAU:.5f}; "
          f"phip/2pi = {s.phip1 / TAU:.5f}, {s.phip2 / TAU:.5f}, {s.phip3 / TAU:.5f}; {elapsed:.2f} s")
    assert abs(rc.phi_m) < 1e-8 and abs(rc.phip_m) < 1e-8
    assert abs(rc.phi_p / TAU - 0.124) <= 1e-3
    assert abs(s.phip1 / TAU - 0.246) <= 5e-3
    assert abs(s.phip2 / TAU + 0.123) <= 5e-3
    assert abs(s.phip3 / TAU + 0.123) <= 5e-3
    assert elapsed < 10.0


# 5 ---------------------------------------------------------------------------

TABLE = {1: (1, (2, 3)), 2: (2, (1, 3)), 3: (3, (1, 2))}


def check_routing(ip, loop):
    isolated, pair = TABLE[loop]
    assert abs(ip[isolated - 1]) / np.abs(ip).max() < ROUTING_RATIO_TOL
    j, k = pair
    assert abs(ip[j - 1]) > 0
    assert abs(abs(ip[j - 1]) - abs(ip[k - 1])) <= EQUIVARIANCE_TOL * np.abs(ip).max()


@criterion(5, "circulator routing: isolated branch ratio < 1e-6, table match, cyclic equivariance within 1e-8")
@pytest.mark.parametrize("loop", [1, 2, 3])
def test_routing_table(loop):
    r = route(Design.B, P, loop, 0.42)
    assert (r.isolated_branch, r.conducting_pair) == TABLE[loop]
    check_routing(r.currents.branch(), loop)


@criterion(5, "circulator routing: isolated branch ratio < 1e-6, table match, cyclic equivariance within 1e-8")
def test_routing_equivariance():
    base = route(Design.B, P, 1).currents
    for loop in (2, 3):
        cur = route(Design.B, P, loop).currents
        shift = loop - 1
        np.testing.assert_allclose(cur.branch(), np.roll(base.branch(), shift), rtol=0, atol=EQUIVARIANCE_TOL)
        np.testing.assert_allclose(cur.loop(), np.roll(base.loop(), shift), rtol=0, atol=EQUIVARIANCE_TOL)


# 6 ---------------------------------------------------------------------------

@criterion(6, "f=0.5: exactly two minima, gap < 1e-9, opposite circulation, route exits 'degenerate routing'")
def test_half_flux_degeneracy(capsys):
    minima = find_degenerate_minima(Design.B, P, FluxConfig(0.5, 0, 0))
    assert len(minima) == 2
    a, b = minima
    assert abs(a.energy - b.energy) < DEGENERACY_TOL
    assert np.sign(a.circulation) == -np.sign(b.circulation) != 0
    code = main(["route", "--f-mag", "0.5", "--active-loop", "1"])
    err = capsys.readouterr().err
    assert code == 1 and "degenerate routing" in err


# 7 ---------------------------------------------------------------------------

@criterion(7, "f1 -> f3 ramp (43 points): interior |I'2| minimum < 1e-3 of endpoint, endpoint routings")
def test_ramp_sweep():
    rows = sweep(Design.B, P, ramp(FluxConfig(0.42, 0, 0), FluxConfig(0, 0, 0.42), 43))
    ip = np.array([r.currents.branch() for r in rows])
    i2 = np.abs(ip[:, 1])
    k = int(np.argmin(i2))
    print(f"min |I'2| = {i2[k]:.3e} at point {k}, endpoint {i2[0]:.3e}")
    assert 0 < k < len(rows) - 1
    assert i2[k] < DIP_FRACTION * min(i2[0], i2[-1])
    check_routing(ip[0], 1)
    check_routing(ip[-1], 3)


# 8 ---------------------------------------------------------------------------

def majorana_currents(f):
    res = minimize(Design.B, P, f)
    spec = diagonalize(build_coupling(res.state, P.E_M, P.alpha))
    return np.array(mzm_currents(res.state, spec, P.E_M)), res.state, spec


@criterion(8, "Majorana current asymmetry at f1 = 0.42 and f3 = 0.42; 4pi periodicity and oddness")
def test_majorana_current_asymmetry():
    cur, _, _ = majorana_currents(FluxConfig(0.42, 0, 0))
    mags = np.abs(cur)
    print(f"|I| at f1=0.42: {mags}")
    assert abs(mags[1] - mags[2]) <= ASYMMETRY_EQUAL_TOL
    assert mags[0] >= ASYMMETRY_MARGIN * mags[1]
    cur3, _, _ = majorana_currents(FluxConfig(0, 0, 0.42))
    assert int(np.argmax(np.abs(cur3))) == 2


@criterion(8, "Majorana current asymmetry at f1 = 0.42 and f3 = 0.42; 4pi periodicity and oddness")
def test_majorana_current_periodicity():
    cur, s, spec = majorana_currents(FluxConfig(0.42, 0, 0))
    base = s.as_array()
    for i in range(3):
        for shift, sign in ((2 * TAU, 1.0), (TAU, -1.0)):
            moved = base.copy()
            moved[3 + i] += shift
            got = mzm_currents(PhaseState.from_array(moved), spec, P.E_M)
            assert got[i] == pytest.approx(sign * cur[i], abs=1e-15)
        flipped = base.copy()
        flipped[3 + i] = -flipped[3 + i]
        assert mzm_currents(PhaseState.from_array(flipped), spec, P.E_M)[i] == pytest.approx(-cur[i], abs=1e-15)


# 9 ---------------------------------------------------------------------------

@pytest.fixture(scope="module")
def braid_100():
    t0 = time.perf_counter()
    trace = run_braid(Design.B, P, braid_schedule(100))
    return trace, time.perf_counter() - t0


@criterion(9, "braid (100 steps/leg, E_M = 0.1, alpha = 0.002) is an exchange; static identity; step-doubling stable; < 60 s")
def test_braid_exchanges_tracked_modes(braid_100):
    trace, elapsed = braid_100
    O = trace.overlap
    print(f"overlap {O.tolist()}, verdict {trace.verdict}, rotation {trace.rotation_angle:.4f} rad, {elapsed:.2f} s")
    assert elapsed < 60.0
    assert abs(O[0, 1]) > EXCHANGE_OFFDIAG and abs(O[1, 0]) > EXCHANGE_OFFDIAG


@criterion(9, "braid (100 steps/leg, E_M = 0.1, alpha = 0.002) is an exchange; static identity; step-doubling stable; < 60 s")
def test_static_schedule_is_identity():
    trace = run_braid(Design.B, P, [FluxConfig(0.42, 0, 0)] * 101)
    np.testing.assert_allclose(trace.overlap, np.eye(2), atol=1e-9)
    assert trace.verdict == "identity"


@criterion(9, "braid (100 steps/leg, E_M = 0.1, alpha = 0.002) is an exchange; static identity; step-doubling stable; < 60 s")
def test_braid_is_stable_under_step_doubling(braid_100):
    trace, _ = braid_100
    doubled = run_braid(Design.B, P, braid_schedule(200))
    np.testing.assert_allclose(doubled.overlap, trace.overlap, rtol=0, atol=STEP_DOUBLING_TOL)


# 10 --------------------------------------------------------------------------

@criterion(10, "repeated runs with identical config and seed give byte-identical CSV/JSON")
@pytest.mark.parametrize("argv", [
    ["sweep"],
    ["minimize", "--f1", "0.3", "--f2", "0.05", "--seed", "11"],
    ["route", "--active-loop", "2"],
    ["braid", "--steps-per-leg", "20"],
    ["calibrate"],
])
def test_determinism(tmp_path, argv):
    outputs = []
    for run in range(2):
        out, summary = tmp_path / f"out{run}", tmp_path / f"summary{run}"
        assert main(argv + ["-o", str(out), "--summary-output", str(summary)]) in (0, 1)
        outputs.append((out.read_bytes(), summary.read_bytes() if summary.exists() else b""))
    assert outputs[0] == outputs[1]
    assert len(outputs[0][0]) > 0


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-q"]))

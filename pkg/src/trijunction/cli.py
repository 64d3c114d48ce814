"""Command-line front end.

Every subcommand reads the same flat configuration: defaults, overridden by
an optional JSON file (``--config``), overridden by per-key flags. Results are
written as JSON records or CSV tables; nothing is plotted.

Exit codes: 0 success, 1 failed check or verdict, 2 bad input.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import json
import logging
import math
import sys
from dataclasses import dataclass, fields
from typing import List, Optional

import numpy as np

from .circuit import (
    CALIBRATED_E_JP_RATIO,
    REDUCED_JACOBIAN,
    TWO_PI,
    CircuitParams,
    FluxConfig,
    ParameterError,
    PhaseState,
    WindingNumbers,
    validate_params,
)
from .groundstate import (
    CalibrationError,
    ConvergenceError,
    DegenerateRoutingError,
    MinimizeOptions,
    SweepError,
    calibrate,
    minimize,
    ramp,
    report_currents,
    route,
    sweep,
)
from .mzm import TrackingError, braid_schedule, build_coupling, diagonalize, mzm_currents, run_braid
from .potential import (
    Design,
    energy_from_phases,
    energy_reduced,
    grad_phases,
    verify_kirchhoff_loop,
    verify_kirchhoff_trijunction,
    wavevectors,
)

log = logging.getLogger("trijunction")

EXIT_OK, EXIT_FAIL, EXIT_INPUT = 0, 1, 2

SWEEP_HEADER = [
    "f1", "f2", "f3", "phi_p", "phi_m", "phip_p", "phip_m", "phi1", "U",
    "I1", "I2", "I3", "Ip1", "Ip2", "Ip3", "mzmI1", "mzmI2", "mzmI3",
]

# tolerances of the identity suites run by ``verify``
KIRCHHOFF_TOL = 1e-10
CONSERVATION_TOL = 1e-12
GRADIENT_TOL = 1e-6
FD_STEP = 1e-6
LIMIT_TOL = 1e-12
DESIGN_B_TO_A_TOL = 1e-10


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    design: str = "B"
    # device
    L_K: float = 1e-3
    L_s: float = 1.0
    Lp_K: float = 1e-4
    Lp_s: float = 0.1
    Lt_K: Optional[float] = 1e-4
    Lt_s: Optional[float] = 0.1
    E_J: float = 1e-3
    E_Jp: float = CALIBRATED_E_JP_RATIO * 1e-3
    E_M: float = 0.1
    alpha: float = 0.002
    # flux and winding sector
    f1: float = 0.42
    f2: float = 0.0
    f3: float = 0.0
    m1: int = 0
    m2: int = 0
    m3: int = 0
    n: int = 0
    n_prime: int = 0
    # minimiser
    n_restarts: int = 16
    max_iter: int = 200
    grad_tol: float = 1e-10
    seed: int = 0
    winding_search: bool = False
    # route / braid
    active_loop: int = 1
    f_mag: float = 0.42
    steps_per_leg: int = 100
    braid_loops: List[int] = dataclasses.field(default_factory=lambda: [1, 3, 2, 1])
    expect_verdict: str = ""
    # sweep
    ramp_start: List[float] = dataclasses.field(default_factory=lambda: [0.42, 0.0, 0.0])
    ramp_end: List[float] = dataclasses.field(default_factory=lambda: [0.0, 0.0, 0.42])
    ramp_points: int = 43
    warm_start: bool = True
    jobs: int = 1
    # calibrate
    target_phi_p: float = 0.124
    calib_f: float = 0.42
    calib_lo: float = 0.02
    calib_hi: float = 0.3
    # verify
    n_states: int = 1000
    n_grad_points: int = 100
    verify_perturbation: float = 0.0  # negative-control hook: distorts the analytic gradient
    # output
    output: str = "-"
    summary_output: str = "-"

    def params(self) -> CircuitParams:
        return validate_params(CircuitParams(
            L_K=self.L_K, L_s=self.L_s, Lp_K=self.Lp_K, Lp_s=self.Lp_s,
            Lt_K=self.Lt_K, Lt_s=self.Lt_s, E_J=self.E_J, E_Jp=self.E_Jp,
            E_M=self.E_M, alpha=self.alpha,
        ))

    def flux(self) -> FluxConfig:
        return FluxConfig(self.f1, self.f2, self.f3)

    def windings(self) -> WindingNumbers:
        return WindingNumbers(self.m1, self.m2, self.m3, self.n, self.n_prime)

    def options(self) -> MinimizeOptions:
        try:
            return MinimizeOptions(self.n_restarts, self.max_iter, self.grad_tol, self.seed, self.winding_search)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def design_tag(self) -> Design:
        try:
            return Design.parse(self.design)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc


_LIST_LENGTH = {"braid_loops": None, "ramp_start": 3, "ramp_end": 3}


def _coerce(name: str, kind, value):
    """Type-check one config value; ints are accepted where floats are expected."""
    def scalar(base, v):
        if base is bool:
            if not isinstance(v, bool):
                raise ConfigError(f"{name} must be true or false, got {v!r}")
            return v
        if base is int:
            if isinstance(v, bool) or not isinstance(v, int):
                raise ConfigError(f"{name} must be an integer, got {v!r}")
            return v
        if base is float:
            if isinstance(v, bool) or not isinstance(v, (int, float)):
                raise ConfigError(f"{name} must be a number, got {v!r}")
            return float(v)
        if not isinstance(v, str):
            raise ConfigError(f"{name} must be a string, got {v!r}")
        return v

    if kind in ("Optional[float]",):
        return None if value is None else scalar(float, value)
    if kind.startswith("List["):
        if not isinstance(value, list):
            raise ConfigError(f"{name} must be a list, got {value!r}")
        want = _LIST_LENGTH[name]
        if want is not None and len(value) != want:
            raise ConfigError(f"{name} must have {want} entries, got {len(value)}")
        base = int if kind == "List[int]" else float
        return [scalar(base, v) for v in value]
    return scalar({"float": float, "int": int, "bool": bool, "str": str}[kind], value)


def load_config(path: Optional[str], overrides: dict) -> RunConfig:
    """Merge defaults, the JSON file at ``path`` and ``overrides`` (highest precedence)."""
    known = {f.name: f.type for f in fields(RunConfig)}
    merged = {}
    if path:
        try:
            with open(path) as fh:
                data = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError(f"config {path} must hold a flat JSON object")
        unknown = sorted(set(data) - set(known))
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        merged.update(data)
    merged.update({k: v for k, v in overrides.items() if v is not None})
    return RunConfig(**{k: _coerce(k, known[k], v) for k, v in merged.items()})


# --- output helpers ----------------------------------------------------------

def _open_out(path: str, fallback):
    if path == "-":
        return fallback, False
    return open(path, "w", newline=""), True


def _write_text(text: str, path: str, fallback=None):
    fh, close = _open_out(path, fallback or sys.stdout)
    try:
        fh.write(text)
    finally:
        if close:
            fh.close()


def _json_text(record) -> str:
    return json.dumps(record, indent=2, allow_nan=True) + "\n"


def _fmt(x: float) -> str:
    return f"{x:.12g}"


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def _record(obj):
    """Dataclass to plain JSON types, field for field."""
    if dataclasses.is_dataclass(obj):
        return {f.name: _record(getattr(obj, f.name)) for f in fields(obj)}
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (list, tuple)):
        return [_record(v) for v in obj]
    if isinstance(obj, Design):
        return obj.value
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def _mzm_triplet(state: PhaseState, p: CircuitParams):
    spectrum = diagonalize(build_coupling(state, p.E_M, p.alpha))
    return mzm_currents(state, spectrum, p.E_M)


# --- verify ------------------------------------------------------------------

def _perturbed_gradient(eps: float):
    if eps == 0.0:
        return grad_phases

    def grad(design, p, f, w, phases):
        return grad_phases(design, p, f, w, phases) + eps * np.sin(phases)

    return grad


def _random_state(rng, n_prime: int) -> PhaseState:
    phi = rng.uniform(-math.pi, math.pi, 5)
    return PhaseState.constrained(*phi, n_prime=n_prime)


def _random_inputs(rng):
    f = FluxConfig(*rng.uniform(0.0, 1.0, 3))
    m = rng.integers(-1, 2, 5)
    w = WindingNumbers(*(int(v) for v in m))
    return f, w, _random_state(rng, w.n_prime)


def identity_suites(cfg: RunConfig) -> dict:
    """Maximum residual of every identity, gradient and reduction check."""
    p = cfg.params()
    rng = np.random.default_rng(cfg.seed)
    grad_fn = _perturbed_gradient(cfg.verify_perturbation)
    designs = [Design.A, Design.B] if p.has_central_branch else [Design.A]
    report = {}
    for design in designs:
        qk = qkp = cons = 0.0
        for _ in range(cfg.n_states):
            f, w, s = _random_inputs(rng)
            qk = max(qk, float(np.abs(verify_kirchhoff_loop(design, p, f, w, s, grad_fn)).max()))
            qkp = max(qkp, float(np.abs(verify_kirchhoff_trijunction(design, p, f, w, s, grad_fn)).max()))
            cons = max(cons, float(np.abs(wavevectors(design, p, f, w, s).conservation_residual()).max()))
        worst = 0.0
        for _ in range(cfg.n_grad_points):
            f, w, s = _random_inputs(rng)
            x = np.array([0.5 * (s.phi2 + s.phi3), 0.5 * (s.phi2 - s.phi3),
                          0.5 * (s.phip2 + s.phip3), 0.5 * (s.phip2 - s.phip3), s.phi1])
            g = REDUCED_JACOBIAN.T @ grad_fn(design, p, f, w, s.as_array())
            fd = np.array([
                (energy_reduced(design, p, f, w, x + FD_STEP * e)
                 - energy_reduced(design, p, f, w, x - FD_STEP * e)) / (2 * FD_STEP)
                for e in np.eye(5)
            ])
            worst = max(worst, float(np.linalg.norm(fd - g) / max(np.linalg.norm(g), 1e-300)))
        report[f"kirchhoff_loop_{design.value}"] = (qk, KIRCHHOFF_TOL)
        report[f"kirchhoff_trijunction_{design.value}"] = (qkp, KIRCHHOFF_TOL)
        report[f"conservation_{design.value}"] = (cons, CONSERVATION_TOL)
        report[f"gradient_{design.value}"] = (worst, GRADIENT_TOL)

    limit_p = CircuitParams(L_K=0.0, L_s=p.L_s, Lp_K=0.0, Lp_s=0.0, E_J=p.E_J, E_Jp=p.E_Jp)
    twin_p = p.replace(Lt_K=p.Lp_K, Lt_s=p.Lp_s)
    lim = twin = 0.0
    for _ in range(cfg.n_grad_points):
        f, w, s = _random_inputs(rng)
        phases = s.as_array()
        lim = max(lim, abs(energy_from_phases(Design.A, limit_p, f, w, phases)
                           - energy_from_phases(Design.A_LIMIT, limit_p, f, w, phases)))
        f1 = FluxConfig(f.f1, 0.0, 0.0)
        twin = max(twin, abs(energy_from_phases(Design.B, twin_p, f1, w, phases)
                             - energy_from_phases(Design.A, twin_p, f1, w, phases)))
    report["reduction_A_to_limit"] = (lim, LIMIT_TOL)
    report["reduction_B_to_A"] = (twin, DESIGN_B_TO_A_TOL)
    return {name: {"max_residual": val, "tolerance": tol, "ok": bool(val < tol)}
            for name, (val, tol) in report.items()}


def cmd_verify(cfg: RunConfig) -> int:
    report = identity_suites(cfg)
    ok = all(entry["ok"] for entry in report.values())
    _write_text(_json_text({"ok": ok, "suites": report}), cfg.output)
    for name, entry in report.items():
        log.info("%-28s %.3e  %s", name, entry["max_residual"], "ok" if entry["ok"] else "FAIL")
    return EXIT_OK if ok else EXIT_FAIL


# --- ground state ------------------------------------------------------------

def cmd_minimize(cfg: RunConfig) -> int:
    p, design, f = cfg.params(), cfg.design_tag(), cfg.flux()
    res = minimize(design, p, f, cfg.windings(), cfg.options())
    record = {
        "design": design.value,
        "flux": _record(f),
        "result": _record(res),
        "currents": _record(report_currents(design, p, f, res)),
        "mzm_currents": list(_mzm_triplet(res.state, p)),
    }
    _write_text(_json_text(record), cfg.output)
    return EXIT_OK


def cmd_route(cfg: RunConfig) -> int:
    if cfg.active_loop not in (1, 2, 3):
        raise ConfigError(f"active_loop must be 1, 2 or 3, got {cfg.active_loop}")
    p, design = cfg.params(), cfg.design_tag()
    routing = route(design, p, cfg.active_loop, cfg.f_mag, cfg.windings(), cfg.options())
    record = _record(routing)
    record["matches_table"] = routing.matches_table
    _write_text(_json_text(record), cfg.output)
    if not routing.matches_table:
        print(f"routing table mismatch: loop {cfg.active_loop} isolated branch "
              f"{routing.isolated_branch}", file=sys.stderr)
        return EXIT_FAIL
    return EXIT_OK


def cmd_sweep(cfg: RunConfig) -> int:
    p, design = cfg.params(), cfg.design_tag()
    if cfg.ramp_points < 1:
        raise ConfigError("ramp_points must be >= 1")
    if cfg.jobs < 1:
        raise ConfigError("jobs must be >= 1")
    schedule = ramp(FluxConfig(*cfg.ramp_start), FluxConfig(*cfg.ramp_end), cfg.ramp_points)
    table = sweep(design, p, schedule, cfg.windings(), cfg.options(),
                  warm_start=cfg.warm_start, jobs=cfg.jobs)
    rows = []
    for row in table:
        rc, cur = row.result.reduced, row.currents
        rows.append([
            row.flux.f1, row.flux.f2, row.flux.f3,
            rc.phi_p, rc.phi_m, rc.phip_p, rc.phip_m, rc.phi1, row.result.energy,
            cur.I1, cur.I2, cur.I3, cur.Ip1, cur.Ip2, cur.Ip3,
            *_mzm_triplet(row.result.state, p),
        ])
    _write_text(_csv_text(SWEEP_HEADER, rows), cfg.output)
    return EXIT_OK


# --- braid -------------------------------------------------------------------

BRAID_HEADER = [
    "step", "f1", "f2", "f3", "phi_p", "phi_m", "phip_p", "phip_m", "phi1", "U",
    "Ip1", "Ip2", "Ip3", "mzmI1", "mzmI2", "mzmI3", "eps1", "eps2", "eps3",
    "wa1", "wa2", "wa3", "wb1", "wb2", "wb3",
]


def cmd_braid(cfg: RunConfig) -> int:
    p, design = cfg.params(), cfg.design_tag()
    if cfg.expect_verdict not in ("", "exchange", "identity", "partial"):
        raise ConfigError(f"expect_verdict must be exchange, identity or partial, got {cfg.expect_verdict!r}")
    try:
        schedule = braid_schedule(cfg.steps_per_leg, cfg.f_mag, cfg.braid_loops)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    try:
        trace = run_braid(design, p, schedule, cfg.options())
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    rows = []
    for k, step in enumerate(trace.steps):
        rc, cur = step.result.reduced, step.currents
        rows.append([
            k, step.flux.f1, step.flux.f2, step.flux.f3,
            rc.phi_p, rc.phi_m, rc.phip_p, rc.phip_m, rc.phi1, step.result.energy,
            cur.Ip1, cur.Ip2, cur.Ip3, *step.mzm_currents, *step.spectrum.energies,
            *step.weights_a, *step.weights_b,
        ])
    _write_text(_csv_text(BRAID_HEADER, rows), cfg.output)
    summary = {
        "steps": len(trace.steps),
        "overlap": trace.overlap.tolist(),
        "rotation_angle": trace.rotation_angle,
        "min_step_overlap": trace.min_step_overlap,
        "verdict": trace.verdict,
    }
    _write_text(_json_text(summary), cfg.summary_output, sys.stderr)
    if cfg.expect_verdict and trace.verdict != cfg.expect_verdict:
        print(f"braid verdict {trace.verdict!r}, expected {cfg.expect_verdict!r}", file=sys.stderr)
        return EXIT_FAIL
    return EXIT_OK


# --- calibrate ---------------------------------------------------------------

def cmd_calibrate(cfg: RunConfig) -> int:
    p, design = cfg.params(), cfg.design_tag()
    if not cfg.calib_lo < cfg.calib_hi:
        raise ConfigError("calib_lo must be below calib_hi")
    out = calibrate(design, p, cfg.target_phi_p, cfg.calib_f, (cfg.calib_lo, cfg.calib_hi), cfg.options())
    res = minimize(design, out, FluxConfig(cfg.calib_f, 0.0, 0.0), WindingNumbers(), cfg.options())
    record = {
        "params": out.to_dict(),
        "E_Jp_ratio": out.E_Jp / out.E_J,
        "phi_p_over_2pi": res.reduced.phi_p / TWO_PI,
    }
    _write_text(_json_text(record), cfg.output)
    return EXIT_OK


COMMANDS = {
    "verify": (cmd_verify, "run the identity, gradient and reduction suites"),
    "minimize": (cmd_minimize, "ground state at the configured flux"),
    "route": (cmd_route, "circulator routing for one active loop"),
    "sweep": (cmd_sweep, "warm-started flux ramp, CSV table"),
    "braid": (cmd_braid, "adiabatic braid: CSV trace plus JSON summary"),
    "calibrate": (cmd_calibrate, "tune E_Jp/E_J to a target minimum"),
}


def _add_config_flags(parser: argparse.ArgumentParser):
    parser.add_argument("--config", help="flat JSON file of config keys")
    parser.add_argument("-v", "--verbose", action="store_true")
    for f in fields(RunConfig):
        flag = "--" + f.name.replace("_", "-")
        kind = f.type
        if kind == "bool":
            parser.add_argument(flag, dest=f.name, action=argparse.BooleanOptionalAction, default=None)
        elif kind.startswith("List["):
            base = int if kind == "List[int]" else float
            nargs = _LIST_LENGTH[f.name] or "+"
            parser.add_argument(flag, dest=f.name, type=base, nargs=nargs, default=None)
        elif kind == "Optional[float]":
            parser.add_argument(flag, dest=f.name, type=float, default=None)
        else:
            base = {"float": float, "int": int, "str": str}[kind]
            names = [flag, "-o"] if f.name == "output" else [flag]
            parser.add_argument(*names, dest=f.name, type=base, default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="trijunction", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in COMMANDS.items():
        _add_config_flags(sub.add_parser(name, help=help_text))
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    overrides = {f.name: getattr(args, f.name) for f in fields(RunConfig)}
    handler = COMMANDS[args.command][0]
    try:
        cfg = load_config(args.config, overrides)
        return handler(cfg)
    except (ConfigError, ParameterError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except DegenerateRoutingError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_FAIL
    except (ConvergenceError, SweepError, TrackingError, CalibrationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())

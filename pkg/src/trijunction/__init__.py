"""Effective potentials, ground states and Majorana braiding for a three-junction loop with a trijunction."""
from .circuit import (
    CALIBRATED_E_JP_RATIO,
    CircuitParams,
    ConstraintError,
    FluxConfig,
    ParameterError,
    PhaseState,
    ReducedCoords,
    WindingNumbers,
    default_params,
    from_reduced,
    to_reduced,
    validate_params,
)
from .groundstate import (
    CalibrationError,
    ConvergenceError,
    DegenerateRoutingError,
    MinimizeOptions,
    MinimizeResult,
    Routing,
    SweepError,
    calibrate,
    find_degenerate_minima,
    minimize,
    ramp,
    route,
    sweep,
)
from .mzm import (
    BraidTrace,
    MajoranaCoupling,
    MajoranaSpectrum,
    TrackingError,
    braid_schedule,
    build_coupling,
    diagonalize,
    mzm_currents,
    run_braid,
)
from .potential import (
    CurrentReport,
    Design,
    WaveVectors,
    currents,
    grad_u_eff,
    u_eff,
    u_eff_a,
    u_eff_a_limit,
    u_eff_b,
    verify_kirchhoff_loop,
    verify_kirchhoff_trijunction,
    wavevectors,
)

__version__ = "0.1.0"

"""Stability analysis and simulation of a driven three-mode optomechanical system.

Two optical modes share a mechanical mode through a three-wave coupling.
The package locates the exceptional point and the instability threshold of
the linearized dynamics, integrates the nonlinear equations, computes
Floquet growth rates under a modulated drive, and scans parameters.
"""
from .errors import (
    BracketError,
    ConfigError,
    DivergenceError,
    FitError,
    InvalidParameterError,
    NoExceptionalPoint,
    OptomechError,
    UnstableFixedPoint,
    WeakCouplingError,
    WindowError,
)
from .model import (
    DriveModulation,
    EigenPair,
    ModeState,
    PhaseMode,
    RegimeLabel,
    SystemParams,
    Wave,
    WaveSum,
    coupling_regime,
    eigenvalues_linearized,
    ep_amplitude,
    ep_amplitude_closed,
    parametric_frequency,
    reference_params,
    rhs_rotating_frame,
    stationary_below_threshold,
    three_wave_drive,
    threshold_amplitude,
    threshold_amplitude_closed,
)
from .integrator import (
    SolverMethod,
    SolverOptions,
    SteadyClass,
    Trajectory,
    classify_steady,
    integrate,
    integrate_until_steady,
    seeded_state,
)
from .floquet import FloquetResult, Observable, fit_envelope_rate, log_decrement, monodromy
from .sweep import Axis, ScanKind, bisect_generation_threshold, scan_drive_amplitude, tongue_map, transistor_demo

__version__ = "0.1.0"

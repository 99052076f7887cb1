"""Driven three-mode optomechanical system: parameters, dynamics and closed forms.

Two optical modes ``a1`` (pumped) and ``a2`` exchange energy through a phonon
mode ``b``.  In the frame rotating at the drive frequency ``omega`` the
mean-field amplitudes obey::

    da1/dt = -(i D1 + g1) a1 - i W a2 b      - i A(t)
    da2/dt = -(i D2 + g2) a2 - i W a1 conj(b)
    db/dt  = -(i wb + g0) b  - i W a1 conj(a2)

with detunings ``D1,2 = omega1,2 - omega`` and drive envelope ``A(t)``.  Only
``a1`` and ``a2`` are transformed, so ``b`` keeps its lab-frame rotation.

All frequencies, rates and drive amplitudes are in units of ``omega1``.
Below the instability threshold ``a2 = b = 0`` and the small deviations
``(conj(da2), db)`` evolve with the 2x2 matrix::

    [[ i D2 - g2,                  -i W conj(A) / (D1 + i g1) ],
     [ i W A / (D1 - i g1),         -(i wb + g0)              ]]

whose eigenvalues give the exceptional point (EP), where the radicand of the
quadratic formula vanishes, and the instability threshold, where the
largest real part crosses zero.
"""
from __future__ import annotations

import cmath
import enum
import math
from dataclasses import dataclass, fields
from typing import NamedTuple

import numpy as np
from scipy.optimize import brentq

from .errors import (
    BracketError,
    InvalidParameterError,
    NoExceptionalPoint,
    UnstableFixedPoint,
    WeakCouplingError,
)

# relative tolerance for "gamma0 == gamma2"
DAMPING_MATCH_RTOL = 1e-9
# relative tolerance on amplitude for the EP regime label
EP_LABEL_RTOL = 1e-9


class PhaseMode(str, enum.Enum):
    SIN = "sin"
    COS = "cos"


class RegimeLabel(str, enum.Enum):
    STRONG_COUPLING = "strong_coupling"
    EP = "ep"
    WEAK_COUPLING = "weak_coupling"
    UNSTABLE = "unstable"


def _finite(name, value):
    if not math.isfinite(value):
        raise InvalidParameterError(f"{name} must be finite, got {value!r}")


@dataclass(frozen=True)
class SystemParams:
    """Rates and frequencies of the model.

    ``omega_b`` is the phonon frequency; ``coupling`` is the optomechanical
    coupling strength; ``drive_freq`` is the pump frequency.
    """

    omega2: float
    omega_b: float
    gamma1: float
    gamma2: float
    gamma0: float
    coupling: float
    omega1: float = 1.0
    drive_freq: float = 1.0

    def __post_init__(self):
        for f in fields(self):
            value = getattr(self, f.name)
            if isinstance(value, bool) or not isinstance(value, (int, float, np.floating, np.integer)):
                raise InvalidParameterError(f"{f.name} must be a real number, got {value!r}")
            object.__setattr__(self, f.name, float(value))
            _finite(f.name, float(value))
        for name in ("omega1", "omega2", "omega_b", "gamma1", "gamma2", "gamma0", "drive_freq"):
            if getattr(self, name) <= 0:
                raise InvalidParameterError(f"{name} must be > 0, got {getattr(self, name)!r}")
        if self.coupling == 0:
            raise InvalidParameterError("coupling must be nonzero")

    @classmethod
    def from_detunings(cls, delta1, delta2, omega_b, gamma1, gamma2, gamma0, coupling):
        """Build parameters in units of omega1 from the two detunings."""
        drive = 1.0 - delta1
        return cls(omega2=drive + delta2, omega_b=omega_b, gamma1=gamma1,
                   gamma2=gamma2, gamma0=gamma0, coupling=coupling,
                   omega1=1.0, drive_freq=drive)

    @property
    def delta1(self) -> float:
        return self.omega1 - self.drive_freq

    @property
    def delta2(self) -> float:
        return self.omega2 - self.drive_freq

    @property
    def matched_damping(self) -> bool:
        scale = max(self.gamma0, self.gamma2)
        return abs(self.gamma0 - self.gamma2) <= DAMPING_MATCH_RTOL * scale

    def scaled(self, factor: float) -> "SystemParams":
        """Multiply every frequency and rate by ``factor``."""
        return SystemParams(**{f.name: getattr(self, f.name) * factor for f in fields(self)})

    def lossless(self) -> "SystemParams":
        """Copy with all three damping rates set to zero.

        Zero damping is outside the validated domain; this copy exists only to
        exercise the conservation laws of the undamped equations.
        """
        copy = object.__new__(SystemParams)
        for f in fields(self):
            object.__setattr__(copy, f.name, getattr(self, f.name))
        for name in ("gamma1", "gamma2", "gamma0"):
            object.__setattr__(copy, name, 0.0)
        return copy

    def normalized(self) -> "SystemParams":
        """Express all quantities in units of omega1."""
        return self.scaled(1.0 / self.omega1)

    def as_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


@dataclass(frozen=True)
class DriveModulation:
    """Drive envelope ``amp0 * (1 + alpha * sin(mod_freq t))`` (or cos)."""

    amp0: float
    alpha: float = 0.0
    mod_freq: float = 0.0
    phase_mode: PhaseMode = PhaseMode.SIN

    def __post_init__(self):
        for name in ("amp0", "alpha", "mod_freq"):
            value = float(getattr(self, name))
            _finite(name, value)
            object.__setattr__(self, name, value)
        object.__setattr__(self, "phase_mode", PhaseMode(self.phase_mode))
        if self.amp0 < 0:
            raise InvalidParameterError(f"amp0 must be >= 0, got {self.amp0!r}")
        if self.alpha < 0:
            raise InvalidParameterError(f"alpha must be >= 0, got {self.alpha!r}")
        if self.mod_freq < 0 or (self.alpha > 0 and self.mod_freq <= 0):
            raise InvalidParameterError("mod_freq must be > 0 when alpha > 0")

    @classmethod
    def constant(cls, amp0: float) -> "DriveModulation":
        return cls(amp0=amp0)

    @property
    def is_constant(self) -> bool:
        return self.alpha == 0.0

    @property
    def period(self) -> float:
        return math.inf if self.is_constant else 2.0 * math.pi / self.mod_freq

    def amplitude(self, t):
        return drive_amplitude(self, t)

    def as_dict(self) -> dict:
        return {"amp0": self.amp0, "alpha": self.alpha, "mod_freq": self.mod_freq,
                "phase_mode": self.phase_mode.value}


def drive_amplitude(drive: DriveModulation, t):
    """Real drive envelope at time ``t`` (scalar or array)."""
    if drive.alpha == 0.0:
        return drive.amp0 * np.ones_like(t, dtype=float) if np.ndim(t) else drive.amp0
    trig = np.sin if drive.phase_mode is PhaseMode.SIN else np.cos
    return drive.amp0 * (1.0 + drive.alpha * trig(drive.mod_freq * t))


@dataclass(frozen=True)
class Wave:
    """A single lab-frame wave ``amplitude * exp(-i frequency t)``."""

    amplitude: complex
    frequency: float

    def __call__(self, t):
        return self.amplitude * np.exp(-1j * self.frequency * t)


@dataclass(frozen=True)
class WaveSum:
    """Superposition of lab-frame waves, used directly as a drive.

    ``amplitude(t)`` strips the carrier ``exp(-i carrier t)`` so the sum can
    stand in for a :class:`DriveModulation` in the rotating-frame equations.
    """

    waves: tuple
    carrier: float

    def field(self, t):
        return sum(w(t) for w in self.waves)

    def amplitude(self, t):
        return self.field(t) * np.exp(1j * self.carrier * t)


def three_wave_drive(amp0: float, alpha: float, mod_freq: float, carrier: float,
                     phase_mode: PhaseMode = PhaseMode.COS):
    """Carrier plus two weak sidebands at ``carrier -/+ mod_freq``.

    Returns ``(waves, modulation)`` where the sum of the three waves divided by
    ``exp(-i carrier t)`` equals ``modulation.amplitude(t)``.  For ``COS`` the
    sidebands are real, ``amp0*alpha/2`` each; for ``SIN`` they carry phases
    ``-i`` (lower) and ``+i`` (upper).  Either way each sideband has intensity
    ``alpha**2 / 4`` relative to the carrier.
    """
    if alpha < 0:
        raise InvalidParameterError(f"alpha must be >= 0, got {alpha!r}")
    phase_mode = PhaseMode(phase_mode)
    half = amp0 * alpha / 2.0
    if phase_mode is PhaseMode.COS:
        lower, upper = half, half
    else:
        lower, upper = -1j * half, 1j * half
    waves = (
        Wave(complex(amp0), carrier),
        Wave(complex(lower), carrier - mod_freq),
        Wave(complex(upper), carrier + mod_freq),
    )
    modulation = DriveModulation(amp0=amp0, alpha=alpha, mod_freq=mod_freq,
                                 phase_mode=phase_mode)
    return waves, modulation


@dataclass(frozen=True)
class ModeState:
    a1: complex = 0j
    a2: complex = 0j
    b: complex = 0j

    def __post_init__(self):
        for name in ("a1", "a2", "b"):
            value = complex(getattr(self, name))
            if not cmath.isfinite(value):
                raise InvalidParameterError(f"state component {name} is not finite: {value!r}")
            object.__setattr__(self, name, value)

    def as_array(self) -> np.ndarray:
        return np.array([self.a1, self.a2, self.b], dtype=complex)

    @classmethod
    def from_array(cls, y) -> "ModeState":
        return cls(complex(y[0]), complex(y[1]), complex(y[2]))

    @property
    def intensities(self) -> tuple:
        return abs(self.a1) ** 2, abs(self.a2) ** 2, abs(self.b) ** 2


class EigenPair(NamedTuple):
    lambda1: complex
    lambda2: complex
    discriminant: complex


# -- dynamics ---------------------------------------------------------------

def rhs_array(t, y, params: SystemParams, drive) -> np.ndarray:
    """Rotating-frame right-hand side on a complex array ``[a1, a2, b]``."""
    a1, a2, b = y[0], y[1], y[2]
    W = params.coupling
    amp = drive.amplitude(t)
    return np.array([
        -(1j * params.delta1 + params.gamma1) * a1 - 1j * W * a2 * b - 1j * amp,
        -(1j * params.delta2 + params.gamma2) * a2 - 1j * W * a1 * np.conj(b),
        -(1j * params.omega_b + params.gamma0) * b - 1j * W * a1 * np.conj(a2),
    ], dtype=complex)


def rhs_rotating_frame(state: ModeState, t: float, params: SystemParams, drive) -> ModeState:
    """Time derivative of ``state`` in the frame rotating at the drive frequency."""
    if not isinstance(state, ModeState):
        state = ModeState.from_array(state)
    return ModeState.from_array(rhs_array(t, state.as_array(), params, drive))


def rhs_lab_array(t, y, params: SystemParams, drive) -> np.ndarray:
    """Lab-frame equations; the drive carries its ``exp(-i omega t)`` carrier."""
    a1, a2, b = y[0], y[1], y[2]
    W = params.coupling
    pump = drive.amplitude(t) * np.exp(-1j * params.drive_freq * t)
    return np.array([
        -(1j * params.omega1 + params.gamma1) * a1 - 1j * W * a2 * b - 1j * pump,
        -(1j * params.omega2 + params.gamma2) * a2 - 1j * W * a1 * np.conj(b),
        -(1j * params.omega_b + params.gamma0) * b - 1j * W * a1 * np.conj(a2),
    ], dtype=complex)


def stationary_below_threshold(params: SystemParams, amp: float, force: bool = False) -> ModeState:
    """Fixed point ``a1 = -amp / (D1 - i g1)``, ``a2 = b = 0``.

    Raises :class:`UnstableFixedPoint` at or above the instability threshold
    unless ``force`` is set.
    """
    if not force and amp >= threshold_amplitude(params):
        raise UnstableFixedPoint(
            f"amp={amp!r} is at or above the instability threshold; pass force=True to evaluate anyway")
    return ModeState(-amp / (params.delta1 - 1j * params.gamma1), 0j, 0j)


# -- linear stability -------------------------------------------------------

def pump_coupling_sq(params: SystemParams, amp) -> float:
    """Squared effective coupling ``|W A|^2 / (D1^2 + g1^2)`` of the deviations."""
    return (params.coupling * abs(amp)) ** 2 / (params.delta1 ** 2 + params.gamma1 ** 2)


def linear_trace(params: SystemParams) -> complex:
    return (1j * params.delta2 - params.gamma2) - (1j * params.omega_b + params.gamma0)


def _radicand(params: SystemParams, amp) -> complex:
    s = (1j * params.delta2 - params.gamma2) + (1j * params.omega_b + params.gamma0)
    return s * s + 4.0 * pump_coupling_sq(params, amp)


def eigenvalues_linearized(params: SystemParams, amp: float) -> EigenPair:
    """Closed-form eigenvalues of the deviation equations.

    ``lambda1`` always has the larger real part; on ties (below the EP with
    matched damping) it has the larger imaginary part.
    """
    if amp < 0:
        raise InvalidParameterError(f"amp must be >= 0, got {amp!r}")
    disc = _radicand(params, amp)
    s = (1j * params.delta2 - params.gamma2) + (1j * params.omega_b + params.gamma0)
    # a radicand within its own rounding error is a coalescence
    if abs(disc) <= 4 * np.finfo(float).eps * (abs(s) ** 2 + 4 * pump_coupling_sq(params, amp)):
        disc = 0j
    root = cmath.sqrt(disc)
    half_trace = linear_trace(params) / 2.0
    if abs(root.real) <= 1e-12 * abs(root) and root.imag < 0:
        root = -root
    return EigenPair(half_trace + root / 2.0, half_trace - root / 2.0, disc)


def _require_matched_damping(params: SystemParams):
    if not params.matched_damping:
        raise NoExceptionalPoint(
            f"gamma0={params.gamma0!r} differs from gamma2={params.gamma2!r}; "
            "the eigenvalues never coalesce exactly")


def _grow_bracket(f, hi, what, max_doublings=200):
    for _ in range(max_doublings):
        if f(hi) > 0:
            return hi
        hi *= 2.0
    raise BracketError(f"no sign change found for the {what} up to amp={hi!r}")


def _amp_scale(params: SystemParams) -> float:
    return (math.hypot(params.delta1, params.gamma1)
            * (abs(params.delta2 + params.omega_b) + params.gamma0 + params.gamma2)
            / abs(params.coupling))


def ep_amplitude_closed(params: SystemParams) -> float:
    _require_matched_damping(params)
    return (math.hypot(params.delta1, params.gamma1) * abs(params.delta2 + params.omega_b)
            / (2.0 * abs(params.coupling)))


def ep_amplitude(params: SystemParams) -> float:
    """Drive amplitude where the two eigenvalues coalesce (root-find on the radicand).

    With matched damping the radicand is real and increases monotonically with
    the drive, so a bracketed root-find is exact up to rounding.
    """
    _require_matched_damping(params)

    def radicand(amp):
        return _radicand(params, amp).real

    if radicand(0.0) >= 0.0:
        return 0.0
    hi = _grow_bracket(radicand, _amp_scale(params), "exceptional point")
    return brentq(radicand, 0.0, hi, xtol=hi * 1e-17, rtol=4 * np.finfo(float).eps, maxiter=500)


def threshold_amplitude_closed(params: SystemParams) -> float:
    """Instability threshold for matched damping.

    Solves ``4 |W A|^2 / (D1^2 + g1^2) = (D2 + wb)^2 + (g0 + g2)^2``.
    """
    _require_matched_damping(params)
    return (math.hypot(params.delta1, params.gamma1)
            * math.hypot(params.delta2 + params.omega_b, params.gamma0 + params.gamma2)
            / (2.0 * abs(params.coupling)))


def threshold_amplitude(params: SystemParams, bracket=None) -> float:
    """Smallest drive amplitude at which ``max Re(lambda)`` reaches zero.

    Works for any damping; ``bracket=(lo, hi)`` overrides the automatic
    search and must straddle the sign change.
    """
    def growth(amp):
        return eigenvalues_linearized(params, amp).lambda1.real

    if bracket is None:
        lo = 0.0
        hi = _grow_bracket(growth, _amp_scale(params), "instability threshold")
    else:
        lo, hi = map(float, bracket)
        if not (growth(lo) < 0 < growth(hi)):
            raise BracketError(
                f"bracket {bracket!r} does not straddle the threshold: "
                f"Re(lambda1)={growth(lo):.3e} at lo, {growth(hi):.3e} at hi")
    if growth(lo) >= 0:
        return lo
    return brentq(growth, lo, hi, xtol=hi * 1e-17, rtol=4 * np.finfo(float).eps, maxiter=500)


def parametric_frequency(params: SystemParams, amp: float) -> float:
    """Frequency of the equivalent parametric oscillator, real only below the EP."""
    _require_matched_damping(params)
    half = (params.omega_b + params.delta2) / 2.0
    wp_sq = half * half - pump_coupling_sq(params, amp)
    if wp_sq < 0:
        # rounding at the EP itself
        if -wp_sq <= 1e-12 * half * half:
            return 0.0
        raise WeakCouplingError(
            f"amp={amp!r} is past the exceptional point; parametric frequency is imaginary")
    return math.sqrt(wp_sq)


def coupling_regime(params: SystemParams, amp: float, rtol: float = EP_LABEL_RTOL) -> RegimeLabel:
    if amp < 0:
        raise InvalidParameterError(f"amp must be >= 0, got {amp!r}")
    ep = ep_amplitude(params)
    threshold = threshold_amplitude(params)
    if amp >= threshold:
        return RegimeLabel.UNSTABLE
    if abs(amp - ep) <= rtol * ep:
        return RegimeLabel.EP
    if amp < ep:
        return RegimeLabel.STRONG_COUPLING
    return RegimeLabel.WEAK_COUPLING


def reference_params() -> SystemParams:
    """Reference operating point: g1=1e-2, g2=g0=1e-3, W=0.2, D1=0, D2=wb=1e-2."""
    return SystemParams.from_detunings(delta1=0.0, delta2=1e-2, omega_b=1e-2, gamma1=1e-2,
                                       gamma2=1e-3, gamma0=1e-3, coupling=0.2)

"""Floquet stability of the small deviations ``(conj(da2), db)`` under a modulated pump.

The deviations obey ``x' = M(t) x`` with a 2x2 matrix that inherits the
drive period ``T = 2 pi / mod_freq``.  Two couplings of the pump mode are
available:

``"adiabatic"``
    ``a1`` follows the drive instantaneously, ``a1(t) = -A(t) / (D1 - i g1)``.
    This is the textbook linearization; its frozen-time eigenvalues are the
    closed-form ones of :func:`optomech.model.eigenvalues_linearized`.
``"orbit"``
    ``a1(t)`` is the exact periodic response of the pump mode to the
    modulated drive (three Fourier components).  This is the true
    linearization of the nonlinear equations about their subthreshold
    periodic state, and it lags the drive when ``mod_freq`` is comparable to
    ``gamma1``.

Both agree for a constant drive, and both leave ``trace M`` time-independent.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.integrate import solve_ivp

from .errors import FitError, InvalidParameterError
from .integrator import IntegrationError, SolverMethod, SolverOptions, Trajectory, rk4_fixed
from .model import DriveModulation, PhaseMode, SystemParams, linear_trace

MONODROMY_RTOL = 1e-10
MONODROMY_ATOL = 1e-12
PUMP_MODES = ("adiabatic", "orbit")
SEGMENT_SPAN = 6.0


class Observable(str, enum.Enum):
    A2_SQ = "a2_sq"
    B_SQ = "b_sq"


def coefficient_matrix(params: SystemParams, amp: complex) -> np.ndarray:
    """Deviation matrix for a frozen drive value ``amp``."""
    W = params.coupling
    return np.array([
        [1j * params.delta2 - params.gamma2, -1j * W * np.conj(amp) / (params.delta1 + 1j * params.gamma1)],
        [1j * W * amp / (params.delta1 - 1j * params.gamma1), -(1j * params.omega_b + params.gamma0)],
    ], dtype=complex)


def pump_orbit(params: SystemParams, drive: DriveModulation):
    """Periodic solution ``a1(t)`` of ``a1' = -(i D1 + g1) a1 - i A(t)``.

    Returns a callable; the drive ``A(t) = amp0 (1 + alpha * trig(mod_freq t))``
    has harmonics 0 and +-1, each answered independently.
    """
    c = 1j * params.delta1 + params.gamma1
    amp0, alpha, w = drive.amp0, drive.alpha, drive.mod_freq
    if drive.phase_mode is PhaseMode.SIN:
        c_plus, c_minus = alpha / 2j, -alpha / 2j
    else:
        c_plus, c_minus = alpha / 2, alpha / 2
    p0 = -1j * amp0 / c
    if alpha == 0.0:
        return lambda t: p0
    p_plus = -1j * amp0 * c_plus / (1j * w + c)
    p_minus = -1j * amp0 * c_minus / (-1j * w + c)

    def a1(t):
        phase = np.exp(1j * w * t)
        return p0 + p_plus * phase + p_minus / phase

    return a1


@dataclass(frozen=True)
class LinearizedSystem:
    params: SystemParams
    drive: DriveModulation
    pump: str = "adiabatic"

    def __post_init__(self):
        if self.pump not in PUMP_MODES:
            raise InvalidParameterError(f"pump must be one of {PUMP_MODES}, got {self.pump!r}")
        if self.pump == "orbit" and not isinstance(self.drive, DriveModulation):
            raise InvalidParameterError("orbit pump needs a DriveModulation")

    @property
    def period(self) -> float:
        return self.drive.period

    @property
    def trace(self) -> complex:
        return linear_trace(self.params)

    def pump_function(self):
        """Callable ``a1(t)`` seen by the deviations."""
        if self.pump == "orbit":
            return pump_orbit(self.params, self.drive)
        if self.drive.is_constant:
            value = -self.drive.amp0 / (self.params.delta1 - 1j * self.params.gamma1)
            return lambda t: value
        denom = self.params.delta1 - 1j * self.params.gamma1
        amplitude = self.drive.amplitude
        return lambda t: -amplitude(t) / denom

    def pump_amplitude(self, t):
        return self.pump_function()(t)

    def matrix(self, t) -> np.ndarray:
        a1 = self.pump_amplitude(t)
        W = self.params.coupling
        p = self.params
        return np.array([[1j * p.delta2 - p.gamma2, 1j * W * np.conj(a1)],
                         [-1j * W * a1, -(1j * p.omega_b + p.gamma0)]], dtype=complex)


def linearized_rhs(dev, t, params: SystemParams, drive, pump: str = "adiabatic") -> np.ndarray:
    """Derivative of the deviation vector ``(conj(da2), db)``."""
    return LinearizedSystem(params, drive, pump).matrix(t) @ np.asarray(dev, dtype=complex)


@dataclass(frozen=True)
class FloquetResult:
    monodromy: np.ndarray
    multipliers: np.ndarray
    exponents: np.ndarray
    growth_rate: float
    period: float
    trace: complex
    determinant: complex
    segments: int = 1

    @property
    def decrement(self) -> float:
        """Growth rate of ``|a2|^2``: twice the leading amplitude exponent."""
        return 2.0 * self.growth_rate

    @property
    def liouville_error(self) -> float:
        """Relative mismatch between ``det(monodromy)`` and ``exp(T trace M)``.

        ``determinant`` is the product of per-segment determinants, not the
        determinant of the assembled (possibly very ill-conditioned) matrix.
        """
        expected = np.exp(self.period * self.trace)
        return float(abs(self.determinant - expected) / abs(expected))


def _reference_period(drive: DriveModulation, params: SystemParams) -> float:
    if drive.mod_freq > 0:
        return 2 * math.pi / drive.mod_freq
    return 2 * math.pi / params.omega_b


def _segment_count(system: "LinearizedSystem", period: float, samples: int = 16) -> int:
    """Number of sub-intervals keeping each segment's flow map well conditioned.

    Each segment spans at most ``SEGMENT_SPAN / ||M - tr/2||`` so its growth
    factor stays below ``exp(SEGMENT_SPAN)``.
    """
    half_trace = system.trace / 2.0
    ts = np.linspace(0.0, period, samples, endpoint=False)
    norm = max(np.linalg.norm(system.matrix(t) - half_trace * np.eye(2), 2) for t in ts)
    return max(1, int(math.ceil(norm * period / SEGMENT_SPAN)))


def monodromy(params: SystemParams, drive: DriveModulation, opts: Optional[SolverOptions] = None,
              pump: str = "adiabatic", period: Optional[float] = None) -> FloquetResult:
    """One-period flow map of the deviation equations and its Floquet data.

    The basis solutions are integrated for the traceless part
    ``M - (tr M / 2) I`` over short consecutive segments, each started from
    the identity; the constant trace is restored analytically.  The
    determinant is accumulated segment by segment, which stays accurate even
    when the two multipliers differ by many orders of magnitude, and the
    weaker multiplier is recovered as ``det / mu_dominant``.

    Without ``opts`` each segment uses adaptive DOP853 at rtol 1e-10; an
    ``opts`` with ``RK4_FIXED`` gives a fixed-step (bitwise reproducible) map.
    For a constant drive the period is ``period`` if given, else
    ``2 pi / mod_freq`` (or ``2 pi / omega_b`` when ``mod_freq`` is zero).
    """
    system = LinearizedSystem(params, drive, pump)
    if period is None:
        period = system.period if not drive.is_constant else _reference_period(drive, params)
    if not (period > 0 and math.isfinite(period)):
        raise InvalidParameterError(f"period must be positive and finite, got {period!r}")
    half_trace = system.trace / 2.0

    p = params
    d11 = 1j * p.delta2 - p.gamma2 - half_trace
    d22 = -(1j * p.omega_b + p.gamma0) - half_trace
    coupling = 1j * p.coupling
    pump_at = system.pump_function()

    def f(t, y):
        # y = (psi11, psi12, psi21, psi22)
        a1 = pump_at(t)
        up, down = coupling * np.conj(a1), -coupling * a1
        return np.array([d11 * y[0] + up * y[2], d11 * y[1] + up * y[3],
                         down * y[0] + d22 * y[2], down * y[1] + d22 * y[3]])

    n_seg = _segment_count(system, period)
    edges = np.linspace(0.0, period, n_seg + 1)
    y0 = np.eye(2, dtype=complex).ravel()
    psi = np.eye(2, dtype=complex)
    det_psi = 1.0 + 0j
    for lo, hi in zip(edges[:-1], edges[1:]):
        if opts is not None and opts.method is SolverMethod.RK4_FIXED:
            _, states, diverged = rk4_fixed(f, y0, lo, hi, opts.dt, stride=10 ** 9, guard=np.inf)
            if diverged:
                raise IntegrationError("monodromy integration produced non-finite values")
            seg = states[-1].reshape(2, 2)
        else:
            rtol = MONODROMY_RTOL if opts is None else opts.rtol
            atol = MONODROMY_ATOL if opts is None else max(opts.atol, 1e-14)
            scheme = "DOP853" if opts is None else opts.adaptive_scheme
            sol = solve_ivp(f, (lo, hi), y0, method=scheme, rtol=rtol, atol=atol)
            if sol.status != 0:
                raise IntegrationError(f"monodromy integration failed: {sol.message}")
            seg = sol.y[:, -1].reshape(2, 2)
        psi = seg @ psi
        det_psi *= np.linalg.det(seg)

    scale = np.exp(half_trace * period)
    mu = np.linalg.eigvals(psi)
    big = mu[np.argmax(np.abs(mu))]
    mu_psi = np.array([big, det_psi / big])
    # exponents from psi keep precision when exp(trace*T) is tiny
    exponents = half_trace + np.log(mu_psi) / period
    exponents = exponents.real + 1j * _wrap_imag(exponents.imag, period)
    order = np.lexsort((-exponents.imag, -exponents.real))
    return FloquetResult(scale * psi, (scale * mu_psi)[order], exponents[order],
                         float(exponents.real.max()), float(period), complex(system.trace),
                         complex(scale * scale * det_psi), n_seg)


def _wrap_imag(imag, period):
    """Map imaginary exponents into (-pi/T, pi/T]."""
    w = 2 * math.pi / period
    wrapped = imag - w * np.ceil((imag - w / 2) / w)
    return wrapped


def log_decrement(rate, rate0: float):
    """Signed log display transform ``sign(r) * ln(1 + |r| / rate0)``."""
    rate = np.asarray(rate, dtype=float)
    return np.sign(rate) * np.log1p(np.abs(rate) / rate0)


def fit_envelope_rate(traj: Trajectory, observable=Observable.A2_SQ, fit_window=None,
                      underflow: float = 1e-250) -> float:
    """Amplitude growth rate from a least-squares fit of ``ln(observable)``.

    The intensity slope is halved to give the amplitude rate.
    """
    observable = Observable(observable)
    col = 1 if observable is Observable.A2_SQ else 2
    t = traj.times
    if fit_window is None:
        mask = np.ones(t.size, dtype=bool)
    else:
        lo, hi = fit_window
        mask = (t >= lo) & (t <= hi)
    if mask.sum() < 2:
        raise FitError(f"fewer than 2 samples in fit window {fit_window!r}")
    values = traj.intensities[mask, col]
    if np.any(~np.isfinite(values)) or values.min() <= underflow:
        raise FitError(f"{observable.value} underflows ({values.min():.3e}) inside the fit window")
    slope = np.polyfit(t[mask], np.log(values), 1)[0]
    return float(slope / 2.0)

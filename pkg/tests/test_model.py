import cmath
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from optomech.errors import (
    InvalidParameterError,
    NoExceptionalPoint,
    UnstableFixedPoint,
    WeakCouplingError,
)
from optomech.floquet import coefficient_matrix
from optomech.model import (
    DriveModulation,
    ModeState,
    PhaseMode,
    RegimeLabel,
    SystemParams,
    coupling_regime,
    drive_amplitude,
    eigenvalues_linearized,
    ep_amplitude,
    ep_amplitude_closed,
    linear_trace,
    parametric_frequency,
    rhs_rotating_frame,
    stationary_below_threshold,
    three_wave_drive,
    threshold_amplitude,
    threshold_amplitude_closed,
)

from strategies import matched_with_ep, pair_distance, params


def replace(p, **kw):
    return SystemParams(**{**p.as_dict(), **kw})


# -- types -------------------------------------------------------------------

@pytest.mark.parametrize("field,value", [("gamma1", 0.0), ("gamma2", -1e-3), ("omega_b", 0.0),
                                         ("coupling", 0.0), ("omega2", math.nan)])
def test_params_reject_invalid(pstar, field, value):
    with pytest.raises(InvalidParameterError):
        replace(pstar, **{field: value})


def test_detunings(pstar):
    assert pstar.delta1 == 0.0
    assert pstar.delta2 == pytest.approx(1e-2, rel=1e-12)
    assert pstar.matched_damping


def test_drive_rejects_modulation_without_frequency():
    with pytest.raises(InvalidParameterError):
        DriveModulation(1.0, alpha=0.1, mod_freq=0.0)
    with pytest.raises(InvalidParameterError):
        DriveModulation(-1.0)


def test_state_rejects_nonfinite():
    with pytest.raises(InvalidParameterError):
        ModeState(complex(math.inf, 0), 0, 0)


# -- right-hand side -----------------------------------------------------------

def test_rhs_zero_state_only_drive(pstar):
    d = rhs_rotating_frame(ModeState(), 0.0, pstar, DriveModulation.constant(3e-4))
    assert d == ModeState(-3e-4j, 0, 0)


def test_rhs_uncoupled_decay(pstar):
    p = replace(pstar, coupling=1e-300)
    d = rhs_rotating_frame(ModeState(1, 0, 0), 0.0, p, DriveModulation.constant(0.0))
    assert d.a1 == -(1j * p.delta1 + p.gamma1)
    assert d.a2 == 0 and d.b == 0


@given(params(), st.floats(-1, 1), st.floats(-1, 1), st.floats(-1, 1), st.floats(-1, 1))
def test_rhs_lossless_invariants_have_zero_derivative(p, x1, y1, x2, y2):
    # d/dt of |a1|^2+|a2|^2 and |a2|^2-|b|^2 from the undamped, undriven equations
    q = p.lossless()
    s = ModeState(0.3 + 0.1j, complex(x1, y1), complex(x2, y2))
    d = rhs_rotating_frame(s, 0.0, q, DriveModulation.constant(0.0))
    dot = lambda z, dz: 2 * (z.conjugate() * dz).real
    assert abs(dot(s.a1, d.a1) + dot(s.a2, d.a2)) < 1e-14
    assert abs(dot(s.a2, d.a2) - dot(s.b, d.b)) < 1e-14


# -- drive waveforms -----------------------------------------------------------

def test_drive_amplitude_examples():
    assert drive_amplitude(DriveModulation(1.0), 123.4) == 1.0
    w = 0.02
    cos = DriveModulation(2e-4, 0.17, w, PhaseMode.COS)
    sin = DriveModulation(2e-4, 0.17, w, PhaseMode.SIN)
    assert drive_amplitude(cos, 0.0) == pytest.approx(2e-4 * 1.17, rel=1e-15)
    assert drive_amplitude(sin, math.pi / (2 * w)) == pytest.approx(2e-4 * 1.17, rel=1e-15)


def test_alpha_zero_ignores_phase_mode():
    a = DriveModulation(1e-3, 0.0, 0.5, PhaseMode.SIN)
    b = DriveModulation(1e-3, 0.0, 0.5, PhaseMode.COS)
    t = np.linspace(0, 100, 17)
    assert np.array_equal(a.amplitude(t), b.amplitude(t))


def test_three_wave_drive():
    amp0, alpha, w, carrier = 4.5e-4, 0.17, 4.6e-3, 1.0
    waves, mod = three_wave_drive(amp0, alpha, w, carrier)
    assert mod.phase_mode is PhaseMode.COS
    assert abs(waves[1].amplitude) ** 2 / abs(waves[0].amplitude) ** 2 == pytest.approx(alpha ** 2 / 4)
    t = np.linspace(0, 5 * 2 * math.pi / w, 1001)
    total = sum(wave(t) for wave in waves) * np.exp(1j * carrier * t)
    assert np.max(np.abs(total - mod.amplitude(t))) < 1e-12 * amp0
    trough = sum(wave(math.pi / w) for wave in waves) * cmath.exp(1j * carrier * math.pi / w)
    assert trough == pytest.approx(amp0 * (1 - alpha), rel=1e-12)

    flat, mod0 = three_wave_drive(amp0, 0.0, w, carrier)
    assert flat[1].amplitude == 0 and flat[2].amplitude == 0
    assert mod0.is_constant


# -- stationary state ------------------------------------------------------------

def test_stationary_examples(pstar):
    assert stationary_below_threshold(pstar, 0.0) == ModeState()
    s = stationary_below_threshold(pstar, 5e-4)
    assert s.a1 == pytest.approx(-0.05j, abs=1e-15)
    assert s.intensities[0] == pytest.approx(2.5e-3, rel=1e-12)


def test_stationary_above_threshold(pstar, amp_th):
    with pytest.raises(UnstableFixedPoint):
        stationary_below_threshold(pstar, 1.2 * amp_th)
    forced = stationary_below_threshold(pstar, 1.2 * amp_th, force=True)
    assert forced.a2 == 0


@settings(max_examples=100)
@given(params(), st.floats(0.0, 0.999))
def test_fixed_point_residual(p, ratio):
    amp = ratio * threshold_amplitude(p)
    s = stationary_below_threshold(p, amp)
    d = rhs_rotating_frame(s, 0.0, p, DriveModulation.constant(amp))
    assert max(abs(d.a1), abs(d.a2), abs(d.b)) < 1e-12


# -- eigenvalues -----------------------------------------------------------------

def test_eigen_zero_drive(pstar):
    pair = eigenvalues_linearized(pstar, 0.0)
    expected = sorted([1j * pstar.delta2 - pstar.gamma2, -1j * pstar.omega_b - pstar.gamma0],
                      key=lambda z: (-z.real, -z.imag))
    assert pair.lambda1 == pytest.approx(expected[0], abs=1e-16)
    assert pair.lambda2 == pytest.approx(expected[1], abs=1e-16)


def test_eigen_at_ep(pstar):
    pair = eigenvalues_linearized(pstar, ep_amplitude(pstar))
    assert abs(pair.lambda1 - (-1e-3)) < 1e-10
    assert abs(pair.lambda2 - (-1e-3)) < 1e-10


@given(params(), st.floats(0.0, 3.0))
def test_trace_identity(p, ratio):
    pair = eigenvalues_linearized(p, ratio * threshold_amplitude(p))
    assert abs(pair.lambda1 + pair.lambda2 - linear_trace(p)) < 1e-14


@given(params(), st.floats(0.0, 3.0))
def test_eigen_matches_numeric_eigensolve(p, ratio):
    amp = ratio * threshold_amplitude(p)
    pair = eigenvalues_linearized(p, amp)
    # order-free: real parts may tie to rounding
    assert pair_distance(pair[:2], np.linalg.eigvals(coefficient_matrix(p, amp))) < 1e-12


@given(params(), st.floats(0.0, 3.0))
def test_branch_order(p, ratio):
    pair = eigenvalues_linearized(p, ratio * threshold_amplitude(p))
    assert pair.lambda1.real >= pair.lambda2.real


# -- exceptional point and threshold ---------------------------------------------------

def test_ep_reference(pstar):
    assert ep_amplitude(pstar) == pytest.approx(5e-4, rel=1e-10)
    assert ep_amplitude_closed(pstar) == pytest.approx(5e-4, rel=1e-12)


def test_ep_scales_inverse_with_coupling(pstar):
    doubled = replace(pstar, coupling=2 * pstar.coupling)
    assert ep_amplitude(doubled) == pytest.approx(ep_amplitude(pstar) / 2, rel=1e-12)


def test_ep_requires_matched_damping(pstar):
    with pytest.raises(NoExceptionalPoint):
        ep_amplitude(replace(pstar, gamma0=2e-3))


@settings(max_examples=50)
@given(matched_with_ep())
def test_ep_coalescence(p):
    amp = ep_amplitude(p)
    assert amp == pytest.approx(ep_amplitude_closed(p), rel=1e-9)
    pair = eigenvalues_linearized(p, amp)
    assert abs(pair.lambda1 - pair.lambda2) < 1e-10
    _, vecs = np.linalg.eig(coefficient_matrix(p, amp))
    v1, v2 = vecs[:, 0], vecs[:, 1]
    angle = 1 - abs(np.vdot(v1, v2)) / (np.linalg.norm(v1) * np.linalg.norm(v2))
    assert angle < 1e-5


def test_threshold_reference(pstar):
    th = threshold_amplitude(pstar)
    assert th == pytest.approx(5.024937810560445e-4, rel=1e-10)
    assert th == pytest.approx(threshold_amplitude_closed(pstar), rel=1e-10)
    assert th > ep_amplitude(pstar)


@given(params(matched=True))
def test_threshold_root_matches_closed_form(p):
    assert threshold_amplitude(p) == pytest.approx(threshold_amplitude_closed(p), rel=1e-10)


@given(params())
def test_threshold_zero_real_part(p):
    th = threshold_amplitude(p)
    assert abs(eigenvalues_linearized(p, th).lambda1.real) < 1e-12 * abs(linear_trace(p))
    assert eigenvalues_linearized(p, 0.99 * th).lambda1.real < 0


def test_threshold_approaches_ep_without_damping(pstar):
    gaps = []
    for g in (1e-3, 1e-4, 1e-5):
        p = replace(pstar, gamma2=g, gamma0=g)
        gaps.append(threshold_amplitude(p) / ep_amplitude(p) - 1)
    assert gaps[0] > gaps[1] > gaps[2] and gaps[2] < 1e-5


# -- parametric frequency and regimes ---------------------------------------------------

def test_parametric_frequency_examples(pstar, amp_th):
    assert parametric_frequency(pstar, 0.0) == pytest.approx(1e-2, rel=1e-12)
    assert parametric_frequency(pstar, 0.9 * amp_th) == pytest.approx(4.264973622e-3, rel=1e-9)
    assert parametric_frequency(pstar, ep_amplitude(pstar)) == pytest.approx(0.0, abs=1e-9)
    with pytest.raises(WeakCouplingError):
        parametric_frequency(pstar, 0.51e-3)


@given(matched_with_ep(), st.floats(0.0, 0.999))
def test_splitting_identity(p, ratio):
    amp = ratio * ep_amplitude(p)
    pair = eigenvalues_linearized(p, amp)
    assert abs(abs(pair.lambda1.imag - pair.lambda2.imag) - 2 * parametric_frequency(p, amp)) < 1e-10


def test_regime_labels(pstar, amp_th):
    ep = ep_amplitude(pstar)
    assert coupling_regime(pstar, 0.5 * ep) is RegimeLabel.STRONG_COUPLING
    assert coupling_regime(pstar, 0.9 * amp_th) is RegimeLabel.STRONG_COUPLING
    assert coupling_regime(pstar, ep) is RegimeLabel.EP
    assert coupling_regime(pstar, 0.5 * (ep + amp_th)) is RegimeLabel.WEAK_COUPLING
    assert coupling_regime(pstar, 2 * amp_th) is RegimeLabel.UNSTABLE


# -- nondimensionalization ---------------------------------------------------------------

@given(params(matched=True), st.floats(0.1, 10.0), st.floats(0.0, 2.0))
def test_joint_rescaling(p, factor, ratio):
    q = p.scaled(factor)
    amp = ratio * threshold_amplitude(p)
    assert threshold_amplitude(q) == pytest.approx(factor * threshold_amplitude(p), rel=1e-10)
    assert ep_amplitude(q) == pytest.approx(factor * ep_amplitude(p), rel=1e-9, abs=1e-18)
    a, b = eigenvalues_linearized(p, amp), eigenvalues_linearized(q, factor * amp)
    assert abs(b.lambda1 - factor * a.lambda1) < 1e-12 * factor
    assert abs(b.lambda2 - factor * a.lambda2) < 1e-12 * factor
    sa = stationary_below_threshold(p, amp, force=True)
    sb = stationary_below_threshold(q, factor * amp, force=True)
    assert sb.a1 == pytest.approx(sa.a1, rel=1e-12)

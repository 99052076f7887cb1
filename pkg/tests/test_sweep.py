import io
import math

import numpy as np
import pytest
from hypothesis import given, settings

from optomech.errors import BracketError, InvalidParameterError, WeakCouplingError
from optomech.integrator import SolverOptions, SteadyClass, default_horizon
from optomech.model import (
    DriveModulation,
    SystemParams,
    eigenvalues_linearized,
    ep_amplitude,
    parametric_frequency,
    threshold_amplitude,
)
from optomech.sweep import (
    Axis,
    ScanKind,
    TongueGrid,
    bisect_generation_threshold,
    scan_drive_amplitude,
    tongue_map,
    transistor_demo,
)

from strategies import params


def test_axis_validation():
    assert Axis("amp", 0.0, 1.0, 5).values().tolist() == [0.0, 0.25, 0.5, 0.75, 1.0]
    np.testing.assert_allclose(Axis("amp", 1e-5, 1e-3, 3, "log").values(), [1e-5, 1e-4, 1e-3])
    for bad in [dict(count=1), dict(min=2.0), dict(spacing="cubic"), dict(min=0.0, spacing="log")]:
        kw = {"quantity": "amp", "min": 0.0, "max": 1.0, "count": 4, **bad}
        with pytest.raises(InvalidParameterError):
            Axis(**kw)


def test_eigen_scan_branch_structure(pstar, amp_th):
    amps = np.linspace(0.0, 2 * amp_th, 200)
    table = scan_drive_amplitude(pstar, amps[::-1], ScanKind.EIGENVALUES)
    amp = table.column("amp")
    assert np.all(np.diff(amp) > 0)
    assert set(table.column("status")) == {"ok"}
    first = table.rows[0]
    assert first[1] + 1j * first[2] == pytest.approx(1j * pstar.delta2 - pstar.gamma2, abs=1e-16)
    assert first[3] + 1j * first[4] == pytest.approx(-1j * pstar.omega_b - pstar.gamma0, abs=1e-16)

    ep = ep_amplitude(pstar)
    im_gap = np.abs(table.column("im_lambda1") - table.column("im_lambda2"))
    re_gap = np.abs(table.column("re_lambda1") - table.column("re_lambda2"))
    below, above = amp < ep, amp > ep
    assert np.all(im_gap[below] > 0) and np.all(re_gap[below] < 1e-15)
    assert np.all(re_gap[above] > 0) and np.all(im_gap[above] < 1e-15)
    # both gaps close at the grid points bracketing the EP
    step = amps[1] - amps[0]
    k = np.searchsorted(amp, ep)
    lam_scale = 2 * math.sqrt(pstar.coupling ** 2 * 2 * step * ep) / pstar.gamma1
    assert im_gap[k - 1] < 2 * lam_scale and re_gap[k] < 2 * lam_scale


def test_steady_scan_threshold(pstar, amp_th):
    ratios = np.array([0.5, 0.9, 0.99, 1.01, 1.1, 1.5])
    table = scan_drive_amplitude(pstar, ratios * amp_th, ScanKind.STEADY_INTENSITIES)
    seed = (1e-6 * amp_th / pstar.gamma1) ** 2
    a2, b = table.column("abs2_a2"), table.column("abs2_b")
    below = ratios < 1
    assert np.all(a2[below] <= seed) and np.all(b[below] <= seed)
    assert np.all(a2[~below] > 1e-5) and np.all(b[~below] > 1e-5)
    assert np.all(np.diff(a2[~below]) > 0)
    labels = table.column("label")
    assert set(labels[below]) == {"decayed"} and set(labels[~below]) == {"steady_nonzero"}


def test_failed_points_are_isolated(pstar, amp_th):
    opts = SolverOptions(t_end=default_horizon(pstar), dt=20.0, overflow_guard=0.06)
    table = scan_drive_amplitude(pstar, [0.5 * amp_th, 3 * amp_th], ScanKind.STEADY_INTENSITIES, opts=opts)
    ok, failed = table.rows
    assert ok[-1] == "ok"
    assert failed[-1].startswith("error:DivergenceError") and math.isnan(failed[1])


def test_floquet_scan(pstar, amp_th):
    wp = parametric_frequency(pstar, 0.9 * amp_th)
    drive = DriveModulation(0.9 * amp_th, 0.3, 2.0 * wp)
    table = scan_drive_amplitude(pstar, [0.5 * amp_th, 0.9 * amp_th], ScanKind.FLOQUET_RATE, drive=drive)
    rates = table.column("growth_rate")
    assert rates[1] > 0 > rates[0]
    assert np.all(table.column("liouville_error") < 1e-8)


def test_parallel_scan_matches_serial(pstar, amp_th):
    amps = np.linspace(0, 2 * amp_th, 9)
    serial = scan_drive_amplitude(pstar, amps, ScanKind.EIGENVALUES)
    parallel = scan_drive_amplitude(pstar, amps, ScanKind.EIGENVALUES, threads=2)
    assert serial.rows == parallel.rows


def test_scan_csv(pstar, amp_th):
    table = scan_drive_amplitude(pstar, [0.0, amp_th], ScanKind.EIGENVALUES)
    buf = io.StringIO()
    table.write_csv(buf, "eigen/1")
    lines = buf.getvalue().splitlines()
    assert lines[0] == "# schema=eigen/1"
    assert lines[1] == "amp,re_lambda1,im_lambda1,re_lambda2,im_lambda2,regime,status"
    assert len(lines) == 4 and lines[2].startswith("0,-0.001,")


# -- nonlinear threshold ---------------------------------------------------------------

def test_bisection_matches_linear_threshold(pstar, amp_th):
    found = bisect_generation_threshold(pstar, (0.9 * amp_th, 1.1 * amp_th))
    assert found == pytest.approx(amp_th, rel=0.01)


def test_bisection_halved_coupling(pstar, amp_th):
    half = SystemParams(**{**pstar.as_dict(), "coupling": pstar.coupling / 2})
    found = bisect_generation_threshold(half, (1.8 * amp_th, 2.2 * amp_th))
    assert found == pytest.approx(2 * amp_th, rel=0.01)


def test_bisection_rejects_bad_brackets(pstar, amp_th):
    with pytest.raises(BracketError):
        bisect_generation_threshold(pstar, (0.2 * amp_th, 0.5 * amp_th))
    with pytest.raises(BracketError):
        bisect_generation_threshold(pstar, (1.2 * amp_th, 1.5 * amp_th))
    with pytest.raises(BracketError):
        bisect_generation_threshold(pstar, (amp_th, 0.5 * amp_th))


@settings(max_examples=5)
@given(params(matched=True))
def test_route_agreement(p):
    th = threshold_amplitude(p)
    # a rough step on slow systems keeps the run short; accuracy is set by rtol
    opts = SolverOptions(t_end=default_horizon(p), dt=default_horizon(p) / 2000)
    assert bisect_generation_threshold(p, (0.8 * th, 1.2 * th), opts=opts) == pytest.approx(th, rel=0.01)


# -- tongue map --------------------------------------------------------------------------

@pytest.fixture(scope="module")
def small_grid(pstar):
    return tongue_map(pstar, 0.9, Axis("mod_freq_ratio", 0.5, 2.5, 9), Axis("alpha", 0.0, 0.4, 5))


def test_tongue_grid_shape(small_grid, pstar, amp_th):
    assert small_grid.rates.shape == (5, 9)
    assert np.all(np.isfinite(small_grid.rates))
    assert small_grid.amp0 == pytest.approx(0.9 * amp_th)
    assert small_grid.omega_p == pytest.approx(parametric_frequency(pstar, 0.9 * amp_th))
    np.testing.assert_allclose(small_grid.mod_freqs, small_grid.mod_freq_ratios * small_grid.omega_p)


def test_tongue_alpha_zero_row(small_grid, pstar, amp_th):
    lam = eigenvalues_linearized(pstar, 0.9 * amp_th).lambda1.real
    np.testing.assert_allclose(small_grid.rates[0], lam, rtol=1e-9)
    assert lam < 0


def test_tongue_has_unstable_region(small_grid):
    assert np.any(small_grid.rates > 0)
    assert small_grid.rate_at(2.0, 0.4) > 0


def test_tongue_is_deterministic(small_grid, pstar):
    again = tongue_map(pstar, 0.9, Axis("mod_freq_ratio", 0.5, 2.5, 9), Axis("alpha", 0.0, 0.4, 5))
    assert np.array_equal(again.rates, small_grid.rates)


def test_tongue_monotonicity_report(small_grid):
    report = small_grid.monotonicity_violations()
    assert isinstance(report, list)
    synthetic = TongueGrid(np.array([1.0]), np.array([0.0, 0.1, 0.2]), np.array([[-1.0], [2.0], [1.0]]),
                           np.zeros((3, 1)), np.full((3, 1), "ok"), 1.0, 1.0)
    assert synthetic.monotonicity_violations() == [(1.0, 0.2, 1.0)]


def test_tongue_csv(small_grid, pstar):
    buf = io.StringIO()
    small_grid.write_csv(buf, rate0=pstar.gamma2)
    lines = buf.getvalue().splitlines()
    assert lines[0] == "# schema=tongue/1"
    assert lines[1].split(",")[:4] == ["mod_freq_ratio", "mod_freq", "alpha", "growth_rate"]
    assert len(lines) == 2 + 45


def test_tongue_rejects_bad_ratio(pstar):
    axis = Axis("mod_freq_ratio", 1.0, 2.0, 2)
    with pytest.raises(InvalidParameterError):
        tongue_map(pstar, 1.2, axis, axis)
    with pytest.raises(WeakCouplingError):
        tongue_map(pstar, 0.999, axis, axis)


# -- transistor ---------------------------------------------------------------------------

def test_transistor_switches_inside_tongue(pstar, amp_th):
    amp0 = 0.9 * amp_th
    wp = parametric_frequency(pstar, amp0)
    outcome = transistor_demo(pstar, amp0, 0.17, 2.18 * wp)
    assert outcome.synthesis_error < 1e-12 * amp0
    assert outcome.sideband_ratio == pytest.approx(0.17 ** 2 / 4)
    assert outcome.on_label in (SteadyClass.GROWING, SteadyClass.STEADY_NONZERO, SteadyClass.OSCILLATING)
    assert outcome.on_gain > 1e3
    assert outcome.off_label is SteadyClass.DECAYED

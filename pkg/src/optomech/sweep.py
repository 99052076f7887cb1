"""Parameter scans: drive-amplitude sweeps, nonlinear threshold bisection,
(mod_freq, alpha) growth-rate maps and the sideband switching scenario.

Every scan point is an independent task.  With ``threads > 1`` points are
farmed out to a process pool; results are written back by index, so the
output never depends on completion order.  A failing point is recorded with
its error message and never aborts the scan.
"""
from __future__ import annotations

import csv
import enum
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import BracketError, InvalidParameterError, OptomechError
from .floquet import log_decrement, monodromy
from .integrator import (
    SolverOptions,
    SteadyClass,
    default_horizon,
    integrate,
    integrate_until_steady,
    seeded_state,
)
from .model import (
    DriveModulation,
    PhaseMode,
    SystemParams,
    WaveSum,
    coupling_regime,
    eigenvalues_linearized,
    parametric_frequency,
    threshold_amplitude,
    three_wave_drive,
)


class ScanKind(str, enum.Enum):
    STEADY_INTENSITIES = "steady"
    EIGENVALUES = "eigen"
    FLOQUET_RATE = "floquet"


@dataclass(frozen=True)
class Axis:
    quantity: str
    min: float
    max: float
    count: int
    spacing: str = "linear"

    def __post_init__(self):
        if int(self.count) < 2:
            raise InvalidParameterError(f"axis {self.quantity!r}: count must be >= 2")
        if not self.min < self.max:
            raise InvalidParameterError(f"axis {self.quantity!r}: min must be < max")
        if self.spacing not in ("linear", "log"):
            raise InvalidParameterError(f"axis {self.quantity!r}: spacing must be linear or log")
        if self.spacing == "log" and self.min <= 0:
            raise InvalidParameterError(f"axis {self.quantity!r}: log spacing needs min > 0")

    def values(self) -> np.ndarray:
        if self.spacing == "log":
            return np.geomspace(self.min, self.max, int(self.count))
        return np.linspace(self.min, self.max, int(self.count))


@dataclass
class ScanTable:
    """Rows of a one-dimensional scan, one per axis value, plus a status column."""

    columns: list
    rows: list
    meta: dict = field(default_factory=dict)

    def column(self, name: str) -> np.ndarray:
        k = self.columns.index(name)
        return np.array([row[k] for row in self.rows])

    def write_csv(self, fh, schema: str) -> None:
        fh.write(f"# schema={schema}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(self.columns)
        for row in self.rows:
            writer.writerow([_fmt(v) for v in row])


def _fmt(value):
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.17g}"
    if isinstance(value, enum.Enum):
        return value.value
    return str(value)


def _pool_map(fn, tasks, threads: int = 1):
    if threads <= 1 or len(tasks) <= 1:
        return [fn(task) for task in tasks]
    results = [None] * len(tasks)
    with ProcessPoolExecutor(max_workers=threads) as pool:
        futures = {pool.submit(fn, task): k for k, task in enumerate(tasks)}
        for fut, k in futures.items():
            results[k] = fut.result()
    return results


def _isolated(fn, *args):
    try:
        return fn(*args), "ok"
    except (OptomechError, ArithmeticError, ValueError) as exc:
        return None, f"error:{type(exc).__name__}:{exc}".replace(",", ";").replace("\n", " ")


# -- per-point workers (module level so they pickle) -------------------------

def steady_options(params: SystemParams, opts: Optional[SolverOptions] = None) -> SolverOptions:
    return opts if opts is not None else SolverOptions(t_end=default_horizon(params))


def _steady_point(task):
    params, drive, opts, window = task

    def run():
        init = seeded_state(params, drive, opts.seed_eps)
        traj, label = integrate_until_steady(params, drive, init, opts, window)
        last = traj.times >= traj.times[-1] - window
        means = traj.intensities[last].mean(axis=0)
        return (*means, label)

    value, status = _isolated(run)
    if value is None:
        return (math.nan, math.nan, math.nan, "none", status)
    return (*value, status)


def _eigen_point(task):
    params, amp = task

    def run():
        pair = eigenvalues_linearized(params, amp)
        try:
            regime = coupling_regime(params, amp).value
        except OptomechError:
            regime = "n/a"
        return (pair.lambda1.real, pair.lambda1.imag, pair.lambda2.real, pair.lambda2.imag, regime)

    value, status = _isolated(run)
    if value is None:
        return (math.nan,) * 4 + ("none", status)
    return (*value, status)


def _floquet_point(task):
    params, drive, pump = task
    value, status = _isolated(lambda: monodromy(params, drive, pump=pump))
    if value is None:
        return (math.nan, math.nan, status)
    return (value.growth_rate, value.liouville_error, status)


def scan_drive_amplitude(params: SystemParams, amps, kind=ScanKind.EIGENVALUES,
                         drive: Optional[DriveModulation] = None,
                         opts: Optional[SolverOptions] = None, threads: int = 1,
                         pump: str = "adiabatic", window: Optional[float] = None) -> ScanTable:
    """Evaluate one quantity along a list of drive amplitudes.

    ``STEADY_INTENSITIES`` integrates the seeded nonlinear equations with a
    constant drive until the outcome settles and records the last-window
    mean intensities.  ``EIGENVALUES`` records both linearized eigenvalues
    and the regime label.  ``FLOQUET_RATE`` uses ``drive`` (its ``amp0``
    replaced by each amplitude) and records the monodromy growth rate.
    """
    kind = ScanKind(kind)
    amps = np.sort(np.asarray(amps, dtype=float))
    if kind is ScanKind.EIGENVALUES:
        results = _pool_map(_eigen_point, [(params, a) for a in amps], threads)
        columns = ["amp", "re_lambda1", "im_lambda1", "re_lambda2", "im_lambda2", "regime", "status"]
    elif kind is ScanKind.STEADY_INTENSITIES:
        opts = steady_options(params, opts)
        window = window or opts.t_end / 10
        tasks = [(params, DriveModulation.constant(a), opts, window) for a in amps]
        results = _pool_map(_steady_point, tasks, threads)
        columns = ["amp", "abs2_a1", "abs2_a2", "abs2_b", "label", "status"]
    else:
        base = drive or DriveModulation.constant(0.0)
        tasks = [(params, DriveModulation(a, base.alpha, base.mod_freq, base.phase_mode), pump)
                 for a in amps]
        results = _pool_map(_floquet_point, tasks, threads)
        columns = ["amp", "growth_rate", "liouville_error", "status"]
    rows = [(float(a), *r) for a, r in zip(amps, results)]
    rows = [tuple(v.value if isinstance(v, enum.Enum) else v for v in row) for row in rows]
    return ScanTable(columns, rows, {"kind": kind.value, "params": params.as_dict()})


def generation_label(params: SystemParams, amp: float, opts: Optional[SolverOptions] = None,
                     window: Optional[float] = None) -> SteadyClass:
    """Late-time label of the seeded nonlinear run at constant drive ``amp``."""
    opts = steady_options(params, opts)
    drive = DriveModulation.constant(amp)
    _, label = integrate_until_steady(params, drive, seeded_state(params, drive, opts.seed_eps),
                                      opts, window or opts.t_end / 10)
    return label


def is_generating(label: SteadyClass) -> bool:
    return label is not SteadyClass.DECAYED


def bisect_generation_threshold(params: SystemParams, bracket, tol: float = 1e-3,
                                opts: Optional[SolverOptions] = None) -> float:
    """Locate the onset of photon/phonon generation with full nonlinear runs.

    ``bracket = (amp_lo, amp_hi)`` must decay at ``amp_lo`` and generate at
    ``amp_hi``.  Stops once the bracket is narrower than ``tol`` times the
    linear threshold (used only as a scale) and returns its midpoint.
    """
    lo, hi = map(float, bracket)
    if not 0 <= lo < hi:
        raise BracketError(f"invalid bracket {bracket!r}")
    if is_generating(generation_label(params, lo, opts)):
        raise BracketError(f"amp_lo={lo!r} already generates")
    if not is_generating(generation_label(params, hi, opts)):
        raise BracketError(f"amp_hi={hi!r} does not generate")
    scale = threshold_amplitude(params)
    while hi - lo >= tol * scale:
        mid = 0.5 * (lo + hi)
        if is_generating(generation_label(params, mid, opts)):
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


@dataclass
class TongueGrid:
    """Floquet growth rates on a (mod_freq, alpha) grid.

    ``rates[i, j]`` belongs to ``alphas[i]`` and ``mod_freq_ratios[j]``; the
    modulation frequency is ``mod_freq_ratios * omega_p``.
    """

    mod_freq_ratios: np.ndarray
    alphas: np.ndarray
    rates: np.ndarray
    liouville: np.ndarray
    status: np.ndarray
    omega_p: float
    amp0: float
    meta: dict = field(default_factory=dict)

    @property
    def mod_freqs(self) -> np.ndarray:
        return self.mod_freq_ratios * self.omega_p

    def rate_at(self, mod_freq_ratio: float, alpha: float) -> float:
        i = int(np.argmin(np.abs(self.alphas - alpha)))
        j = int(np.argmin(np.abs(self.mod_freq_ratios - mod_freq_ratio)))
        return float(self.rates[i, j])

    def monotonicity_violations(self, near_tip: int = 5):
        """Points where the rate drops with increasing alpha inside a tongue.

        Only the first ``near_tip`` rows above each column's tongue tip (the
        smallest alpha with positive growth) are inspected.  Returned as
        ``(mod_freq_ratio, alpha, drop)`` tuples; nothing is asserted here.
        """
        out = []
        for j, ratio in enumerate(self.mod_freq_ratios):
            col = self.rates[:, j]
            positive = np.flatnonzero(col > 0)
            if positive.size == 0:
                continue
            tip = positive[0]
            for i in range(tip, min(tip + near_tip, col.size - 1)):
                if col[i + 1] < col[i]:
                    out.append((float(ratio), float(self.alphas[i + 1]), float(col[i] - col[i + 1])))
        return out

    def write_csv(self, fh, rate0: float) -> None:
        fh.write("# schema=tongue/1\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["mod_freq_ratio", "mod_freq", "alpha", "growth_rate", "decrement",
                         "log_decrement", "liouville_error", "status"])
        for i, alpha in enumerate(self.alphas):
            for j, ratio in enumerate(self.mod_freq_ratios):
                rate = self.rates[i, j]
                row = [ratio, ratio * self.omega_p, alpha, rate, 2 * rate,
                       float(log_decrement(2 * rate, rate0)), self.liouville[i, j]]
                writer.writerow([_fmt(float(v)) for v in row] + [self.status[i, j]])


def tongue_map(params: SystemParams, amp0_ratio: float, mod_freq_axis, alpha_axis,
               pump: str = "adiabatic", phase_mode=PhaseMode.SIN, threads: int = 1) -> TongueGrid:
    """Growth rate of the deviations over modulation frequency and depth.

    The mean drive is ``amp0_ratio`` times the linear threshold; modulation
    frequencies are given in units of the parametric frequency at that drive.
    """
    if not 0 <= amp0_ratio < 1:
        raise InvalidParameterError(f"amp0_ratio must lie in [0, 1), got {amp0_ratio!r}")
    ratios = mod_freq_axis.values() if isinstance(mod_freq_axis, Axis) else np.asarray(mod_freq_axis, float)
    alphas = alpha_axis.values() if isinstance(alpha_axis, Axis) else np.asarray(alpha_axis, float)
    amp0 = amp0_ratio * threshold_amplitude(params)
    omega_p = parametric_frequency(params, amp0)
    tasks = [(params, DriveModulation(amp0, float(a), float(r) * omega_p, phase_mode), pump)
             for a in alphas for r in ratios]
    results = _pool_map(_floquet_point, tasks, threads)
    shape = (alphas.size, ratios.size)
    rates = np.array([r[0] for r in results], dtype=float).reshape(shape)
    liouville = np.array([r[1] for r in results], dtype=float).reshape(shape)
    status = np.array([r[2] for r in results], dtype=object).reshape(shape)
    meta = {"amp0_ratio": amp0_ratio, "amp0": amp0, "omega_p": omega_p, "pump": pump,
            "phase_mode": PhaseMode(phase_mode).value, "params": params.as_dict()}
    return TongueGrid(ratios, alphas, rates, liouville, status, omega_p, amp0, meta)


@dataclass
class SwitchOutcome:
    """Nonlinear runs with the sidebands on and off at the same carrier."""

    on_label: SteadyClass
    off_label: SteadyClass
    on_gain: float
    off_gain: float
    sideband_ratio: float
    synthesis_error: float
    on_traj: object = None
    off_traj: object = None


def transistor_demo(params: SystemParams, amp0: float, alpha: float, mod_freq: float,
                    opts: Optional[SolverOptions] = None,
                    window: Optional[float] = None) -> SwitchOutcome:
    """Switch generation with two weak sidebands around the pump carrier.

    The drive with sidebands is the literal sum of the three lab-frame waves
    (demodulated by the carrier); the reference run keeps only the carrier.
    ``*_gain`` is the final ``|a2|^2 + |b|^2`` relative to the seed.
    """
    opts = steady_options(params, opts)
    window = window or opts.t_end / 10
    waves, modulation = three_wave_drive(amp0, alpha, mod_freq, params.drive_freq)
    on_drive = WaveSum(waves, params.drive_freq)
    off_drive = WaveSum(waves[:1], params.drive_freq)
    sample_t = np.linspace(0.0, 4 * modulation.period, 257)
    synthesis_error = float(np.max(np.abs(on_drive.amplitude(sample_t) - modulation.amplitude(sample_t))))
    sideband_ratio = abs(waves[1].amplitude) ** 2 / abs(waves[0].amplitude) ** 2

    outcomes = []
    for drive in (on_drive, off_drive):
        init = seeded_state(params, DriveModulation.constant(amp0), opts.seed_eps)
        traj, label = integrate_until_steady(params, drive, init, opts, window)
        seed = abs(init.a2) ** 2 + abs(init.b) ** 2
        final = traj.intensities[-1, 1] + traj.intensities[-1, 2]
        outcomes.append((label, final / seed if seed > 0 else math.nan, traj))
    (on_label, on_gain, on_traj), (off_label, off_gain, off_traj) = outcomes
    return SwitchOutcome(on_label, off_label, on_gain, off_gain, sideband_ratio,
                         synthesis_error, on_traj, off_traj)


def simulate(params: SystemParams, drive, opts: SolverOptions, rng=None):
    """Seeded nonlinear run over ``opts.t_end``."""
    init = seeded_state(params, drive, opts.seed_eps, rng)
    return integrate(params, drive, init, opts)


def write_metadata(path, record: dict) -> None:
    with open(path, "w") as fh:
        json.dump(record, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")


def _json_default(obj):
    if isinstance(obj, enum.Enum):
        return obj.value
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    return repr(obj)

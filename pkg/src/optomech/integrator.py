"""Time integration of the nonlinear mode equations.

Two schemes are available: a classical fixed-step RK4 written here (bitwise
deterministic, used for order checks) and an adaptive embedded Runge-Kutta
pair from :func:`scipy.integrate.solve_ivp`, which handles the three complex
amplitudes natively.
"""
from __future__ import annotations

import csv
import enum
import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.integrate import solve_ivp

from .errors import DivergenceError, InvalidParameterError, OptomechError, WindowError
from .model import (
    DriveModulation,
    ModeState,
    SystemParams,
    WaveSum,
    rhs_array,
    rhs_lab_array,
)

OVERFLOW_GUARD = 1e12


class IntegrationError(OptomechError):
    pass


class SolverMethod(str, enum.Enum):
    RK4_FIXED = "rk4"
    RK45_ADAPTIVE = "rk45"


class SteadyClass(str, enum.Enum):
    DECAYED = "decayed"
    STEADY_NONZERO = "steady_nonzero"
    GROWING = "growing"
    OSCILLATING = "oscillating"


@dataclass(frozen=True)
class SolverOptions:
    """Step control and output sampling.

    ``dt`` is the RK4 step; for the adaptive method it only sets the output
    grid (``None`` keeps every accepted step).  ``seed_eps`` is the magnitude
    of the perturbation put on ``a2`` and ``b`` by :func:`seeded_state`.
    """

    t_end: float
    method: SolverMethod = SolverMethod.RK45_ADAPTIVE
    dt: Optional[float] = None
    rtol: float = 1e-9
    atol: float = 1e-15
    sample_stride: int = 1
    seed_eps: Optional[float] = None
    overflow_guard: float = OVERFLOW_GUARD
    adaptive_scheme: str = "DOP853"

    def __post_init__(self):
        object.__setattr__(self, "method", SolverMethod(self.method))
        if not (self.t_end > 0 and math.isfinite(self.t_end)):
            raise InvalidParameterError(f"t_end must be > 0, got {self.t_end!r}")
        if self.method is SolverMethod.RK4_FIXED and not (self.dt and self.dt > 0):
            raise InvalidParameterError("RK4_FIXED needs dt > 0")
        if self.dt is not None and not self.dt > 0:
            raise InvalidParameterError(f"dt must be > 0, got {self.dt!r}")
        if not (self.rtol > 0 and self.atol > 0):
            raise InvalidParameterError("rtol and atol must be > 0")
        if int(self.sample_stride) < 1:
            raise InvalidParameterError("sample_stride must be >= 1")
        if self.seed_eps is not None and self.seed_eps < 0:
            raise InvalidParameterError("seed_eps must be >= 0")

    def as_dict(self) -> dict:
        return {"t_end": self.t_end, "method": self.method.value, "dt": self.dt,
                "rtol": self.rtol, "atol": self.atol, "sample_stride": int(self.sample_stride),
                "seed_eps": self.seed_eps, "overflow_guard": self.overflow_guard,
                "adaptive_scheme": self.adaptive_scheme}


def default_horizon(params: SystemParams) -> float:
    """Steady-state horizon set by the slowest of the (a2, b) decay rates."""
    return 50.0 / min(params.gamma0, params.gamma2)


def _drive_record(drive) -> dict:
    if isinstance(drive, DriveModulation):
        return drive.as_dict()
    if isinstance(drive, WaveSum):
        return {"carrier": drive.carrier,
                "waves": [[repr(complex(w.amplitude)), w.frequency] for w in drive.waves]}
    return {"drive": repr(drive)}


def params_digest(params: SystemParams, drive, opts: SolverOptions, init=None) -> str:
    record = {"params": params.as_dict(), "drive": _drive_record(drive), "solver": opts.as_dict()}
    if init is not None:
        record["init"] = [repr(complex(z)) for z in ModeState.from_array(init).as_array()]
    blob = json.dumps(record, sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray  # shape (n, 3): a1, a2, b
    params_digest: str = ""
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.states = np.asarray(self.states, dtype=complex).reshape(-1, 3)
        if self.times.shape[0] != self.states.shape[0]:
            raise InvalidParameterError("times and states differ in length")
        if self.times.size > 1 and not np.all(np.diff(self.times) > 0):
            raise InvalidParameterError("trajectory times must be strictly increasing")

    def __len__(self):
        return self.times.size

    @property
    def intensities(self) -> np.ndarray:
        return np.abs(self.states) ** 2

    def state(self, i: int) -> ModeState:
        return ModeState.from_array(self.states[i])

    @property
    def final(self) -> ModeState:
        return self.state(-1)

    def to_csv(self, path) -> None:
        """Write ``t``, real/imag parts and intensities with 17 significant digits."""
        with open(path, "w", newline="") as fh:
            write_trajectory_csv(self, fh)


TRAJECTORY_COLUMNS = ("t", "re_a1", "im_a1", "re_a2", "im_a2", "re_b", "im_b",
                      "abs2_a1", "abs2_a2", "abs2_b")


def write_trajectory_csv(traj: Trajectory, fh) -> None:
    fh.write(f"# schema=trajectory/1 params_digest={traj.params_digest}\n")
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(TRAJECTORY_COLUMNS)
    inten = traj.intensities
    for t, y, i in zip(traj.times, traj.states, inten):
        row = [t, y[0].real, y[0].imag, y[1].real, y[1].imag, y[2].real, y[2].imag, *i]
        writer.writerow([f"{v:.17g}" for v in row])


def read_trajectory_csv(path) -> Trajectory:
    with open(path) as fh:
        header = fh.readline()
        digest = header.split("params_digest=")[-1].strip()
        data = np.loadtxt(fh, delimiter=",", skiprows=1, ndmin=2)
    states = data[:, 1:7:2] + 1j * data[:, 2:7:2]
    return Trajectory(data[:, 0], states, params_digest=digest)


def seeded_state(params: SystemParams, drive, eps: Optional[float] = None, rng=None) -> ModeState:
    """Subthreshold fixed point plus a small kick on ``a2`` and ``b``.

    ``a2 = b = 0`` is invariant under the dynamics, so without a seed nothing
    can grow.  The default kick is ``eps * (1 + 1j) / sqrt(2)`` with
    ``eps = 1e-6 * amp0 / gamma1``; with ``rng`` the phases are random.
    """
    amp0 = drive.amp0 if isinstance(drive, DriveModulation) else abs(drive.amplitude(0.0))
    if eps is None:
        eps = 1e-6 * amp0 / params.gamma1
    a1 = -amp0 / (params.delta1 - 1j * params.gamma1)
    if rng is None:
        kick_a2 = kick_b = eps * (1 + 1j) / math.sqrt(2.0)
    else:
        phases = rng.uniform(0.0, 2 * math.pi, size=2)
        kick_a2, kick_b = eps * np.exp(1j * phases)
    return ModeState(a1, kick_a2, kick_b)


def rk4_fixed(f, y0, t0: float, t_end: float, dt: float, stride: int = 1,
              guard: float = OVERFLOW_GUARD):
    """Classical fixed-step RK4 on a complex vector.

    The step is shrunk to divide ``t_end - t0`` evenly.  Returns
    ``(times, states, diverged)``; on divergence the samples up to the last
    finite state are returned.
    """
    n = max(1, int(math.ceil((t_end - t0) / dt - 1e-9)))
    h = (t_end - t0) / n
    y = np.array(y0, dtype=complex)
    times = [t0]
    states = [y.copy()]
    for k in range(n):
        t = t0 + k * h
        k1 = f(t, y)
        k2 = f(t + h / 2, y + h / 2 * k1)
        k3 = f(t + h / 2, y + h / 2 * k2)
        k4 = f(t + h, y + h * k3)
        y = y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        if not np.all(np.isfinite(y)) or np.max(np.abs(y)) > guard:
            return np.array(times), np.array(states), True
        if (k + 1) % stride == 0 or k + 1 == n:
            times.append(t0 + (k + 1) * h)
            states.append(y.copy())
    return np.array(times), np.array(states), False


def integrate(params: SystemParams, drive, init, opts: SolverOptions,
              frame: str = "rotating", t0: float = 0.0) -> Trajectory:
    """Integrate the mode equations from ``init`` over ``[t0, t0 + opts.t_end]``.

    ``drive`` is anything with an ``amplitude(t)`` method: a
    :class:`DriveModulation` or a :class:`WaveSum`.  ``frame="lab"`` integrates
    the untransformed equations instead (for frame cross-checks).

    Raises :class:`DivergenceError` when any amplitude exceeds
    ``opts.overflow_guard``; the partial trajectory is attached.
    """
    if frame not in ("rotating", "lab"):
        raise InvalidParameterError(f"unknown frame {frame!r}")
    y0 = ModeState.from_array(init).as_array() if not isinstance(init, ModeState) else init.as_array()
    rhs = rhs_array if frame == "rotating" else rhs_lab_array
    digest = params_digest(params, drive, opts, y0)
    meta = {"method": opts.method.value, "frame": frame}
    t_stop = t0 + opts.t_end

    def f(t, y):
        return rhs(t, y, params, drive)

    if opts.method is SolverMethod.RK4_FIXED:
        times, states, diverged = rk4_fixed(f, y0, t0, t_stop, opts.dt,
                                            int(opts.sample_stride), opts.overflow_guard)
        meta["dt"] = opts.t_end / max(1, int(math.ceil(opts.t_end / opts.dt - 1e-9)))
        traj = Trajectory(times, states, digest, meta)
        if diverged:
            raise DivergenceError(f"amplitude exceeded {opts.overflow_guard:g} near t={times[-1]:.6g}", traj)
        return traj

    t_eval = None
    if opts.dt is not None:
        step = opts.dt * int(opts.sample_stride)
        n = max(1, int(math.floor(opts.t_end / step + 1e-9)))
        t_eval = t0 + step * np.arange(n + 1)
        if t_eval[-1] < t_stop - 1e-12 * opts.t_end:
            t_eval = np.append(t_eval, t_stop)
        t_eval[-1] = min(t_eval[-1], t_stop)

    guard = opts.overflow_guard

    def overflow(t, y):
        return guard - np.max(np.abs(y))

    overflow.terminal = True
    sol = solve_ivp(f, (t0, t_stop), y0, method=opts.adaptive_scheme, t_eval=t_eval,
                    rtol=opts.rtol, atol=opts.atol, events=overflow)
    meta["scheme"] = opts.adaptive_scheme
    meta["nfev"] = int(sol.nfev)
    if sol.status == -1:
        raise IntegrationError(f"solver failed: {sol.message}")
    times, states = sol.t, sol.y.T
    if t_eval is None and opts.sample_stride > 1:
        keep = np.zeros(times.size, dtype=bool)
        keep[::int(opts.sample_stride)] = True
        keep[-1] = True
        times, states = times[keep], states[keep]
    traj = Trajectory(times, states, digest, meta)
    if sol.status == 1:
        raise DivergenceError(f"amplitude exceeded {guard:g} near t={sol.t_events[0][0]:.6g}", traj)
    return traj


def _window_means(traj: Trajectory, window: float):
    t_last = traj.times[-1]
    if t_last - traj.times[0] < 3 * window * (1 - 1e-12):
        raise WindowError(
            f"trajectory spans {t_last - traj.times[0]:.6g}, need 3 windows of {window:.6g}")
    inten = traj.intensities[:, 1] + traj.intensities[:, 2]
    means = []
    last_mask = None
    for k in (3, 2, 1):
        lo, hi = t_last - k * window, t_last - (k - 1) * window
        mask = (traj.times >= lo) & (traj.times <= hi) if k == 1 else (traj.times >= lo) & (traj.times < hi)
        if mask.sum() < 2:
            raise WindowError(f"fewer than 2 samples in window [{lo:.6g}, {hi:.6g}]")
        means.append(float(inten[mask].mean()))
        last_mask = mask
    return means, float(inten[last_mask].max())


def classify_steady(traj: Trajectory, window: float, tol: float = 1e-3,
                    floor: Optional[float] = None) -> SteadyClass:
    """Label the late-time behaviour of ``|a2|^2 + |b|^2``.

    The last three windows of length ``window`` are averaged.  ``floor`` is the
    intensity below which the mode counts as empty; it defaults to 1% of the
    seed intensity at the first sample.  A falling trend counts as decay only
    while the last window stays under the initial intensity: a large
    saturated oscillation can have three falling window means by chance.
    """
    means, last_max = _window_means(traj, window)
    initial = float(traj.intensities[0, 1] + traj.intensities[0, 2])
    if floor is None:
        floor = 1e-2 * initial
    if last_max <= floor:
        return SteadyClass.DECAYED
    m1, m2, m3 = means
    if abs(m3 - m2) <= tol * m3 and abs(m2 - m1) <= tol * m2:
        return SteadyClass.STEADY_NONZERO
    if m1 < m2 < m3:
        return SteadyClass.GROWING
    if m1 > m2 > m3 and last_max < initial:
        return SteadyClass.DECAYED
    return SteadyClass.OSCILLATING


def integrate_until_steady(params: SystemParams, drive, init, opts: SolverOptions,
                           window: float, tol: float = 1e-3, floor: Optional[float] = None):
    """Integrate window by window, stopping early once the outcome is settled.

    Stops as soon as the last three windows classify as DECAYED (below the
    floor) or STEADY_NONZERO, otherwise runs to ``opts.t_end``.  Returns
    ``(trajectory, label)``.  ``floor`` defaults to 1% of the seed intensity.
    """
    y0 = init.as_array() if isinstance(init, ModeState) else np.asarray(init, dtype=complex)
    if floor is None:
        floor = 1e-2 * float(abs(y0[1]) ** 2 + abs(y0[2]) ** 2)
    n_windows = max(3, int(math.floor(opts.t_end / window + 1e-9)))
    seg_opts = SolverOptions(**{**opts.as_dict(), "t_end": window})
    times, states = [], []
    t = 0.0
    y = y0
    label = None
    traj = None
    for k in range(n_windows):
        seg = integrate(params, drive, y, seg_opts, t0=t)
        start = 0 if k == 0 else 1
        times.append(seg.times[start:])
        states.append(seg.states[start:])
        t, y = seg.times[-1], seg.states[-1]
        if k >= 2:
            traj = Trajectory(np.concatenate(times), np.concatenate(states),
                              params_digest(params, drive, opts, y0), seg.meta)
            label = classify_steady(traj, window, tol, floor)
            if label in (SteadyClass.DECAYED, SteadyClass.STEADY_NONZERO):
                # DECAYED by monotone trend alone is not conclusive yet
                if label is SteadyClass.STEADY_NONZERO or traj.intensities[-1, 1:].sum() <= floor:
                    break
    return traj, label

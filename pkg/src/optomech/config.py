"""Run configuration: a flat, sectioned ``key = value`` file.

Grammar (INI style, ``#`` or ``;`` comments, every quantity in units of
omega1 after normalization)::

    [system]          # required
    omega1 = 1.0      # optional, everything is divided by it
    omega2 = 1.01
    omega_b = 0.01
    gamma1 = 0.01
    gamma2 = 0.001
    gamma0 = 0.001
    coupling = 0.2
    drive_freq = 1.0  # optional, defaults to omega1

    [drive]
    amp0_ratio = 0.9       # or amp0 = <absolute amplitude>
    alpha = 0.17
    mod_freq_ratio = 1.09  # in units of omega_p at amp0; or mod_freq = <absolute>
    phase_mode = sin       # sin | cos

    [solver]
    method = rk45          # rk45 | rk4
    t_end = ...            # default 50 / min(gamma0, gamma2)
    dt = ...               # rk4 step / rk45 output spacing, default t_end / 4000
    rtol = 1e-9
    atol = 1e-15
    sample_stride = 1
    seed_eps = ...         # default 1e-6 * amp0 / gamma1
    overflow_guard = 1e12
    scheme = DOP853

    [scan]
    axis = amp_ratio       # amp_ratio | amp
    min = 0.0
    max = 2.0
    count = 201
    spacing = linear       # linear | log
    kind = eigen           # eigen | steady | floquet
    pump = adiabatic       # adiabatic | orbit
    tongue_ratio = 0.9
    freq_min = 0.1         # tongue axes, mod_freq in units of omega_p
    freq_max = 3.0
    freq_count = 121
    alpha_min = 0.0
    alpha_max = 0.5
    alpha_count = 51

Unknown sections or keys are errors.  :func:`echo_config` writes every
effective value back out with absolute ``amp0``/``mod_freq``, so the echo
parses to an identical :class:`RunConfig`.
"""
from __future__ import annotations

import configparser
import math
import re
from dataclasses import dataclass
from typing import Optional

from .errors import ConfigError, OptomechError
from .floquet import PUMP_MODES
from .integrator import SolverMethod, SolverOptions, default_horizon
from .model import DriveModulation, PhaseMode, SystemParams, parametric_frequency, threshold_amplitude
from .sweep import Axis, ScanKind

POSITIVE, NONNEG, ANY, COUNT, CHOICE = "positive", "nonneg", "any", "count", "choice"

SCHEMA = {
    "system": {
        "omega1": (POSITIVE, 1.0), "omega2": (POSITIVE, None), "omega_b": (POSITIVE, None),
        "gamma1": (POSITIVE, None), "gamma2": (POSITIVE, None), "gamma0": (POSITIVE, None),
        "coupling": (ANY, None), "drive_freq": (POSITIVE, "omega1"),
    },
    "drive": {
        "amp0": (NONNEG, "derived"), "amp0_ratio": (NONNEG, 0.9),
        "alpha": (NONNEG, 0.17), "mod_freq": (NONNEG, "derived"),
        "mod_freq_ratio": (POSITIVE, 1.09), "phase_mode": (CHOICE, "sin"),
    },
    "solver": {
        "method": (CHOICE, "rk45"), "t_end": (POSITIVE, "derived"), "dt": (POSITIVE, "derived"),
        "rtol": (POSITIVE, 1e-9), "atol": (POSITIVE, 1e-15), "sample_stride": (COUNT, 1),
        "seed_eps": (NONNEG, "derived"), "overflow_guard": (POSITIVE, 1e12),
        "scheme": (CHOICE, "DOP853"),
    },
    "scan": {
        "axis": (CHOICE, "amp_ratio"), "min": (NONNEG, 0.0), "max": (POSITIVE, 2.0),
        "count": (COUNT, 201), "spacing": (CHOICE, "linear"), "kind": (CHOICE, "eigen"),
        "pump": (CHOICE, "adiabatic"), "tongue_ratio": (NONNEG, 0.9),
        "freq_min": (POSITIVE, 0.1), "freq_max": (POSITIVE, 3.0), "freq_count": (COUNT, 121),
        "alpha_min": (NONNEG, 0.0), "alpha_max": (POSITIVE, 0.5), "alpha_count": (COUNT, 51),
    },
}

CHOICES = {
    "phase_mode": ("sin", "cos"),
    "method": ("rk45", "rk4"),
    "scheme": ("DOP853", "RK45", "RK23"),
    "axis": ("amp_ratio", "amp"),
    "spacing": ("linear", "log"),
    "kind": tuple(k.value for k in ScanKind),
    "pump": PUMP_MODES,
}


@dataclass(frozen=True)
class ScanSpec:
    axis: Axis
    kind: ScanKind
    pump: str
    tongue_ratio: float
    freq_axis: Axis
    alpha_axis: Axis

    def amplitudes(self, params: SystemParams):
        values = self.axis.values()
        if self.axis.quantity == "amp_ratio":
            return values * threshold_amplitude(params)
        return values


@dataclass(frozen=True)
class RunConfig:
    params: SystemParams
    drive: DriveModulation
    solver: SolverOptions
    scan: ScanSpec
    output_dir: Optional[str] = None
    seed: Optional[int] = None


def _key_lines(text: str) -> dict:
    """Map ``(section, key)`` to its 1-based line number."""
    lines = {}
    section = None
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        m = re.match(r"^\[([^\]]*)\]", line)
        if m:
            section = m.group(1).strip()
            lines.setdefault((section, None), n)
            continue
        m = re.match(r"^([^=:#;\s][^=:]*?)\s*[=:]", line)
        if m and section is not None:
            lines.setdefault((section, m.group(1).strip().lower()), n)
    return lines


def _convert(section, key, raw, kind, line):
    if kind == CHOICE:
        value = raw.strip()
        allowed = CHOICES[key]
        match = [c for c in allowed if c.lower() == value.lower()]
        if not match:
            raise ConfigError(f"{key} must be one of {', '.join(allowed)}, got {value!r}", key, line)
        return match[0]
    try:
        value = int(raw) if kind == COUNT else float(raw)
    except ValueError:
        raise ConfigError(f"{key} is not a number: {raw!r}", key, line) from None
    if kind != COUNT and not math.isfinite(value):
        raise ConfigError(f"{key} must be finite, got {raw!r}", key, line)
    if kind == POSITIVE and not value > 0:
        raise ConfigError(f"{key} out of range: must be > 0, got {raw.strip()}", key, line)
    if kind == NONNEG and not value >= 0:
        raise ConfigError(f"{key} out of range: must be >= 0, got {raw.strip()}", key, line)
    if kind == COUNT and value < 1:
        raise ConfigError(f"{key} out of range: must be >= 1, got {raw.strip()}", key, line)
    if section == "system" and key == "coupling" and value == 0:
        raise ConfigError("coupling out of range: must be nonzero", key, line)
    return value


def parse_config(text: str, output_dir: Optional[str] = None, seed: Optional[int] = None) -> RunConfig:
    """Parse and validate a configuration document.

    Raises :class:`ConfigError` naming the offending key and its line.
    """
    parser = configparser.ConfigParser(interpolation=None, default_section="\x00defaults",
                                       inline_comment_prefixes=("#", ";"), strict=True)
    parser.optionxform = str.lower
    try:
        parser.read_string(text)
    except configparser.DuplicateOptionError as exc:
        raise ConfigError(f"duplicate key {exc.option!r} in [{exc.section}]", exc.option, exc.lineno) from None
    except configparser.DuplicateSectionError as exc:
        raise ConfigError(f"duplicate section [{exc.section}]", exc.section, exc.lineno) from None
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from None
    lines = _key_lines(text)

    raw = {}
    for section in parser.sections():
        if section not in SCHEMA:
            raise ConfigError(f"unknown section [{section}]", section, lines.get((section, None)))
        for key, value in parser.items(section):
            if key not in SCHEMA[section]:
                raise ConfigError(f"unknown key in [{section}]", key, lines.get((section, key)))
            kind = SCHEMA[section][key][0]
            raw[(section, key)] = _convert(section, key, value, kind, lines.get((section, key)))
    if "system" not in parser.sections():
        raise ConfigError("missing required section [system]", "system")

    def get(section, key):
        if (section, key) in raw:
            return raw[(section, key)]
        default = SCHEMA[section][key][1]
        if default is None:
            raise ConfigError(f"missing required key in [{section}]", key)
        return default

    def fail(exc, key):
        return ConfigError(str(exc), key, lines.get(_section_of(key)))

    # system
    omega1 = get("system", "omega1")
    drive_freq = raw.get(("system", "drive_freq"), omega1)
    values = {key: get("system", key) for key in ("omega2", "omega_b", "gamma1", "gamma2", "gamma0", "coupling")}
    try:
        params = SystemParams(**values, omega1=omega1, drive_freq=drive_freq).normalized()
    except OptomechError as exc:
        key = next((k for k in values if str(exc).startswith(k + " ")), "system")
        raise ConfigError(str(exc), key, lines.get(("system", key))) from None

    # drive
    for a, b in (("amp0", "amp0_ratio"), ("mod_freq", "mod_freq_ratio")):
        if ("drive", a) in raw and ("drive", b) in raw:
            raise ConfigError(f"give either {a} or {b}, not both", b, lines.get(("drive", b)))
    try:
        if ("drive", "amp0") in raw:
            amp0 = raw[("drive", "amp0")] / omega1
        else:
            amp0 = get("drive", "amp0_ratio") * threshold_amplitude(params)
    except OptomechError as exc:
        raise fail(exc, "amp0_ratio") from None
    alpha = get("drive", "alpha")
    if ("drive", "mod_freq") in raw:
        mod_freq = raw[("drive", "mod_freq")] / omega1
    else:
        ratio = get("drive", "mod_freq_ratio")
        try:
            mod_freq = ratio * parametric_frequency(params, amp0)
        except OptomechError as exc:
            if alpha > 0 or ("drive", "mod_freq_ratio") in raw:
                raise ConfigError(f"cannot express mod_freq in units of omega_p: {exc}",
                                  "mod_freq_ratio", lines.get(("drive", "mod_freq_ratio"))) from None
            mod_freq = 0.0
    if alpha > 0 and mod_freq <= 0:
        raise ConfigError("mod_freq must be > 0 when alpha > 0", "mod_freq", lines.get(("drive", "mod_freq")))
    drive = DriveModulation(amp0=amp0, alpha=alpha, mod_freq=mod_freq,
                            phase_mode=PhaseMode(get("drive", "phase_mode")))

    # solver
    # times are read in units of 1/omega1 of the raw file
    t_end = raw[("solver", "t_end")] * omega1 if ("solver", "t_end") in raw else default_horizon(params)
    dt = raw[("solver", "dt")] * omega1 if ("solver", "dt") in raw else t_end / 4000
    seed_eps = raw.get(("solver", "seed_eps"), 1e-6 * amp0 / params.gamma1)
    try:
        solver = SolverOptions(
            t_end=t_end, method=SolverMethod(get("solver", "method")), dt=dt,
            rtol=get("solver", "rtol"), atol=get("solver", "atol"),
            sample_stride=get("solver", "sample_stride"), seed_eps=seed_eps,
            overflow_guard=get("solver", "overflow_guard"), adaptive_scheme=get("solver", "scheme"),
        )
    except OptomechError as exc:
        raise ConfigError(str(exc), "solver") from None

    # scan
    try:
        axis = Axis(get("scan", "axis"), get("scan", "min"), get("scan", "max"),
                    get("scan", "count"), get("scan", "spacing"))
        freq_axis = Axis("mod_freq_ratio", get("scan", "freq_min"), get("scan", "freq_max"),
                         get("scan", "freq_count"))
        alpha_axis = Axis("alpha", get("scan", "alpha_min"), get("scan", "alpha_max"),
                          get("scan", "alpha_count"))
    except OptomechError as exc:
        raise ConfigError(str(exc), "scan", lines.get(("scan", None))) from None
    tongue_ratio = get("scan", "tongue_ratio")
    if tongue_ratio >= 1:
        raise ConfigError("tongue_ratio out of range: must be < 1", "tongue_ratio",
                          lines.get(("scan", "tongue_ratio")))
    scan = ScanSpec(axis, ScanKind(get("scan", "kind")), get("scan", "pump"), tongue_ratio,
                    freq_axis, alpha_axis)
    return RunConfig(params, drive, solver, scan, output_dir, seed)


def _section_of(key):
    for section, keys in SCHEMA.items():
        if key in keys:
            return section, key
    return None, key


def load_config(path, output_dir=None, seed=None) -> RunConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read(), output_dir, seed)


def echo_config(cfg: RunConfig) -> str:
    """Fully resolved configuration text; ``parse_config`` of it returns ``cfg``."""
    p, d, s, sc = cfg.params, cfg.drive, cfg.solver, cfg.scan
    r = repr
    out = [
        "# resolved configuration, all quantities in units of omega1",
        "[system]",
        f"omega1 = {r(p.omega1)}", f"omega2 = {r(p.omega2)}", f"omega_b = {r(p.omega_b)}",
        f"gamma1 = {r(p.gamma1)}", f"gamma2 = {r(p.gamma2)}", f"gamma0 = {r(p.gamma0)}",
        f"coupling = {r(p.coupling)}", f"drive_freq = {r(p.drive_freq)}",
        "",
        "[drive]",
        f"amp0 = {r(d.amp0)}", f"alpha = {r(d.alpha)}", f"mod_freq = {r(d.mod_freq)}",
        f"phase_mode = {d.phase_mode.value}",
        "",
        "[solver]",
        f"method = {s.method.value}", f"t_end = {r(s.t_end)}", f"dt = {r(s.dt)}",
        f"rtol = {r(s.rtol)}", f"atol = {r(s.atol)}", f"sample_stride = {int(s.sample_stride)}",
        f"seed_eps = {r(s.seed_eps)}", f"overflow_guard = {r(s.overflow_guard)}",
        f"scheme = {s.adaptive_scheme}",
        "",
        "[scan]",
        f"axis = {sc.axis.quantity}", f"min = {r(sc.axis.min)}", f"max = {r(sc.axis.max)}",
        f"count = {int(sc.axis.count)}", f"spacing = {sc.axis.spacing}", f"kind = {sc.kind.value}",
        f"pump = {sc.pump}", f"tongue_ratio = {r(sc.tongue_ratio)}",
        f"freq_min = {r(sc.freq_axis.min)}", f"freq_max = {r(sc.freq_axis.max)}",
        f"freq_count = {int(sc.freq_axis.count)}",
        f"alpha_min = {r(sc.alpha_axis.min)}", f"alpha_max = {r(sc.alpha_axis.max)}",
        f"alpha_count = {int(sc.alpha_axis.count)}",
        "",
    ]
    return "\n".join(out)

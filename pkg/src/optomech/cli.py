"""Command-line front end.

Every subcommand writes ``<name>.csv`` (fixed columns, 17 significant
digits, one ``# schema=...`` line on top), a ``<name>.meta.json`` sidecar
and ``config.resolved.ini`` into ``--out``.  Timestamps appear only in the
sidecar, so CSV output is byte-identical for identical configurations.

Exit codes: 0 ok, 2 configuration error, 3 numerical failure, 4 I/O error.
On failure a JSON error record goes to stderr and to ``error.json``.
"""
from __future__ import annotations

import argparse
import csv
import datetime
import json
import os
import sys

import numpy as np

from . import __version__
from .config import RunConfig, echo_config, load_config, parse_config
from .errors import ConfigError, OptomechError
from .integrator import classify_steady
from .model import (
    DriveModulation,
    coupling_regime,
    ep_amplitude,
    ep_amplitude_closed,
    rhs_rotating_frame,
    stationary_below_threshold,
    threshold_amplitude,
    threshold_amplitude_closed,
)
from .sweep import ScanKind, scan_drive_amplitude, simulate, tongue_map, transistor_demo, write_metadata

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4
SUBCOMMANDS = ("stationary", "eigen", "threshold", "simulate", "scan", "tongue", "transistor-demo")

REFERENCE_CONFIG = """\
[system]
omega2 = 1.01
omega_b = 0.01
gamma1 = 0.01
gamma2 = 0.001
gamma0 = 0.001
coupling = 0.2
"""


def _fmt(value) -> str:
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.17g}"
    return str(value)


def _write_rows(path, schema, columns, rows):
    with open(path, "w", newline="") as fh:
        fh.write(f"# schema={schema}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def _meta(cfg: RunConfig, name: str, **extra) -> dict:
    return {
        "subcommand": name,
        "version": __version__,
        "created": datetime.datetime.now(datetime.timezone.utc).isoformat(),
        "params": cfg.params.as_dict(),
        "drive": cfg.drive.as_dict(),
        "solver": cfg.solver.as_dict(),
        "seed": cfg.seed,
        **extra,
    }


def cmd_stationary(cfg, out, force=False, **_):
    p, amp = cfg.params, cfg.drive.amp0
    state = stationary_below_threshold(p, amp, force=force)
    residual = max(abs(z) for z in rhs_rotating_frame(state, 0.0, p, DriveModulation.constant(amp)).__dict__.values())
    regime = coupling_regime(p, amp).value if p.matched_damping else "n/a"
    row = [amp, state.a1.real, state.a1.imag, state.a2.real, state.a2.imag, state.b.real, state.b.imag,
           *state.intensities, residual, regime]
    _write_rows(os.path.join(out, "stationary.csv"), "stationary/1",
                ["amp", "re_a1", "im_a1", "re_a2", "im_a2", "re_b", "im_b",
                 "abs2_a1", "abs2_a2", "abs2_b", "residual", "regime"], [row])
    return _meta(cfg, "stationary", residual=residual, regime=regime)


def cmd_eigen(cfg, out, threads=1, **_):
    table = scan_drive_amplitude(cfg.params, cfg.scan.amplitudes(cfg.params), ScanKind.EIGENVALUES,
                                 threads=threads)
    with open(os.path.join(out, "eigen.csv"), "w", newline="") as fh:
        table.write_csv(fh, "eigen/1")
    meta = {}
    if cfg.params.matched_damping:
        meta = {"ep_amplitude": ep_amplitude(cfg.params), "threshold": threshold_amplitude(cfg.params)}
    return _meta(cfg, "eigen", points=len(table.rows), **meta)


def cmd_threshold(cfg, out, **_):
    p = cfg.params
    root = threshold_amplitude(p)
    rows = [("threshold_rootfind", root)]
    if p.matched_damping:
        closed = threshold_amplitude_closed(p)
        ep_root, ep_closed = ep_amplitude(p), ep_amplitude_closed(p)
        rows += [
            ("threshold_closed_form", closed),
            ("threshold_rel_diff", abs(root - closed) / closed),
            ("threshold_without_half", 2 * closed),
            ("ep_rootfind", ep_root),
            ("ep_closed_form", ep_closed),
            ("ep_rel_diff", abs(ep_root - ep_closed) / ep_closed if ep_closed else 0.0),
            ("ep_without_half", 2 * ep_closed),
        ]
    _write_rows(os.path.join(out, "threshold.csv"), "threshold/1", ["quantity", "value"], rows)
    for name, value in rows:
        print(f"{name:24s} {value:.17g}")
    return _meta(cfg, "threshold", **dict(rows))


def cmd_simulate(cfg, out, **_):
    rng = np.random.default_rng(cfg.seed) if cfg.seed is not None else None
    traj = simulate(cfg.params, cfg.drive, cfg.solver, rng)
    traj.to_csv(os.path.join(out, "simulate.csv"))
    seed = traj.intensities[0, 1] + traj.intensities[0, 2]
    peak = float(np.max(traj.intensities[:, 1] + traj.intensities[:, 2]))
    window = cfg.solver.t_end / 10
    label = classify_steady(traj, window).value
    return _meta(cfg, "simulate", params_digest=traj.params_digest, label=label,
                 peak_over_seed=peak / seed if seed > 0 else None, samples=len(traj))


def cmd_scan(cfg, out, threads=1, **_):
    kind = cfg.scan.kind
    table = scan_drive_amplitude(cfg.params, cfg.scan.amplitudes(cfg.params), kind, drive=cfg.drive,
                                 opts=cfg.solver, threads=threads, pump=cfg.scan.pump)
    with open(os.path.join(out, "scan.csv"), "w", newline="") as fh:
        table.write_csv(fh, f"scan-{kind.value}/1")
    failed = sum(1 for row in table.rows if row[-1] != "ok")
    return _meta(cfg, "scan", kind=kind.value, points=len(table.rows), failed=failed)


def cmd_tongue(cfg, out, threads=1, **_):
    sc = cfg.scan
    grid = tongue_map(cfg.params, sc.tongue_ratio, sc.freq_axis, sc.alpha_axis, pump=sc.pump,
                      phase_mode=cfg.drive.phase_mode, threads=threads)
    with open(os.path.join(out, "tongue.csv"), "w", newline="") as fh:
        grid.write_csv(fh, rate0=cfg.params.gamma2)
    finite = np.isfinite(grid.rates)
    return _meta(cfg, "tongue", omega_p=grid.omega_p, amp0=grid.amp0, pump=sc.pump,
                 positive_points=int(np.sum(grid.rates[finite] > 0)),
                 max_liouville_error=float(np.nanmax(grid.liouville)),
                 monotonicity_violations=grid.monotonicity_violations())


def cmd_transistor(cfg, out, **_):
    d = cfg.drive
    outcome = transistor_demo(cfg.params, d.amp0, d.alpha, d.mod_freq, cfg.solver)
    rows = []
    for name, traj in (("on", outcome.on_traj), ("off", outcome.off_traj)):
        for t, inten in zip(traj.times, traj.intensities):
            rows.append((name, t, inten[0], inten[1], inten[2]))
    _write_rows(os.path.join(out, "transistor-demo.csv"), "transistor/1",
                ["run", "t", "abs2_a1", "abs2_a2", "abs2_b"], rows)
    print(f"sidebands on : {outcome.on_label.value} (gain {outcome.on_gain:.3e})")
    print(f"sidebands off: {outcome.off_label.value} (gain {outcome.off_gain:.3e})")
    return _meta(cfg, "transistor-demo", on_label=outcome.on_label, off_label=outcome.off_label,
                 on_gain=outcome.on_gain, off_gain=outcome.off_gain,
                 sideband_intensity_ratio=outcome.sideband_ratio,
                 synthesis_error=outcome.synthesis_error)


HANDLERS = {
    "stationary": cmd_stationary,
    "eigen": cmd_eigen,
    "threshold": cmd_threshold,
    "simulate": cmd_simulate,
    "scan": cmd_scan,
    "tongue": cmd_tongue,
    "transistor-demo": cmd_transistor,
}


def run_subcommand(name: str, cfg: RunConfig, threads: int = 1, force: bool = False) -> int:
    """Run one subcommand and write its outputs into ``cfg.output_dir``."""
    out = cfg.output_dir or "."
    try:
        os.makedirs(out, exist_ok=True)
        with open(os.path.join(out, "config.resolved.ini"), "w") as fh:
            fh.write(echo_config(cfg))
        meta = HANDLERS[name](cfg, out, threads=threads, force=force)
        write_metadata(os.path.join(out, f"{name}.meta.json"), meta)
    except ConfigError as exc:
        return _fail(out, name, "config", exc, EXIT_CONFIG)
    except OptomechError as exc:
        return _fail(out, name, "numeric", exc, EXIT_NUMERIC)
    except (ArithmeticError, np.linalg.LinAlgError) as exc:
        return _fail(out, name, "numeric", exc, EXIT_NUMERIC)
    except OSError as exc:
        return _fail(out, name, "io", exc, EXIT_IO)
    return EXIT_OK


def _fail(out, name, category, exc, code) -> int:
    record = {"subcommand": name, "category": category, "error": type(exc).__name__,
              "message": str(exc), "exit_code": code}
    for attr in ("key", "line"):
        if getattr(exc, attr, None) is not None:
            record[attr] = getattr(exc, attr)
    print(json.dumps(record), file=sys.stderr)
    try:
        with open(os.path.join(out, "error.json"), "w") as fh:
            json.dump(record, fh, indent=2)
    except OSError:
        pass
    return code


def _error_dir(out) -> str:
    try:
        os.makedirs(out, exist_ok=True)
        return out
    except OSError:
        return "."


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="configuration file (default: built-in reference system)")
    common.add_argument("--out", default=".", help="output directory (default: current directory)")
    common.add_argument("--threads", type=int, default=1, help="worker processes for scans")
    common.add_argument("--seed", type=int, default=None,
                        help="u64 seed; randomizes the phases of the initial perturbation")
    common.add_argument("--force", action="store_true",
                        help="evaluate the stationary state even above threshold")
    parser = argparse.ArgumentParser(
        prog="optomech", parents=[common],
        description="Three-mode optomechanical system: stability analysis and simulation.",
        epilog="exit codes: 0 ok, 2 configuration error, 3 numerical failure, 4 I/O error",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, metavar="SUBCOMMAND")
    helps = {
        "stationary": "subthreshold fixed point at drive amp0",
        "eigen": "linearized eigenvalues along the scan axis",
        "threshold": "instability threshold and exceptional point, root-find vs closed form",
        "simulate": "seeded nonlinear time evolution with the configured drive",
        "scan": "drive-amplitude scan of the configured kind (eigen, steady, floquet)",
        "tongue": "Floquet growth-rate map over modulation frequency and depth",
        "transistor-demo": "nonlinear runs with the two sidebands switched on and off",
    }
    for name in SUBCOMMANDS:
        sub.add_parser(name, parents=[common], help=helps[name], description=helps[name])
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.seed is not None and not 0 <= args.seed < 2 ** 64:
        parser.error("--seed must be an unsigned 64-bit integer")
    try:
        if args.config:
            cfg = load_config(args.config, args.out, args.seed)
        else:
            cfg = parse_config(REFERENCE_CONFIG, args.out, args.seed)
    except ConfigError as exc:
        return _fail(_error_dir(args.out), args.command, "config", exc, EXIT_CONFIG)
    except OSError as exc:
        return _fail(_error_dir(args.out), args.command, "io", exc, EXIT_IO)
    return run_subcommand(args.command, cfg, threads=max(1, args.threads), force=args.force)


if __name__ == "__main__":
    sys.exit(main())

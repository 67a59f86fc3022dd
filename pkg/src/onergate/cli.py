"""Command-line interface: ``onergate <command> --config run.toml --out results/``.

Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""
import argparse
import logging
import os
import sys

import numpy as np

from . import __version__
from .analysis import (
    FULL_T_STEP,
    gamma1_estimate,
    grid_scan,
    period_scan,
    stability_matrix,
    uniform_grid,
    windowed_period_scan,
)
from .atom import Manifold, basis_index, basis_states, breit_rabi_scan, excited_label, h_zeeman, to_mhz
from .config import ConfigError, config_hash, atom_from_config, drive_from_config, load_config, parse_quantity, quantity_kind
from .drive import AmbiguousLabelError, IntensityConversion
from .dynamics import evolve, scattered_photons
from .floquet import floquet_scan
from .io import Manifest, atom_header, fmt, write_csv
from .propagation import NumericalError

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 2, 3
COMMANDS = ("levels", "simulate", "scan", "grid", "floquet", "stability", "noise", "convert")
TWO_PI = 2 * np.pi

#: default perturbation offsets for the reduced stability matrix (5 points per axis)
DEFAULT_STABILITY_GRIDS = {
    "T": [-0.003, -0.0015, 0.0015, 0.003],
    "B": [-0.3, -0.15, 0.15, 0.3],
    "omega_e": [TWO_PI * d for d in (-0.1, -0.05, 0.05, 0.1)],
    "theta": [np.deg2rad(d) for d in (-1.0, -0.5, 0.5, 1.0)],
    "detuning": [TWO_PI * d for d in (-4.0, -2.0, 2.0, 4.0)],
}
FULL_FIDELITY_AXIS_POINTS = 21

logger = logging.getLogger("onergate")


class Run:
    """Shared state of one command invocation."""

    def __init__(self, args, cfg):
        self.args = args
        self.cfg = cfg
        self.out = args.out
        self.spec = atom_from_config(cfg) if cfg is not None else None
        flags = {"command": args.command, "full_fidelity": bool(args.full_fidelity)}
        if getattr(args, "value", None) is not None:
            flags["value"] = args.value
        self.hash = config_hash(cfg.raw if cfg is not None else {}, flags)
        self.manifest = Manifest(self.out, args.command, self.hash, flags)

    def meta(self, **extra):
        meta = {"software": f"onergate {__version__}", "command": self.args.command, "config_hash": self.hash}
        if self.spec is not None:
            meta.update(atom_header(self.spec))
        meta.update({k: fmt(v) for k, v in extra.items()})
        return meta

    def write(self, name, rows, columns=None, **meta):
        path = write_csv(os.path.join(self.out, name), rows, self.meta(**meta), columns)
        self.manifest.record(path)
        logger.info("wrote %s", path)
        return path


def _drive_meta(cfg):
    return {
        "B_G": cfg.b_field,
        "omega_E_MHz": to_mhz(cfg.omega_e),
        "theta_rad": cfg.theta,
        "detuning_MHz": to_mhz(cfg.detuning),
        "envelope_phase_rad": cfg.envelope_phase,
    }


def cmd_levels(run):
    """Breit-Rabi diagram of the excited manifold and ground Zeeman levels."""
    sec = run.cfg.section("levels") if run.cfg.has("levels") else {"b_min": 0.0, "b_max": 1000.0, "b_step": 1.0}
    if not sec["b_step"] > 0 or sec["b_max"] < sec["b_min"] or sec["b_min"] < 0:
        raise ConfigError("levels: require 0 <= b_min <= b_max and b_step > 0")
    n = int(np.floor((sec["b_max"] - sec["b_min"]) / sec["b_step"] + 1e-9))
    grid = sec["b_min"] + sec["b_step"] * np.arange(n + 1)
    scan = breit_rabi_scan(run.spec, grid)
    run.write("levels.csv", scan.rows(), ["B", "eigenvalue_index", "energy", "dominant_mJ", "dominant_mI", "overlap"],
              energy_unit="MHz", min_track_overlap=float(scan.track_overlap.min()))
    labels = [excited_label(run.spec, p) for p in range(run.spec.n_excited)]
    names = [f"P_mJ{mj:+d}_mI{mi:+.1f}" for mj, mi in labels]

    def proj_rows():
        for k in range(3):
            w = scan.projections(k)
            for b, bval in enumerate(grid):
                row = {"B": bval, "state": k, "energy": to_mhz(scan.energies[b, k])}
                row.update(zip(names, w[b]))
                yield row

    run.write("projections.csv", proj_rows(), ["B", "state", "energy"] + names, energy_unit="MHz")
    ground = [basis_index(run.spec, Manifold.S, 0, m) for m in run.spec.m_i_values()]

    def ground_rows():
        for bval in grid:
            energies = np.diag(h_zeeman(run.spec, bval)).real[ground]
            for m, e in zip(run.spec.m_i_values(), energies):
                yield {"B": bval, "m_I": m, "energy": to_mhz(e)}

    run.write("ground_levels.csv", ground_rows(), ["B", "m_I", "energy"], energy_unit="MHz")


def _evolution(run):
    return run.cfg.section("evolution") if run.cfg.has("evolution") else {
        "horizon": 50.0, "sample_dt": 0.005, "method": "magnus", "closed": False, "step_factor": 2.0}


def cmd_simulate(run):
    """Single driven, decaying evolution from |S,0,-9/2>."""
    drive = drive_from_config(run.cfg).resolved(run.spec)
    ev = _evolution(run)
    traj = evolve(run.spec, drive, horizon=ev["horizon"], sample_dt=ev["sample_dt"], method=ev["method"],
                  closed=ev["closed"], step_factor=ev["step_factor"])
    pop_cols = [f"{b.manifold.name}_mJ{b.m_j:+d}_mI{b.m_i:+.1f}" for b in basis_states(run.spec)]

    def rows():
        for n, t in enumerate(traj.times):
            row = {
                "time": t,
                "P_m9_2": traj.initial_population[n],
                "P_m5_2": traj.target_population[n],
                "P_3P1": traj.excited_occupation[n],
                "other": traj.other_states_leakage[n],
                "stroboscopic": bool(n in strobe),
            }
            row.update(zip(pop_cols, traj.populations[n]))
            yield row

    strobe = set(traj.strobe_index.tolist())
    rabi = traj.rabi
    extra = dict(_drive_meta(drive), T_us=drive.period, horizon_us=ev["horizon"], method=ev["method"],
                 closed=ev["closed"], flip_probability=traj.flip_probability, flip_time_us=traj.flip_time,
                 max_P3P1=traj.max_excited, trace_error=traj.trace_error)
    if rabi.resolved:
        extra.update(omega_N_kHz=to_mhz(rabi.omega_n) * 1e3, rabi_fourier_kHz=to_mhz(rabi.fourier_omega) * 1e3,
                     rabi_consistent=rabi.consistent)
        if not ev["closed"]:
            extra["N_sc"] = scattered_photons(traj)
    else:
        extra["omega_N_kHz"] = "unresolved"
    run.write("trajectory.csv", rows(), ["time", "P_m9_2", "P_m5_2", "P_3P1", "other", "stroboscopic"] + pop_cols, **extra)


def _scan_settings(run):
    sec = run.cfg.section("scan") if run.cfg.has("scan") else {
        "t_min": 0.01, "t_max": 5.0, "coarse_step": 0.025, "refine_steps": [0.005, 0.001], "polish": True, "periods": None}
    return sec


def _run_scan(run, drive, sec, ev):
    if sec["periods"]:
        return period_scan(run.spec, drive, np.array(sec["periods"]), ev["horizon"], ev["sample_dt"], run.args.threads)
    return windowed_period_scan(run.spec, drive, (sec["t_min"], sec["t_max"]), sec["coarse_step"],
                                tuple(sec["refine_steps"]), sec["polish"], ev["horizon"], ev["sample_dt"],
                                run.args.threads, full_fidelity=run.args.full_fidelity)


def _write_scan(run, result, prefix):
    ladder = result.ladder()
    meta = dict(_drive_meta(result.config), n_points=len(result.points), n_peaks=len(result.peaks),
                spacing_dispersion_T=ladder.dispersion_T, spacing_dispersion_inv_T=ladder.dispersion_inv_T,
                delta_E_eff_spread=ladder.dispersion_delta_e)
    run.write(f"{prefix}.csv", result.rows(), ["T", "flip_prob", "flip_time", "omega_n_kHz", "max_P3P1"], **meta)
    run.write(f"{prefix}_peaks.csv", result.peak_rows(), ["order", "T", "flip_prob", "omega_n_kHz", "max_P3P1", "N_sc"],
              **meta)


def cmd_scan(run):
    """Flip probability versus modulation period and multi-photon peaks."""
    drive = drive_from_config(run.cfg, period=1.0).resolved(run.spec)
    result = _run_scan(run, drive, _scan_settings(run), _evolution(run))
    _write_scan(run, result, "scan")


def cmd_grid(run):
    """Period scans over a grid of magnetic fields and Rabi frequencies."""
    base = drive_from_config(run.cfg, period=1.0)
    grid = run.cfg.section("grid") if run.cfg.has("grid") else None
    b_list = grid["b_list"] if grid else [200.0, 300.0, 500.0, 1000.0]
    omega_list = grid["omega_list"] if grid else [TWO_PI * w for w in (20, 30, 40, 50, 60, 80)]
    sec, ev = _scan_settings(run), _evolution(run)
    summary = []
    for b in b_list:
        for om in omega_list:
            drive = base.with_(b_field=b, omega_e=om, detuning=None).resolved(run.spec)
            result = _run_scan(run, drive, sec, ev)
            name = f"scan_B{fmt_num(b)}G_W{fmt_num(to_mhz(om))}MHz"
            _write_scan(run, result, name)
            summary.append({"B": b, "omega_E_MHz": to_mhz(om), "n_peaks": len(result.peaks),
                            "first_peak_T": result.peaks[0].period if result.peaks else float("nan")})
    run.write("grid_summary.csv", summary, ["B", "omega_E_MHz", "n_peaks", "first_peak_T"])


def fmt_num(x):
    return f"{x:g}".replace(".", "p").replace("-", "m")


def cmd_floquet(run):
    """Floquet mixture measure and quasi-energies versus modulation period."""
    drive = drive_from_config(run.cfg, period=1.0).resolved(run.spec)
    sec = run.cfg.section("floquet")
    step = FULL_T_STEP if run.args.full_fidelity else sec["t_step"]
    periods = uniform_grid((sec["t_min"], sec["t_max"]), step)
    scan = floquet_scan(run.spec, drive, periods, run.args.threads)
    cols = ["T", "mixture", "mode1", "mode1_overlap_m9_2", "mode1_overlap_m5_2", "mode2", "mode2_overlap_m9_2",
            "mode2_overlap_m5_2"] + [f"eps{k}_MHz" for k in range(run.spec.dim)]

    def rows():
        for k, row in enumerate(scan.rows()):
            row.update({f"eps{n}_MHz": to_mhz(e) for n, e in enumerate(scan.quasi_energies[k])})
            yield row

    run.write("floquet.csv", rows(), cols, **_drive_meta(drive))


def cmd_stability(run):
    """Sensitivity of the flip probability to parameter perturbations."""
    drive = drive_from_config(run.cfg).resolved(run.spec)
    sec = run.cfg.section("stability") if run.cfg.has("stability") else {"pairs": True}
    grids = {k: sec[k] for k in DEFAULT_STABILITY_GRIDS if sec.get(k)}
    if not grids:
        grids = dict(DEFAULT_STABILITY_GRIDS)
    if run.args.full_fidelity:
        grids = {k: np.linspace(-max(map(abs, v)), max(map(abs, v)), FULL_FIDELITY_AXIS_POINTS) for k, v in grids.items()}
    ev = _evolution(run)
    mat = stability_matrix(run.spec, drive, grids, pairs=sec.get("pairs", True), horizon=ev["horizon"],
                           sample_dt=ev["sample_dt"], threads=run.args.threads)
    rel = {}
    if "omega_e" in mat.axes and drive.omega_e > 0:
        rel["omega_e_max_relative_perturbation"] = float(np.abs(mat.axes["omega_e"]).max() / drive.omega_e)
    run.write("stability.csv", mat.rows(), ["parameter_x", "delta_x", "parameter_y", "delta_y", "log10_1mP", "flip_prob"],
              units="T:us B:G omega_e:rad/us theta:rad detuning:rad/us", base_flip_prob=mat.base_flip_prob,
              T_us=drive.period, **_drive_meta(drive), **rel)


def cmd_noise(run):
    """Relaxation-rate estimates from noise spectral densities."""
    sec = run.cfg.section("noise")
    omega = sec["omega_n"]
    omega_s = omega / TWO_PI * 1e6 if sec["frequency_convention"] == "cyclic" else omega * 1e6
    rows = []
    for i, src in enumerate(sec["source"]):
        path = f"noise.source[{i}]"
        if (src["psd"] is None) == (src["phase_noise"] is None):
            raise ConfigError(f"{path}: give exactly one of psd or phase_noise")
        psd = src["psd"] if src["psd"] is not None else src["phase_noise"] * omega_s**2
        try:
            if src["slope_sq"] is not None:
                est = gamma1_estimate(src["parameter"], psd=psd, slope_sq=src["slope_sq"])
            elif src["delta_x"] is not None and src["p_delta_x"] is not None:
                est = gamma1_estimate(src["parameter"], src["delta_x"], src["p_delta_x"], omega_s, psd)
            else:
                raise ConfigError(f"{path}: give slope_sq or both delta_x and p_delta_x")
        except ValueError as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"{path}: {exc}") from exc
        rows.append({"name": src["name"], "parameter": src["parameter"], "omega_n_per_s": omega_s, "psd": est.psd,
                     "slope_sq": est.slope_sq, "gamma1_per_s": est.gamma1})
        print(f"{src['name']}: Gamma_1 = {est.gamma1:.3g} 1/s (slope^2 = {est.slope_sq:.3g}, S_x = {est.psd:.3g})")
    run.write("noise.csv", rows, ["name", "parameter", "omega_n_per_s", "psd", "slope_sq", "gamma1_per_s"],
              frequency_convention=sec["frequency_convention"])


def cmd_convert(run):
    """Convert between electronic Rabi frequency and laser intensity."""
    if run.args.value is not None:
        kind = quantity_kind(run.args.value)
        if kind not in ("frequency", "intensity"):
            raise ConfigError(f"convert: expected a frequency or intensity quantity, got {run.args.value!r}")
        value = parse_quantity(run.args.value, kind, "value")
    elif run.cfg is not None:
        kind, value = run.cfg.section("convert")["value"]
    else:
        raise ConfigError("convert: give a value (e.g. '20 MHz' or '1 W/cm2') or a [convert] section")
    conv = IntensityConversion()
    if kind == "frequency":
        out = float(conv.rabi_to_intensity(value))
        row = {"omega_E_MHz": to_mhz(value), "intensity_W_cm2": out}
        print(f"Omega_E/2pi = {to_mhz(value):g} MHz -> I = {out:.4g} W/cm^2")
    else:
        out = float(conv.intensity_to_rabi(value))
        row = {"omega_E_MHz": to_mhz(out), "intensity_W_cm2": value}
        print(f"I = {value:g} W/cm^2 -> Omega_E/2pi = {to_mhz(out):.4g} MHz")
    run.write("convert.csv", [row], ["omega_E_MHz", "intensity_W_cm2"], dipole_au=conv.dipole_au,
              frequency_convention="cyclic" if conv.cyclic_frequency else "angular")


HANDLERS = {
    "levels": cmd_levels,
    "simulate": cmd_simulate,
    "scan": cmd_scan,
    "grid": cmd_grid,
    "floquet": cmd_floquet,
    "stability": cmd_stability,
    "noise": cmd_noise,
    "convert": cmd_convert,
}
REQUIRED_SECTIONS = {
    "levels": (),
    "simulate": ("drive",),
    "scan": ("drive",),
    "grid": ("drive",),
    "floquet": ("drive", "floquet"),
    "stability": ("drive",),
    "noise": ("noise",),
    "convert": (),
}


def build_parser():
    parser = argparse.ArgumentParser(prog="onergate", description="ONER nuclear-spin gate simulations for 87Sr")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name, help=HANDLERS[name].__doc__)
        p.add_argument("--config", metavar="PATH", help="TOML run configuration")
        p.add_argument("--out", metavar="DIR", default="results", help="output directory (default: results)")
        p.add_argument("--threads", metavar="N", type=int, default=1, help="worker processes for scans")
        p.add_argument("--full-fidelity", action="store_true", help="use full-resolution grids (long running)")
        p.add_argument("-v", "--verbose", action="store_true")
        if name == "convert":
            p.add_argument("value", nargs="?", help="quantity such as '20 MHz' or '1 W/cm2'")
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if args.threads < 1:
            raise ConfigError("--threads must be >= 1")
        required = REQUIRED_SECTIONS[args.command]
        if args.config is None:
            if required:
                raise ConfigError(f"{args.command} requires --config with sections {', '.join(required)}")
            cfg = None
        else:
            cfg = load_config(args.config, required)
        run = Run(args, cfg)
        if run.spec is None:
            from .atom import AtomSpec

            run.spec = AtomSpec()
        HANDLERS[args.command](run)
        run.manifest.finish()
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalError, AmbiguousLabelError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ValueError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

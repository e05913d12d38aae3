"""Command-line front end.

Subcommands::

    spacing     two-ion distance for a trap frequency
    modes       equilibrium positions and axial modes of an N-ion chain
    simulate    synthetic run or distance-scan count file
    analyze     beat envelope / scan points plus phase-stability report
    scanfit     fit wavelength and temperature to a distance scan
    theocurves  per-ion beat amplitude versus trap frequency

Units at this boundary are MHz, um, nm, mK, ms; everything below is SI.
Exit codes: 0 success, 2 usage, 3 I/O, 4 numerical failure.
``SWION_THREADS`` caps the worker threads used for scans.
"""
from __future__ import annotations

import argparse
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from io import StringIO
from typing import Optional, Sequence

import numpy as np

from . import io
from .beatmodel import trap_frequency_scan
from .crystal import IonSpecies, TrapConfig, normal_modes, two_ion_spacing
from .dsp import WindowSpec, analytic_envelope, beat_power, noise_floor, phase_stability
from .errors import NumericalError
from .fit import analyze_scan, derive_quantities, fit_report, fit_scan, scan_points
from .synth import FluorescenceRun, Scenario, generate_run, scan_dataset

EXIT_USAGE = 2
EXIT_IO = 3
EXIT_NUMERICAL = 4

MHZ = 2 * math.pi * 1e6


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _threads() -> Optional[int]:
    raw = os.environ.get("SWION_THREADS")
    if not raw:
        return None
    try:
        n = int(raw)
    except ValueError:
        raise UsageError(f"SWION_THREADS must be an integer, got {raw!r}") from None
    return max(n, 1)


def _positive(name):
    def conv(text):
        try:
            v = float(text)
        except ValueError:
            raise argparse.ArgumentTypeError(f"{name} must be a number, got {text!r}") from None
        if not v > 0:
            raise argparse.ArgumentTypeError(f"{name} must be positive, got {text!r}")
        return v

    return conv


def _species(cfg) -> IonSpecies:
    return IonSpecies.from_amu(cfg["mass_amu"], cfg["charge_e"])


def _trap(cfg) -> TrapConfig:
    return TrapConfig(
        species=_species(cfg),
        axial_freq=cfg["trap_freq_mhz"] * MHZ,
        delta_k_eff=2 * math.pi / (cfg["lambda_nm"] * 1e-9),
        delta_omega=2 * math.pi * cfg["beat_hz"],
        phase_offset=cfg["phase_offset_rad"],
    )


def _scenario(cfg) -> Scenario:
    return Scenario(
        trap=_trap(cfg),
        n_ions=cfg["n_ions"],
        temperature=cfg["temperature_mk"] * 1e-3,
        bin_width=cfg["bin_ms"] * 1e-3,
        duration=cfg["duration_s"],
        mean_counts_per_bin=cfg["mean_counts"],
        contrast=cfg["contrast"],
        phase_diffusion=cfg["phase_diffusion_rad2_s"],
        seed=cfg["seed"],
    )


def _window(cfg, args) -> WindowSpec:
    return WindowSpec(
        center=args.center_hz if args.center_hz is not None else cfg["center_hz"],
        fwhm=args.fwhm_hz if args.fwhm_hz is not None else cfg["fwhm_hz"],
        order=args.order if args.order is not None else cfg["order"],
    )


# --- commands ---------------------------------------------------------------


def cmd_spacing(args) -> int:
    trap = TrapConfig(
        IonSpecies.from_amu(args.mass_amu, args.charge_e), args.freq_mhz * MHZ, 1.0
    )
    print(f"{two_ion_spacing(trap) * 1e6:.3g} um")
    return 0


def cmd_modes(args) -> int:
    trap = TrapConfig(IonSpecies.from_amu(args.mass_amu, args.charge_e), args.freq_mhz * MHZ, 1.0)
    modes = normal_modes(args.n, trap)
    print(f"# {args.n} ions, length scale {modes.length_scale * 1e6:.4f} um")
    print("mode  freq_mhz  freq/w0   eigenvector")
    for j, w in enumerate(modes.mode_freqs):
        vec = " ".join(f"{a:+.4f}" for a in modes.mode_matrix[:, j])
        print(f"{j:4d}  {w / MHZ:8.4f}  {w / trap.axial_freq:7.4f}   {vec}")
    print("ion  position_um")
    for i, x in enumerate(modes.positions):
        print(f"{i:3d}  {x * 1e6:+.4f}")
    return 0


def cmd_simulate(args) -> int:
    cfg = io.load_config(args.config)
    if args.seed is not None:
        cfg["seed"] = args.seed
    noiseless = args.noiseless or cfg["noiseless"]
    scenario = _scenario(cfg)
    if args.scan is None and args.runs is None:
        run = generate_run(scenario, noiseless=noiseless)
        with io.open_text(args.out, "w") as fh:
            io.write_run(run, fh)
        return 0
    n_points = args.scan if args.scan is not None else cfg["scan_points"]
    runs = args.runs if args.runs is not None else cfg["runs_per_point"]
    distances = np.linspace(cfg["scan_min_um"], cfg["scan_max_um"], n_points) * 1e-6
    scan = scan_dataset(
        scenario, distances=distances, runs_per_point=runs, noiseless=noiseless, workers=_threads()
    )
    with io.open_text(args.out, "w") as fh:
        io.write_scan(scan, fh, scenario.digest())
    return 0


def _read_counts(path, cfg):
    with io.open_text(path) as fh:
        return io.read_counts_file(fh, _species(cfg))


def cmd_analyze(args) -> int:
    cfg = io.load_config(args.config)
    spec = _window(cfg, args)
    trim = args.edge_trim_s if args.edge_trim_s is not None else cfg["edge_trim_s"]
    subtract = cfg["subtract_noise"] and not args.no_noise_floor
    data = _read_counts(args.input, cfg)

    if isinstance(data, FluorescenceRun):
        env = analytic_envelope(data, spec)
        floor = noise_floor(data, spec) if subtract else 0.0
        stab = phase_stability([env], trim)
        report = {"beat_power_counts2": beat_power(env, trim, floor), "noise_floor_counts2": floor}
        with io.open_text(args.out, "w") as fh:
            io.write_envelope(env, fh)
    else:
        runs = [s.run for s in data]

        def one(run):
            env = analytic_envelope(run, spec)
            floor = noise_floor(run, spec) if subtract else 0.0
            return env, beat_power(env, trim, floor)

        workers = _threads()
        if workers and workers > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                results = list(pool.map(one, runs))
        else:
            results = [one(r) for r in runs]
        points = scan_points((s.distance, p) for s, (_, p) in zip(data, results))
        stab = phase_stability([env for env, _ in results], trim)
        report = {"n_runs": len(runs), "n_points": len(points)}
        with io.open_text(args.out, "w") as fh:
            io.write_points(points, fh)

    report.update(
        {
            "window": {"center_hz": spec.center, "fwhm_hz": spec.fwhm, "order": spec.order},
            "edge_trim_s": trim,
            "freq_std_rad_s": stab.freq_std,
            "coherence_time_s": stab.coherence_time,
        }
    )
    report_path = args.report
    if report_path is None and args.out != "-":
        report_path = os.path.splitext(args.out)[0] + ".stability.json"
    if report_path is not None:
        with io.open_text(report_path, "w") as fh:
            json.dump(report, fh, indent=2)
            fh.write("\n")
    return 0


def cmd_scanfit(args) -> int:
    cfg = io.load_config(args.config)
    with io.open_text(args.input) as fh:
        text = fh.read()
    if io.is_points_file(text):
        points = io.read_points(StringIO(text))
    else:
        data = io.read_counts_file(StringIO(text), _species(cfg))
        if isinstance(data, FluorescenceRun):
            raise UsageError("scanfit needs a scan file or scan points, got a single run")
        spec = WindowSpec(cfg["center_hz"], cfg["fwhm_hz"], cfg["order"])
        points = analyze_scan(data, spec, cfg["edge_trim_s"], cfg["subtract_noise"])

    lam_guess = args.lambda_guess_nm if args.lambda_guess_nm is not None else cfg["lambda_guess_nm"]
    t_guess = args.temperature_guess_mk if args.temperature_guess_mk is not None else cfg["temperature_guess_mk"]
    species = _species(cfg)
    fit = fit_scan(
        points,
        species,
        lambda_guess=lam_guess * 1e-9,
        temperature_guess=None if t_guess is None else t_guess * 1e-3,
        lambda_span=cfg["lambda_span"],
        gtol=cfg["fit_gtol"],
        xtol=cfg["fit_xtol"],
        max_nfev=cfg["fit_max_nfev"],
    )
    omega0 = (args.omega0_mhz if args.omega0_mhz is not None else cfg["trap_freq_mhz"]) * MHZ
    report = fit_report(fit, derive_quantities(fit, omega0, species), omega0)
    with io.open_text(args.out, "w") as fh:
        json.dump(report, fh, indent=2)
        fh.write("\n")
    if not fit.converged:
        print("swion scanfit: fit did not converge", file=sys.stderr)
        return EXIT_NUMERICAL
    return 0


def cmd_theocurves(args) -> int:
    try:
        counts = [int(x) for x in args.ions.split(",") if x.strip()]
    except ValueError:
        raise UsageError(f"--ions must be a comma-separated list of integers, got {args.ions!r}") from None
    if not counts:
        raise UsageError("--ions is empty")
    if not args.freq_max_mhz > args.freq_min_mhz:
        raise UsageError("--freq-max-mhz must exceed --freq-min-mhz")
    freqs = np.linspace(args.freq_min_mhz, args.freq_max_mhz, args.points) * MHZ
    trap = TrapConfig(
        IonSpecies.from_amu(args.mass_amu, args.charge_e),
        freqs[0],
        2 * math.pi / (args.lambda_nm * 1e-9),
    )
    cols = [freqs / MHZ]
    header = ["freq_mhz"]
    for n in counts:
        value, env = trap_frequency_scan(n, freqs, args.temperature_mk * 1e-3, trap)
        cols += [np.abs(value), env]
        header += [f"amp_n{n}", f"env_n{n}"]
    with io.open_text(args.out, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in zip(*cols):
            fh.write(",".join(f"{v:.10g}" for v in row) + "\n")
    return 0


# --- parser -----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="swion", description=__doc__.split("\n\n")[0])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def species_flags(sp):
        sp.add_argument("--mass-amu", type=_positive("--mass-amu"), default=io.CONFIG_DEFAULTS["mass_amu"],
                        help="ion mass in atomic mass units (default 40Ca)")
        sp.add_argument("--charge-e", type=_positive("--charge-e"), default=1.0,
                        help="ion charge in elementary charges (default 1)")

    sp = sub.add_parser("spacing", help="two-ion distance for a trap frequency")
    sp.add_argument("--freq-mhz", type=_positive("--freq-mhz"), required=True,
                    help="axial trap frequency w0/2pi in MHz")
    species_flags(sp)
    sp.set_defaults(func=cmd_spacing)

    sp = sub.add_parser("modes", help="equilibrium positions and axial modes")
    sp.add_argument("--n", type=int, required=True, help="number of ions (1..32)")
    sp.add_argument("--freq-mhz", type=_positive("--freq-mhz"), required=True,
                    help="axial trap frequency w0/2pi in MHz")
    species_flags(sp)
    sp.set_defaults(func=cmd_modes)

    sp = sub.add_parser("simulate", help="write a synthetic run or scan count file")
    sp.add_argument("--config", help="key = value config file (units in key names)")
    sp.add_argument("--seed", type=int, help="RNG seed (overrides config)")
    sp.add_argument("--out", default="-", help="output count file, '-' for stdout")
    sp.add_argument("--scan", type=int, help="number of distance points in a scan")
    sp.add_argument("--runs", type=int, help="runs per scan point")
    sp.add_argument("--noiseless", action="store_true", help="write exact per-bin means, no Poisson draw")
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("analyze", help="beat envelope or scan points, plus stability report")
    sp.add_argument("input", help="run or scan count file, '-' for stdin")
    sp.add_argument("--config", help="config file for defaults")
    sp.add_argument("--center-hz", type=_positive("--center-hz"), help="window centre in Hz (default 2.0)")
    sp.add_argument("--fwhm-hz", type=_positive("--fwhm-hz"), help="window FWHM in Hz (default 0.3)")
    sp.add_argument("--order", type=int, help="supergaussian order n (default 4)")
    sp.add_argument("--edge-trim-s", type=float, help="seconds dropped at each end (default 2.0)")
    sp.add_argument("--no-noise-floor", action="store_true", help="keep the shot-noise floor in beat powers")
    sp.add_argument("--out", default="-", help="envelope CSV (single run) or scan points CSV, '-' for stdout")
    sp.add_argument("--report", help="stability JSON path (default <out>.stability.json)")
    sp.set_defaults(func=cmd_analyze)

    sp = sub.add_parser("scanfit", help="fit wavelength and temperature to a distance scan")
    sp.add_argument("input", help="scan points CSV or scan count file, '-' for stdin")
    sp.add_argument("--config", help="config file for analysis and fit settings")
    sp.add_argument("--lambda-guess-nm", type=_positive("--lambda-guess-nm"),
                    help="initial standing-wave period in nm (default 267)")
    sp.add_argument("--temperature-guess-mk", type=_positive("--temperature-guess-mk"),
                    help="initial temperature in mK (default: grid search)")
    sp.add_argument("--omega0-mhz", type=_positive("--omega0-mhz"),
                    help="trap frequency in MHz for phonon numbers and eta (default 1.24)")
    sp.add_argument("--out", default="-", help="fit report JSON, '-' for stdout")
    sp.set_defaults(func=cmd_scanfit)

    sp = sub.add_parser("theocurves", help="per-ion beat amplitude versus trap frequency")
    sp.add_argument("--ions", default="4,6,12", help="comma-separated ion numbers")
    sp.add_argument("--freq-min-mhz", type=_positive("--freq-min-mhz"), default=0.8, help="lowest w0/2pi in MHz")
    sp.add_argument("--freq-max-mhz", type=_positive("--freq-max-mhz"), default=1.5, help="highest w0/2pi in MHz")
    sp.add_argument("--points", type=int, default=701, help="number of frequency samples")
    sp.add_argument("--temperature-mk", type=float, default=3.7, help="crystal temperature in mK")
    sp.add_argument("--lambda-nm", type=_positive("--lambda-nm"), default=267.8, help="standing-wave period in nm")
    species_flags(sp)
    sp.add_argument("--out", default="-", help="output CSV, '-' for stdout")
    sp.set_defaults(func=cmd_theocurves)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"swion: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, io.FormatError) as exc:
        print(f"swion: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except NumericalError as exc:
        print(f"swion: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ValueError as exc:
        print(f"swion: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())

"""Text formats: run/scan count files, scan points, envelopes, config files.

Run file::

    # bin_ms=50 scenario=3f2a9c0d1b7e
    57
    48
    ...

A scan file has the same header followed by blocks, each introduced by
``# point=<i> distance_um=<d> run=<j>``.
"""
from __future__ import annotations

import csv
import io as _io
import math
import re
import sys
from contextlib import contextmanager
from pathlib import Path
from typing import Iterable, Sequence, TextIO, Union

import numpy as np

from .crystal import CA40, IonSpecies, axial_freq_for_spacing
from .dsp import Envelope
from .fit import ScanPoint
from .synth import FluorescenceRun, ScanRun

PathLike = Union[str, Path]

POINTS_HEADER = ["distance_um", "power_mean", "power_sem", "n_runs"]
ENVELOPE_HEADER = ["t_s", "amplitude", "phase_rad", "inst_freq_rad_s"]

_HEADER_RE = re.compile(r"#\s*bin_ms=(\S+)\s+scenario=(\S+)")
_BLOCK_RE = re.compile(r"#\s*point=(\d+)\s+distance_um=(\S+)\s+run=(\d+)")


class FormatError(ValueError):
    """An input file does not follow the expected layout."""


@contextmanager
def open_text(path: PathLike, mode: str = "r"):
    """Open a text file, with ``-`` meaning stdin/stdout."""
    if str(path) == "-":
        yield sys.stdout if "w" in mode else sys.stdin
    else:
        with open(path, mode, newline="") as fh:
            yield fh


def _fmt_count(c) -> str:
    if float(c).is_integer():
        return str(int(c))
    return repr(float(c))


def _bin_ms(bin_width: float) -> str:
    return f"{bin_width * 1e3:.12g}"


def write_run(run: FluorescenceRun, fh: TextIO) -> None:
    fh.write(f"# bin_ms={_bin_ms(run.bin_width)} scenario={run.scenario_digest}\n")
    fh.writelines(_fmt_count(c) + "\n" for c in run.counts)


def write_scan(scan: Sequence[ScanRun], fh: TextIO, digest: str) -> None:
    if not scan:
        raise ValueError("empty scan")
    fh.write(f"# bin_ms={_bin_ms(scan[0].run.bin_width)} scenario={digest}\n")
    for s in scan:
        fh.write(f"# point={s.point} distance_um={float(s.distance) * 1e6!r} run={s.run_index}\n")
        fh.writelines(_fmt_count(c) + "\n" for c in s.run.counts)


def _parse_counts(lines: list[str]) -> np.ndarray:
    try:
        vals = [float(x) for x in lines]
    except ValueError as exc:
        raise FormatError(f"non-numeric count: {exc}") from None
    arr = np.array(vals)
    if np.all(arr == np.round(arr)):
        arr = arr.astype(np.int64)
    return arr


def read_counts_file(fh: TextIO, species: IonSpecies = CA40):
    """Parse a run or scan file; returns a FluorescenceRun or a list of ScanRun."""
    lines = [ln.strip() for ln in fh if ln.strip()]
    if not lines:
        raise FormatError("empty counts file")
    m = _HEADER_RE.match(lines[0])
    if not m:
        raise FormatError(f"missing '# bin_ms=... scenario=...' header, got {lines[0]!r}")
    bin_width = float(m.group(1)) * 1e-3
    digest = m.group(2)
    body = lines[1:]
    if not any(_BLOCK_RE.match(ln) for ln in body):
        return FluorescenceRun(bin_width, _parse_counts(body), digest)

    scan = []
    current = None
    chunk: list[str] = []

    def flush():
        if current is not None:
            p, d, r = current
            run = FluorescenceRun(bin_width, _parse_counts(chunk), digest)
            scan.append(ScanRun(p, r, d, axial_freq_for_spacing(d, species), run))

    for ln in body:
        bm = _BLOCK_RE.match(ln)
        if bm:
            flush()
            current = (int(bm.group(1)), float(bm.group(2)) * 1e-6, int(bm.group(3)))
            chunk = []
        elif ln.startswith("#"):
            continue
        elif current is None:
            raise FormatError("counts before the first '# point=' block")
        else:
            chunk.append(ln)
    flush()
    return scan


def is_points_file(text: str) -> bool:
    first = text.lstrip().splitlines()[0] if text.strip() else ""
    return first.replace(" ", "").startswith(",".join(POINTS_HEADER[:2]))


def write_points(points: Iterable[ScanPoint], fh: TextIO) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(POINTS_HEADER)
    for p in points:
        row = [float(p.distance) * 1e6, float(p.power_mean), float(p.power_sem)]
        w.writerow([repr(v) for v in row] + [p.n_runs])


def read_points(fh: TextIO) -> list[ScanPoint]:
    reader = csv.DictReader(fh, skipinitialspace=True)
    if reader.fieldnames is None or [f.strip() for f in reader.fieldnames] != POINTS_HEADER:
        raise FormatError(f"scan points file must have header {','.join(POINTS_HEADER)}")
    try:
        return [
            ScanPoint(
                float(row["distance_um"]) * 1e-6,
                float(row["power_mean"]),
                float(row["power_sem"]),
                int(row["n_runs"]),
            )
            for row in reader
        ]
    except (TypeError, ValueError) as exc:
        raise FormatError(f"bad scan point row: {exc}") from None


def write_envelope(env: Envelope, fh: TextIO) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(ENVELOPE_HEADER)
    for row in zip(env.times, env.amplitude, env.phase, env.inst_freq):
        w.writerow([f"{v:.10g}" for v in row])


def read_envelope(fh: TextIO) -> Envelope:
    data = np.loadtxt(fh, delimiter=",", skiprows=1, ndmin=2)
    return Envelope(times=data[:, 0], amplitude=data[:, 1], phase=data[:, 2], inst_freq=data[:, 3])


# --- config files -----------------------------------------------------------

CONFIG_DEFAULTS = {
    # trap and probe
    "trap_freq_mhz": 1.24,
    "mass_amu": 39.9625909,
    "charge_e": 1.0,
    "lambda_nm": 267.8,
    "beat_hz": 2.0,
    "phase_offset_rad": 0.0,
    # scenario
    "n_ions": 2,
    "temperature_mk": 3.7,
    "bin_ms": 50.0,
    "duration_s": 50.0,
    "mean_counts": 50.0,
    "contrast": 0.8,
    "phase_diffusion_rad2_s": 0.0,
    "seed": 0,
    "noiseless": False,
    # scan protocol
    "scan_min_um": 4.5,
    "scan_max_um": 5.8,
    "scan_points": 33,
    "runs_per_point": 5,
    # analysis
    "center_hz": 2.0,
    "fwhm_hz": 0.3,
    "order": 4,
    "edge_trim_s": 2.0,
    "subtract_noise": True,
    # fit
    "lambda_guess_nm": 267.0,
    "lambda_span": 0.5,
    "temperature_guess_mk": None,
    "fit_gtol": 1e-10,
    "fit_xtol": 1e-12,
    "fit_max_nfev": 10000,
}

_INT_KEYS = {"n_ions", "seed", "scan_points", "runs_per_point", "order", "fit_max_nfev"}
_BOOL_KEYS = {"noiseless", "subtract_noise"}


def _convert(key: str, raw: str):
    raw = raw.strip()
    if key in _BOOL_KEYS:
        low = raw.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise FormatError(f"{key}: expected a boolean, got {raw!r}")
    if raw.lower() in ("none", ""):
        return None
    try:
        if key in _INT_KEYS:
            return int(raw)
        return float(raw)
    except ValueError:
        raise FormatError(f"{key}: cannot parse {raw!r}") from None


def parse_config(text: str) -> dict:
    """Parse ``key = value`` lines (``#`` starts a comment) over the defaults."""
    cfg = dict(CONFIG_DEFAULTS)
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise FormatError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in CONFIG_DEFAULTS:
            raise FormatError(f"line {lineno}: unknown config key {key!r}")
        cfg[key] = _convert(key, value)
    return cfg


def load_config(path: PathLike | None) -> dict:
    if path is None:
        return dict(CONFIG_DEFAULTS)
    return parse_config(Path(path).read_text())


def dump_config(cfg: dict) -> str:
    buf = _io.StringIO()
    for k, v in cfg.items():
        if v is None:
            v = "none"
        elif isinstance(v, bool):
            v = str(v).lower()
        elif isinstance(v, float) and math.isfinite(v):
            v = repr(v)
        buf.write(f"{k} = {v}\n")
    return buf.getvalue()

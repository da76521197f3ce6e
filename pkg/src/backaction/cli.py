"""Command-line front end: parameter sweeps written as CSV plus a JSON manifest.

    backaction <mode> --config <path|fig2|fig4|fig5> [--out DIR] [--points N]
               [--span-hz X] [--powers LIST] [--seed N]
               [--branch {continuation,low,high}] [--thermal {on,off}]
               [--form {consistent,literal}]

Exit codes: 0 ok, 2 configuration error, 3 physics refusal (at or above
threshold for a linearised operation), 4 numerical failure.
"""
from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from . import linear_response as lr
from . import sql_sensitivity as sq
from . import timedomain as td
from .params import TWO_PI, ConfigError, SystemParams, bundled_config, load_params
from .steady_state import SolverError, continuation_sweep, solve_mean_field

log = logging.getLogger("backaction")

MODES = ("transfer", "power_surface", "gain_vs_power", "notch", "sql", "timedomain",
         "threshold", "validate")
#: power ladder of the amplification figure, W
FIG2_LADDER = (3.0e-6, 5.4e-6, 7.2e-6, 9.0e-6, 10.2e-6, 12.0e-6)
MOD_DEPTH = 1e-3
EXIT_OK, EXIT_CONFIG, EXIT_PHYSICS, EXIT_NUMERIC = 0, 2, 3, 4

FIGURES = {
    "transfer.csv": "Fig. 2(a-f) analogue: intensity response at one power",
    "power_surface.csv": "Fig. 2(h) analogue: 10 log10 T over (power, frequency)",
    "gain_vs_power.csv": "Fig. 3 analogue: peak amplification versus input power",
    "notch.csv": "Fig. 4 analogue: destructive-interference response",
    "notch_report.csv": "Fig. 4 analogue: notch depth and width",
    "sql_spectrum.csv": "Fig. 5(a) analogue: displacement sensitivity and SQL",
    "sql_surface.csv": "Fig. 5(b) analogue: sensitivity / SQL over (power, frequency)",
    "sql_band.csv": "Fig. 5(b) analogue: sub-SQL band per power",
    "timedomain.csv": "time-domain cross-check of the intensity response",
    "threshold.csv": "Fig. 3 threshold marker: regenerative amplification threshold",
}


@dataclass
class SweepSpec:
    mode: str
    params_path: Path
    output_dir: Path
    points: int | None = None
    span_hz: float | None = None
    powers: tuple[float, ...] | None = None
    seed: int = 0
    branch: str = "continuation"
    thermal: bool = False
    form: str = "consistent"

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"unknown mode {self.mode!r}")
        if self.points is not None and self.points < 2:
            raise ConfigError("--points must be at least 2")
        if self.span_hz is not None and not self.span_hz > 0:
            raise ConfigError("--span-hz must be positive")
        if self.powers is not None:
            if not self.powers:
                raise ConfigError("--powers is empty")
            if any(w < 0 for w in self.powers):
                raise ConfigError("--powers must be non-negative")


@dataclass
class Writer:
    """Collects output files and the manifest for one run."""

    spec: SweepSpec
    p: SystemParams
    files: list = field(default_factory=list)
    extra: dict = field(default_factory=dict)

    def header(self) -> list[str]:
        lines = [f"backaction {__version__}", f"mode = {self.spec.mode}",
                 f"config = {self.spec.params_path}", f"branch = {self.spec.branch}",
                 f"thermal = {'on' if self.spec.thermal else 'off'}", f"form = {self.spec.form}"]
        if self.spec.mode == "timedomain":
            lines.append(f"seed = {self.spec.seed}")
        lines += [f"{k} = {v!r}" for k, v in dataclasses.asdict(self.p).items()]
        return lines

    def csv(self, name: str, columns: list[str], rows, notes: list[str] = ()) -> Path:
        path = self.spec.output_dir / name
        with path.open("w", newline="\n") as fh:
            for line in self.header() + list(notes):
                fh.write(f"# {line}\n")
            fh.write(",".join(columns) + "\n")
            for row in rows:
                fh.write(",".join(_fmt(v) for v in row) + "\n")
        self.files.append((name, columns))
        return path

    def manifest(self) -> Path:
        entries = []
        for name, columns in self.files:
            data = (self.spec.output_dir / name).read_bytes()
            entries.append({"file": name, "figure": FIGURES.get(name, ""), "columns": columns,
                            "sha256": hashlib.sha256(data).hexdigest()})
        doc = {
            "artifact": "backaction",
            "version": __version__,
            "mode": self.spec.mode,
            "config": str(self.spec.params_path),
            "options": {"points": self.spec.points, "span_hz": self.spec.span_hz,
                        "powers": list(self.spec.powers) if self.spec.powers else None,
                        "seed": self.spec.seed, "branch": self.spec.branch,
                        "thermal": self.spec.thermal, "form": self.spec.form},
            "parameters": {k: _jsonable(v) for k, v in dataclasses.asdict(self.p).items()},
            "files": entries,
            **self.extra,
        }
        path = self.spec.output_dir / "manifest.json"
        path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
        return path


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if v is None:
        return "nan"
    return "%.17g" % float(v)


def _jsonable(v):
    if isinstance(v, complex):
        return [v.real, v.imag]
    return v


# --------------------------------------------------------------------------
# helpers
# --------------------------------------------------------------------------

def _sweep(p: SystemParams, powers, branch: str):
    """Mean field at each power, continued up from zero along a short ramp."""
    powers = list(powers)
    ramp = list(np.linspace(0.0, powers[0], 8)[:-1]) if powers[0] > 0 else []
    sols = continuation_sweep(p, ramp + powers, branch=branch)
    return sols[len(ramp):]


def _grid(spec: SweepSpec, p: SystemParams, center: float, points: int = 4001) -> np.ndarray:
    n = spec.points or points
    half = 50 * p.gamma_m if spec.span_hz is None else 0.5 * TWO_PI * spec.span_hz
    return np.linspace(center - half, center + half, n)


def _center(sol, p) -> float:
    fit = lr.fit_lorentzian(sol, p)
    return fit.omega_m_eff if np.isfinite(fit.omega_m_eff) else p.omega_m


def _fwhm(omega, y) -> float:
    """Full width at half depth of the dip in ``y`` (dB), interpolated, rad/s."""
    k = int(np.argmin(y))
    base = 0.5 * (y[0] + y[-1])
    half = 0.5 * (y[k] + base)
    i = k
    while i > 0 and y[i] < half:
        i -= 1
    j = k
    while j < len(y) - 1 and y[j] < half:
        j += 1
    if i == 0 or j == len(y) - 1:
        return float("nan")
    lo = np.interp(half, [y[i + 1], y[i]], [omega[i + 1], omega[i]])
    hi = np.interp(half, [y[j - 1], y[j]], [omega[j - 1], omega[j]])
    return float(hi - lo)


# --------------------------------------------------------------------------
# modes
# --------------------------------------------------------------------------

def _transfer_rows(r: lr.ResponseSample):
    return zip(r.omega / TWO_PI, r.t_intensity, r.t_db, r.s_out, r.s_xx, r.gain_db)


TRANSFER_COLUMNS = ["omega_hz", "t_intensity", "t_db", "s_out", "s_xx", "gain_db"]


def run_transfer(spec, p, out: Writer, name="transfer.csv"):
    sol = _sweep(p, [p.p_in], spec.branch)[-1]
    lr.require_below_threshold(sol, p)
    omega = _grid(spec, p, _center(sol, p))
    r = lr.response(sol, p, omega)
    out.csv(name, TRANSFER_COLUMNS, _transfer_rows(r))
    return sol, omega, r


def run_power_surface(spec, p, out: Writer):
    powers = spec.powers or tuple(np.linspace(3e-6, 12e-6, 18))
    sols = _sweep(p, powers, spec.branch)
    centers = [_center(s, p.with_power(w)) for s, w in zip(sols, powers)]
    omega = _grid(spec, p, 0.5 * (min(centers) + max(centers)), points=801)
    rows = []
    for s, w in zip(sols, powers):
        pw = p.with_power(w)
        lr.require_below_threshold(s, pw)
        rows.append([w] + list(lr.response(s, pw, omega).t_db))
    cols = ["power_w"] + ["%.17g" % f for f in omega / TWO_PI]
    out.csv("power_surface.csv", cols, rows,
            notes=["matrix: one row per power; column headers are omega_hz; entries t_db"])


def run_gain_vs_power(spec, p, out: Writer):
    powers = spec.powers or FIG2_LADDER
    top = max(powers)
    th = lr.threshold_power(p, bracket=(0.0, max(4 * top, 1e-6)), branch=spec.branch)
    sols = _sweep(p, powers, spec.branch)
    rows = []
    for s, w in zip(sols, powers):
        pw = p.with_power(w)
        stable = lr.is_stable(s, pw)
        if not stable:
            rows.append([w, None, None, None, None, False])
            continue
        fit = lr.fit_lorentzian(s, pw)
        omega = np.linspace(fit.omega_peak - 20 * p.gamma_m, fit.omega_peak + 20 * p.gamma_m,
                            spec.points or 20001)
        r = lr.response(s, pw, omega)
        k = int(np.argmax(r.gain_db))
        rows.append([w, r.gain_db[k], r.t_db[k], omega[k] / TWO_PI, fit.r_factor, True])
    note = f"p_threshold_w = {_fmt(th.p_threshold)}"
    out.csv("gain_vs_power.csv",
            ["power_w", "peak_gain_db", "peak_t_db", "omega_peak_hz", "r_factor", "stable"],
            rows, notes=[note])
    out.extra["p_threshold_w"] = th.p_threshold


def run_notch(spec, p, out: Writer):
    th = lr.threshold_power(p, bracket=(0.0, max(10 * p.p_in, 1e-6)), branch=spec.branch)
    sol, omega, r = run_transfer(spec, p, out, name="notch.csv")
    g = r.gain_db
    k = int(np.argmin(g))
    frac = p.p_in / th.p_threshold if th.p_threshold else float("nan")
    out.csv("notch_report.csv",
            ["p_in_w", "p_threshold_w", "threshold_fraction", "min_gain_db", "omega_notch_hz",
             "fwhm_hz"],
            [[p.p_in, th.p_threshold, frac, g[k], omega[k] / TWO_PI, _fwhm(omega, g) / TWO_PI]])


def run_sql(spec, p, out: Writer):
    sol = _sweep(p, [p.p_in], spec.branch)[-1]
    omega = _grid(spec, p, _center(sol, p))
    s = sq.sensitivity(sol, p, omega, thermal=spec.thermal, form=spec.form)
    out.csv("sql_spectrum.csv", ["omega_hz", "s_x_sig_si", "s_sql", "ratio"],
            zip(omega / TWO_PI, s.s_x_sig_si, s.s_sql, s.ratio))
    powers = spec.powers or FIG2_LADDER
    sols = _sweep(p, powers, spec.branch)
    rows, bands = [], []
    for so, w in zip(sols, powers):
        smp = sq.sensitivity(so, p.with_power(w), omega, thermal=spec.thermal, form=spec.form)
        rows.append([w] + list(smp.ratio))
        band = sq.sql_band(smp)
        lo, hi = _band_around(band)
        bands.append([w, band.ratio_min, band.omega_min / TWO_PI, lo / TWO_PI, hi / TWO_PI,
                      len(band.intervals)])
    cols = ["power_w"] + ["%.17g" % f for f in omega / TWO_PI]
    out.csv("sql_surface.csv", cols, rows,
            notes=["matrix: one row per power; column headers are omega_hz; entries ratio"])
    out.csv("sql_band.csv", ["power_w", "ratio_min", "omega_min_hz", "band_lo_hz",
                             "band_hi_hz", "n_intervals"], bands)


def _band_around(band: sq.BandReport):
    for lo, hi in band.intervals:
        if lo <= band.omega_min <= hi:
            return lo, hi
    return float("nan"), float("nan")


def run_timedomain(spec, p, out: Writer):
    sol = _sweep(p, [p.p_in], spec.branch)[-1]
    lr.require_below_threshold(sol, p)
    center = _center(sol, p)
    half = 5 * p.gamma_m if spec.span_hz is None else 0.5 * TWO_PI * spec.span_hz
    omega = np.linspace(center - half, center + half, spec.points or 5)
    t_lin = lr.intensity_transfer(sol, p, omega)
    rows = []
    for i, (w, tl) in enumerate(zip(omega, t_lin)):
        seed = spec.seed + i
        est = td.simulate_transfer(p, w, MOD_DEPTH, sol=sol, noise=td.Noise(spec.thermal, seed))
        rows.append([w / TWO_PI, est.t_intensity, tl, est.t_intensity / tl - 1, est.stderr, seed])
    out.csv("timedomain.csv", ["omega_hz", "t_timedomain", "t_linear", "rel_err", "stderr",
                               "seed"], rows,
            notes=[f"mod_depth = {MOD_DEPTH!r}", "scheme = heun"])


def run_threshold(spec, p, out: Writer):
    hi = max(spec.powers) if spec.powers else 1e-3
    rep = lr.threshold_power(p, bracket=(0.0, hi), branch=spec.branch)
    out.csv("threshold.csv", ["p_threshold_w", "omega_m_eff_hz", "r_factor", "g1", "g2",
                              "fit_residual"],
            [[rep.p_threshold, rep.omega_m_eff / TWO_PI, rep.r_factor, rep.g1, rep.g2,
              rep.fit_residual]])


def validate(path: Path) -> list[str]:
    """Schema and physics checks only; returns report lines. Raises ConfigError."""
    p = load_params(path)
    side = "blue" if p.delta0 > 0 else ("red" if p.delta0 < 0 else "on resonance")
    lines = [f"config {path}: ok",
             f"eta = {p.eta:.6g} ({'under' if p.eta < 0.5 else 'over'}coupled)",
             f"detuning = {p.delta0 / TWO_PI:.6g} Hz ({side})",
             f"gamma / 2pi = {p.gamma / TWO_PI:.6g} Hz",
             f"max time step = {td.max_step(p):.4g} s"]
    if p.delta0 <= 0:
        lines.append("note: no regenerative amplification expected without blue detuning")
    return lines


RUNNERS = {
    "transfer": run_transfer,
    "power_surface": run_power_surface,
    "gain_vs_power": run_gain_vs_power,
    "notch": run_notch,
    "sql": run_sql,
    "timedomain": run_timedomain,
    "threshold": run_threshold,
}


def run(spec: SweepSpec) -> int:
    """Execute one sweep; returns the process exit status."""
    try:
        if spec.mode == "validate":
            for line in validate(spec.params_path):
                print(line)
            return EXIT_OK
        p = load_params(spec.params_path)
        spec.output_dir.mkdir(parents=True, exist_ok=True)
        out = Writer(spec, p)
        with np.errstate(over="raise", invalid="raise", divide="raise"):
            RUNNERS[spec.mode](spec, p, out)
        out.manifest()
        return EXIT_OK
    except (ConfigError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except lr.PhysicsRefusal as exc:
        print(f"refused: {exc}", file=sys.stderr)
        return EXIT_PHYSICS
    except (SolverError, lr.SingularPoint, sq.NoTransduction, td.Divergence,
            FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


def _powers(text: str) -> tuple[float, ...]:
    """Comma list of watts, or start:stop:count."""
    try:
        if ":" in text:
            a, b, n = text.split(":")
            return tuple(float(w) for w in np.linspace(float(a), float(b), int(n)))
        return tuple(float(w) for w in text.split(",") if w.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad power list {text!r}") from None


def _config_path(text: str) -> Path:
    path = Path(text)
    if not path.exists() and text in ("fig2", "fig4", "fig5"):
        return bundled_config(text)
    return path


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="backaction", description=__doc__.splitlines()[0])
    ap.add_argument("mode", choices=MODES)
    ap.add_argument("--config", required=True, type=_config_path,
                    help="config file, or fig2 / fig4 / fig5 for the shipped ones")
    ap.add_argument("--out", type=Path, default=Path("out"))
    ap.add_argument("--points", type=int, default=None)
    ap.add_argument("--span-hz", type=float, default=None, help="full frequency span")
    ap.add_argument("--powers", type=_powers, default=None,
                    help="watts: comma list or start:stop:count")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--branch", choices=("continuation", "low", "high"), default="continuation")
    ap.add_argument("--thermal", choices=("on", "off"), default="off")
    ap.add_argument("--form", choices=sq.FORMS, default="consistent",
                    help="signal-referred imprecision conversion (sql mode)")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        spec = SweepSpec(mode=args.mode, params_path=args.config, output_dir=args.out,
                         points=args.points, span_hz=args.span_hz, powers=args.powers,
                         seed=args.seed, branch=args.branch, thermal=args.thermal == "on",
                         form=args.form)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return run(spec)


if __name__ == "__main__":
    sys.exit(main())

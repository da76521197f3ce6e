"""Direct stochastic integration of the nonlinear cavity/mirror equations.

    da/dt = -[gamma - i (delta0 + g x + kerr |a|^2)] a + sqrt(2 gamma_in) a_in(t)
    d2x/dt2 + Gamma dx/dt + omega_m^2 x = g hbar |a|^2 / m_eff + F_T / m_eff

The oracle is classical: optical vacuum inputs are left out, only the thermal
force is random. It is used to check the linearised transfer function, the
thermal displacement spectrum and the oscillation threshold.

Two schemes are provided. ``"heun"`` is the stochastic Heun (trapezoidal
predictor-corrector) method, second order for the deterministic part.
``"euler"`` is Euler-Maruyama with the velocity updated before the position;
plain explicit Euler is unconditionally unstable for the undamped-looking
oscillator at the step sizes used here (its numerical gain omega_m^2 dt / 2
exceeds Gamma), whereas the semi-implicit update is neutrally stable and still
first order.
"""
from __future__ import annotations

import csv
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numba
import numpy as np
from scipy.constants import hbar, k as k_B
from scipy.signal import welch

from .linear_response import growth_rate
from .params import SystemParams, derive_scales, photon_flux
from .steady_state import MeanFieldSolution, continuation_sweep, solve_mean_field

log = logging.getLogger(__name__)

SCHEMES = {"euler": 0, "heun": 1}
STEP_FRACTION = 50.0


class StepSizeError(ValueError):
    """dt exceeds the stability/accuracy bound of the integrator."""


class Divergence(RuntimeError):
    """The intracavity energy grew past the overflow guard."""

    def __init__(self, message: str, t_blowup: float):
        super().__init__(message)
        self.t_blowup = t_blowup


class InsufficientData(ValueError):
    """Trajectory too short for the requested estimate."""


class NoOnset(RuntimeError):
    """No oscillation onset inside the supplied power bracket."""


@dataclass(frozen=True)
class Drive:
    """Input amplitude a_in(t) = a_in_bar (1 + mod_depth / 2 cos(omega_mod t))."""

    mod_depth: float = 0.0
    omega_mod: float = 0.0


@dataclass(frozen=True)
class Noise:
    thermal: bool = False
    seed: int = 0


@dataclass(frozen=True)
class Trajectory:
    dt: float
    t: np.ndarray
    a: np.ndarray
    x: np.ndarray
    v: np.ndarray
    seed: int
    scheme: str
    stride: int = 1
    a_in_bar: float = 0.0
    drive: Drive = field(default_factory=Drive)
    thermal: bool = False
    gamma_in: float = 0.0

    @property
    def sample_interval(self) -> float:
        return self.dt * self.stride

    def a_in(self) -> np.ndarray:
        d = self.drive
        return self.a_in_bar * (1 + 0.5 * d.mod_depth * np.cos(d.omega_mod * self.t))

    def a_out(self) -> np.ndarray:
        """Transmitted field from the input-output relation, sqrt(photons/s)."""
        return np.sqrt(2 * self.gamma_in) * self.a - self.a_in()


@dataclass(frozen=True)
class TransferEstimate:
    """Lock-in estimate of the intensity transfer at ``omega_mod``.

    ``gain`` is (dP_out / dP_in) sqrt(P_in / P_out), so |gain|^2 is directly
    comparable with the linearised intensity transfer |G+_in|^2.
    """

    omega_mod: float
    gain: complex
    stderr: float
    n_windows: int

    @property
    def t_intensity(self) -> float:
        return abs(self.gain) ** 2


@dataclass(frozen=True)
class Spectrum:
    """Two-sided Welch PSDs, frequency in Hz, densities per Hz."""

    freq: np.ndarray
    s_xx: np.ndarray
    s_pp: np.ndarray
    n_segments: int

    @property
    def x_variance(self) -> float:
        """Integral of s_xx over frequency (m^2)."""
        return float(np.sum(self.s_xx) * (self.freq[1] - self.freq[0]))


@dataclass(frozen=True)
class OnsetReport:
    p_onset: float
    bracket: tuple[float, float]
    slopes: dict = field(default_factory=dict)


# --------------------------------------------------------------------------
# kernel
# --------------------------------------------------------------------------

@numba.njit(cache=True)
def _deriv(a, x, v, ain, gamma, delta0, g, kerr, c_in, wm2, gm, force):
    n = a.real * a.real + a.imag * a.imag
    da = -(gamma - 1j * (delta0 + g * x + kerr * n)) * a + c_in * ain
    acc = -gm * v - wm2 * x + force * n
    return da, v, acc


@numba.njit(cache=True)
def _kernel(a0, x0, v0, dt, n_steps, stride, scheme, seed, sigma_v,
            gamma, delta0, g, kerr, c_in, wm2, gm, force,
            ain_bar, eps, w_mod, guard):
    np.random.seed(seed)
    n_out = n_steps // stride + 2
    a_s = np.empty(n_out, np.complex128)
    x_s = np.empty(n_out)
    v_s = np.empty(n_out)
    a, x, v = a0, x0, v0
    a_s[0], x_s[0], v_s[0] = a, x, v
    sq = np.sqrt(dt)
    j = 1
    for k in range(n_steps):
        t = k * dt
        dw = sigma_v * sq * np.random.standard_normal() if sigma_v > 0 else 0.0
        ain = ain_bar * (1.0 + 0.5 * eps * np.cos(w_mod * t))
        da, dx, dv = _deriv(a, x, v, ain, gamma, delta0, g, kerr, c_in, wm2, gm, force)
        if scheme == 0:
            a = a + dt * da
            v = v + dt * dv + dw
            x = x + dt * v
        else:
            ap = a + dt * da
            xp = x + dt * dx
            vp = v + dt * dv + dw
            ain2 = ain_bar * (1.0 + 0.5 * eps * np.cos(w_mod * (t + dt)))
            da2, dx2, dv2 = _deriv(ap, xp, vp, ain2, gamma, delta0, g, kerr, c_in, wm2, gm, force)
            a = a + 0.5 * dt * (da + da2)
            x = x + 0.5 * dt * (dx + dx2)
            v = v + 0.5 * dt * (dv + dv2) + dw
        n = a.real * a.real + a.imag * a.imag
        if not (n <= guard) or not np.isfinite(x):
            return a_s[:j], x_s[:j], v_s[:j], k + 1
        if (k + 1) % stride == 0:
            a_s[j], x_s[j], v_s[j] = a, x, v
            j += 1
    if n_steps % stride != 0:
        # always keep the end point
        a_s[j], x_s[j], v_s[j] = a, x, v
        j += 1
    return a_s[:j], x_s[:j], v_s[:j], -1


# --------------------------------------------------------------------------
# integration
# --------------------------------------------------------------------------

def max_step(p: SystemParams) -> float:
    """Largest admissible dt: the fastest of 1/gamma, 1/omega_m, 1/|delta0| over 50."""
    rates = [p.gamma, p.omega_m, abs(p.delta0)]
    return 1.0 / (STEP_FRACTION * max(rates))


def integrate(p: SystemParams, drive: Drive = Drive(), noise: Noise = Noise(),
              duration: float = 1e-4, dt: float | None = None, scheme: str = "heun",
              stride: int = 1, start: MeanFieldSolution | tuple | None = None,
              perturb_x: float = 0.0, guard: float = 1e6) -> Trajectory:
    """Integrate the coupled equations from a steady state (or explicit start).

    Parameters
    ----------
    start
        A mean-field solution (default: lowest root at ``p.p_in``) or a raw
        ``(a, x, v)`` tuple.
    perturb_x
        Displacement offset added to the starting point, m.
    guard
        Abort once |a|^2 exceeds ``guard`` times the steady-state photon number.
    """
    if scheme not in SCHEMES:
        raise ValueError(f"scheme must be one of {tuple(SCHEMES)}")
    limit = max_step(p)
    dt = limit if dt is None else float(dt)
    if not 0 < dt <= limit * (1 + 1e-12):
        raise StepSizeError(f"dt={dt:.3e} s exceeds the bound {limit:.3e} s")
    if duration <= 0:
        raise ValueError("duration must be positive")
    n_steps = int(round(duration / dt))
    stride = max(int(stride), 1)

    flux = photon_flux(p.p_in, p.omega_laser)
    a_in_bar = float(np.sqrt(flux))
    if start is None:
        start = solve_mean_field(p)[0]
    if isinstance(start, MeanFieldSolution):
        a0, x0, v0 = start.a_bar, start.x_bar, 0.0
        n_ref = start.n_cav
    else:
        a0, x0, v0 = (complex(start[0]), float(start[1]), float(start[2]))
        n_ref = solve_mean_field(p)[0].n_cav
    x0 += perturb_x
    sigma_v = np.sqrt(2 * p.gamma_m * k_B * p.temperature / p.m_eff) if noise.thermal else 0.0
    guard_n = guard * max(n_ref, 1.0)

    a, x, v, blow = _kernel(
        complex(a0), float(x0), float(v0), dt, n_steps, stride, SCHEMES[scheme],
        int(noise.seed), float(sigma_v),
        p.gamma, p.delta0, p.g, complex(p.kerr), np.sqrt(2 * p.gamma_in),
        p.omega_m**2, p.gamma_m, p.g * hbar / p.m_eff,
        a_in_bar, float(drive.mod_depth), float(drive.omega_mod), float(guard_n))
    if blow >= 0:
        t_b = blow * dt
        raise Divergence(f"|a|^2 exceeded {guard:g} x steady state at t={t_b:.4e} s; "
                         "presumably above threshold", t_b)
    t = np.arange(len(x)) * dt * stride
    if n_steps % stride != 0:
        t[-1] = n_steps * dt
    return Trajectory(dt=dt, t=t, a=a, x=x, v=v, seed=int(noise.seed), scheme=scheme,
                      stride=stride, a_in_bar=a_in_bar, drive=drive,
                      thermal=noise.thermal, gamma_in=p.gamma_in)


def transient_time(sol: MeanFieldSolution, p: SystemParams, decay_times: float = 20.0) -> float:
    """``decay_times`` mechanical energy decay times 1/Gamma_eff of the loaded mode."""
    rate = -2 * growth_rate(sol, p)
    if rate <= 0:
        raise Divergence("operating point is not stable; no transient time exists", 0.0)
    return decay_times / min(rate, p.gamma_m * 1e6)


# --------------------------------------------------------------------------
# estimators
# --------------------------------------------------------------------------

def _fit_tone(t, y, omega):
    """Least-squares amplitude of exp(i omega t) in y (plus a constant), and the constant."""
    design = np.column_stack([np.ones_like(t), np.cos(omega * t), np.sin(omega * t)])
    (c0, c, s), *_ = np.linalg.lstsq(design, y, rcond=None)
    return c0, c - 1j * s


def measure_transfer(traj: Trajectory, omega_mod: float | None = None, discard: float = 0.0,
                     n_windows: int = 8) -> TransferEstimate:
    """Lock-in demodulation of |a_out|^2 against |a_in|^2 at ``omega_mod``.

    The record after ``discard`` seconds is split into ``n_windows`` windows
    of whole modulation periods; the spread over windows gives the standard
    error.
    """
    omega = traj.drive.omega_mod if omega_mod is None else float(omega_mod)
    if traj.drive.mod_depth == 0 or omega <= 0:
        raise InsufficientData("trajectory carries no input modulation")
    keep = traj.t >= discard
    t = traj.t[keep]
    period = 2 * np.pi / omega
    if t.size < 2 or (t[-1] - t[0]) < 100 * period:
        raise InsufficientData("need at least 100 modulation periods after the transient")
    p_out = np.abs(traj.a_out()[keep]) ** 2
    p_in = np.abs(traj.a_in()[keep]) ** 2
    span = (t[-1] - t[0]) / n_windows
    span = max(np.floor(span / period), 1) * period
    ratios = []
    for k in range(n_windows):
        sel = (t >= t[0] + k * span) & (t < t[0] + (k + 1) * span)
        if sel.sum() < 8:
            continue
        dc_out, z_out = _fit_tone(t[sel], p_out[sel], omega)
        dc_in, z_in = _fit_tone(t[sel], p_in[sel], traj.drive.omega_mod)
        ratios.append(z_out / z_in * np.sqrt(dc_in / dc_out))
    ratios = np.array(ratios)
    gain = complex(np.mean(ratios))
    err = float(np.std(np.abs(ratios), ddof=1) / np.sqrt(len(ratios))) if len(ratios) > 1 else np.nan
    return TransferEstimate(omega, gain, err, len(ratios))


def simulate_transfer(p: SystemParams, omega_mod: float, mod_depth: float = 1e-3,
                      sol: MeanFieldSolution | None = None, periods: int = 400,
                      decay_times: float = 20.0, scheme: str = "heun",
                      dt: float | None = None, noise: Noise = Noise()) -> TransferEstimate:
    """Integrate from the steady state with modulation on and lock in on the output."""
    sol = solve_mean_field(p)[0] if sol is None else sol
    # the optical transient from switching the modulation on, then the mechanical one
    t_skip = transient_time(sol, p, decay_times) + 50 / p.gamma
    duration = t_skip + periods * 2 * np.pi / omega_mod
    dt = max_step(p) if dt is None else dt
    stride = max(int((2 * np.pi / omega_mod) / dt / 40), 1)
    traj = integrate(p, Drive(mod_depth, omega_mod), noise, duration, dt=dt,
                     scheme=scheme, stride=stride, start=sol)
    return measure_transfer(traj, discard=t_skip)


def estimate_psd(traj: Trajectory, segments: int = 64, discard: float = 0.0) -> Spectrum:
    """Two-sided Welch PSDs of x(t) and of the output photon flux |a_out|^2.

    ``segments`` is the number of half-overlapping Hann segments.
    """
    if segments < 16:
        raise InsufficientData("at least 16 Welch segments are required")
    keep = traj.t >= discard
    x = traj.x[keep]
    nper = int(2 * x.size // (segments + 1))
    nper -= nper % 2
    if nper < 16:
        raise InsufficientData("trajectory too short for the requested segments")
    fs = 1.0 / traj.sample_interval
    kw = dict(fs=fs, nperseg=nper, noverlap=nper // 2, return_onesided=False,
              scaling="density", detrend="constant")
    f, s_xx = welch(x, **kw)
    _, s_pp = welch(np.abs(traj.a_out()[keep]) ** 2, **kw)
    order = np.argsort(f)
    n_seg = 1 + (x.size - nper) // (nper // 2)
    if n_seg < 16:
        raise InsufficientData(f"only {n_seg} Welch segments")
    return Spectrum(f[order], s_xx[order].real, s_pp[order].real, int(n_seg))


def equipartition_variance(p: SystemParams) -> float:
    """k_B T / (m_eff omega_m^2), m^2."""
    return k_B * p.temperature / (p.m_eff * p.omega_m**2)


# --------------------------------------------------------------------------
# oscillation onset
# --------------------------------------------------------------------------

def growth_slope(p: SystemParams, sol: MeanFieldSolution, decay_times: float = 10.0,
                 scheme: str = "heun") -> float:
    """Log-amplitude slope (1/s) of a 1e-6 x_zp kick over ``decay_times`` / Gamma."""
    s = derive_scales(p)
    window = decay_times / p.gamma_m
    dt = max_step(p)
    stride = max(int((2 * np.pi / p.omega_m) / dt / 16), 1)
    try:
        traj = integrate(p, duration=window, dt=dt, scheme=scheme, stride=stride,
                         start=sol, perturb_x=1e-6 * s.x_zp)
    except Divergence:
        return np.inf
    # skip the optical transient, then fit log of the mechanical amplitude
    keep = traj.t > 50 / p.gamma
    dx = traj.x[keep] - sol.x_bar
    amp2 = dx**2 + (traj.v[keep] / p.omega_m) ** 2
    slope = np.polyfit(traj.t[keep], 0.5 * np.log(amp2), 1)[0]
    return float(slope)


def oscillation_onset(p: SystemParams, powers, rtol: float = 0.02,
                      branch: str = "continuation", scheme: str = "heun") -> OnsetReport:
    """Lowest power whose noise-free trajectory grows, bisected to ``rtol``."""
    powers = np.asarray(sorted(float(w) for w in powers))
    sols = continuation_sweep(p, powers, branch=branch)
    slopes = {}
    prev = None
    for w, sol in zip(powers, sols):
        k = growth_slope(p.with_power(w), sol, scheme=scheme)
        slopes[float(w)] = k
        if k > 0:
            break
        prev = (w, sol)
    else:
        raise NoOnset("no growing trajectory in the power bracket")
    if prev is None:
        raise NoOnset("trajectory already grows at the lowest power")
    lo, hi = prev[0], w
    ref = prev[1]
    while hi - lo > rtol * hi:
        mid = 0.5 * (lo + hi)
        roots = solve_mean_field(p.with_power(mid))
        sol = min(roots, key=lambda s_: abs(s_.n_cav - ref.n_cav))
        k = growth_slope(p.with_power(mid), sol, scheme=scheme)
        slopes[float(mid)] = k
        if k > 0:
            hi = mid
        else:
            lo, ref = mid, sol
    return OnsetReport(0.5 * (lo + hi), (float(lo), float(hi)), slopes)


# --------------------------------------------------------------------------
# export
# --------------------------------------------------------------------------

def write_trajectory_csv(traj: Trajectory, path: str | Path, p: SystemParams) -> Path:
    """CSV with columns t, re_a, im_a, x, v; header echoes parameters and seed."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        for k, v in asdict(p).items():
            fh.write(f"# {k} = {v!r}\n")
        fh.write(f"# dt = {traj.dt!r}\n# stride = {traj.stride}\n# seed = {traj.seed}\n"
                 f"# scheme = {traj.scheme}\n# thermal = {traj.thermal}\n"
                 f"# mod_depth = {traj.drive.mod_depth!r}\n# omega_mod = {traj.drive.omega_mod!r}\n")
        w = csv.writer(fh)
        w.writerow(["t", "re_a", "im_a", "x", "v"])
        for row in zip(traj.t, traj.a.real, traj.a.imag, traj.x, traj.v):
            w.writerow([f"{val:.17g}" for val in row])
    return path

"""Linearised frequency response of the optomechanical amplifier.

Conventions
-----------
Frequencies with a tilde are normalised by the total optical decay gamma.
Fourier transforms follow d/dt -> i*Omega. Vacuum inputs (coupling and loss
ports) have unit symmetrised quadrature PSD, the thermal force noise xi has
unit two-sided PSD, and every spectrum is two-sided in Omega.

The coefficient set follows the structure C1..C6 / H1..H6 / G+- of the
standard input-output treatment. The radiation-pressure factor that carries
mirror motion onto the field is (J + i); C3 carries sqrt(2 eta) so that the
thermal term is referenced to unit vacuum noise, while C6 keeps sqrt(eta) so
that the signal-to-SQL ratio takes the 1 / (4 Omega_m chi_eff) form used by
:mod:`backaction.sql_sensitivity`. All of these were checked against
:mod:`backaction.oracle`, which solves the linearised equations directly.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize_scalar

from .params import SystemParams, derive_scales
from .steady_state import MeanFieldSolution, continuation_sweep, solve_mean_field


class PhysicsRefusal(ValueError):
    """The requested operating point is outside the linearised model (at or above threshold)."""


class SingularPoint(ArithmeticError):
    """A kernel denominator vanished."""


# --------------------------------------------------------------------------
# data containers
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class OpticalKernels:
    J_pos: np.ndarray
    J_neg: np.ndarray
    chi_opt_pos: np.ndarray
    chi_opt_neg: np.ndarray


@dataclass(frozen=True)
class OutputCoefficients:
    c1: np.ndarray
    c2: np.ndarray
    c3: np.ndarray
    c4: np.ndarray
    c5: np.ndarray
    c6: np.ndarray

    def as_tuple(self):
        return (self.c1, self.c2, self.c3, self.c4, self.c5, self.c6)


@dataclass(frozen=True)
class QuadratureGains:
    h1: np.ndarray
    h2: np.ndarray
    h3: np.ndarray
    h4: np.ndarray
    h5: np.ndarray
    h6: np.ndarray

    @property
    def g_in_plus(self):
        return (self.h1 + self.h2) / 2

    @property
    def g_in_minus(self):
        return (self.h1 - self.h2) / 2

    @property
    def g_loss_plus(self):
        return (self.h4 + self.h5) / 2

    @property
    def g_loss_minus(self):
        return (self.h4 - self.h5) / 2

    def vacuum_sum(self):
        """|G+_in|^2 + |G-_in|^2 + |G+_loss|^2 + |G-_loss|^2."""
        return (abs(self.g_in_plus) ** 2 + abs(self.g_in_minus) ** 2
                + abs(self.g_loss_plus) ** 2 + abs(self.g_loss_minus) ** 2)


@dataclass(frozen=True)
class ResponseSample:
    omega: np.ndarray
    chi_bare: np.ndarray
    chi_eff: np.ndarray
    c: OutputCoefficients
    h: QuadratureGains
    g_in_plus: np.ndarray
    g_in_minus: np.ndarray
    g_loss_plus: np.ndarray
    g_loss_minus: np.ndarray
    t_intensity: np.ndarray
    t_background: np.ndarray
    s_out: np.ndarray
    s_xx: np.ndarray

    @property
    def t_db(self):
        return 10 * np.log10(self.t_intensity)

    @property
    def gain_db(self):
        """Transfer relative to the optical background (mechanical path removed), dB."""
        return 10 * np.log10(self.t_intensity / self.t_background)


@dataclass(frozen=True)
class ThresholdReport:
    omega_m_eff: float
    r_factor: float
    g1: float
    g2: float
    p_threshold: float | None = None
    fit_residual: float = 0.0
    p_in: float = 0.0
    omega_peak: float = 0.0


# --------------------------------------------------------------------------
# kernels
# --------------------------------------------------------------------------

class _Ctx:
    """Normalised constants shared by every per-frequency kernel."""

    def __init__(self, sol: MeanFieldSolution, p: SystemParams):
        s = derive_scales(p)
        self.gamma = p.gamma
        self.eta = sol.eta
        self.K = sol.K
        self.Dt = sol.delta_tilde
        self.M = sol.M
        self.L = sol.L
        self.sqrtL = sol.a_bar / abs(sol.a_bar) if abs(sol.a_bar) > 0 else np.sqrt(sol.L)
        self.wm = s.omega_m_tilde
        self.Gm = s.gamma_m_tilde
        self.n_bar = s.n_bar
        self.x_zp = s.x_zp
        # phase of the mean output field: the self-homodyne local oscillator
        self.e_hat = sol.L2 / abs(sol.L2) if abs(sol.L2) > 0 else 1.0 + 0j

    def J(self, wt):
        den = 1 + 1j * (wt + np.conj(self.Dt) + np.conj(self.K))
        return self.K / den

    def chi_opt(self, wt):
        den = 1 + 1j * (wt - self.Dt - self.K) - np.conj(self.K) * self.J(wt)
        if np.any(den == 0):
            raise SingularPoint("optical susceptibility pole on the real axis")
        return 1 / den

    def chi(self, wt):
        return 1 / (self.wm**2 - wt**2 + 1j * wt * self.Gm)

    def backaction(self, wt):
        """Optical contribution subtracted from 1/chi to form 1/chi_eff (without 2 Omega_m M^2)."""
        return (np.conj(self.chi_opt(-wt)) * (np.conj(self.J(-wt)) - 1j)
                + self.chi_opt(wt) * (self.J(wt) + 1j))

    def chi_eff(self, wt, m_scale=1.0):
        M = self.M * m_scale
        inv = 1 / self.chi(wt) - 2 * self.wm * M**2 * self.backaction(wt)
        if np.any(inv == 0):
            raise SingularPoint("effective susceptibility pole on the real axis")
        return 1 / inv

    def coefficients(self, wt, mechanics=True):
        eta, M, L, sL, wm = self.eta, self.M, self.L, self.sqrtL, self.wm
        co = self.chi_opt(wt)
        co_m = np.conj(self.chi_opt(-wt))
        j = self.J(wt)
        j_m = np.conj(self.J(-wt))
        ce = self.chi_eff(wt) if mechanics else np.zeros_like(co)
        loop = 2 * wm * ce * M**2 * (j + 1j)
        direct = 2 * co * (1 + loop * (co - 1j * j_m * co_m))
        conj_path = 2 * co * L * (1j * j + loop * (co_m + 1j * j * co))
        motion = co * M * sL * (j + 1j)
        c1 = eta * direct - 1
        c2 = eta * conj_path
        c3 = np.sqrt(2 * eta) * motion * 2 * wm * ce * np.sqrt(self.n_bar * self.Gm)
        c4 = np.sqrt(eta * (1 - eta)) * direct
        c5 = np.sqrt(eta * (1 - eta)) * conj_path
        c6 = np.sqrt(eta) * motion * (ce / self.chi(wt) if mechanics else 1.0)
        return OutputCoefficients(c1, c2, c3, c4, c5, c6)

    def gains(self, wt, mechanics=True):
        cp = self.coefficients(wt, mechanics).as_tuple()
        cm = self.coefficients(-wt, mechanics).as_tuple()
        e = self.e_hat

        def h(i, k):
            return e * np.conj(cm[k]) + np.conj(e) * cp[i]

        return QuadratureGains(h(0, 1), h(1, 0), h(2, 2), h(3, 4), h(4, 3), h(5, 5))

    def displacement_terms(self, wt):
        """Coefficients of x/x_zp on (a_in, a_in^dag, a_loss, a_loss^dag, xi)."""
        co = self.chi_opt(wt)
        co_m = np.conj(self.chi_opt(-wt))
        j = self.J(wt)
        j_m = np.conj(self.J(-wt))
        pre = 2 * self.wm * self.chi_eff(wt)
        plus = pre * self.M * np.conj(self.sqrtL) * (co - 1j * j_m * co_m)
        minus = pre * self.M * self.sqrtL * (co_m + 1j * j * co)
        a_in, l_in = np.sqrt(2 * self.eta), np.sqrt(2 * (1 - self.eta))
        return (a_in * plus, a_in * minus, l_in * plus, l_in * minus,
                pre * np.sqrt(self.n_bar * self.Gm))


def _wt(p: SystemParams, omega):
    return np.asarray(omega, dtype=float) / p.gamma


def optical_kernels(sol: MeanFieldSolution, p: SystemParams, omega) -> OpticalKernels:
    ctx = _Ctx(sol, p)
    wt = _wt(p, omega)
    return OpticalKernels(ctx.J(wt), ctx.J(-wt), ctx.chi_opt(wt), ctx.chi_opt(-wt))


def bare_susceptibility(p: SystemParams, omega):
    """Dimensionless mechanical susceptibility gamma^2 / (Omega_m^2 - Omega^2 + i Omega Gamma)."""
    omega = np.asarray(omega, dtype=float)
    return p.gamma**2 / (p.omega_m**2 - omega**2 + 1j * omega * p.gamma_m)


def effective_susceptibility(sol: MeanFieldSolution, p: SystemParams, omega, m_scale: float = 1.0):
    return _Ctx(sol, p).chi_eff(_wt(p, omega), m_scale)


def output_coefficients(sol: MeanFieldSolution, p: SystemParams, omega) -> OutputCoefficients:
    return _Ctx(sol, p).coefficients(_wt(p, omega))


def quadrature_gains(sol: MeanFieldSolution, p: SystemParams, omega) -> QuadratureGains:
    return _Ctx(sol, p).gains(_wt(p, omega))


def intensity_transfer(sol: MeanFieldSolution, p: SystemParams, omega):
    """|G+_in|^2, the amplitude-modulation transfer seen by direct detection."""
    return np.abs(quadrature_gains(sol, p, omega).g_in_plus) ** 2


def background_transfer(sol: MeanFieldSolution, p: SystemParams, omega):
    """Transfer with the mechanical path removed, used to normalise gain traces."""
    g = _Ctx(sol, p).gains(_wt(p, omega), mechanics=False)
    return np.abs(g.g_in_plus) ** 2


def output_spectrum(sol: MeanFieldSolution, p: SystemParams, omega):
    """Amplitude-quadrature PSD of the output, vacuum = 1."""
    h = quadrature_gains(sol, p, omega)
    return h.vacuum_sum() + np.abs(h.h3) ** 2


def displacement_spectrum(sol: MeanFieldSolution, p: SystemParams, omega):
    """Two-sided displacement PSD in m^2/Hz (integrate over Omega/2pi for <x^2>)."""
    ctx = _Ctx(sol, p)
    a, ad, l, ld, xi = ctx.displacement_terms(_wt(p, omega))
    s_tilde = 0.5 * (abs(a) ** 2 + abs(ad) ** 2 + abs(l) ** 2 + abs(ld) ** 2) + abs(xi) ** 2
    return ctx.x_zp**2 * s_tilde / p.gamma


# --------------------------------------------------------------------------
# stability
# --------------------------------------------------------------------------

def jacobian(sol: MeanFieldSolution, p: SystemParams) -> np.ndarray:
    """Linearised drift of (da, da*, x/x_zp, dx/dtau) in units of gamma."""
    ctx = _Ctx(sol, p)
    K, Dt, M, sL = ctx.K, ctx.Dt, ctx.M, ctx.sqrtL
    A = np.zeros((4, 4), complex)
    A[0, 0] = -(1 - 1j * Dt - 1j * K)
    A[0, 1] = 1j * K * ctx.L
    A[0, 2] = 1j * M * sL
    A[1, 1] = -(1 + 1j * np.conj(Dt) + 1j * np.conj(K))
    A[1, 0] = -1j * np.conj(K) * np.conj(ctx.L)
    A[1, 2] = -1j * M * np.conj(sL)
    A[2, 3] = 1
    A[3, 2] = -ctx.wm**2
    A[3, 3] = -ctx.Gm
    A[3, 0] = 2 * ctx.wm * M * np.conj(sL)
    A[3, 1] = 2 * ctx.wm * M * sL
    return A


def growth_rate(sol: MeanFieldSolution, p: SystemParams) -> float:
    """Largest real part of the linearised eigenvalues, rad/s. Positive means unstable."""
    return float(np.max(np.linalg.eigvals(jacobian(sol, p)).real) * p.gamma)


def is_stable(sol: MeanFieldSolution, p: SystemParams) -> bool:
    return growth_rate(sol, p) < 0


def require_below_threshold(sol: MeanFieldSolution, p: SystemParams) -> None:
    if not is_stable(sol, p):
        raise PhysicsRefusal(
            f"operating point at p_in={sol.p_in:.4g} W is at or above the oscillation "
            "threshold; the linearised response is undefined there")


def response(sol: MeanFieldSolution, p: SystemParams, omega, check: bool = True) -> ResponseSample:
    """Every per-frequency quantity at once."""
    if check:
        require_below_threshold(sol, p)
    ctx = _Ctx(sol, p)
    omega = np.asarray(omega, dtype=float)
    wt = omega / p.gamma
    h = ctx.gains(wt)
    bg = ctx.gains(wt, mechanics=False)
    a, ad, l, ld, xi = ctx.displacement_terms(wt)
    s_tilde = 0.5 * (abs(a) ** 2 + abs(ad) ** 2 + abs(l) ** 2 + abs(ld) ** 2) + abs(xi) ** 2
    return ResponseSample(
        omega=omega,
        chi_bare=ctx.chi(wt),
        chi_eff=ctx.chi_eff(wt),
        c=ctx.coefficients(wt),
        h=h,
        g_in_plus=h.g_in_plus,
        g_in_minus=h.g_in_minus,
        g_loss_plus=h.g_loss_plus,
        g_loss_minus=h.g_loss_minus,
        t_intensity=np.abs(h.g_in_plus) ** 2,
        t_background=np.abs(bg.g_in_plus) ** 2,
        s_out=h.vacuum_sum() + np.abs(h.h3) ** 2,
        s_xx=ctx.x_zp**2 * s_tilde / p.gamma,
    )


def default_grid(p: SystemParams, center: float | None = None, points: int = 4001,
                 half_span: float | None = None) -> np.ndarray:
    """Linear grid of ``points`` frequencies, centre +- 50 Gamma by default."""
    center = p.omega_m if center is None else center
    half_span = 50 * p.gamma_m if half_span is None else half_span
    return np.linspace(center - half_span, center + half_span, points)


# --------------------------------------------------------------------------
# Lorentzian fit and threshold
# --------------------------------------------------------------------------

def _peak_frequency(ctx: _Ctx, p: SystemParams, m_scale: float) -> float:
    grid = default_grid(p, points=2001, half_span=60 * p.gamma_m)
    mag = np.abs(ctx.chi_eff(grid / p.gamma, m_scale))
    k = int(np.argmax(mag))
    if k in (0, grid.size - 1):
        return float(grid[k])
    res = minimize_scalar(lambda w: -abs(ctx.chi_eff(w / p.gamma, m_scale)),
                          bracket=(grid[k - 1], grid[k], grid[k + 1]),
                          method="golden", tol=1e-10)
    return float(res.x)


def _lorentz_fit(ctx: _Ctx, p: SystemParams, m_scale: float):
    """Least-squares fit of gamma^2/chi_eff to (Om'^2 - Om^2 + i B Om) / G1."""
    w_peak = _peak_frequency(ctx, p, m_scale)
    omega = np.linspace(w_peak - 10 * p.gamma_m, w_peak + 10 * p.gamma_m, 401)
    y = p.gamma**2 / ctx.chi_eff(omega / p.gamma, m_scale)
    # weight the resonant core more than the wings
    weight = 1 / np.sqrt(np.abs(y) ** 2 + (w_peak * p.gamma_m) ** 2)
    u = (omega**2 - w_peak**2) / (w_peak * p.gamma_m)
    design = np.column_stack([np.ones_like(u), u]) * weight[:, None]
    (c0, c1), *_ = np.linalg.lstsq(design, y.real * weight, rcond=None)
    a2 = c1 / (w_peak * p.gamma_m)
    a0 = c0 - a2 * w_peak**2
    b1 = np.sum(weight**2 * omega * y.imag) / np.sum(weight**2 * omega**2)
    g1 = -1 / a2
    model = a0 + a2 * omega**2 + 1j * b1 * omega
    resid = float(np.sqrt(np.mean(np.abs((model - y) * weight) ** 2)))
    return dict(g1=g1, omega_sq=a0 * g1, damping=b1 * g1, residual=resid, peak=w_peak)


def fit_lorentzian(sol: MeanFieldSolution, p: SystemParams) -> ThresholdReport:
    """Shifted resonance, amplification factor R and the constants G1, G2.

    Only the product G2 (1 - R) is fixed by a single fit; G2 is taken from a
    second fit with the optomechanical drive M scaled down by 1e3.
    """
    ctx = _Ctx(sol, p)
    fit = _lorentz_fit(ctx, p, 1.0)
    if sol.M > 0:
        g2 = _lorentz_fit(ctx, p, 1e-3)["damping"] / p.gamma_m
    else:
        g2 = fit["damping"] / p.gamma_m
    r_factor = 1 - fit["damping"] / (g2 * p.gamma_m)
    omega_sq = fit["omega_sq"]
    return ThresholdReport(
        omega_m_eff=float(np.sqrt(omega_sq)) if omega_sq > 0 else float("nan"),
        r_factor=float(r_factor),
        g1=float(fit["g1"]),
        g2=float(g2),
        fit_residual=fit["residual"],
        p_in=sol.p_in,
        omega_peak=fit["peak"],
    )


def amplification_factor(sol: MeanFieldSolution, p: SystemParams) -> float:
    return fit_lorentzian(sol, p).r_factor


def threshold_power(p: SystemParams, bracket=(0.0, 1e-3), branch: str = "continuation",
                    rtol: float = 1e-7, ladder_points: int = 64) -> ThresholdReport:
    """Input power at which R = 1, by bisection on the continued mean field.

    Returns a report with ``p_threshold=None`` when R stays below 1 throughout
    the bracket.
    """
    lo, hi = float(bracket[0]), float(bracket[1])
    if not 0 <= lo < hi:
        raise ValueError("bracket must satisfy 0 <= low < high")
    ladder = np.linspace(lo, hi, ladder_points)
    sols = continuation_sweep(p, ladder, branch=branch)

    def state(power):
        k = int(np.searchsorted(ladder, power, side="right") - 1)
        k = min(max(k, 0), len(sols) - 1)
        roots = solve_mean_field(p.with_power(power))
        if branch in ("low", "high"):
            return roots[0] if branch == "low" else roots[-1]
        return min(roots, key=lambda s: abs(s.n_cav - sols[k].n_cav))

    def r_of(power):
        pp = p.with_power(power)
        return fit_lorentzian(state(power), pp).r_factor

    r_vals = [fit_lorentzian(s, p.with_power(w)).r_factor for s, w in zip(sols, ladder)]
    if r_vals[0] >= 1:
        raise PhysicsRefusal("R >= 1 already at the low end of the bracket")
    above = [k for k, r in enumerate(r_vals) if r >= 1]
    if not above:
        w = ladder[-1]
        rep = fit_lorentzian(sols[-1], p.with_power(w))
        return ThresholdReport(rep.omega_m_eff, rep.r_factor, rep.g1, rep.g2, None,
                               rep.fit_residual, w, rep.omega_peak)
    a, b = ladder[above[0] - 1], ladder[above[0]]
    while (b - a) > rtol * b:
        mid = 0.5 * (a + b)
        if r_of(mid) < 1:
            a = mid
        else:
            b = mid
    p_th = 0.5 * (a + b)
    rep = fit_lorentzian(state(p_th), p.with_power(p_th))
    return ThresholdReport(rep.omega_m_eff, rep.r_factor, rep.g1, rep.g2, p_th,
                           rep.fit_residual, p_th, rep.omega_peak)

"""Displacement sensitivity of the self-homodyne readout relative to the SQL."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.constants import hbar

from .linear_response import _Ctx, require_below_threshold
from .params import SystemParams, derive_scales
from .steady_state import MeanFieldSolution, continuation_sweep


class NoTransduction(ZeroDivisionError):
    """The signal gain H6 vanishes, so the readout carries no displacement information."""


@dataclass(frozen=True)
class SensitivitySample:
    """Per-frequency sensitivity.

    ``s_x_sig`` is dimensionless (units of x_zp^2 per unit normalised
    bandwidth). ``s_x_sig_si`` converts it with x_zp^2 / (2 gamma) to m^2/Hz
    (``form="consistent"``) or with x_zp^2 / sqrt(2 gamma) taken literally
    (``form="literal"``, not an m^2/Hz density). ``ratio``
    is always the closed form sum|G|^2 / (4 Omega_m |chi_eff| |H6|^2).
    """

    omega: np.ndarray
    h6: np.ndarray
    s_x_sig: np.ndarray
    s_x_sig_si: np.ndarray
    s_sql: np.ndarray
    ratio: np.ndarray
    form: str = "consistent"


@dataclass(frozen=True)
class BandReport:
    intervals: list[tuple[float, float]]
    omega_min: float
    ratio_min: float

    @property
    def empty(self) -> bool:
        return not self.intervals


def _pieces(sol: MeanFieldSolution, p: SystemParams, omega, thermal: bool):
    ctx = _Ctx(sol, p)
    wt = np.asarray(omega, dtype=float) / p.gamma
    h = ctx.gains(wt)
    noise = h.vacuum_sum()
    if thermal:
        noise = noise + np.abs(h.h3) ** 2
    return ctx, wt, h, noise


def signal_estimate_gain(sol: MeanFieldSolution, p: SystemParams, omega):
    """Factor x_zp / (sqrt(2 gamma) H6) turning X+_out into a displacement estimate."""
    ctx, _, h, _ = _pieces(sol, p, omega, thermal=False)
    if np.any(h.h6 == 0):
        raise NoTransduction("H6 = 0: no displacement transduction at this operating point")
    return ctx.x_zp / (np.sqrt(2 * p.gamma) * h.h6)


FORMS = ("consistent", "literal")


def sensitivity(sol: MeanFieldSolution, p: SystemParams, omega, thermal: bool = False,
                form: str = "consistent", check: bool = True) -> SensitivitySample:
    """Signal-referred imprecision and its ratio to hbar |chi_eff|.

    Thermal force noise is left out by default (cryogenically cooled mirror);
    ``thermal=True`` adds the |H3|^2 term.
    """
    if form not in FORMS:
        raise ValueError(f"form must be one of {FORMS}")
    if check:
        require_below_threshold(sol, p)
    ctx, wt, h, noise = _pieces(sol, p, omega, thermal)
    if np.any(h.h6 == 0):
        raise NoTransduction("H6 = 0: no displacement transduction at this operating point")
    s = derive_scales(p)
    chi_eff = ctx.chi_eff(wt)
    h6_sq = np.abs(h.h6) ** 2
    s_dimless = noise / h6_sq
    scale = 2 * p.gamma if form == "consistent" else np.sqrt(2 * p.gamma)
    s_si = s.x_zp**2 * s_dimless / scale
    s_sql = hbar * np.abs(chi_eff) / (p.m_eff * p.gamma**2)
    ratio = noise / (4 * s.omega_m_tilde * np.abs(chi_eff) * h6_sq)
    return SensitivitySample(
        omega=np.asarray(omega, dtype=float),
        h6=h.h6,
        s_x_sig=s_dimless,
        s_x_sig_si=s_si,
        s_sql=s_sql,
        ratio=ratio,
        form=form,
    )


def sql_band(sample: SensitivitySample) -> BandReport:
    """Contiguous frequency intervals where the ratio is below one."""
    w = sample.omega
    r = sample.ratio
    below = r < 1
    intervals = []
    k = 0
    while k < len(w):
        if not below[k]:
            k += 1
            continue
        start = k
        while k + 1 < len(w) and below[k + 1]:
            k += 1
        stop = k
        lo = w[start] if start == 0 else _cross(w, r, start - 1)
        hi = w[stop] if stop == len(w) - 1 else _cross(w, r, stop)
        intervals.append((float(lo), float(hi)))
        k += 1
    j = int(np.argmin(r))
    return BandReport(intervals, float(w[j]), float(r[j]))


def sql_surface(p: SystemParams, powers, omega, branch: str = "continuation",
                thermal: bool = False, form: str = "consistent") -> list[SensitivitySample]:
    """Sensitivity at each power of an ascending ladder, one sample per power."""
    sols = continuation_sweep(p, powers, branch=branch)
    return [sensitivity(s, p.with_power(w), omega, thermal=thermal, form=form)
            for s, w in zip(sols, powers)]


def _cross(w, r, k):
    """Frequency between samples k and k+1 where the ratio crosses 1."""
    return w[k] + (1 - r[k]) * (w[k + 1] - w[k]) / (r[k + 1] - r[k])

"""Self-consistent mean field of the driven Kerr/radiation-pressure cavity.

The intracavity photon number n solves

    n * (gamma_eff(n)**2 + delta_bar(n)**2) = 2 * gamma_in * flux_in

with delta_bar(n) = delta0 + g * x_bar(n) + Re(kerr) * n,
x_bar(n) = g * hbar * n / (m_eff * omega_m**2) and
gamma_eff(n) = gamma + Im(kerr) * n. The left side is a cubic in n, so there
are one or three physical roots.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np
from scipy.constants import hbar
from scipy.optimize import brentq

from .params import SystemParams, derive_scales, photon_flux

log = logging.getLogger(__name__)


class SolverError(RuntimeError):
    """Root finding failed to reach the requested residual."""


@dataclass(frozen=True)
class MeanFieldSolution:
    """Steady state of the cavity field and mirror.

    ``delta_bar`` is the real effective detuning and ``gamma_eff`` the
    intensity-broadened decay. ``delta_tilde`` is the complex normalised
    detuning (delta_bar + i Im(kerr) n) / gamma, so that
    a_bar = sqrt(2 gamma_in) a_in / (gamma (1 - i delta_tilde)).
    """

    a_bar: complex
    n_cav: float
    delta_bar: float
    gamma_eff: float
    x_bar: float
    K: complex
    M: float
    L: complex
    L2: complex
    delta_tilde: complex
    eta: float
    a_in: float
    p_in: float
    branch_id: int = 0
    n_roots: int = 1
    branch_jump: bool = False
    residual: float = 0.0


def _cubic(p: SystemParams, flux: float) -> np.ndarray:
    """Coefficients (highest first) of n*(gamma_eff^2 + delta_bar^2) - 2 gamma_in flux."""
    shift = p.g**2 * hbar / (p.m_eff * p.omega_m**2) + p.kerr.real
    loss = p.kerr.imag
    return np.array([
        loss**2 + shift**2,
        2.0 * (p.gamma * loss + p.delta0 * shift),
        p.gamma**2 + p.delta0**2,
        -2.0 * p.gamma_in * flux,
    ])


def _quadratic_roots(a: float, b: float, c: float) -> list[float]:
    """Real roots of a n^2 + b n + c without cancellation or overflow from tiny a."""
    with np.errstate(over="ignore", divide="ignore"):
        if a == 0:
            return [-c / b] if b != 0 else []
        disc = b * b - 4 * a * c
        if disc < 0:
            return []
        q = -0.5 * (b + np.copysign(np.sqrt(disc), b))
        return [q / a, c / q] if q != 0 else [0.0]


def _photon_number_roots(p: SystemParams, flux: float) -> list[float]:
    coeffs = _cubic(p, flux)
    if flux == 0.0:
        return [0.0]
    shift = p.g**2 * hbar / (p.m_eff * p.omega_m**2) + p.kerr.real
    rhs = 2.0 * p.gamma_in * flux

    def f(n):
        # factored form keeps the near-resonance cancellation accurate
        return n * ((p.gamma + p.kerr.imag * n) ** 2 + (p.delta0 + shift * n) ** 2) - rhs

    crit = [r for r in _quadratic_roots(3 * coeffs[0], 2 * coeffs[1], coeffs[2])
            if r > 0 and np.isfinite(r)]
    hi = 2.0 * p.gamma_in * flux / p.gamma**2
    hi = max([hi] + [2.0 * c for c in crit])
    while f(hi) <= 0:
        hi *= 2.0
    nodes = sorted(set([0.0, hi] + [c for c in crit if c < hi]))
    roots = []
    for lo, up in zip(nodes[:-1], nodes[1:]):
        flo, fup = f(lo), f(up)
        if flo == 0.0:
            roots.append(lo)
        elif flo * fup < 0:
            roots.append(brentq(f, lo, up, xtol=1e-300, rtol=1e-15, maxiter=500))
    if f(nodes[-1]) == 0.0:
        roots.append(nodes[-1])
    gamma_eff_ok = [n for n in roots if p.gamma + p.kerr.imag * n > 0]
    return sorted(set(gamma_eff_ok))


def _solution(p: SystemParams, flux: float, n: float, branch_id: int, n_roots: int) -> MeanFieldSolution:
    s = derive_scales(p)
    x_bar = p.g * hbar * n / (p.m_eff * p.omega_m**2)
    delta_bar = p.delta0 + p.g * x_bar + p.kerr.real * n
    gamma_eff = p.gamma + p.kerr.imag * n
    a_in = float(np.sqrt(flux))
    a_bar = np.sqrt(2.0 * p.gamma_in) * a_in / (gamma_eff - 1j * delta_bar)
    delta_tilde = complex(delta_bar, p.kerr.imag * n) / p.gamma
    if abs(a_bar) > 0:
        L = a_bar / np.conj(a_bar)
    else:
        L = (1 + 1j * delta_tilde.real) / (1 - 1j * delta_tilde.real)
    scale = max(n, 1e-300)
    residual = abs(abs(a_bar) ** 2 - n) / scale if n > 0 else abs(a_bar) ** 2
    return MeanFieldSolution(
        a_bar=complex(a_bar),
        n_cav=float(n),
        delta_bar=float(delta_bar),
        gamma_eff=float(gamma_eff),
        x_bar=float(x_bar),
        K=complex(s.lambda_tilde * n),
        M=float(s.g_tilde * np.sqrt(n)),
        L=complex(L),
        L2=complex(2.0 * s.eta / (1.0 - 1j * delta_tilde) - 1.0),
        delta_tilde=delta_tilde,
        eta=s.eta,
        a_in=a_in,
        p_in=p.p_in,
        branch_id=branch_id,
        n_roots=n_roots,
        residual=float(residual),
    )


def solve_mean_field(p: SystemParams) -> list[MeanFieldSolution]:
    """All self-consistent steady states, ordered by photon number."""
    flux = photon_flux(p.p_in, p.omega_laser)
    roots = _photon_number_roots(p, flux)
    if not roots:
        raise SolverError("no physical mean-field root")
    sols = [_solution(p, flux, n, i, len(roots)) for i, n in enumerate(roots)]
    for sol in sols:
        if sol.residual > 1e-10:
            raise SolverError(f"mean-field residual {sol.residual:.3e} above 1e-10")
    return sols


def select_branch(sols: Sequence[MeanFieldSolution], branch: str = "low") -> MeanFieldSolution:
    if branch == "low":
        return sols[0]
    if branch == "high":
        return sols[-1]
    raise ValueError(f"unknown branch policy {branch!r}")


def mean_output(sol: MeanFieldSolution, a_in: complex) -> complex:
    """Mean transmitted amplitude a_in * (2 eta / (1 - i delta_tilde) - 1)."""
    return a_in * sol.L2


def continuation_sweep(p: SystemParams, powers: Sequence[float],
                       branch: str = "continuation") -> list[MeanFieldSolution]:
    """Follow one mean-field branch along an ascending power ramp.

    With ``branch="continuation"`` the first step takes the lowest root and
    every later step takes the root nearest in photon number to the previous
    one. A step is flagged ``branch_jump`` when the chosen root lies on the
    other side of the previous step's unstable middle root.
    """
    powers = [float(x) for x in powers]
    if any(b < a for a, b in zip(powers, powers[1:])):
        raise ValueError("powers must be sorted ascending")
    out: list[MeanFieldSolution] = []
    prev: list[MeanFieldSolution] | None = None
    chosen: MeanFieldSolution | None = None
    for power in powers:
        sols = solve_mean_field(p.with_power(power))
        if branch != "continuation":
            pick = select_branch(sols, branch)
        elif chosen is None:
            pick = sols[0]
        else:
            pick = min(sols, key=lambda s: abs(s.n_cav - chosen.n_cav))
        jump = False
        if chosen is not None and prev is not None and len(prev) == 3:
            middle = prev[1].n_cav
            jump = (chosen.n_cav - middle) * (pick.n_cav - middle) < 0
        if jump:
            log.warning("branch jump at p_in=%.4g W (n %.4g -> %.4g)",
                        power, chosen.n_cav, pick.n_cav)
            pick = replace(pick, branch_jump=True)
        out.append(pick)
        prev, chosen = sols, pick
    return out

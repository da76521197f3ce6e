"""Direct frequency-domain solve of the linearised equations of motion, SI units.

Independent of the closed-form coefficient algebra in
:mod:`backaction.linear_response`: at each sideband frequency the three
fluctuation amplitudes (da(Omega), da^dag(-Omega), dx(Omega)) are obtained
from a 3x3 complex linear system assembled straight from the nonlinear
cavity and oscillator equations, and the output quadrature follows from
a_out = sqrt(2 gamma_in) a - a_in.

Inputs are normalised to unit commutator in physical time, so vacuum
quadratures and the thermal white noise both have unit two-sided PSD.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.constants import hbar, k as k_B

from .params import SystemParams
from .steady_state import MeanFieldSolution

#: column order of the source matrix
SOURCES = ("a_in", "a_in_dag", "a_loss", "a_loss_dag", "thermal", "x_sig")


@dataclass(frozen=True)
class OracleResult:
    omega: np.ndarray
    quadrature: np.ndarray  # (n_omega, 6) response of X+_out to each source
    displacement: np.ndarray  # (n_omega, 6) response of dx (m) to each source

    @property
    def g_in_plus(self):
        return (self.quadrature[:, 0] + self.quadrature[:, 1]) / 2

    @property
    def t_intensity(self):
        return np.abs(self.g_in_plus) ** 2

    @property
    def vacuum_sum(self):
        q = self.quadrature
        return 0.5 * np.sum(np.abs(q[:, :4]) ** 2, axis=1)

    @property
    def s_out(self):
        return self.vacuum_sum + np.abs(self.quadrature[:, 4]) ** 2

    @property
    def s_xx(self):
        d = self.displacement
        return 0.5 * np.sum(np.abs(d[:, :4]) ** 2, axis=1) + np.abs(d[:, 4]) ** 2

    @property
    def s_x_sig(self):
        """Signal-referred imprecision from vacuum noise only, m^2/Hz."""
        return self.vacuum_sum / np.abs(self.quadrature[:, 5]) ** 2


def solve(sol: MeanFieldSolution, p: SystemParams, omega) -> OracleResult:
    omega = np.atleast_1d(np.asarray(omega, dtype=float))
    a = sol.a_bar
    ac = np.conj(a)
    n = abs(a) ** 2
    g = p.g
    lam = p.kerr
    # complex mean detuning including the Kerr loss
    det = p.delta0 + g * sol.x_bar + lam * n
    kT = k_B * p.temperature

    sources = np.zeros((3, 6), complex)
    sources[0, 0] = np.sqrt(2 * p.gamma_in)
    sources[1, 1] = np.sqrt(2 * p.gamma_in)
    sources[0, 2] = np.sqrt(2 * p.gamma_loss)
    sources[1, 3] = np.sqrt(2 * p.gamma_loss)
    sources[2, 4] = np.sqrt(2 * p.m_eff * p.gamma_m * kT) / p.m_eff
    sources[0, 5] = 1j * g * a
    sources[1, 5] = -1j * g * ac

    a_out = np.sqrt(2 * p.gamma_in) * a - sol.a_in
    phase = a_out / abs(a_out) if abs(a_out) > 0 else 1.0

    quad = np.empty((omega.size, 6), complex)
    disp = np.empty((omega.size, 6), complex)
    for k, w in enumerate(omega):
        A = np.zeros((3, 3), complex)
        A[0, 0] = 1j * w + p.gamma - 1j * det - 1j * lam * n
        A[0, 1] = -1j * lam * a * a
        A[0, 2] = -1j * g * a
        A[1, 1] = 1j * w + p.gamma + 1j * np.conj(det) + 1j * np.conj(lam) * n
        A[1, 0] = 1j * np.conj(lam) * ac * ac
        A[1, 2] = 1j * g * ac
        A[2, 2] = p.omega_m**2 - w**2 + 1j * w * p.gamma_m
        A[2, 0] = -g * hbar / p.m_eff * ac
        A[2, 1] = -g * hbar / p.m_eff * a
        R = np.linalg.solve(A, sources)
        out = np.sqrt(2 * p.gamma_in) * R[0]
        out[0] -= 1
        out_dag = np.sqrt(2 * p.gamma_in) * R[1]
        out_dag[1] -= 1
        quad[k] = phase * out_dag + np.conj(phase) * out
        disp[k] = R[2]
    return OracleResult(omega, quad, disp)

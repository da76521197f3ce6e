import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from backaction import linear_response as lr
from backaction import oracle
from backaction import sql_sensitivity as sq
from backaction.params import derive_scales
from backaction.steady_state import continuation_sweep
from conftest import ramp_solution
from util import random_stable_params


@pytest.fixture(scope="module")
def at_9p6(fig5):
    sol = ramp_solution(fig5)
    center = lr.fit_lorentzian(sol, fig5).omega_m_eff
    omega = np.linspace(center - 50 * fig5.gamma_m, center + 50 * fig5.gamma_m, 4001)
    return sol, omega, center


def test_ratio_matches_independent_pieces(fig5, at_9p6):
    sol, omega, _ = at_9p6
    s = sq.sensitivity(sol, fig5, omega)
    h = lr.quadrature_gains(sol, fig5, omega)
    g = [h.g_in_plus, h.g_in_minus, h.g_loss_plus, h.g_loss_minus]
    noise = sum(np.abs(x) ** 2 for x in g)
    chi_eff = lr.effective_susceptibility(sol, fig5, omega)
    wm = fig5.omega_m / fig5.gamma
    expected = noise / (4 * wm * np.abs(chi_eff) * np.abs(h.h6) ** 2)
    np.testing.assert_allclose(s.ratio, expected, rtol=1e-12)


def test_ratio_times_sql_is_imprecision(fig5, at_9p6):
    sol, omega, _ = at_9p6
    s = sq.sensitivity(sol, fig5, omega)
    np.testing.assert_allclose(s.ratio * s.s_sql, s.s_x_sig_si, rtol=1e-12)
    assert np.all(s.ratio > 0)


def test_unit_conversion_both_forms(fig5, at_9p6):
    sol, omega, _ = at_9p6
    x_zp = derive_scales(fig5).x_zp
    cons = sq.sensitivity(sol, fig5, omega)
    lit = sq.sensitivity(sol, fig5, omega, form="literal")
    np.testing.assert_allclose(cons.s_x_sig_si, cons.s_x_sig * x_zp**2 / (2 * fig5.gamma),
                               rtol=1e-14)
    np.testing.assert_allclose(lit.s_x_sig_si, lit.s_x_sig * x_zp**2 / np.sqrt(2 * fig5.gamma),
                               rtol=1e-14)
    np.testing.assert_array_equal(cons.ratio, lit.ratio)
    with pytest.raises(ValueError):
        sq.sensitivity(sol, fig5, omega, form="other")


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_imprecision_matches_direct_solve(seed):
    rng = np.random.default_rng(seed)
    p, sol = random_stable_params(rng, temperature=False)
    omega = p.omega_m * rng.uniform(0.8, 1.2, 5)
    s = sq.sensitivity(sol, p, omega)
    o = oracle.solve(sol, p, omega)
    np.testing.assert_allclose(s.s_x_sig_si, o.s_x_sig, rtol=1e-9)


def test_thermal_flag_adds_noise(fig5, at_9p6):
    sol, omega, _ = at_9p6
    cold = sq.sensitivity(sol, fig5, omega)
    hot = sq.sensitivity(sol, fig5, omega, thermal=True)
    assert np.all(hot.ratio > cold.ratio)


def test_no_coupling_no_transduction(fig5):
    p = fig5.replace(radius=np.inf)
    sol = ramp_solution(p)
    with pytest.raises(sq.NoTransduction):
        sq.signal_estimate_gain(sol, p, np.array([p.omega_m]))
    with pytest.raises(sq.NoTransduction):
        sq.sensitivity(sol, p, np.array([p.omega_m]))


def test_imprecision_diverges_as_coupling_vanishes(fig5):
    values = []
    for scale in (1e2, 1e3, 1e4):
        p = fig5.replace(radius=fig5.radius * scale)
        sol = ramp_solution(p)
        values.append(sq.sensitivity(sol, p, np.array([p.omega_m])).s_x_sig[0])
    assert values[0] < values[1] < values[2]
    assert values[2] > 1e4 * values[0]


def test_weak_coupling_band_is_empty(fig5):
    p = fig5.replace(radius=fig5.radius * 1e3)
    sol = ramp_solution(p)
    s = sq.sensitivity(sol, p, lr.default_grid(p, points=2001))
    band = sq.sql_band(s)
    assert band.empty and band.ratio_min > 1


def test_signal_gain_scales_inverse_with_coupling(fig5):
    gains = []
    for scale in (1e3, 2e3):
        p = fig5.replace(radius=fig5.radius * scale)
        gains.append(abs(sq.signal_estimate_gain(ramp_solution(p), p, np.array([p.omega_m]))[0]))
    assert gains[1] / gains[0] == pytest.approx(2.0, rel=1e-3)


def test_finite_gain_at_operating_point(fig5, at_9p6):
    sol, _, center = at_9p6
    gain = sq.signal_estimate_gain(sol, fig5, np.array([center]))
    assert np.all(np.isfinite(gain)) and abs(gain[0]) > 0


def test_far_off_resonance_ratio_large(fig5, at_9p6):
    sol, _, center = at_9p6
    s = sq.sensitivity(sol, fig5, np.array([center + 500 * fig5.gamma_m]))
    assert s.ratio[0] > 10


def test_band_widens_toward_threshold(fig2):
    """Band edges move away from the spring-shifted resonance as power rises."""
    powers = (9.0e-6, 9.6e-6, 10.2e-6, 11.0e-6, 12.0e-6)
    sols = continuation_sweep(fig2, np.concatenate([np.linspace(0, 8e-6, 10), powers]))[-5:]
    omega = lr.default_grid(fig2, center=fig2.omega_m + 8e3 * 2 * np.pi, points=8001,
                            half_span=100 * fig2.gamma_m)
    lows, highs = [], []
    for w, sol in zip(powers, sols):
        p = fig2.with_power(w)
        center = lr.fit_lorentzian(sol, p).omega_m_eff
        band = sq.sql_band(sq.sensitivity(sol, p, omega))
        lows.append(min(a for a, _ in band.intervals) - center)
        highs.append(max(b for _, b in band.intervals) - center)
    assert np.all(np.diff(lows) < 0) and np.all(np.diff(highs) > 0)


def test_band_interpolation():
    s = sq.SensitivitySample(omega=np.arange(6.0), h6=np.ones(6), s_x_sig=np.ones(6),
                             s_x_sig_si=np.ones(6), s_sql=np.ones(6),
                             ratio=np.array([2.0, 0.0, 2.0, 3.0, 0.5, 0.5]))
    band = sq.sql_band(s)
    assert band.intervals == [(0.5, 1.5), (3.8, 5.0)]
    assert band.omega_min == 1.0 and band.ratio_min == 0.0

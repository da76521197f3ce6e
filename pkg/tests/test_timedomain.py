import numpy as np
import pytest

from backaction import linear_response as lr
from backaction import timedomain as td
from backaction.params import derive_scales
from backaction.steady_state import solve_mean_field
from conftest import ramp_solution
from util import dimensionless_params


@pytest.fixture(scope="module")
def low_power(fig2):
    p = fig2.with_power(3e-6)
    return p, ramp_solution(p)


def test_fixed_point_is_stationary(low_power):
    p, sol = low_power
    periods = 1000 * 2 * np.pi / p.omega_m
    traj = td.integrate(p, duration=periods, stride=1000, start=sol)
    assert np.max(np.abs(traj.a - sol.a_bar)) / abs(sol.a_bar) < 1e-6
    assert np.max(np.abs(traj.x - sol.x_bar)) / abs(sol.x_bar) < 1e-6


def test_relaxes_to_mean_field_from_rest(low_power):
    p, sol = low_power
    duration = 20 / (-2 * lr.growth_rate(sol, p))
    traj = td.integrate(p, duration=duration, stride=100, start=(0j, 0.0, 0.0))
    assert abs(traj.a[-1] - sol.a_bar) / abs(sol.a_bar) < 1e-3
    assert abs(traj.x[-1] - sol.x_bar) / abs(sol.x_bar) < 1e-3


def test_step_size_violation(low_power):
    p, _ = low_power
    with pytest.raises(td.StepSizeError):
        td.integrate(p, duration=1e-6, dt=2 * td.max_step(p))


def test_seeded_runs_are_bit_identical(low_power):
    p, sol = low_power
    kw = dict(duration=2e-6, stride=7, start=sol)
    a = td.integrate(p, noise=td.Noise(True, 11), **kw)
    b = td.integrate(p, noise=td.Noise(True, 11), **kw)
    c = td.integrate(p, noise=td.Noise(True, 12), **kw)
    assert np.array_equal(a.x, b.x) and np.array_equal(a.a, b.a)
    assert not np.array_equal(a.x, c.x)


def _endpoint(p, sol, dt, scheme):
    traj = td.integrate(p, td.Drive(0.2, 0.9 * p.omega_m), duration=2e-7, dt=dt, scheme=scheme,
                        start=sol, perturb_x=0.05 * abs(sol.x_bar), stride=10**9)
    x_scale, a_scale = abs(sol.x_bar), abs(sol.a_bar)
    return np.array([traj.a[-1].real / a_scale, traj.a[-1].imag / a_scale, traj.x[-1] / x_scale])


@pytest.mark.parametrize("scheme,order", [("euler", 1.0), ("heun", 2.0)])
def test_convergence_order(low_power, scheme, order):
    p, sol = low_power
    dts = td.max_step(p) / 2.0 ** np.arange(6)
    ends = [_endpoint(p, sol, dt, scheme) for dt in dts]
    change = [np.linalg.norm(a - b) for a, b in zip(ends[:-1], ends[1:])]
    slope = np.polyfit(np.log(dts[:-1]), np.log(change), 1)[0]
    assert slope == pytest.approx(order, abs=0.2)


def test_passive_cavity_transfer():
    p = dimensionless_params(0.6, 1.2, omega_m_t=0.3, power=1e-6)
    sol = solve_mean_field(p)[0]
    for w in (0.2 * p.gamma, 1.1 * p.gamma):
        est = td.simulate_transfer(p, w, sol=sol, periods=200, decay_times=0.0)
        expected = lr.intensity_transfer(sol, p, np.array([w]))[0]
        assert est.t_intensity == pytest.approx(expected, rel=1e-3)


def test_pure_sinusoid_unit_gain():
    # lossless, resonant, broad cavity: output follows the input
    p = dimensionless_params(1.0, 0.0, omega_m_t=0.01, power=1e-6)
    est = td.simulate_transfer(p, 1e-3 * p.gamma, periods=120, decay_times=0.0)
    assert abs(est.gain) == pytest.approx(1.0, abs=1e-5)
    # all-pass delay: phase -2 atan(omega / gamma), i.e. close to zero
    assert np.angle(est.gain) == pytest.approx(-2 * np.arctan(1e-3), abs=1e-5)


def test_demodulation_at_harmonic_vanishes():
    p = dimensionless_params(0.6, 1.2, omega_m_t=0.3, power=1e-6)
    w = 0.3 * p.gamma
    traj = td.integrate(p, td.Drive(1e-3, w), duration=300 * 2 * np.pi / w, stride=5)
    on = td.measure_transfer(traj, discard=20 / p.gamma)
    off = td.measure_transfer(traj, omega_mod=2 * w, discard=20 / p.gamma)
    assert abs(off.gain) < 1e-3 * abs(on.gain)


def test_transfer_is_linear_in_depth(fig2):
    sol = ramp_solution(fig2)
    w = lr.fit_lorentzian(sol, fig2).omega_m_eff
    big = td.simulate_transfer(fig2, w, mod_depth=1e-3, sol=sol, periods=200)
    small = td.simulate_transfer(fig2, w, mod_depth=5e-4, sol=sol, periods=200)
    assert abs(small.gain - big.gain) < 3 * max(big.stderr, small.stderr) + 1e-3 * abs(big.gain)


def test_transfer_needs_enough_periods(low_power):
    p, sol = low_power
    w = p.omega_m
    traj = td.integrate(p, td.Drive(1e-3, w), duration=50 * 2 * np.pi / w, start=sol)
    with pytest.raises(td.InsufficientData):
        td.measure_transfer(traj)


def test_divergence_reported_above_threshold(fig2):
    p = fig2.with_power(20e-6)
    sol = solve_mean_field(p)[0]
    assert not lr.is_stable(sol, p)
    # the driven cavity cannot store much more than its mean photon number, so
    # a 5 % excursion of |a|^2 already marks the growing oscillation
    with pytest.raises(td.Divergence) as info:
        td.integrate(p, duration=2e-3, stride=10**6, start=sol,
                     perturb_x=derive_scales(p).x_zp, guard=1.05)
    assert 0 < info.value.t_blowup < 2e-3


def _white_trajectory(n, sigma, fs, seed=0):
    rng = np.random.default_rng(seed)
    x = sigma * rng.standard_normal(n)
    return td.Trajectory(dt=1 / fs, t=np.arange(n) / fs, a=np.zeros(n, complex), x=x,
                         v=np.zeros(n), seed=seed, scheme="synthetic")


def test_welch_white_noise_calibration():
    fs, sigma = 1e6, 0.3
    spec = td.estimate_psd(_white_trajectory(2**18, sigma, fs), segments=64)
    # two-sided density of unit-variance white noise sampled at fs is sigma^2 / fs
    assert np.mean(spec.s_xx) == pytest.approx(sigma**2 / fs, rel=0.05)
    assert spec.x_variance == pytest.approx(sigma**2, rel=0.05)
    assert spec.n_segments >= 64


def test_welch_rejects_few_segments():
    with pytest.raises(td.InsufficientData):
        td.estimate_psd(_white_trajectory(4096, 1.0, 1e6), segments=8)
    with pytest.raises(td.InsufficientData):
        td.estimate_psd(_white_trajectory(64, 1.0, 1e6), segments=16)


def test_thermal_psd_peaks_at_mechanical_frequency():
    p = dimensionless_params(0.7, 0.2, omega_m_t=2.0, q_m=30, temperature=300.0)
    dt = td.max_step(p)
    traj = td.integrate(p, noise=td.Noise(True, 3), duration=4000 / p.gamma_m, dt=dt,
                        stride=5)
    spec = td.estimate_psd(traj, segments=32, discard=20 / p.gamma_m)
    f_peak = abs(spec.freq[np.argmax(spec.s_xx)])
    assert f_peak == pytest.approx(p.omega_m / (2 * np.pi), rel=0.02)


def _enbw(spec):
    """Equivalent noise bandwidth of the positive-frequency peak, Hz."""
    pos = spec.freq > 0
    s = np.convolve(spec.s_xx[pos], np.ones(5) / 5, mode="same")
    return np.sum(spec.s_xx[pos]) * (spec.freq[1] - spec.freq[0]) / s.max()


def test_noise_linewidth_narrows_toward_threshold(fig2):
    widths = []
    for power in (3e-6, 9e-6):
        p = fig2.with_power(power)
        sol = ramp_solution(p)
        settle = td.transient_time(sol, p, 5.0)
        dt = td.max_step(p)
        traj = td.integrate(p, noise=td.Noise(True, 5), duration=settle + 1e-2, dt=dt,
                            stride=40, start=sol)
        widths.append(_enbw(td.estimate_psd(traj, segments=16, discard=settle)))
    assert widths[1] < 0.6 * widths[0]


def test_no_onset_without_coupling(fig2):
    p = fig2.replace(radius=np.inf)
    with pytest.raises(td.NoOnset):
        td.oscillation_onset(p, [2e-6, 10e-6, 40e-6])


def test_onset_matches_threshold(fig2):
    th = lr.threshold_power(fig2, bracket=(0, 30e-6)).p_threshold
    rep = td.oscillation_onset(fig2, np.linspace(2e-6, 24e-6, 12))
    assert rep.p_onset == pytest.approx(th, rel=0.05)
    assert rep.bracket[1] - rep.bracket[0] <= 0.02 * rep.bracket[1]


def test_no_onset_red_detuned(fig2):
    with pytest.raises(td.NoOnset):
        td.oscillation_onset(fig2.mirrored(), np.linspace(2e-6, 120e-6, 8))


def test_csv_export(tmp_path, low_power):
    p, sol = low_power
    traj = td.integrate(p, noise=td.Noise(True, 9), duration=1e-8, start=sol)
    path = td.write_trajectory_csv(traj, tmp_path / "traj.csv", p)
    lines = path.read_text().splitlines()
    assert "# seed = 9" in lines and "t,re_a,im_a,x,v" in lines
    data = np.loadtxt(lines[lines.index("t,re_a,im_a,x,v") + 1:], delimiter=",")
    np.testing.assert_array_equal(data[:, 3], traj.x)

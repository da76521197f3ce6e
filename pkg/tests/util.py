"""Parameter generators shared by the property tests."""
import numpy as np
from scipy.integrate import quad

from backaction.params import SystemParams

TWO_PI = 2 * np.pi
OMEGA0 = TWO_PI * 193.4e12


def dimensionless_params(eta, delta_t, omega_m_t=0.4, q_m=500.0, kerr_t=0j, m_tilde=0.0,
                         power=1e-6, gamma=TWO_PI * 15e6, m_eff=64e-9, temperature=0.0):
    """Build SystemParams from normalised quantities.

    ``m_tilde`` is g x_zp / gamma per sqrt(photon); the radius is set to match,
    with ``m_tilde`` below 1e-12 meaning no coupling. ``kerr_t`` is kerr / gamma.
    """
    omega_m = omega_m_t * gamma
    x_zp = np.sqrt(1.0545718176461565e-34 / (2 * m_eff * omega_m))
    radius = np.inf if m_tilde < 1e-12 else OMEGA0 * x_zp / (m_tilde * gamma)
    return SystemParams(
        omega0=OMEGA0, omega_laser=OMEGA0 + delta_t * gamma, delta0=delta_t * gamma,
        gamma_in=eta * gamma, gamma_loss=(1 - eta) * gamma, omega_m=omega_m,
        gamma_m=omega_m / q_m, m_eff=m_eff, radius=radius, kerr=complex(kerr_t) * gamma,
        temperature=temperature, p_in=power)


def random_stable_params(rng, temperature=True):
    """Draw a random operating point that is below threshold, with its solution.

    Covers both detuning signs, over- and undercoupling, the resolved and
    unresolved sideband regimes and a complex Kerr term.
    """
    from backaction.linear_response import is_stable
    from backaction.steady_state import solve_mean_field

    while True:
        p = dimensionless_params(
            eta=rng.uniform(0.05, 1.0),
            delta_t=rng.uniform(-3, 3),
            omega_m_t=10 ** rng.uniform(-1.5, 0.5),
            q_m=10 ** rng.uniform(1, 4),
            kerr_t=complex(rng.uniform(-2e-6, 2e-6), rng.uniform(0, 1e-6)),
            m_tilde=10 ** rng.uniform(-5, -2.5),
            power=10 ** rng.uniform(-8, -5),
            temperature=rng.uniform(0, 300) if temperature else 0.0,
        )
        sols = solve_mean_field(p)
        sol = sols[rng.integers(len(sols))]
        if is_stable(sol, p):
            return p, sol


def integrated_displacement_variance(sol, p):
    """<x^2> from the two-sided displacement PSD, m^2.

    The substitution omega = omega_m + gamma_m/2 tan(theta) flattens the
    mechanical Lorentzian so adaptive quadrature resolves it.
    """
    from backaction.linear_response import displacement_spectrum

    wm, half = p.omega_m, 0.5 * p.gamma_m

    def integrand(theta):
        w = wm + half * np.tan(theta)
        return displacement_spectrum(sol, p, np.array([w]))[0] * half / np.cos(theta) ** 2

    total, _ = quad(integrand, np.arctan(-wm / half), 0.5 * np.pi * (1 - 1e-9), limit=1000,
                    epsabs=0, epsrel=1e-12)
    # positive and negative frequencies, density per Hz
    return 2 * total / TWO_PI

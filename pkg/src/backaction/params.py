"""Physical and dimensionless parameter sets for the optomechanical amplifier.

All angular frequencies are stored in rad/s. Configuration documents quote
ordinary frequencies in Hz and are converted on ingest by :func:`build_params`.
"""
from __future__ import annotations

import configparser
import dataclasses
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping

import numpy as np
from scipy.constants import c as SPEED_OF_LIGHT
from scipy.constants import hbar, k as k_B

TWO_PI = 2.0 * np.pi
MAX_DETUNING_RATIO = 1e3


class ConfigError(ValueError):
    """Raised for missing, malformed or unphysical configuration values."""


@dataclass(frozen=True)
class SystemParams:
    """Device and drive parameters, SI units, angular frequencies in rad/s.

    ``kerr`` is the complex Kerr rate per intracavity photon. Its real part
    shifts the detuning, its imaginary part adds intensity dependent loss.
    """

    omega0: float
    omega_laser: float
    delta0: float
    gamma_in: float
    gamma_loss: float
    omega_m: float
    gamma_m: float
    m_eff: float
    radius: float
    kerr: complex
    temperature: float
    p_in: float

    def __post_init__(self):
        object.__setattr__(self, "kerr", complex(self.kerr))
        checks = [
            ("gamma_in", self.gamma_in > 0),
            ("gamma_loss", self.gamma_loss >= 0),
            ("omega_m", self.omega_m > 0),
            ("gamma_m", self.gamma_m > 0),
            ("m_eff", self.m_eff > 0),
            ("radius", self.radius > 0),  # inf switches the coupling off
            ("temperature", self.temperature >= 0),
            ("p_in", self.p_in >= 0),
            ("omega0", self.omega0 > 0),
            ("omega_laser", self.omega_laser > 0),
        ]
        for name, ok in checks:
            value = getattr(self, name)
            finite = np.isfinite(value) or (name == "radius" and value == np.inf)
            if not (ok and finite):
                raise ConfigError(f"{name} out of range: {value!r}")
        if not np.isfinite(self.delta0):
            raise ConfigError(f"delta0 not finite: {self.delta0!r}")
        if abs(self.delta0) >= MAX_DETUNING_RATIO * self.gamma:
            raise ConfigError("|delta0|/gamma must stay below 1e3")

    @property
    def gamma(self) -> float:
        """Total amplitude decay rate gamma_in + gamma_loss."""
        return self.gamma_in + self.gamma_loss

    @property
    def eta(self) -> float:
        return self.gamma_in / self.gamma

    @property
    def g(self) -> float:
        """Optomechanical frequency pull per metre, omega0 / radius (0 for radius=inf)."""
        return self.omega0 / self.radius

    def with_power(self, p_in: float) -> "SystemParams":
        return dataclasses.replace(self, p_in=float(p_in))

    def replace(self, **changes) -> "SystemParams":
        return dataclasses.replace(self, **changes)

    def mirrored(self) -> "SystemParams":
        """Red-detuned mirror image: detuning and Kerr frequency pull flip sign.

        The laser frequency is moved so that omega_laser = omega0 + delta0 still
        holds. The imaginary (loss) part of the Kerr rate is kept.
        """
        kerr = complex(-self.kerr.real, self.kerr.imag)
        return dataclasses.replace(
            self,
            delta0=-self.delta0,
            omega_laser=self.omega0 - self.delta0,
            kerr=kerr,
        )


@dataclass(frozen=True)
class DerivedScales:
    x_zp: float
    n_bar: float
    g: float
    g_tilde: float
    eta: float
    flux_in: float
    lambda_tilde: complex
    omega_m_tilde: float
    gamma_m_tilde: float
    r_tilde: float


def photon_flux(power: float, omega_laser: float) -> float:
    """Photon flux in photons/s carried by ``power`` watts at ``omega_laser``."""
    if not omega_laser > 0:
        raise ValueError("omega_laser must be positive")
    if power < 0:
        raise ValueError("power must be non-negative")
    return power / (hbar * omega_laser)


def zero_point_motion(m_eff: float, omega_m: float) -> float:
    return float(np.sqrt(hbar / (2.0 * m_eff * omega_m)))


def derive_scales(p: SystemParams) -> DerivedScales:
    x_zp = zero_point_motion(p.m_eff, p.omega_m)
    gamma = p.gamma
    return DerivedScales(
        x_zp=x_zp,
        n_bar=k_B * p.temperature / (hbar * p.omega_m),
        g=p.g,
        g_tilde=p.g * x_zp / gamma,
        eta=p.eta,
        flux_in=photon_flux(p.p_in, p.omega_laser),
        lambda_tilde=p.kerr / gamma,
        omega_m_tilde=p.omega_m / gamma,
        gamma_m_tilde=p.gamma_m / gamma,
        r_tilde=p.radius / x_zp,
    )


# --------------------------------------------------------------------------
# configuration ingest
# --------------------------------------------------------------------------

#: Documented configuration keys. Frequencies are ordinary frequencies in Hz.
CONFIG_KEYS = {
    "wavelength_m": "pump wavelength; alternative to f0_hz",
    "f0_hz": "optical resonance frequency; alternative to wavelength_m",
    "f_laser_hz": "optional pump frequency, defaults to f0_hz + delta0_hz",
    "delta0_hz": "bare detuning (pump minus cavity), positive is blue",
    "gamma_in_hz": "input coupling rate gamma_in / 2pi",
    "gamma_loss_hz": "intrinsic loss rate gamma_loss / 2pi",
    "q0": "intrinsic optical Q, gamma_loss = omega0 / (2 q0)",
    "q0_loaded": "loaded optical Q, gamma = omega0 / (2 q0_loaded)",
    "eta": "coupling ratio gamma_in / gamma, alternative to the loss keys",
    "f_m_hz": "mechanical resonance frequency",
    "gamma_m_hz": "mechanical damping Gamma / 2pi",
    "q_m": "mechanical Q, Gamma = omega_m / q_m",
    "m_eff": "effective mass, kg",
    "radius": "toroid radius, m",
    "kerr_re_hz": "Re(Lambda) / 2pi",
    "kerr_im_hz": "Im(Lambda) / 2pi",
    "kerr_reference_power_w": "if set, kerr_*_hz is the total shift at this input power",
    "temperature": "bath temperature, K",
    "p_in": "input power, W",
}

_REQUIRED = ("delta0_hz", "gamma_in_hz", "f_m_hz", "m_eff", "radius",
             "kerr_re_hz", "kerr_im_hz", "temperature", "p_in")


def _number(raw: Mapping, key: str) -> float:
    try:
        value = raw[key]
    except KeyError:
        raise ConfigError(f"missing key: {key}") from None
    try:
        return float(value)
    except (TypeError, ValueError):
        raise ConfigError(f"key {key} is not a number: {value!r}") from None


def _one_of(raw: Mapping, keys: tuple[str, ...]) -> str:
    present = [k for k in keys if k in raw]
    if len(present) != 1:
        what = "missing" if not present else "conflicting"
        raise ConfigError(f"{what} keys: exactly one of {', '.join(keys)} required")
    return present[0]


def build_params(raw: Mapping) -> SystemParams:
    """Validate a flat key-value configuration and convert it to SI/rad-s units."""
    unknown = set(raw) - set(CONFIG_KEYS)
    if unknown:
        raise ConfigError(f"unknown keys: {', '.join(sorted(unknown))}")
    for key in _REQUIRED:
        _number(raw, key)

    if _one_of(raw, ("wavelength_m", "f0_hz")) == "f0_hz":
        omega0 = TWO_PI * _number(raw, "f0_hz")
    else:
        wavelength = _number(raw, "wavelength_m")
        if wavelength <= 0:
            raise ConfigError("wavelength_m must be positive")
        omega0 = TWO_PI * SPEED_OF_LIGHT / wavelength
    if omega0 <= 0:
        raise ConfigError("f0_hz must be positive")

    delta0 = TWO_PI * _number(raw, "delta0_hz")
    gamma_in = TWO_PI * _number(raw, "gamma_in_hz")
    if gamma_in <= 0:
        raise ConfigError("gamma_in_hz must be positive")

    loss_key = _one_of(raw, ("gamma_loss_hz", "q0", "q0_loaded", "eta"))
    if loss_key == "gamma_loss_hz":
        gamma_loss = TWO_PI * _number(raw, loss_key)
    elif loss_key == "q0":
        q0 = _number(raw, "q0")
        if q0 <= 0:
            raise ConfigError("q0 must be positive")
        gamma_loss = omega0 / (2.0 * q0)
    elif loss_key == "q0_loaded":
        q0 = _number(raw, "q0_loaded")
        if q0 <= 0:
            raise ConfigError("q0_loaded must be positive")
        gamma_loss = omega0 / (2.0 * q0) - gamma_in
    else:
        eta = _number(raw, "eta")
        if not 0 < eta <= 1:
            raise ConfigError(f"eta outside (0, 1]: {eta}")
        gamma_loss = gamma_in * (1.0 / eta - 1.0)
    if gamma_loss < 0:
        eta = gamma_in / (gamma_in + gamma_loss) if gamma_in + gamma_loss > 0 else np.inf
        raise ConfigError(f"eta outside (0, 1]: {eta}")

    omega_m = TWO_PI * _number(raw, "f_m_hz")
    if omega_m <= 0:
        raise ConfigError("f_m_hz must be positive")
    if _one_of(raw, ("gamma_m_hz", "q_m")) == "q_m":
        q_m = _number(raw, "q_m")
        if q_m <= 0:
            raise ConfigError("q_m must be positive")
        gamma_m = omega_m / q_m
    else:
        gamma_m = TWO_PI * _number(raw, "gamma_m_hz")

    omega_laser = (TWO_PI * _number(raw, "f_laser_hz") if "f_laser_hz" in raw
                   else omega0 + delta0)

    kerr = TWO_PI * complex(_number(raw, "kerr_re_hz"), _number(raw, "kerr_im_hz"))
    if "kerr_reference_power_w" in raw:
        p_ref = _number(raw, "kerr_reference_power_w")
        if p_ref <= 0:
            raise ConfigError("kerr_reference_power_w must be positive")
        gamma = gamma_in + gamma_loss
        # photon number of the bare (uncoupled, linear) cavity at the reference power
        n_ref = 2.0 * gamma_in * photon_flux(p_ref, omega_laser) / (gamma**2 + delta0**2)
        kerr = kerr / n_ref

    return SystemParams(
        omega0=omega0,
        omega_laser=omega_laser,
        delta0=delta0,
        gamma_in=gamma_in,
        gamma_loss=gamma_loss,
        omega_m=omega_m,
        gamma_m=gamma_m,
        m_eff=_number(raw, "m_eff"),
        radius=_number(raw, "radius"),
        kerr=kerr,
        temperature=_number(raw, "temperature"),
        p_in=_number(raw, "p_in"),
    )


def read_config(path: str | Path) -> dict[str, str]:
    """Read a flat ``key = value`` file. A ``[params]`` header is optional."""
    text = Path(path).read_text()
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        if not any(line.lstrip().startswith("[") for line in text.splitlines()):
            text = "[params]\n" + text
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from None
    raw: dict[str, str] = {}
    for section in parser.sections():
        raw.update(parser[section])
    return raw


def load_params(path: str | Path) -> SystemParams:
    return build_params(read_config(path))


def bundled_config(name: str) -> Path:
    """Path to one of the shipped reference configurations (fig2, fig4, fig5)."""
    path = Path(__file__).parent / "configs" / f"{name}.cfg"
    if not path.exists():
        raise FileNotFoundError(path)
    return path

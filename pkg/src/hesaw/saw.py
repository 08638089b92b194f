"""Surface acoustic wave generation and its coupling to the electron sheet.

Covers the transducer side (resonance, array-factor lineshape, edge echo)
and the relaxation-model coupling of a SAW to a sheet of conductivity
``sigma``: attenuation, velocity shift, screened field, density
modulation, intensity profile and the time-averaged acoustoelectric drive.
"""

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .constants import DEFAULT_CONSTANTS, PhysicalConstants

YZ_LINBO3_VELOCITY = 3488.0
YZ_LINBO3_K2 = 0.048


def characteristic_conductivity(v0: float, eps_s: float,
                                eps0: float = DEFAULT_CONSTANTS.eps0) -> float:
    """Sheet conductivity at which SAW absorption peaks, ``v0 eps0 (1 + eps_s)``."""
    return v0 * eps0 * (1.0 + eps_s)


@dataclass(frozen=True)
class SawMaterial:
    v0: float = YZ_LINBO3_VELOCITY
    K2: float = YZ_LINBO3_K2
    sigma_m: float = characteristic_conductivity(YZ_LINBO3_VELOCITY, math.sqrt(44.3 * 27.6))
    Gamma_He: float = 0.0

    def __post_init__(self):
        if not self.v0 > 0:
            raise ValueError("v0 must be positive")
        if not self.K2 > 0:
            raise ValueError("K2 must be positive")
        if not self.sigma_m > 0:
            raise ValueError("sigma_m must be positive")
        if not self.Gamma_He >= 0:
            raise ValueError("Gamma_He must be non-negative")


@dataclass(frozen=True)
class IdtSpec:
    finger_pairs: int = 40
    pitch: float = 12e-6
    aperture: float = 4e-3
    alpha_L: float = 0.5

    def __post_init__(self):
        if self.finger_pairs < 1:
            raise ValueError("finger_pairs must be >= 1")
        if not (self.pitch > 0 and self.aperture > 0):
            raise ValueError("pitch and aperture must be positive")
        if not 0 < self.alpha_L <= 1:
            raise ValueError("alpha_L must lie in (0, 1]")

    @property
    def wavenumber(self) -> float:
        return 2.0 * math.pi / self.pitch


@dataclass(frozen=True)
class SawDrive:
    """RF excitation of the launcher IDT.

    ``t_p=None`` means continuous wave; otherwise the SAW is gated on at
    ``t_start`` for a duration ``t_p``.
    """

    frequency: float
    power_in: float
    t_p: Optional[float] = None
    t_start: float = 0.0

    def __post_init__(self):
        if not self.frequency > 0:
            raise ValueError("frequency must be positive")
        if not self.power_in >= 0:
            raise ValueError("power_in must be non-negative")
        if self.t_p is not None and not self.t_p > 0:
            raise ValueError("gated drive needs t_p > 0")

    @property
    def gated(self) -> bool:
        return self.t_p is not None


@dataclass(frozen=True)
class ReflectionSpec:
    round_trip_distance: float = 3.2e-3
    reflection_coefficient: float = 0.2

    def __post_init__(self):
        if not self.round_trip_distance > 0:
            raise ValueError("round_trip_distance must be positive")
        if not 0 <= self.reflection_coefficient < 1:
            raise ValueError("reflection_coefficient must lie in [0, 1)")


def resonant_frequency(material: SawMaterial, idt: IdtSpec) -> float:
    """Fundamental IDT resonance ``v0 / pitch`` (Hz)."""
    return material.v0 / idt.pitch


def idt_amplitude(f, idt: IdtSpec, f0: float):
    """Normalized array factor ``|sinc(N delta)|`` of an N-pair transducer."""
    f = np.asarray(f, dtype=float)
    delta = (f - f0) / f0
    # np.sinc(x) = sin(pi x) / (pi x)
    out = np.abs(np.sinc(idt.finger_pairs * delta))
    return float(out) if out.ndim == 0 else out


def electronic_attenuation(sigma, k: float, material: SawMaterial):
    """SAW intensity attenuation per unit length caused by the sheet (1/m)."""
    x = np.asarray(sigma, dtype=float) / material.sigma_m
    out = k * material.K2 / 2.0 * x / (1.0 + x * x)
    return float(out) if out.ndim == 0 else out


def velocity_shift(sigma, material: SawMaterial):
    """Relative velocity change ``dv / v0`` as a function of sheet conductivity."""
    x = np.asarray(sigma, dtype=float) / material.sigma_m
    out = material.K2 / 2.0 / (1.0 + x * x)
    return float(out) if out.ndim == 0 else out


def effective_field(E_p, sigma, material: SawMaterial):
    """Piezoelectric field after screening by the sheet (complex, V/m)."""
    return np.asarray(E_p) / (1.0 + 1j * np.asarray(sigma, dtype=float) / material.sigma_m)


def density_modulation(E_eff, sigma, v: float,
                       constants: PhysicalConstants = DEFAULT_CONSTANTS):
    """First-order density wave ``-sigma E_eff / (e v)`` (m^-2)."""
    if not v > 0:
        raise ValueError("SAW velocity must be positive")
    return -np.asarray(sigma) * np.asarray(E_eff) / (constants.e * v)


def total_attenuation(Gamma_el, Gamma_He):
    if np.any(np.asarray(Gamma_el) < 0) or np.any(np.asarray(Gamma_He) < 0):
        raise ValueError("attenuations must be non-negative")
    return Gamma_el + Gamma_He


def intensity_profile(x, drive: SawDrive, idt: IdtSpec, Gamma_tot: float):
    """SAW intensity per unit beam width (W/m) at distance ``x`` from the launcher."""
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        raise ValueError("x must be non-negative")
    out = idt.alpha_L * drive.power_in * np.exp(-Gamma_tot * x) / idt.aperture
    return float(out) if out.ndim == 0 else out


def acoustoelectric_drive(mu, v: float, Gamma_el, I):
    """Time-averaged acoustoelectric sheet current density (A/m).

    ``<j_ae> = (mu / v) * Gamma_el * I``.
    """
    if not v > 0:
        raise ValueError("SAW velocity must be positive")
    if np.any(np.asarray(mu) < 0) or np.any(np.asarray(Gamma_el) < 0) or np.any(np.asarray(I) < 0):
        raise ValueError("mobility, attenuation and intensity must be non-negative")
    out = np.asarray(mu, dtype=float) / v * np.asarray(Gamma_el) * np.asarray(I)
    return float(out) if out.ndim == 0 else out


def plasma_frequency(n: float, k: float,
                     constants: PhysicalConstants = DEFAULT_CONSTANTS) -> float:
    """2D plasmon frequency (Hz) at areal density ``n`` and wavenumber ``k``."""
    if n < 0 or not k > 0:
        raise ValueError("need n >= 0 and k > 0")
    wp = math.sqrt(constants.e ** 2 * n / (2.0 * constants.eps0 * constants.m_e)) * math.sqrt(k)
    return wp / (2.0 * math.pi)


def echo_delay(reflection: ReflectionSpec, material: SawMaterial) -> float:
    return reflection.round_trip_distance / material.v0


def cw_response_with_echo(f, idt: IdtSpec, reflection: ReflectionSpec,
                          material: SawMaterial, f0: Optional[float] = None):
    """IDT lineshape corrugated by a single edge reflection (complex)."""
    if f0 is None:
        f0 = resonant_frequency(material, idt)
    f = np.asarray(f, dtype=float)
    t_echo = echo_delay(reflection, material)
    return idt_amplitude(f, idt, f0) * (1.0 + reflection.reflection_coefficient
                                         * np.exp(2j * np.pi * f * t_echo))


def echo_spectrum(f, response):
    """Inverse Fourier transform of ``|response|`` over a uniform frequency band.

    Returns ``(t, magnitude)`` for non-negative delays.  The band mean is
    removed and a Hann taper applied before transforming.
    """
    f = np.asarray(f, dtype=float)
    df = np.diff(f)
    if len(f) < 8 or not np.allclose(df, df[0], rtol=1e-9, atol=0):
        raise ValueError("need a uniform frequency grid with >= 8 points")
    mag = np.abs(response)
    mag = (mag - mag.mean()) * np.hanning(len(mag))
    nfft = 8 * len(mag)
    spec = np.abs(np.fft.rfft(mag, n=nfft))
    t = np.fft.rfftfreq(nfft, d=df[0])
    return t, spec


def echo_peak_time(f, response, t_min: float = 0.0) -> float:
    t, spec = echo_spectrum(f, response)
    mask = t > t_min
    return float(t[mask][np.argmax(spec[mask])])


def frequency_sweep(f, idt: IdtSpec, reflection: ReflectionSpec,
                    material: SawMaterial, sigma: float, f0: Optional[float] = None):
    """Columns for the frequency-sweep CSV.

    Returns a dict with ``f_hz``, ``amplitude`` (magnitude of the echo-
    corrugated IDT response), ``gamma_el_per_m`` (attenuation at the
    wavenumber ``2 pi f / v0``) and ``dv_over_v``.
    """
    f = np.asarray(f, dtype=float)
    k = 2.0 * np.pi * f / material.v0
    return {
        "f_hz": f,
        "amplitude": np.abs(cw_response_with_echo(f, idt, reflection, material, f0)),
        "gamma_el_per_m": electronic_attenuation(sigma, 1.0, material) * k,
        "dv_over_v": np.full_like(f, velocity_shift(sigma, material)),
    }

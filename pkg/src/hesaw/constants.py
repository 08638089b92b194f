"""Physical constants and unit helpers.

Everything in the package is SI.  Densities quoted in cm^-2 and powers
quoted in dBm are converted here and nowhere else.
"""

import math
from dataclasses import dataclass, replace

from scipy import constants as _sc


@dataclass(frozen=True)
class PhysicalConstants:
    """Constants consumed by every physics module.

    Attributes
    ----------
    e : float
        Elementary charge (C).
    eps0 : float
        Vacuum permittivity (F/m).
    m_e : float
        Bare electron mass (kg).
    g : float
        Gravitational acceleration (m/s^2).
    rho_He : float
        Liquid 4He mass density near 1.55 K (kg/m^3).
    eps_He : float
        Relative permittivity of liquid helium.
    """

    e: float = _sc.e
    eps0: float = _sc.epsilon_0
    m_e: float = _sc.m_e
    g: float = _sc.g
    rho_He: float = 145.0
    eps_He: float = 1.057

    def __post_init__(self):
        for name in ("e", "eps0", "m_e", "g", "rho_He", "eps_He"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ValueError(f"constant {name} must be positive, got {value!r}")
        if self.eps_He <= 1.0:
            raise ValueError(f"eps_He must exceed 1, got {self.eps_He!r}")

    def with_overrides(self, **kwargs) -> "PhysicalConstants":
        return replace(self, **kwargs)

    def electronic_pressure(self, n: float) -> float:
        """Pressure (Pa) of a charged sheet of areal density ``n`` (m^-2).

        SI form of the Gaussian ``2 pi n^2 e^2``: the field below a sheet
        held against a grounded plane is ``n e / eps0`` and the pressure is
        ``n^2 e^2 / (2 eps0)``.
        """
        if n < 0:
            raise ValueError(f"density must be non-negative, got {n!r}")
        return n * n * self.e * self.e / (2.0 * self.eps0)


DEFAULT_CONSTANTS = PhysicalConstants()


def dbm_to_watts(p_dbm: float) -> float:
    """Convert power in dBm to W."""
    if not math.isfinite(p_dbm):
        raise ValueError(f"power in dBm must be finite, got {p_dbm!r}")
    return 1e-3 * 10.0 ** (p_dbm / 10.0)


def watts_to_dbm(p_w: float) -> float:
    if not (math.isfinite(p_w) and p_w > 0):
        raise ValueError(f"power must be positive and finite, got {p_w!r}")
    return 10.0 * math.log10(p_w / 1e-3)


def areal_density_si(n_cm2: float) -> float:
    """Convert an areal density from cm^-2 to m^-2."""
    if not n_cm2 >= 0:
        raise ValueError(f"density must be non-negative, got {n_cm2!r}")
    return n_cm2 * 1e4


def areal_density_cm2(n_m2: float) -> float:
    if not n_m2 >= 0:
        raise ValueError(f"density must be non-negative, got {n_m2!r}")
    return n_m2 * 1e-4


def mobility_cm2(mu_si: float) -> float:
    """m^2/(V s) -> cm^2/(V s)."""
    return mu_si * 1e4


def mobility_si(mu_cm2: float) -> float:
    """cm^2/(V s) -> m^2/(V s)."""
    return mu_cm2 * 1e-4

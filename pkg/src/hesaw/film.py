"""Thickness of the saturated superfluid film, neutral and charged.

The film obeys the retarded van der Waals law ``alpha / d^4 = rho g H``
(plus the electronic pressure when charged).  The prefactor ``alpha`` is
treated as a calibration constant fixed by one known (H, d0) pair.
"""

import csv
import math
import warnings
from dataclasses import dataclass
from importlib import resources
from os import PathLike
from typing import Sequence, Union

import numpy as np

from .constants import DEFAULT_CONSTANTS, PhysicalConstants

#: below this thickness the 1/d^3 (non-retarded) regime applies
RETARDED_LAW_MIN_THICKNESS = 60e-9

#: reference calibration pair: H = 0.2 mm gives d0 = 77 nm
REFERENCE_LEVEL = 0.2e-3
REFERENCE_THICKNESS = 77e-9


class ThinFilmWarning(UserWarning):
    """Result lies outside the validity range of the 1/d^4 law."""


def _positive(name, value):
    if not (math.isfinite(value) and value > 0):
        raise ValueError(f"{name} must be positive, got {value!r}")


def calibrate_alpha(H: float, d0: float, rho: float = DEFAULT_CONSTANTS.rho_He,
                    g: float = DEFAULT_CONSTANTS.g) -> float:
    """van der Waals constant (Pa m^4) reproducing thickness ``d0`` at level ``H``."""
    _positive("H", H)
    _positive("d0", d0)
    _positive("rho", rho)
    _positive("g", g)
    return rho * g * H * d0 ** 4


@dataclass(frozen=True)
class FilmParams:
    alpha: float
    rho: float = DEFAULT_CONSTANTS.rho_He
    g: float = DEFAULT_CONSTANTS.g

    def __post_init__(self):
        _positive("alpha", self.alpha)
        _positive("rho", self.rho)
        _positive("g", self.g)

    @classmethod
    def calibrated(cls, H: float = REFERENCE_LEVEL, d0: float = REFERENCE_THICKNESS,
                   constants: PhysicalConstants = DEFAULT_CONSTANTS) -> "FilmParams":
        alpha = calibrate_alpha(H, d0, constants.rho_He, constants.g)
        return cls(alpha=alpha, rho=constants.rho_He, g=constants.g)


def neutral_thickness(H: float, params: FilmParams) -> float:
    """Uncharged film thickness (m) at level depth ``H`` (m)."""
    _positive("H", H)
    return (params.alpha / (params.rho * params.g * H)) ** 0.25


def charged_thickness(H: float, n: float, params: FilmParams,
                      constants: PhysicalConstants = DEFAULT_CONSTANTS) -> float:
    """Film thickness (m) under a sheet of ``n`` electrons per m^2."""
    _positive("H", H)
    if not n >= 0:
        raise ValueError(f"density must be non-negative, got {n!r}")
    if n == 0:
        return neutral_thickness(H, params)
    p_total = params.rho * params.g * H + constants.electronic_pressure(n)
    return (params.alpha / p_total) ** 0.25


@dataclass(frozen=True)
class FilmState:
    d0: float
    d: float
    H: float
    n: float
    thin_film: bool = False

    def __post_init__(self):
        if not 0 < self.d <= self.d0:
            raise ValueError("expected 0 < d <= d0")
        if self.n < 0:
            raise ValueError("density must be non-negative")
        if (self.n == 0) != (self.d == self.d0):
            raise ValueError("d equals d0 exactly when n is zero")


def film_state(H: float, n: float, params: FilmParams,
               constants: PhysicalConstants = DEFAULT_CONSTANTS) -> FilmState:
    """Evaluate both thicknesses and flag results below the retarded-law range."""
    d0 = neutral_thickness(H, params)
    d = charged_thickness(H, n, params, constants)
    # roundoff can make d == d0 for tiny but nonzero n
    if n > 0 and d >= d0:
        d = math.nextafter(d0, 0.0)
    thin = d < RETARDED_LAW_MIN_THICKNESS
    if thin:
        warnings.warn(f"film thickness {d * 1e9:.1f} nm is below the 1/d^4 "
                      f"validity range ({RETARDED_LAW_MIN_THICKNESS * 1e9:.0f} nm)",
                      ThinFilmWarning, stacklevel=2)
    return FilmState(d0=d0, d=d, H=H, n=n, thin_film=thin)


class LevelTable:
    """Tabulated reservoir depth ``H`` versus admitted helium volume.

    Parameters
    ----------
    volume_cc : sequence of float
        Admitted liquid volume (cm^3), strictly increasing.
    H_m : sequence of float
        Distance from substrate top to reservoir level (m), strictly
        decreasing.
    """

    def __init__(self, volume_cc: Sequence[float], H_m: Sequence[float]):
        v = np.asarray(volume_cc, dtype=float)
        h = np.asarray(H_m, dtype=float)
        if v.ndim != 1 or v.shape != h.shape:
            raise ValueError("volume and H columns must be 1-D and equally long")
        if len(v) < 2:
            raise ValueError("level table needs at least two rows")
        if not np.all(np.isfinite(v)) or not np.all(np.isfinite(h)):
            raise ValueError("level table contains non-finite values")
        if np.any(np.diff(v) <= 0):
            raise ValueError("level table volumes must be strictly increasing")
        if np.any(np.diff(h) >= 0):
            raise ValueError("level table H values must be strictly decreasing")
        self.volume_cc = v
        self.H_m = h

    def __len__(self):
        return len(self.volume_cc)

    @classmethod
    def from_csv(cls, path: Union[str, PathLike]) -> "LevelTable":
        with open(path, newline="") as fh:
            return cls._from_rows(fh, str(path))

    @classmethod
    def default(cls) -> "LevelTable":
        """Table shipped with the package (see ``data/level_table.csv``)."""
        ref = resources.files("hesaw") / "data" / "level_table.csv"
        with ref.open("r", newline="") as fh:
            return cls._from_rows(fh, "level_table.csv")

    @classmethod
    def _from_rows(cls, fh, label):
        rows = [line for line in fh if line.strip() and not line.lstrip().startswith("#")]
        reader = csv.DictReader(rows)
        if reader.fieldnames is None or [f.strip() for f in reader.fieldnames] != ["volume_cc", "H_m"]:
            raise ValueError(f"{label}: expected header 'volume_cc,H_m', got {reader.fieldnames!r}")
        vols, hs = [], []
        for lineno, row in enumerate(reader, start=2):
            try:
                vols.append(float(row["volume_cc"]))
                hs.append(float(row["H_m"]))
            except (TypeError, ValueError) as exc:
                raise ValueError(f"{label}: bad row {lineno}: {row!r}") from exc
        return cls(vols, hs)

    def level_from_volume(self, volume_cc: float) -> float:
        return level_from_volume(volume_cc, self)


def level_from_volume(volume_cc: float, table: LevelTable) -> float:
    """Piecewise-linear interpolation of ``H`` (m) at an admitted volume (cm^3)."""
    lo, hi = table.volume_cc[0], table.volume_cc[-1]
    if not lo <= volume_cc <= hi:
        raise ValueError(f"volume {volume_cc} cc outside table range [{lo}, {hi}] cc")
    return float(np.interp(volume_cc, table.volume_cc, table.H_m))

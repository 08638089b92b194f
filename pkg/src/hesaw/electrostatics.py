"""Electrostatics of the trapped electron layer over source/gate/drain.

The layer is treated as a single equipotential conductor at potential
``V_e``; above electrode ``i`` the parallel-plate relation gives
``n_i = max(0, c_l (V_i - V_e) / e)`` and ``V_e`` is fixed by the total
electron count.
"""

import math
from dataclasses import dataclass, field
from typing import Dict, Optional, Sequence, Tuple

import numpy as np

from .constants import DEFAULT_CONSTANTS, PhysicalConstants


def effective_substrate_permittivity(eps11: float, eps33: float, eps13: float = 0.0) -> float:
    """``sqrt(eps11 eps33 - eps13^2)`` for an anisotropic substrate."""
    radicand = eps11 * eps33 - eps13 * eps13
    if not radicand > 0:
        raise ValueError(f"dielectric tensor gives non-positive radicand {radicand!r}")
    return math.sqrt(radicand)


@dataclass(frozen=True)
class ElectrodeStack:
    """Vertical layer stack between the electron sheet and the electrodes."""

    d_g: float = 70e-6
    d_s: float = 0.5e-3
    eps_He: float = DEFAULT_CONSTANTS.eps_He
    eps11: float = 44.3
    eps33: float = 27.6
    eps13: float = 0.0
    d: float = 0.0

    def __post_init__(self):
        if not (self.d_g > 0 and self.d_s >= 0 and self.d >= 0):
            raise ValueError("need d_g > 0 and non-negative d_s, d")
        if not self.eps11 * self.eps33 - self.eps13 ** 2 > 0:
            raise ValueError("dielectric tensor must satisfy eps11*eps33 > eps13^2")

    @property
    def eps_s(self) -> float:
        return effective_substrate_permittivity(self.eps11, self.eps33, self.eps13)


def layer_capacitance(stack: ElectrodeStack,
                      constants: PhysicalConstants = DEFAULT_CONSTANTS) -> float:
    """Capacitance per unit area (F/m^2) between the sheet and the electrodes.

    Series combination of the vacuum/helium gap, the substrate and the
    helium film itself.
    """
    inv = stack.d_g / stack.eps_He + stack.d_s / stack.eps_s + stack.d / stack.eps_He
    return constants.eps0 / inv


def density_from_sweep(delta_V: float, c_l: float,
                       constants: PhysicalConstants = DEFAULT_CONSTANTS) -> float:
    """Uniform density (m^-2) from the threshold offset ``delta_V`` of a gate sweep."""
    if delta_V < 0:
        raise ValueError("delta_V must be non-negative")
    return 2.0 * c_l * delta_V / (3.0 * constants.e)


def sweep_offset_for_density(n: float, c_l: float,
                             constants: PhysicalConstants = DEFAULT_CONSTANTS) -> float:
    """Inverse of :func:`density_from_sweep`."""
    if n < 0:
        raise ValueError("density must be non-negative")
    return 3.0 * constants.e * n / (2.0 * c_l)


@dataclass(frozen=True)
class ElectrodeLayout:
    """Electrodes in order along the SAW propagation axis."""

    widths: Tuple[float, ...] = (4.95e-3, 4.95e-3, 4.95e-3)
    length: float = 9e-3
    names: Tuple[str, ...] = ("source", "gate", "drain")

    def __post_init__(self):
        object.__setattr__(self, "widths", tuple(float(w) for w in self.widths))
        object.__setattr__(self, "names", tuple(self.names))
        if len(self.widths) != len(self.names) or not self.widths:
            raise ValueError("need one name per electrode width")
        if len(set(self.names)) != len(self.names):
            raise ValueError("electrode names must be unique")
        if any(not w > 0 for w in self.widths) or not self.length > 0:
            raise ValueError("electrode dimensions must be positive")

    @property
    def areas(self) -> np.ndarray:
        return np.asarray(self.widths) * self.length

    @property
    def total_width(self) -> float:
        return float(sum(self.widths))

    @property
    def edges(self) -> np.ndarray:
        """Boundaries along the propagation axis, starting at 0."""
        return np.concatenate([[0.0], np.cumsum(self.widths)])

    def index(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise KeyError(f"no electrode named {name!r}; have {self.names}") from None


@dataclass(frozen=True)
class BiasConfig:
    V_s: float = 80.0
    V_g: float = 80.0
    V_d: float = 80.0
    V_guard: float = -3.2

    def __post_init__(self):
        for name in ("V_s", "V_g", "V_d", "V_guard"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")

    def voltages(self) -> np.ndarray:
        return np.array([self.V_s, self.V_g, self.V_d])


@dataclass(frozen=True)
class DensityProfile:
    n: np.ndarray
    N_total: float
    V_e: float
    areas: np.ndarray = field(repr=False)

    def __post_init__(self):
        if np.any(self.n < 0):
            raise ValueError("densities must be non-negative")

    @property
    def count(self) -> float:
        return float(np.dot(self.n, self.areas))


def _voltages(biases) -> np.ndarray:
    if isinstance(biases, BiasConfig):
        return biases.voltages()
    return np.asarray(biases, dtype=float)


def equilibrium_density(N_total: float, biases, layout: ElectrodeLayout, c_l: float,
                        constants: PhysicalConstants = DEFAULT_CONSTANTS,
                        rtol: float = 1e-10) -> DensityProfile:
    """Distribute ``N_total`` electrons over the electrodes at a common potential.

    Parameters
    ----------
    N_total : float
        Number of electrons in the layer.
    biases : BiasConfig or sequence of float
        Electrode voltages, in layout order.
    layout : ElectrodeLayout
    c_l : float
        Layer capacitance per unit area (F/m^2).

    Returns
    -------
    DensityProfile
        Per-electrode density with ``sum(n_i A_i) == N_total``.

    Notes
    -----
    ``N(V_e)`` is continuous and strictly decreasing wherever it is
    positive, so ``V_e`` is bracketed and bisected.  Once the occupied set
    is known the balance is affine in ``V_e`` and is solved exactly.
    """
    if not N_total >= 0:
        raise ValueError(f"N_total must be non-negative, got {N_total!r}")
    V = _voltages(biases)
    A = layout.areas
    if V.shape != A.shape:
        raise ValueError("one bias per electrode required")
    k = c_l / constants.e

    def count(Ve):
        return float(np.dot(np.maximum(0.0, k * (V - Ve)), A))

    if N_total == 0:
        return DensityProfile(np.zeros_like(V), 0.0, float(V.max()), A)

    hi = float(V.max())
    lo = hi - N_total / (k * A.min())
    while count(lo) < N_total:
        lo -= hi - lo
    for _ in range(400):
        Ve = 0.5 * (lo + hi)
        N = count(Ve)
        if abs(N - N_total) < rtol * N_total:
            break
        if N > N_total:
            lo = Ve
        else:
            hi = Ve
    # polish on the occupied set, where N(V_e) is affine
    occ = V > Ve
    Ve_exact = (np.dot(V[occ], A[occ]) - N_total / k) / A[occ].sum()
    if np.all(V[occ] > Ve_exact) and np.all(V[~occ] <= Ve_exact):
        Ve = float(Ve_exact)
    n = np.maximum(0.0, k * (V - Ve))
    return DensityProfile(n, float(N_total), Ve, A)


def uniform_bias_count(n: float, layout: ElectrodeLayout) -> float:
    """Electron count of a uniform layer of density ``n`` over the whole layout."""
    return float(n * layout.areas.sum())


def fet_threshold(N_total: float, V_s: float, V_d: float, layout: ElectrodeLayout,
                  c_l: float, constants: PhysicalConstants = DEFAULT_CONSTANTS,
                  gate: str = "gate") -> float:
    """Gate voltage below which the region above the gate is empty.

    With the gate depleted the layer floats at the ``V_e`` fixed by the
    remaining electrodes; the gate admits electrons as soon as
    ``V_g > V_e``, so ``V_th`` equals that ``V_e``.
    """
    if not N_total > 0:
        raise ValueError("N_total must be positive")
    if len(layout.widths) != 3:
        raise ValueError("threshold is defined for a source/gate/drain layout")
    ig = layout.index(gate)
    V = np.zeros(3)
    V[layout.index("source")] = V_s
    V[layout.index("drain")] = V_d
    mask = np.ones(len(V), bool)
    mask[ig] = False
    sub = ElectrodeLayout(widths=tuple(np.asarray(layout.widths)[mask]), length=layout.length,
                          names=tuple(np.asarray(layout.names)[mask]))
    return equilibrium_density(N_total, V[mask], sub, c_l, constants).V_e


def biases_for_gate(biases: BiasConfig, V_g: float) -> BiasConfig:
    return BiasConfig(V_s=biases.V_s, V_g=V_g, V_d=biases.V_d, V_guard=biases.V_guard)


@dataclass
class FetSweep:
    V_g: np.ndarray
    current: np.ndarray
    densities: np.ndarray  # shape (len(V_g), n_electrodes)
    V_th: Optional[float] = None

    def columns(self, layout: ElectrodeLayout) -> Dict[str, np.ndarray]:
        cols = {"V_g": self.V_g, "current_amp": self.current}
        for j, name in enumerate(layout.names):
            cols[f"n_{name}"] = self.densities[:, j]
        return cols


def fet_transfer_curve(V_g: Sequence[float], N_total: float, biases: BiasConfig,
                       layout: ElectrodeLayout, c_l: float, mu: float,
                       frequency: float = 60e3, V_ex: float = 0.1, nodes: int = 256,
                       constants: PhysicalConstants = DEFAULT_CONSTANTS) -> FetSweep:
    """Source-drain AC current amplitude versus gate bias.

    Each gate voltage gets its own equilibrium profile; the per-electrode
    conductivity ``n_i e mu`` then sets up a transmission line evaluated at
    ``frequency``.
    """
    from . import txline

    V_g = np.asarray(V_g, dtype=float)
    if V_g.ndim != 1 or np.any(np.diff(V_g) <= 0):
        raise ValueError("gate sweep must be strictly increasing")
    current = np.empty_like(V_g)
    dens = np.empty((len(V_g), len(layout.widths)))
    for i, vg in enumerate(V_g):
        prof = equilibrium_density(N_total, biases_for_gate(biases, vg), layout, c_l, constants)
        dens[i] = prof.n
        sigma = prof.n * constants.e * mu
        ladder = txline.build_ladder(sigma, c_l, layout, nodes)
        current[i] = abs(txline.frequency_response(ladder, frequency, V_ex))
    V_th = fet_threshold(N_total, biases.V_s, biases.V_d, layout, c_l, constants)
    return FetSweep(V_g, current, dens, V_th)

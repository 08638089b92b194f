"""Distributed RC model of the electron sheet over the electrodes.

The sheet is cut into ``N`` cells.  Each cell is a node with a capacitance
``c_l W dx`` to the electrode beneath it; neighbouring nodes are joined by
the series resistance of two half cells.  Cells over a depleted electrode
carry no charge and drop out of the network.

Electrode roles for the AC measurement: ``drive`` electrodes carry the
excitation ``V_ex``, ``ground`` electrodes sit at AC ground and ``sense``
electrodes feed a virtual-ground current amplifier.
"""

import csv
from dataclasses import dataclass, replace
from os import PathLike
from typing import Dict, Mapping, Optional, Sequence, Union

import numpy as np
from scipy.linalg import solve_banded

from .constants import DEFAULT_CONSTANTS
from .electrostatics import ElectrodeLayout
from .fitkit import FitError, FitProblem, least_squares

DEFAULT_NODES = 256
DEFAULT_ROLES = {"source": "drive", "gate": "ground", "drain": "sense"}


def nodes_per_electrode(layout: ElectrodeLayout, N: int) -> np.ndarray:
    """Split ``N`` nodes over the electrodes in proportion to their widths.

    Largest-remainder rounding with at least one node per electrode, so
    every electrode boundary falls on a cell face.
    """
    k = len(layout.widths)
    if N < k:
        raise ValueError(f"need at least one node per electrode ({k}), got N={N}")
    w = np.asarray(layout.widths)
    share = (N - k) * w / w.sum()
    counts = np.floor(share).astype(int)
    rem = (N - k) - counts.sum()
    order = np.argsort(-(share - counts), kind="stable")
    counts[order[:rem]] += 1
    return counts + 1


@dataclass(frozen=True)
class RcLadder:
    """Discretized line: per-node sheet conductivity, cell width and electrode."""

    sigma: np.ndarray      # S, per node (0 = depleted)
    dx: np.ndarray         # m, per node
    electrode: np.ndarray  # int index into layout.names, per node
    c_l: float             # F/m^2
    W: float               # m, transverse width
    layout: ElectrodeLayout

    @property
    def N(self) -> int:
        return len(self.sigma)

    @property
    def L(self) -> float:
        return float(self.dx.sum())

    @property
    def r(self) -> np.ndarray:
        """Resistance per unit length (ohm/m); infinite over depleted cells."""
        with np.errstate(divide="ignore"):
            return np.where(self.sigma > 0, 1.0 / (self.sigma * self.W), np.inf)

    @property
    def c(self) -> float:
        """Capacitance per unit length (F/m)."""
        return self.c_l * self.W

    @property
    def R_tot(self) -> float:
        return float(np.sum(self.r * self.dx))

    @property
    def C_tot(self) -> float:
        return self.c * self.L

    def link_conductance(self) -> np.ndarray:
        """Conductance between node ``j`` and ``j + 1``; zero across depleted cells."""
        s = self.sigma
        ok = (s[:-1] > 0) & (s[1:] > 0)
        G = np.zeros(self.N - 1)
        R = 0.5 * self.dx[:-1] / (np.where(ok, s[:-1], 1.0) * self.W) \
            + 0.5 * self.dx[1:] / (np.where(ok, s[1:], 1.0) * self.W)
        G[ok] = 1.0 / R[ok]
        return G


def build_ladder(sigma, c_l: float, layout: ElectrodeLayout, N: int = DEFAULT_NODES) -> RcLadder:
    """Discretize the sheet over ``layout`` into ``N`` nodes.

    ``sigma`` is either one conductivity for the whole sheet or one per
    electrode (zero marks a depleted region).
    """
    sig_e = np.broadcast_to(np.asarray(sigma, dtype=float), (len(layout.widths),))
    if np.any(sig_e < 0) or not np.all(np.isfinite(sig_e)):
        raise ValueError("conductivities must be finite and non-negative")
    if not np.any(sig_e > 0):
        raise ValueError("the whole line is non-conducting")
    if not c_l > 0:
        raise ValueError("c_l must be positive")
    counts = nodes_per_electrode(layout, N)
    electrode = np.repeat(np.arange(len(counts)), counts)
    dx = np.repeat(np.asarray(layout.widths) / counts, counts)
    return RcLadder(sig_e[electrode].copy(), dx, electrode, float(c_l), layout.length, layout)


def _roles(ladder: RcLadder, roles: Optional[Mapping[str, str]]) -> Dict[str, str]:
    roles = dict(DEFAULT_ROLES if roles is None else roles)
    for name in ladder.layout.names:
        if name not in roles:
            roles[name] = "ground"
    bad = {v for v in roles.values()} - {"drive", "ground", "sense"}
    if bad:
        raise ValueError(f"unknown electrode roles {bad}")
    return roles


def node_voltages(ladder: RcLadder, f: float, V_ex: float = 0.1,
                  roles: Optional[Mapping[str, str]] = None) -> np.ndarray:
    """Complex node potentials; depleted nodes are reported as 0."""
    if not f > 0:
        raise ValueError("frequency must be positive")
    roles = _roles(ladder, roles)
    names = ladder.layout.names
    drive = np.array([roles[names[i]] == "drive" for i in ladder.electrode])
    active = ladder.sigma > 0
    y = 2j * np.pi * f * ladder.c * ladder.dx
    G = ladder.link_conductance()
    diag = np.where(active, y, 1.0).astype(complex)
    diag[:-1] += G
    diag[1:] += G
    ab = np.zeros((3, ladder.N), complex)
    ab[0, 1:] = -G
    ab[1] = diag
    ab[2, :-1] = -G
    rhs = np.where(active & drive, y * V_ex, 0.0).astype(complex)
    return solve_banded((1, 1), ab, rhs)


def frequency_response(ladder: RcLadder, f: float, V_ex: float = 0.1,
                       roles: Optional[Mapping[str, str]] = None) -> complex:
    """Complex current (A) into the sense electrode(s) at frequency ``f``.

    A line cut by depleted cells simply returns zero if no conducting path
    links drive and sense electrodes.
    """
    roles = _roles(ladder, roles)
    V = node_voltages(ladder, f, V_ex, roles)
    names = ladder.layout.names
    sense = np.array([roles[names[i]] == "sense" for i in ladder.electrode])
    active = ladder.sigma > 0
    y = 2j * np.pi * f * ladder.c * ladder.dx
    return complex(np.sum(np.where(active & sense, y * V, 0.0)))


@dataclass
class FreqResponse:
    f: np.ndarray
    current: np.ndarray  # complex A

    def __post_init__(self):
        self.f = np.asarray(self.f, dtype=float)
        self.current = np.asarray(self.current, dtype=complex)
        if self.f.shape != self.current.shape or self.f.ndim != 1:
            raise ValueError("frequency and current series must be equal-length 1-D arrays")
        if np.any(np.diff(self.f) <= 0):
            raise ValueError("frequencies must be strictly increasing")

    @classmethod
    def from_csv(cls, path: Union[str, PathLike]) -> "FreqResponse":
        with open(path, newline="") as fh:
            rows = [line for line in fh if line.strip() and not line.startswith("#")]
        reader = csv.DictReader(rows)
        if reader.fieldnames is None or reader.fieldnames[:3] != ["f_hz", "re_amp", "im_amp"]:
            raise ValueError(f"{path}: expected header starting 'f_hz,re_amp,im_amp'")
        f, re, im = [], [], []
        for row in reader:
            f.append(float(row["f_hz"]))
            re.append(float(row["re_amp"]))
            im.append(float(row["im_amp"]))
        return cls(np.array(f), np.array(re) + 1j * np.array(im))

    def columns(self):
        return {"f_hz": self.f, "re_amp": self.current.real, "im_amp": self.current.imag}


def sweep(ladder: RcLadder, f: Sequence[float], V_ex: float = 0.1,
          roles: Optional[Mapping[str, str]] = None) -> FreqResponse:
    f = np.asarray(f, dtype=float)
    return FreqResponse(f, np.array([frequency_response(ladder, fi, V_ex, roles) for fi in f]))


def with_sigma(ladder: RcLadder, sigma: float) -> RcLadder:
    """Same discretization with a uniform ``sigma`` on every conducting cell."""
    return replace(ladder, sigma=np.where(ladder.sigma > 0, float(sigma), 0.0))


@dataclass
class ConductivityFit:
    sigma: float
    sigma_stderr: float
    residual_norm: float
    iterations: int
    converged: bool

    def report(self) -> str:
        return "\n".join([
            "[conductivity_fit]",
            f"sigma_S = {self.sigma:.6e}",
            f"sigma_stderr_S = {self.sigma_stderr:.3e}",
            f"residual_norm = {self.residual_norm:.6e}",
            f"iterations = {self.iterations}",
            f"converged = {str(self.converged).lower()}",
        ]) + "\n"


def fit_conductivity(measured: FreqResponse, template: RcLadder, V_ex: float = 0.1,
                     roles: Optional[Mapping[str, str]] = None, sigma0: Optional[float] = None,
                     max_iter: int = 100) -> ConductivityFit:
    """Least-squares estimate of a uniform sheet conductivity from a frequency response.

    The fit runs in ``log(sigma)``; residuals are the real and imaginary
    parts of model minus data, normalized by the largest measured magnitude.
    """
    if len(measured.f) < 5:
        raise FitError("need at least 5 frequency points")
    mag = np.abs(measured.current)
    scale = mag.max()
    if scale == 0 or np.ptp(mag) <= 1e-6 * scale:
        raise FitError("frequency-independent response: conductivity is unidentifiable")
    if sigma0 is None:
        conducting = template.sigma[template.sigma > 0]
        sigma0 = float(np.exp(np.mean(np.log(conducting))))

    def residuals(p):
        model = sweep(with_sigma(template, np.exp(p[0])), measured.f, V_ex, roles).current
        d = (model - measured.current) / scale
        return np.concatenate([d.real, d.imag])

    lo, hi = np.log(sigma0) - 12.0, np.log(sigma0) + 12.0
    res = least_squares(FitProblem(residuals, [np.log(sigma0)], [lo], [hi], max_iter=max_iter))
    sigma = float(np.exp(res.params[0]))
    out = ConductivityFit(sigma, sigma * float(res.stderr[0]), res.residual_norm,
                          res.iterations, res.converged)
    if not res.converged:
        raise FitError(f"conductivity fit did not converge in {res.iterations} iterations", out)
    if res.at_bound(FitProblem(residuals, res.params, [lo], [hi])).any():
        raise FitError("conductivity fit ran into its search bound", out)
    return out


def elmore_delay(r: float, c_l_area: float, L: float, W: float, N: int) -> float:
    """Elmore delay (s) of an end-driven uniform RC line cut into ``N`` sections.

    ``r`` is resistance per unit length (ohm/m) and ``c_l_area`` the
    capacitance per unit area (F/m^2).
    """
    if not (r > 0 and c_l_area > 0 and L > 0 and W > 0) or N < 1:
        raise ValueError("elmore_delay needs positive r, c_l, L, W and N >= 1")
    return r * c_l_area * W * L * L * (1.0 + N) / (2.0 * N)


def ladder_elmore_delay(R: Sequence[float], C: Sequence[float]) -> float:
    """Elmore delay at the far end of an RC chain driven through ``R[0]``.

    Node ``j`` sits after resistor ``R[j]`` and carries capacitance ``C[j]``.
    Sums each resistor times the capacitance downstream of it.
    """
    R = np.asarray(R, dtype=float)
    C = np.asarray(C, dtype=float)
    if R.shape != C.shape:
        raise ValueError("need one capacitance per section")
    downstream = np.cumsum(C[::-1])[::-1]
    return float(np.dot(R, downstream))


def mobility_from_sigma(sigma: float, n: float, e: float = DEFAULT_CONSTANTS.e) -> float:
    """Drude mobility (m^2/Vs) from sheet conductivity and density."""
    if not n > 0:
        raise ValueError("density must be positive")
    return sigma / (n * e)


def vapor_collision_rate(mu: float, m_eff: float = DEFAULT_CONSTANTS.m_e,
                         e: float = DEFAULT_CONSTANTS.e) -> float:
    """Momentum relaxation rate ``e / (mu m*)`` (1/s)."""
    if not mu > 0:
        raise ValueError("mobility must be positive")
    return e / (mu * m_eff)

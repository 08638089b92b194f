"""Time-of-flight simulation of gated SAW charge pumping.

One-dimensional finite-volume model of the electron sheet along the SAW
axis.  The electron particle flux through a cell face is

    F = mu n d(phi)/dx + F_saw,     phi = V_electrode - e n / c_l,

i.e. drift in the local parallel-plate potential plus the time-averaged
acoustoelectric push of the SAW where the gated packet currently is.  The
sheet ends are hard walls (guard confinement).  The detected current is
the rate of change of the image charge ``e N_det`` on the detection
electrode.
"""

import hashlib
import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
from scipy.linalg import solve_banded

from .constants import DEFAULT_CONSTANTS, PhysicalConstants
from .electrostatics import BiasConfig, ElectrodeLayout, equilibrium_density
from .fitkit import ExpFit, FitError, exp_fit
from .saw import IdtSpec, SawDrive, SawMaterial, electronic_attenuation
from .txline import nodes_per_electrode

DEFAULT_CELLS = 512
STEPS_PER_PULSE = 4096
EXPLICIT_SAFETY = 0.4


class StabilityError(ValueError):
    def __init__(self, dt, dt_max):
        super().__init__(f"time step {dt:.3e} s exceeds the explicit stability limit; "
                         f"use dt <= {dt_max:.3e} s or the semi-implicit scheme")
        self.dt = dt
        self.dt_max = dt_max


class NegativeDensityError(RuntimeError):
    pass


def arrival_delay(distance: float, v: float) -> float:
    """Time for the SAW front to travel ``distance`` (m) at speed ``v`` (m/s)."""
    if distance < 0 or not v > 0:
        raise ValueError("need distance >= 0 and v > 0")
    return distance / v


@dataclass(frozen=True)
class Grid1D:
    """Finite-volume cells over the sheet; positions measured from the launcher."""

    faces: np.ndarray
    electrode: np.ndarray

    def __post_init__(self):
        if len(self.faces) - 1 < 16:
            raise ValueError("grid needs at least 16 cells")
        if np.any(np.diff(self.faces) <= 0):
            raise ValueError("cell widths must be positive")
        if len(self.electrode) != len(self.faces) - 1:
            raise ValueError("one electrode index per cell")

    @property
    def M(self) -> int:
        return len(self.faces) - 1

    @property
    def dx(self) -> np.ndarray:
        return np.diff(self.faces)

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.faces[:-1] + self.faces[1:])


def build_grid(layout: ElectrodeLayout, sheet_offset: float, M: int = DEFAULT_CELLS) -> Grid1D:
    """Uniform cells within each electrode, with a face on every electrode edge."""
    if sheet_offset < 0:
        raise ValueError("sheet_offset must be non-negative")
    counts = nodes_per_electrode(layout, M)
    edges = sheet_offset + layout.edges
    faces = [edges[0]]
    for j, c in enumerate(counts):
        faces.extend(np.linspace(edges[j], edges[j + 1], c + 1)[1:])
    return Grid1D(np.asarray(faces), np.repeat(np.arange(len(counts)), counts))


@dataclass(frozen=True)
class PumpScenario:
    """Everything a gated pumping run needs.

    ``drive_efficiency`` scales the ideal acoustoelectric drive and is a
    calibrated constant.  ``gamma_tot`` is the intensity decay rate over the
    sheet (1/m); ``None`` takes ``Gamma_el(sigma0) + Gamma_He`` from the
    material.
    """

    drive: SawDrive
    material: SawMaterial
    idt: IdtSpec
    layout: ElectrodeLayout
    biases: BiasConfig
    N_total: float
    mu: float
    c_l: float
    sheet_offset: float = 0.975e-3
    detector: str = "source"
    drive_efficiency: float = 1.5e-7
    gamma_tot: Optional[float] = 0.0
    constants: PhysicalConstants = DEFAULT_CONSTANTS

    def __post_init__(self):
        if not self.drive.gated:
            raise ValueError("pump scenarios need a gated drive (t_p)")
        if not (self.N_total >= 0 and self.mu > 0 and self.c_l > 0):
            raise ValueError("need N_total >= 0, mu > 0, c_l > 0")
        if self.drive_efficiency < 0:
            raise ValueError("drive_efficiency must be non-negative")
        self.layout.index(self.detector)

    @property
    def x_det(self) -> float:
        """First electrode edge of the detector reached by the SAW inside the sheet."""
        j = self.layout.index(self.detector)
        edges = self.sheet_offset + self.layout.edges
        if len(self.layout.widths) == 1:
            raise ValueError("a single-electrode sheet has no detection boundary")
        return float(edges[j] if j > 0 else edges[1])

    @property
    def t_d(self) -> float:
        return self.drive.t_start + arrival_delay(self.x_det, self.material.v0)

    @property
    def transit_time(self) -> float:
        """SAW transit time across the sheet."""
        return self.layout.total_width / self.material.v0

    def equilibrium(self):
        V = self.biases.voltages() if len(self.layout.widths) == 3 else np.full(len(self.layout.widths), self.biases.V_s)
        return equilibrium_density(self.N_total, V, self.layout, self.c_l, self.constants)

    def slow_time(self) -> float:
        """Slowest relaxation time of a uniform sheet between hard walls."""
        prof = self.equilibrium()
        n = prof.n[prof.n > 0]
        if n.size == 0:
            return 0.0
        sigma = float(n.mean()) * self.constants.e * self.mu
        return self.layout.total_width ** 2 * self.c_l / (math.pi ** 2 * sigma)

    def with_power(self, power_in: float) -> "PumpScenario":
        return replace(self, drive=replace(self.drive, power_in=power_in))


@dataclass
class TraceResult:
    t: np.ndarray
    i_ae: np.ndarray        # A
    delta_n: np.ndarray     # electrons
    meta: dict = field(default_factory=dict)
    n_final: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        if np.any(np.diff(self.t) <= 0):
            raise ValueError("trace time grid must be strictly increasing")
        if self.delta_n[0] != 0:
            raise ValueError("delta_n must start at zero")

    def digest(self) -> str:
        h = hashlib.sha256()
        for arr in (self.t, self.i_ae, self.delta_n):
            h.update(np.ascontiguousarray(arr, dtype=np.float64).tobytes())
        return h.hexdigest()

    def columns(self):
        return {"t_s": self.t, "i_ae_a": self.i_ae, "delta_n": self.delta_n}


def _envelope_fraction(t0, t1, on, t_p):
    """Fraction of ``[t0, t1]`` inside each on-window ``[on, on + t_p]``."""
    return np.clip(np.minimum(t1, on + t_p) - np.maximum(t0, on), 0.0, None) / (t1 - t0)


def explicit_dt_limit(grid: Grid1D, scenario: PumpScenario, n: np.ndarray) -> float:
    """Largest forward-Euler step, with safety margin, keeping the update monotone.

    The diagonal of the explicit update is ``1 - dt (2 D / h^2 + |u| / h)``;
    keeping it non-negative rules out both negative densities and ringing of
    the fastest mode.
    """
    e = scenario.constants.e
    sigma_max = float(n.max()) * e * scenario.mu
    h = float(grid.dx.min())
    V = scenario.biases.voltages()[grid.electrode] if len(scenario.layout.widths) == 3 \
        else np.full(grid.M, scenario.biases.V_s)
    u = scenario.mu * np.abs(np.diff(V)) / (0.5 * (grid.dx[:-1] + grid.dx[1:]))
    rate = 2.0 * sigma_max / (scenario.c_l * h * h) + (float(u.max()) / h if u.size else 0.0)
    return EXPLICIT_SAFETY / rate if rate > 0 else np.inf


def simulate_gated_pump(scenario: PumpScenario, grid: Optional[Grid1D] = None,
                        dt: Optional[float] = None, t_end: Optional[float] = None,
                        scheme: str = "semi-implicit", record_every: int = 1) -> TraceResult:
    """Integrate the sheet continuity equation through one gated SAW packet.

    Parameters
    ----------
    scenario : PumpScenario
    grid : Grid1D, optional
        Defaults to :data:`DEFAULT_CELLS` cells over the layout.
    dt : float, optional
        Time step; defaults to ``t_p / 4096``.
    t_end : float, optional
        Defaults to the packet leaving the sheet plus twenty slow
        relaxation times (at least 10 us).
    scheme : {"semi-implicit", "explicit"}
        Semi-implicit treats drift and self-field diffusion with backward
        Euler and the SAW push explicitly.  Explicit is forward Euler
        throughout and enforces its stability limit.

    Returns
    -------
    TraceResult
        Detector current (A) and the change of the electron count above
        the detector, sampled every ``record_every`` steps.
    """
    if scheme not in ("semi-implicit", "explicit"):
        raise ValueError(f"unknown scheme {scheme!r}")
    sc = scenario
    e = sc.constants.e
    mat, drive = sc.material, sc.drive
    v = mat.v0
    if grid is None:
        grid = build_grid(sc.layout, sc.sheet_offset)
    if dt is None:
        dt = drive.t_p / STEPS_PER_PULSE
    if not dt > 0:
        raise ValueError("dt must be positive")
    if t_end is None:
        t_end = (drive.t_start + drive.t_p + (sc.sheet_offset + sc.layout.total_width) / v
                 + max(20.0 * sc.slow_time(), 10e-6))
    n_steps = int(math.ceil(t_end / dt - 1e-9))

    M = grid.M
    dxc = grid.dx
    h = 0.5 * (dxc[:-1] + dxc[1:])
    x_int = grid.faces[1:-1]
    n = sc.equilibrium().n[grid.electrode].astype(float)
    if scheme == "explicit":
        dt_max = explicit_dt_limit(grid, sc, n)
        if dt > dt_max:
            raise StabilityError(dt, dt_max)

    nvolt = len(sc.layout.widths)
    V = (sc.biases.voltages() if nvolt == 3 else np.full(nvolt, sc.biases.V_s))[grid.electrode]
    dV = np.diff(V)
    u = sc.mu * dV / h
    up_pos = np.maximum(u, 0.0)
    up_neg = np.minimum(u, 0.0)

    # SAW push per face: eff * (w / W) * (mu / (e v)) * Gamma_el(sigma_up) * I(x)
    k = 2.0 * math.pi * drive.frequency / v
    x0 = sc.sheet_offset
    gamma = sc.gamma_tot
    if gamma is None:
        sigma0 = float(np.mean(n)) * e * sc.mu
        gamma = electronic_attenuation(sigma0, k, mat) + mat.Gamma_He
    I0 = sc.idt.alpha_L * drive.power_in / sc.idt.aperture * math.exp(-mat.Gamma_He * x0)
    intensity = I0 * np.exp(-gamma * (x_int - x0))
    fill = min(sc.idt.aperture / sc.layout.length, 1.0)
    push = sc.drive_efficiency * fill * sc.mu / (e * v) * intensity  # times Gamma_el(sigma_up)
    on = drive.t_start + x_int / v

    det = grid.electrode == sc.layout.index(sc.detector)
    # faces bounding the detector: +1 if flux through the face enters the detector
    sign_in = np.zeros(M - 1)
    sign_in[det[1:] & ~det[:-1]] = 1.0   # face left of a detector cell
    sign_in[det[:-1] & ~det[1:]] = -1.0  # face right of a detector cell
    W = sc.layout.length

    def fluxes(n_new, n_old, f_saw):
        nf = np.where(dV > 0, n_old[:-1], np.where(dV < 0, n_old[1:], 0.5 * (n_old[:-1] + n_old[1:])))
        D = sc.mu * e * nf / sc.c_l
        return up_pos * n_new[:-1] + up_neg * n_new[1:] - D * (n_new[1:] - n_new[:-1]) / h + f_saw

    rec_t = [0.0]
    rec_i = [0.0]
    total0 = float(np.dot(n, dxc))
    t = 0.0
    ab = np.zeros((3, M))
    for step in range(1, n_steps + 1):
        t1 = step * dt
        frac = _envelope_fraction(t, t1, on, drive.t_p)
        if np.any(frac > 0) and drive.power_in > 0:
            sigma_up = n[:-1] * e * sc.mu
            f_saw = push * electronic_attenuation(sigma_up, k, mat) * frac
            # no cell exports more than half its content in one step
            f_saw = np.minimum(f_saw, 0.5 * n[:-1] * dxc[:-1] / dt)
        else:
            f_saw = np.zeros(M - 1)
        if scheme == "explicit":
            F = fluxes(n, n, f_saw)
            div = np.zeros(M)
            div[:-1] += F
            div[1:] -= F
            n_new = n - dt / dxc * div
        else:
            nf = np.where(dV > 0, n[:-1], np.where(dV < 0, n[1:], 0.5 * (n[:-1] + n[1:])))
            D = sc.mu * e * nf / sc.c_l
            a_r = up_pos + D / h    # coefficient of n_i in the flux leaving i to the right
            b_r = up_neg - D / h    # coefficient of n_{i+1}
            r = dt / dxc
            diag = np.ones(M)
            diag[:-1] += r[:-1] * a_r
            diag[1:] -= r[1:] * b_r
            ab[0, 1:] = r[:-1] * b_r
            ab[1] = diag
            ab[2, :-1] = -r[1:] * a_r
            rhs = n.copy()
            rhs[:-1] -= r[:-1] * f_saw
            rhs[1:] += r[1:] * f_saw
            n_new = solve_banded((1, 1), ab, rhs, check_finite=False)
            F = fluxes(n_new, n, f_saw)
        n_min = float(n_new.min())
        if n_min < 0:
            if n_min < -1e-9 * float(n.max()):
                raise NegativeDensityError(f"negative density {n_min:.3e} m^-2 at t = {t1:.3e} s")
            n_new = np.maximum(n_new, 0.0)
        i_ae = e * W * float(np.dot(sign_in, F))
        n = n_new
        t = t1
        if step % record_every == 0 or step == n_steps:
            rec_t.append(t1)
            rec_i.append(i_ae)

    t_arr = np.asarray(rec_t)
    i_arr = np.asarray(rec_i)
    dn = delta_n_series(t_arr, i_arr, e)
    total1 = float(np.dot(n, dxc))
    meta = {
        "power_w": drive.power_in,
        "t_p": drive.t_p,
        "t_start": drive.t_start,
        "t_d": sc.t_d,
        "transit": sc.transit_time,
        "dt": dt,
        "cells": M,
        "scheme": scheme,
        "N_det0": float(W * np.dot(sc.equilibrium().n[grid.electrode][det], dxc[det])),
        "charge_drift": abs(total1 - total0) / total0 if total0 else 0.0,
    }
    tr = TraceResult(t_arr, i_arr, dn, meta, n_final=n)
    tr.meta["digest"] = tr.digest()
    return tr


def delta_n_series(t, i_ae, e: float = DEFAULT_CONSTANTS.e) -> np.ndarray:
    """Cumulative trapezoidal integral of ``i_ae / e``."""
    t = np.asarray(t, dtype=float)
    i_ae = np.asarray(i_ae, dtype=float)
    out = np.zeros_like(t)
    out[1:] = np.cumsum(0.5 * (i_ae[1:] + i_ae[:-1]) * np.diff(t)) / e
    return out


@dataclass
class DeltaN:
    series: np.ndarray
    sat: float
    plateau: bool
    flatness: float


def delta_N(trace: TraceResult, e: float = DEFAULT_CONSTANTS.e,
            flat_tol: float = 0.01) -> DeltaN:
    """Transported-electron series and its plateau while the SAW is on.

    The plateau is the mean over the last quarter of the on-window at the
    detection boundary; ``flatness`` is its peak-to-peak spread relative to
    that mean.
    """
    series = delta_n_series(trace.t, trace.i_ae, e)
    t_d = trace.meta.get("t_d", 0.0)
    t_p = trace.meta.get("t_p", trace.t[-1] - trace.t[0])
    m = (trace.t >= t_d + 0.75 * t_p) & (trace.t <= t_d + t_p)
    if not np.any(m):
        return DeltaN(series, float(series[-1]), False, np.inf)
    window = series[m]
    sat = float(window.mean())
    flatness = float(np.ptp(window) / abs(sat)) if sat else (0.0 if np.ptp(window) == 0 else np.inf)
    return DeltaN(series, sat, flatness <= flat_tol, flatness)


def onset_time(trace: TraceResult) -> float:
    """Start of the time step with the sharpest rise of the leading pulse."""
    t_p = trace.meta.get("t_p", trace.t[-1])
    t_start = trace.meta.get("t_start", 0.0)
    m = trace.t <= t_start + 0.5 * t_p
    i = trace.i_ae[m]
    if not np.any(i):
        raise ValueError("no current in the leading window")
    pol = np.sign(i[np.argmax(np.abs(i))])
    rise = np.diff(pol * i)
    return float(trace.t[m][np.argmax(rise)])


@dataclass
class TimeConstants:
    tau_pump: float
    tau_rel: float
    pump_fit: ExpFit
    rel_fit: ExpFit


def fit_time_constants(trace: TraceResult, t_d: Optional[float] = None,
                       t_p: Optional[float] = None, delta: Optional[float] = None,
                       offset: bool = True) -> TimeConstants:
    """Exponential decay constants of the current after each packet edge.

    Windows are ``[t_d + delta, t_p]`` for pumping and
    ``[t_p + t_d + delta, end]`` for relaxation (times from launch), with
    ``delta`` defaulting to one transit time across the sheet.
    """
    t_start = trace.meta.get("t_start", 0.0)
    t_d = trace.meta["t_d"] - t_start if t_d is None else t_d
    t_p = trace.meta["t_p"] if t_p is None else t_p
    delta = trace.meta["transit"] if delta is None else delta
    t_rel = trace.t - t_start
    w_pump = (t_d + delta, t_p)
    w_rel = (t_p + t_d + delta, t_rel[-1])
    if w_pump[1] <= w_pump[0]:
        raise FitError("SAW packet too short for a pumping fit window")
    pump = exp_fit(t_rel, trace.i_ae, w_pump, offset=offset)
    rel = exp_fit(t_rel, trace.i_ae, w_rel, offset=offset)
    return TimeConstants(pump.tau, rel.tau, pump, rel)


def acoustoelectric_gate_sweep(V_g, scenario: PumpScenario, gate: str = "gate"):
    """Continuous-wave acoustoelectric current through the gate region versus gate bias.

    The current is the calibrated drive ``<j_ae>`` over the SAW aperture,
    evaluated with the gate-region conductivity of each equilibrium, so it
    vanishes once the gate region is depleted.
    """
    from .electrostatics import biases_for_gate

    sc = scenario
    e = sc.constants.e
    V_g = np.asarray(V_g, dtype=float)
    if V_g.ndim != 1 or np.any(np.diff(V_g) <= 0):
        raise ValueError("gate sweep must be strictly increasing")
    ig = sc.layout.index(gate)
    k = 2.0 * math.pi * sc.drive.frequency / sc.material.v0
    I0 = sc.idt.alpha_L * sc.drive.power_in / sc.idt.aperture
    current = np.empty_like(V_g)
    for i, vg in enumerate(V_g):
        prof = equilibrium_density(sc.N_total, biases_for_gate(sc.biases, vg), sc.layout,
                                   sc.c_l, sc.constants)
        sigma = prof.n[ig] * e * sc.mu
        gamma = electronic_attenuation(sigma, k, sc.material)
        current[i] = sc.drive_efficiency * sc.idt.aperture * sc.mu / sc.material.v0 * gamma * I0
    return current

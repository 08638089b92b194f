"""Reference checks of the model against its quoted numbers and invariants.

Each ``check_*`` function returns one or more :class:`Check` records; the
``acceptance`` CLI subcommand and the test suite both run them.  Random
instances use fixed seeds so the suite is reproducible.
"""

import math
from dataclasses import dataclass
from itertools import combinations
from typing import Callable, Dict, List

import numpy as np

from . import film, saw, txline
from .config import ScenarioConfig
from .constants import DEFAULT_CONSTANTS, areal_density_si, mobility_cm2, mobility_si
from .electrostatics import (BiasConfig, ElectrodeLayout, ElectrodeStack, density_from_sweep,
                             effective_substrate_permittivity, equilibrium_density,
                             fet_transfer_curve, layer_capacitance)
from .fitkit import FitProblem, exp_fit, finite_difference_jacobian, least_squares
from .pump import delta_N, fit_time_constants, onset_time, simulate_gated_pump

TABLE_POWERS_W = np.geomspace(0.25e-3, 2e-3, 10)


@dataclass
class Check:
    cid: str
    title: str
    passed: bool
    detail: str

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'}  {self.cid:<4} {self.title}: {self.detail}"


def _rel(a, b):
    return abs(a - b) / abs(b)


# 1 ---------------------------------------------------------------------------
def check_film() -> List[Check]:
    c = DEFAULT_CONSTANTS
    params = film.FilmParams.calibrated(0.2e-3, 77e-9, c)
    d0 = film.neutral_thickness(0.2e-3, params)
    d = film.charged_thickness(0.2e-3, areal_density_si(0.8e9), params, c)
    ok = _rel(d0, 77e-9) < 1e-12 and abs(d - 72e-9) <= 1e-9
    return [Check("1", "film thickness", ok, f"d0 = {d0 * 1e9:.6f} nm, d(0.8e9 cm^-2) = {d * 1e9:.3f} nm")]


# 2 ---------------------------------------------------------------------------
def check_capacitance() -> List[Check]:
    eps_s = effective_substrate_permittivity(44.3, 27.6, 0.0)
    c_l = layer_capacitance(ElectrodeStack())
    ok = _rel(c_l, 1.08e-7) <= 0.02 and abs(eps_s - 35.0) <= 0.1
    return [Check("2", "layer capacitance", ok, f"c_l = {c_l:.4e} F/m^2, eps_s = {eps_s:.3f}")]


# 3 ---------------------------------------------------------------------------
def _round_sig(x, sig=2):
    return float(f"{x:.{sig - 1}e}")


def check_drude() -> List[Check]:
    mu = txline.mobility_from_sigma(1.58e-6, areal_density_si(1.9e9))
    mu_cm2 = mobility_cm2(mu)
    rate = txline.vapor_collision_rate(mobility_si(1e5))
    shown = _round_sig(mu_cm2, 2)
    ok = 5.2e3 <= shown <= 5.3e3 and _rel(rate, 17.6e9) <= 0.02
    return [Check("3", "Drude chain", ok,
                  f"mu = {mu_cm2:.1f} cm^2/Vs (2 s.f.: {shown:.1e}), 1/tau = {rate / 1e9:.2f} GHz")]


# 4 ---------------------------------------------------------------------------
RC_SIGMA, RC_W, RC_L, RC_CL = 1.58e-6, 9e-3, 15e-3, 1.08e-7


def rc_ledger():
    r = 1.0 / (RC_SIGMA * RC_W)
    R_tot = r * RC_L
    C_tot = RC_CL * RC_W * RC_L
    tau = txline.elmore_delay(r, RC_CL, RC_L, RC_W, 10 ** 6)
    return R_tot, C_tot, tau


def check_rc() -> List[Check]:
    R_tot, C_tot, tau = rc_ledger()
    ok = _rel(R_tot, 1.06e6) <= 0.01 and _rel(C_tot, 14.6e-12) <= 0.01 and _rel(tau, 7.7e-6) <= 0.02
    return [Check("4", "RC ledger", ok,
                  f"R_tot = {R_tot / 1e6:.4f} MOhm, C_tot = {C_tot * 1e12:.3f} pF, tau = {tau * 1e6:.3f} us")]


# 5 ---------------------------------------------------------------------------
def check_resonance() -> List[Check]:
    mat = saw.SawMaterial(v0=3488.0)
    idt = saw.IdtSpec(pitch=12e-6)
    f0 = saw.resonant_frequency(mat, idt)
    refl = saw.ReflectionSpec(3.2e-3)
    t_echo = saw.echo_delay(refl, mat)
    f = np.linspace(270e6, 320e6, 4001)
    t_peak = saw.echo_peak_time(f, saw.cw_response_with_echo(f, idt, refl, mat, 296e6), t_min=0.3e-6)
    ok = abs(f0 - 290.7e6) < 0.05e6 and abs(t_echo - 0.92e-6) <= 0.02e-6 and abs(t_peak - 0.92e-6) <= 0.02e-6
    return [Check("5", "resonance and echo", ok,
                  f"f0 = {f0 / 1e6:.2f} MHz, echo = {t_echo * 1e6:.4f} us (spectrum peak {t_peak * 1e6:.4f} us)")]


# 6 ---------------------------------------------------------------------------
def check_plasma() -> List[Check]:
    fp = saw.plasma_frequency(1e13, 0.5e6)
    ok = 14e9 <= fp <= 15e9 and fp > 40 * 296e6
    return [Check("6", "plasma screening", ok, f"f_p = {fp / 1e9:.3f} GHz = {fp / 296e6:.1f} x f_SAW")]


# 7 ---------------------------------------------------------------------------
def check_coupling() -> List[Check]:
    mat = saw.SawMaterial()
    k = 2 * math.pi * 296e6 / mat.v0
    sig = mat.sigma_m * np.logspace(-4, 4, 4001)
    g = saw.electronic_attenuation(sig, k, mat)
    g_peak = saw.electronic_attenuation(mat.sigma_m, k, mat)
    peak_ok = abs(sig[np.argmax(g)] / mat.sigma_m - 1) < 5e-3 and _rel(g_peak, k * mat.K2 / 4) < 1e-12
    g_mirror = saw.electronic_attenuation(mat.sigma_m ** 2 / sig, k, mat)
    sym = float(np.max(np.abs(g - g_mirror) / g))
    dv = saw.velocity_shift(np.concatenate([[0.0], sig, [1e12 * mat.sigma_m]]), mat)
    mono = bool(np.all(np.diff(dv) < 0)) and _rel(dv[0], mat.K2 / 2) < 1e-15 and dv[-1] < 1e-20
    E = saw.effective_field(1.0 + 0.5j, sig, mat)
    scr = float(np.max(np.abs(np.abs(E) ** 2 * (1 + (sig / mat.sigma_m) ** 2) / abs(1.0 + 0.5j) ** 2 - 1)))
    ok = peak_ok and sym <= 1e-12 and mono and scr <= 1e-12
    return [Check("7", "coupling properties", ok,
                  f"peak at sigma_m = {peak_ok}, symmetry {sym:.1e}, dv/v monotone {mono}, screening {scr:.1e}")]


# 8 ---------------------------------------------------------------------------
def brute_force_equilibrium(N_total, V, A, c_l, e=DEFAULT_CONSTANTS.e):
    """Minimize ``sum A_i (e^2 n_i^2 / (2 c_l) - e n_i V_i)`` over ``n >= 0``, ``sum A_i n_i = N``.

    Enumerates the support; on each support the stationary point of the
    Lagrangian is closed-form.
    """
    V = np.asarray(V, float)
    A = np.asarray(A, float)
    best, best_E = None, np.inf
    idx = range(len(V))
    for size in range(1, len(V) + 1):
        for S in combinations(idx, size):
            S = list(S)
            # n_i = (c_l / e^2) (e V_i + lam) on S; fix lam from the count
            lam = (N_total * e * e / c_l - e * np.dot(A[S], V[S])) / A[S].sum()
            n = np.zeros_like(V)
            n[S] = c_l / (e * e) * (e * V[S] + lam)
            if np.any(n < -1e-12 * abs(n).max()):
                continue
            n = np.maximum(n, 0.0)
            E = float(np.sum(A * (e * e * n * n / (2 * c_l) - e * n * V)))
            if E < best_E:
                best, best_E = n, E
    return best


def check_electrostatics() -> List[Check]:
    rng = np.random.default_rng(20240601)
    c_l = 1.08e-7
    worst, worst_q = 0.0, 0.0
    for _ in range(50):
        widths = tuple(rng.uniform(1e-3, 8e-3, 3))
        layout = ElectrodeLayout(widths=widths, length=rng.uniform(3e-3, 12e-3))
        V = rng.uniform(0.0, 120.0, 3)
        N = rng.uniform(0.05, 1.0) * c_l / DEFAULT_CONSTANTS.e * float(np.dot(V.max() - V + 30.0, layout.areas))
        prof = equilibrium_density(N, V, layout, c_l)
        ref = brute_force_equilibrium(N, V, layout.areas, c_l)
        worst = max(worst, float(np.max(np.abs(prof.n - ref)) / np.max(ref)))
        worst_q = max(worst_q, _rel(prof.count, N))
    n_sweep = density_from_sweep(17.8, c_l)
    sweep_ok = _rel(n_sweep, areal_density_si(0.8e9)) <= 0.01
    ok = worst <= 1e-6 and worst_q <= 1e-9 and sweep_ok
    return [Check("8", "electrostatics oracle", ok,
                  f"max rel dev {worst:.1e}, charge {worst_q:.1e}, n(17.8 V) = {n_sweep / 1e4:.4e} cm^-2")]


# 9 ---------------------------------------------------------------------------
def fet_reference_sweep(cfg: ScenarioConfig = None):
    cfg = cfg or ScenarioConfig()
    V_g = np.arange(20.0, 220.0 + 1e-9, 0.25)
    return fet_transfer_curve(V_g, cfg.n_total(), cfg.bias_config(), cfg.layout(), cfg.c_l(),
                              cfg.mobility(), frequency=cfg.fet.frequency_hz, V_ex=cfg.fet.V_ex)


def check_fet() -> List[Check]:
    cfg = ScenarioConfig()
    sw = fet_reference_sweep(cfg)
    below = sw.V_g < sw.V_th
    zero_ok = bool(np.all(sw.current[below] == 0.0)) and np.any(below)
    V_peak = float(sw.V_g[np.argmax(sw.current)])
    V_uniform = cfg.biases.V_s
    peak_ok = abs(V_peak - V_uniform) <= 2.0
    tail_ok = sw.current[-1] <= 1e-3 * sw.current.max()
    return [
        Check("9a", "FET zero below threshold", zero_ok, f"V_th = {sw.V_th:.2f} V"),
        Check("9b", "FET maximum at uniform bias", peak_ok,
              f"max at V_g = {V_peak:.2f} V, expected {V_uniform:.1f} +/- 2 V"),
        Check("9c", "FET current vanishes at high V_g", tail_ok,
              f"I({sw.V_g[-1]:.0f} V) / I_max = {sw.current[-1] / sw.current.max():.2e}"),
    ]


# 10 --------------------------------------------------------------------------
def check_txline() -> List[Check]:
    cfg = ScenarioConfig()
    layout, c_l, sigma = cfg.layout(), cfg.c_l(), cfg.sheet.sigma_S
    ladder = txline.build_ladder(sigma, c_l, layout, 256)
    f = np.geomspace(1e3, 1e6, 41)
    clean = txline.sweep(ladder, f)
    start = txline.with_sigma(ladder, 3 * sigma)
    fit0 = txline.fit_conductivity(clean, start)
    e0 = _rel(fit0.sigma, sigma)
    rng = np.random.default_rng(7)
    errs = []
    scale = np.abs(clean.current)
    for _ in range(100):
        noise = 0.02 * scale * (rng.standard_normal(len(f)) + 1j * rng.standard_normal(len(f))) / math.sqrt(2)
        data = txline.FreqResponse(f, clean.current + noise)
        errs.append(txline.fit_conductivity(data, start).sigma / sigma - 1)
    rms = float(np.sqrt(np.mean(np.square(errs))))
    vals = []
    for N in (64, 128, 256, 512):
        lad = txline.build_ladder(sigma, c_l, layout, N)
        vals.append(abs(txline.frequency_response(lad, 60e3)))
    conv = max(_rel(vals[i], vals[i + 1]) for i in range(len(vals) - 1))
    return [Check("10", "transmission-line fit", e0 <= 1e-3 and rms <= 0.05 and conv < 5e-3,
                  f"noiseless {e0:.1e}, 2% noise RMS {rms:.2%}, N-doubling {conv:.1e}")]


# 11 --------------------------------------------------------------------------
def check_pump() -> List[Check]:
    cfg = ScenarioConfig()
    sc = cfg.pump_scenario()
    tr = simulate_gated_pump(sc)
    dt = tr.meta["dt"]
    t_on = onset_time(tr)
    out = [Check("11a", "pump onset delay", abs(t_on - sc.t_d) <= dt,
                 f"onset {t_on * 1e6:.4f} us vs distance/v {sc.t_d * 1e6:.4f} us (dt = {dt * 1e9:.2f} ns)")]

    lead = tr.i_ae[(tr.t > sc.t_d) & (tr.t < sc.drive.t_p)]
    trail = tr.i_ae[tr.t > sc.drive.t_p + sc.t_d]
    pol_lead = np.sign(lead[np.argmax(np.abs(lead))])
    pol_trail = np.sign(trail[np.argmax(np.abs(trail))])
    big = np.max(np.abs(trail)) > 0.5 * np.max(np.abs(lead))
    out.append(Check("11b", "bipolar trace", bool(pol_lead == -pol_trail and big),
                     f"leading peak {lead[np.argmax(np.abs(lead))]:.3e} A, "
                     f"trailing peak {trail[np.argmax(np.abs(trail))]:.3e} A"))

    net = abs(tr.delta_n[-1]) / np.max(np.abs(tr.delta_n))
    out.append(Check("11c", "net charge returns to zero", net <= 1e-3, f"|dN_end| / max|dN| = {net:.2e}"))

    lo = delta_N(simulate_gated_pump(sc.with_power(0.2e-3))).sat
    hi = delta_N(simulate_gated_pump(sc.with_power(2e-3))).sat
    ratio = hi / lo
    out.append(Check("11d", "dN_sat linear in power", abs(ratio / 10 - 1) <= 0.05,
                     f"dN_sat(2 mW) / dN_sat(0.2 mW) = {ratio:.4f}"))

    taus = np.array([[tc.tau_pump, tc.tau_rel] for tc in
                     (fit_time_constants(simulate_gated_pump(sc.with_power(p))) for p in TABLE_POWERS_W)])
    spread = (taus.max(axis=0) - taus.min(axis=0)) / taus.mean(axis=0)
    tau_rc = rc_ledger()[2]
    ratio_rc = taus.mean(axis=0) / tau_rc
    indep = bool(np.all(spread < 0.15))
    near = bool(np.all((ratio_rc >= 0.5) & (ratio_rc <= 2.0)))
    out.append(Check("11e", "time constants vs power and RC", indep and near,
                     f"tau_pump {taus[:, 0].mean() * 1e6:.3f} us, tau_rel {taus[:, 1].mean() * 1e6:.3f} us, "
                     f"spread {spread.max():.1e}, ratio to tau_RC {ratio_rc.min():.2f}-{ratio_rc.max():.2f}"))
    return out


# 12 --------------------------------------------------------------------------
def check_fitkit() -> List[Check]:
    t = np.linspace(0, 40e-6, 400)
    worst = 0.0
    for tau in np.round(np.arange(4.6, 6.51, 0.1), 2) * 1e-6:
        fit = exp_fit(t, 2.0 * np.exp(-t / tau) + 0.1, (0.0, 40e-6))
        worst = max(worst, _rel(fit.tau, tau))
    ts = np.linspace(0.0, 1.0, 50)
    ys = 3.0 * np.exp(-ts / 0.2) + 0.01 * np.sin(37 * ts)
    res = least_squares(FitProblem(lambda p: p[0] * np.exp(-ts / p[1]) - ys, [1.0, 1.0],
                                   [-np.inf, 1e-6], [np.inf, np.inf]))
    mono = bool(np.all(np.diff(res.history) <= 0))
    rng = np.random.default_rng(3)
    jac_err = 0.0
    for _ in range(20):
        p = rng.uniform([0.5, 0.05], [5.0, 1.0])
        fun = lambda q: q[0] * np.exp(-ts / q[1])
        J_an = np.column_stack([np.exp(-ts / p[1]), p[0] * ts / p[1] ** 2 * np.exp(-ts / p[1])])
        J_fd = finite_difference_jacobian(fun, p)
        jac_err = max(jac_err, float(np.max(np.abs(J_fd - J_an)) / np.max(np.abs(J_an))))
    ok = worst <= 0.01 and mono and jac_err <= 1e-4
    return [Check("12", "fit engine", ok,
                  f"tau recovery {worst:.1e}, monotone residuals {mono}, Jacobian {jac_err:.1e}")]


CHECKS: Dict[str, Callable[[], List[Check]]] = {
    "1": check_film,
    "2": check_capacitance,
    "3": check_drude,
    "4": check_rc,
    "5": check_resonance,
    "6": check_plasma,
    "7": check_coupling,
    "8": check_electrostatics,
    "9": check_fet,
    "10": check_txline,
    "11": check_pump,
    "12": check_fitkit,
}


def run_all(echo=print) -> List[Check]:
    results = []
    for fn in CHECKS.values():
        for chk in fn():
            results.append(chk)
            if echo is not None:
                echo(chk.line())
    return results

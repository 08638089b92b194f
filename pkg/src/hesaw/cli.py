"""Command-line front end.

Subcommands write CSV tables (and optional plots) into the output
directory, which defaults to ``$HESAW_OUT`` or ``./hesaw_out``.
"""

import argparse
import contextlib
import os
import re
import sys
import traceback
from pathlib import Path
from typing import List, Optional

import numpy as np

from . import film, saw, txline
from .config import ConfigError, ScenarioConfig, default_config_text, load_config
from .constants import areal_density_si, dbm_to_watts, watts_to_dbm
from .electrostatics import fet_transfer_curve
from .fitkit import FitError
from .io import RunManifest, Stopwatch, write_csv
from .plotting import line_chart

OUT_ENV = "HESAW_OUT"

_POWER_UNITS = {"w": 1.0, "mw": 1e-3, "uw": 1e-6}


def parse_power(text: str) -> float:
    """``'0.25mW'``, ``'2e-3W'``, ``'-3dBm'`` -> watts."""
    m = re.fullmatch(r"\s*([-+0-9.eE]+)\s*(dBm|mW|uW|W)?\s*", text, flags=re.IGNORECASE)
    if not m:
        raise ValueError(f"cannot parse power {text!r}")
    value, unit = float(m.group(1)), (m.group(2) or "W").lower()
    if unit == "dbm":
        return dbm_to_watts(value)
    if value < 0:
        raise ValueError("power must be non-negative")
    return value * _POWER_UNITS[unit]


def parse_power_sweep(text: str) -> np.ndarray:
    """``lo:hi:steps`` with log spacing, e.g. ``0.25mW:2mW:10``."""
    parts = text.split(":")
    if len(parts) != 3:
        raise ValueError("power sweep must look like lo:hi:steps")
    lo, hi = parse_power(parts[0]), parse_power(parts[1])
    steps = int(parts[2])
    if not (0 < lo < hi) or steps < 2:
        raise ValueError("power sweep needs 0 < lo < hi and at least 2 steps")
    return np.geomspace(lo, hi, steps)


@contextlib.contextmanager
def _no_rng(enabled: bool):
    """Make any use of numpy's random generators raise."""
    if not enabled:
        yield
        return

    def refuse(*args, **kwargs):
        raise RuntimeError("random number generation requested under --seedless")

    saved = {name: getattr(np.random, name) for name in ("default_rng", "seed", "random", "normal",
                                                         "standard_normal", "uniform", "RandomState")}
    for name in saved:
        setattr(np.random, name, refuse)
    try:
        yield
    finally:
        for name, fn in saved.items():
            setattr(np.random, name, fn)


class Run:
    """Shared state of one subcommand invocation."""

    def __init__(self, cfg: ScenarioConfig, out: Path, emit_plot: bool, command: str):
        self.cfg = cfg
        self.out = out
        self.emit_plot = emit_plot
        self.command = command
        self.hash = cfg.scenario_hash()
        self.outputs: List[str] = []
        out.mkdir(parents=True, exist_ok=True)

    def csv(self, name, columns, comments=None):
        path = write_csv(self.out / name, columns, self.hash, comments)
        self.outputs.append(path.name)
        return path

    def plot(self, name, series, xlabel, ylabel, **kw):
        if not self.emit_plot:
            return None
        path = line_chart(self.out / name, series, xlabel, ylabel, fmt=self.cfg.plot.format, **kw)
        self.outputs.append(path.name)
        return path


# ---------------------------------------------------------------------------
def cmd_film(run: Run, args) -> int:
    cfg = run.cfg
    c = cfg.physical_constants()
    params = cfg.film_params()
    f = cfg.film
    H = np.union1d(np.linspace(f.H_min_m, f.H_max_m, f.points), [f.H_ref_m])
    d0 = np.array([film.neutral_thickness(h, params) for h in H])
    run.csv("film_neutral.csv", {"H_m": H, "d0_m": d0})
    n_cm2 = np.union1d(np.linspace(0.0, f.n_max_cm2, f.points), [f.n_cm2])
    d = np.array([film.charged_thickness(f.H_ref_m, areal_density_si(x), params, c) for x in n_cm2])
    thin = (d < film.RETARDED_LAW_MIN_THICKNESS).astype(int)
    run.csv("film_charged.csv", {"n_cm2": n_cm2, "d_m": d, "thin_film": thin},
            comments=[f"H_m = {f.H_ref_m:.6g}"])
    table = cfg.level_table()
    d_tab = np.array([film.neutral_thickness(h, params) for h in table.H_m])
    run.csv("film_level.csv", {"volume_cc": table.volume_cc, "H_m": table.H_m, "d0_m": d_tab})
    run.plot("film_neutral", [(H * 1e3, d0 * 1e9, "d0")], "H (mm)", "d0 (nm)")
    run.plot("film_charged", [(n_cm2, d * 1e9, "d")], "n (cm^-2)", "d (nm)")
    d_ref = film.charged_thickness(f.H_ref_m, areal_density_si(f.n_cm2), params, c)
    print(f"alpha = {params.alpha:.4e} Pa m^4")
    print(f"d0(H = {f.H_ref_m * 1e3:.3f} mm) = {film.neutral_thickness(f.H_ref_m, params) * 1e9:.3f} nm")
    print(f"d(n = {f.n_cm2:.3g} cm^-2) = {d_ref * 1e9:.3f} nm")
    return 0


def cmd_saw(run: Run, args) -> int:
    cfg = run.cfg
    mat, idt, refl = cfg.material_params(), cfg.idt_spec(), cfg.reflection_spec()
    f0 = cfg.idt.f0_hz or saw.resonant_frequency(mat, idt)
    s = cfg.saw
    f = np.linspace(s.f_min_hz, s.f_max_hz, s.points)
    cols = saw.frequency_sweep(f, idt, refl, mat, cfg.sheet.sigma_S, f0)
    run.csv("saw_sweep.csv", cols)
    sig = np.geomspace(s.sigma_min_S, s.sigma_max_S, s.sigma_points)
    k0 = 2 * np.pi * f0 / mat.v0
    run.csv("saw_coupling.csv", {"sigma_S": sig,
                                 "gamma_el_per_m": saw.electronic_attenuation(sig, k0, mat),
                                 "dv_over_v": saw.velocity_shift(sig, mat)})
    t, spec = saw.echo_spectrum(f, cols["amplitude"])
    run.csv("saw_echo.csv", {"t_s": t, "magnitude": spec})
    t_min = 0.5 * saw.echo_delay(refl, mat)
    t_peak = saw.echo_peak_time(f, cols["amplitude"], t_min=t_min)
    run.plot("saw_sweep", [(f / 1e6, cols["amplitude"], "|response|")], "f (MHz)", "amplitude")
    run.plot("saw_coupling", [(sig, saw.electronic_attenuation(sig, k0, mat), "Gamma_el")],
             "sigma (S)", "Gamma_el (1/m)", logx=True)
    run.plot("saw_echo", [(t * 1e6, spec, "|FFT|")], "t (us)", "magnitude")
    print(f"resonance v0/pitch = {saw.resonant_frequency(mat, idt) / 1e6:.2f} MHz, lineshape centre {f0 / 1e6:.2f} MHz")
    print(f"echo delay = {saw.echo_delay(refl, mat) * 1e6:.4f} us, spectrum peak = {t_peak * 1e6:.4f} us")
    print(f"sigma_m = {mat.sigma_m:.4e} S, Gamma_el(sheet) = "
          f"{saw.electronic_attenuation(cfg.sheet.sigma_S, k0, mat):.4e} 1/m")
    return 0


def cmd_fet(run: Run, args) -> int:
    from .pump import acoustoelectric_gate_sweep
    cfg = run.cfg
    fc = cfg.fet
    V_g = np.linspace(fc.V_g_min, fc.V_g_max, fc.points)
    layout = cfg.layout()
    sw = fet_transfer_curve(V_g, cfg.n_total(), cfg.bias_config(), layout, cfg.c_l(), cfg.mobility(),
                            frequency=fc.frequency_hz, V_ex=fc.V_ex,
                            constants=cfg.physical_constants())
    cols = sw.columns(layout)
    for name in layout.names:
        cols[f"n_{name}"] = cols[f"n_{name}"] / 1e4
    cols = {("n_" + k[2:] + "_cm2" if k.startswith("n_") else k): v for k, v in cols.items()}
    run.csv("fet_transfer.csv", cols, comments=[f"V_th = {sw.V_th:.6g} V"])
    sc = cfg.pump_scenario(power_w=fc.power_w)
    i_ae = acoustoelectric_gate_sweep(V_g, sc)
    run.csv("afet_sweep.csv", {"V_g": V_g, "i_ae_a": i_ae})
    run.plot("fet_transfer", [(V_g, sw.current * 1e9, "|I|")], "V_g (V)", "current (nA)")
    run.plot("afet_sweep", [(V_g, i_ae * 1e12, "I_ae")], "V_g (V)", "I_ae (pA)")
    print(f"V_th = {sw.V_th:.3f} V; transfer maximum at V_g = {V_g[np.argmax(sw.current)]:.2f} V")
    return 0


def cmd_txline(run: Run, args) -> int:
    cfg = run.cfg
    t = cfg.txline
    layout = cfg.layout()
    roles = cfg.roles()
    ladder = txline.build_ladder(cfg.sheet.sigma_S, cfg.c_l(), layout, t.nodes)
    if t.data is not None:
        path = Path(t.data)
        if not path.is_absolute() and cfg.source is not None:
            path = Path(cfg.source).parent / path
        data = txline.FreqResponse.from_csv(path)
    else:
        f = np.geomspace(t.f_min_hz, t.f_max_hz, t.points)
        data = txline.sweep(ladder, f, t.V_ex, roles)
        if t.noise_rel > 0:
            rng = np.random.default_rng(t.seed)
            amp = t.noise_rel * np.abs(data.current) / np.sqrt(2)
            data = txline.FreqResponse(f, data.current + amp * (rng.standard_normal(len(f))
                                                                + 1j * rng.standard_normal(len(f))))
    fit = txline.fit_conductivity(data, ladder, t.V_ex, roles, sigma0=t.sigma0_S)
    model = txline.sweep(txline.with_sigma(ladder, fit.sigma), data.f, t.V_ex, roles)
    cols = data.columns()
    cols["abs_amp"] = np.abs(data.current)
    cols["model_abs_amp"] = np.abs(model.current)
    run.csv("txline_response.csv", cols)
    report = fit.report()
    n = cfg.density()
    mu = txline.mobility_from_sigma(fit.sigma, n, cfg.physical_constants().e)
    R_tot, C_tot = ladder.R_tot * cfg.sheet.sigma_S / fit.sigma, ladder.C_tot
    r = 1.0 / (fit.sigma * layout.length)
    tau = txline.elmore_delay(r, cfg.c_l(), layout.total_width, layout.length, t.nodes)
    report += "\n".join([
        "[derived]",
        f"mobility_cm2_per_Vs = {mu * 1e4:.6e}",
        f"R_tot_ohm = {R_tot:.6e}",
        f"C_tot_F = {C_tot:.6e}",
        f"elmore_delay_s = {tau:.6e}",
    ]) + "\n"
    (run.out / "conductivity_fit.txt").write_text(report)
    run.outputs.append("conductivity_fit.txt")
    run.plot("txline_response", [(data.f, np.abs(data.current) * 1e9, "data"),
                                 (data.f, np.abs(model.current) * 1e9, "fit")],
             "f (Hz)", "|I| (nA)", logx=True)
    print(report, end="")
    return 0


def _power_tag(p: float) -> str:
    return f"{p * 1e3:.4g}mW".replace(".", "p")


def cmd_pump(run: Run, args) -> int:
    from .pump import build_grid, delta_N, fit_time_constants, simulate_gated_pump
    cfg = run.cfg
    pc = cfg.pump
    powers = parse_power_sweep(args.power_sweep) if args.power_sweep else np.array([pc.power_w])
    base = cfg.pump_scenario()
    grid = build_grid(base.layout, base.sheet_offset, pc.cells)
    dt = pc.t_p_s / pc.steps_per_pulse
    rows = {"rf_mw": [], "rf_dbm": [], "tau_pump_us": [], "tau_rel_us": [],
            "delta_n_sat": [], "plateau_flat": []}
    traces = []
    for p in powers:
        sc = base.with_power(float(p))
        tr = simulate_gated_pump(sc, grid, dt=dt, t_end=pc.t_end_s, scheme=pc.scheme,
                                 record_every=pc.record_every)
        name = f"pump_trace_{_power_tag(p)}.csv"
        run.csv(name, tr.columns(), comments=[f"power_w = {p:.6g}", f"t_d_s = {sc.t_d:.6g}",
                                              f"digest = {tr.meta['digest']}"])
        traces.append((tr.t * 1e6, tr.i_ae * 1e12, f"{p * 1e3:.3g} mW"))
        dn = delta_N(tr)
        try:
            tc = fit_time_constants(tr, offset=cfg.fit.offset)
            tp, trl = tc.tau_pump * 1e6, tc.tau_rel * 1e6
        except FitError as exc:
            print(f"warning: time-constant fit failed at {p * 1e3:.3g} mW: {exc}", file=sys.stderr)
            tp = trl = float("nan")
        rows["rf_mw"].append(p * 1e3)
        rows["rf_dbm"].append(watts_to_dbm(p))
        rows["tau_pump_us"].append(tp)
        rows["tau_rel_us"].append(trl)
        rows["delta_n_sat"].append(dn.sat)
        rows["plateau_flat"].append(dn.plateau)
    run.csv("pump_tau_summary.csv", rows)
    run.plot("pump_traces", traces, "t (us)", "I_ae (pA)")
    print(f"{'RF (mW)':>8}  {'tau_pump (us)':>13}  {'tau_rel (us)':>12}  {'dN_sat':>12}")
    for i in range(len(powers)):
        print(f"{rows['rf_mw'][i]:8.2f}  {rows['tau_pump_us'][i]:13.3f}  {rows['tau_rel_us'][i]:12.3f}"
              f"  {rows['delta_n_sat'][i]:12.4g}")
    return 0


def cmd_acceptance(run: Run, args) -> int:
    from .acceptance import run_all
    results = run_all()
    n_pass = sum(r.passed for r in results)
    print(f"{n_pass}/{len(results)} checks passed")
    return 0 if n_pass == len(results) else 1


def cmd_config(run: Run, args) -> int:
    path = run.out / "scenario_defaults.toml"
    path.write_text(default_config_text())
    run.outputs.append(path.name)
    print(path)
    return 0


COMMANDS = {
    "film": (cmd_film, "film thickness versus level depth and electron density"),
    "saw": (cmd_saw, "transducer lineshape, coupling curves and echo spectrum"),
    "fet": (cmd_fet, "FET transfer curve and acoustoelectric gate sweep"),
    "txline": (cmd_txline, "transmission-line frequency response and conductivity fit"),
    "pump": (cmd_pump, "gated time-of-flight traces and time-constant table"),
    "acceptance": (cmd_acceptance, "run the reference checks and print a pass/fail table"),
    "config": (cmd_config, "write a configuration file listing every default"),
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="scenario TOML file (defaults built in)")
    common.add_argument("--out", help=f"output directory (default ${OUT_ENV} or ./hesaw_out)")
    common.add_argument("--emit-plot", action="store_true", help="also write plots (svg or dat, see [plot])")
    common.add_argument("--seedless", action="store_true", help="fail if any random numbers are drawn")
    parser = argparse.ArgumentParser(prog="hesaw", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in COMMANDS.items():
        p = sub.add_parser(name, parents=[common], help=help_text)
        if name == "pump":
            p.add_argument("--power-sweep", metavar="LO:HI:STEPS",
                           help="log-spaced RF powers, e.g. 0.25mW:2mW:10")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    out = Path(args.out or os.environ.get(OUT_ENV) or "hesaw_out")
    try:
        cfg = load_config(args.config)
    except (ConfigError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    if args.seedless and args.command == "txline" and cfg.txline.noise_rel > 0 and cfg.txline.data is None:
        print("config error: txline.noise_rel > 0 draws random numbers, which --seedless forbids",
              file=sys.stderr)
        return 2
    fn = COMMANDS[args.command][0]
    run = Run(cfg, out, args.emit_plot, args.command)
    try:
        with Stopwatch() as sw, _no_rng(args.seedless):
            status = fn(run, args)
    except (ValueError, FitError, RuntimeError) as exc:
        frames = [fr for fr in traceback.extract_tb(exc.__traceback__) if "hesaw" in fr.filename]
        module = Path(frames[-1].filename).stem if frames else "hesaw"
        print(f"error [{args.command}/{module}]: {exc}", file=sys.stderr)
        return 1
    RunManifest(run.hash, args.command, outputs=run.outputs, wall_time_s=sw.elapsed).write(out)
    return status


if __name__ == "__main__":
    sys.exit(main())

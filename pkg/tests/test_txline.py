import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from hesaw import txline
from hesaw.electrostatics import ElectrodeLayout
from hesaw.fitkit import FitError

LAYOUT = ElectrodeLayout()
SIGMA = 1.58e-6
C_L = 1.0996e-7


def test_nodes_follow_electrode_edges():
    counts = txline.nodes_per_electrode(LAYOUT, 256)
    assert counts.sum() == 256 and set(counts) <= {85, 86}
    lad = txline.build_ladder(SIGMA, C_L, LAYOUT, 100)
    edges = np.concatenate([[0.0], np.cumsum(lad.dx)])
    for b in LAYOUT.edges:
        assert np.min(np.abs(edges - b)) < 1e-15
    with pytest.raises(ValueError):
        txline.nodes_per_electrode(LAYOUT, 2)


def test_totals():
    lad = txline.build_ladder(SIGMA, C_L, LAYOUT, 64)
    assert lad.R_tot == pytest.approx(LAYOUT.total_width / (SIGMA * LAYOUT.length), rel=1e-12)
    assert lad.C_tot == pytest.approx(C_L * LAYOUT.length * LAYOUT.total_width, rel=1e-12)


def test_two_cell_closed_form():
    lay = ElectrodeLayout(widths=(2e-3, 2e-3), length=5e-3, names=("a", "b"))
    lad = txline.build_ladder(SIGMA, C_L, lay, 2)
    C = C_L * 5e-3 * 2e-3
    R = 2e-3 / (SIGMA * 5e-3)
    for f in (1e3, 3e4, 1e6):
        y = 2j * math.pi * f * C * R
        I = txline.frequency_response(lad, f, 0.1, {"a": "drive", "b": "sense"})
        assert I == pytest.approx(2j * math.pi * f * C * 0.1 / (2 + y), rel=1e-12)


def test_three_cell_closed_form():
    lad = txline.build_ladder(SIGMA, C_L, LAYOUT, 3)
    C = C_L * LAYOUT.length * LAYOUT.widths[0]
    R = LAYOUT.widths[0] / (SIGMA * LAYOUT.length)
    for f in (1e3, 6e4, 1e6):
        y = 2j * math.pi * f * C * R
        I = txline.frequency_response(lad, f, 0.1)
        assert I == pytest.approx(2j * math.pi * f * C * 0.1 / ((y + 3) * (1 + y)), rel=1e-12)


@pytest.mark.parametrize("f", [1e3, 6e4, 1e6])
def test_n_doubling_convergence(f):
    vals = [txline.frequency_response(txline.build_ladder(SIGMA, C_L, LAYOUT, N), f)
            for N in (64, 128, 256, 512)]
    for a, b in zip(vals, vals[1:]):
        assert abs(a - b) / abs(b) < 5e-3


@given(st.floats(1e2, 1e7), st.floats(1e-8, 1e-4))
def test_passivity(f, sigma):
    """The drive electrode never receives net power from the sheet."""
    lad = txline.build_ladder(sigma, C_L, LAYOUT, 48)
    V = txline.node_voltages(lad, f, 0.1)
    y = 2j * math.pi * f * lad.c * lad.dx
    drive = lad.electrode == 0
    I_drive = np.sum(y[drive] * (0.1 - V[drive]))
    assert (np.conj(0.1) * I_drive).real >= -1e-18


def test_depleted_gate_blocks_current():
    lad = txline.build_ladder([SIGMA, 0.0, SIGMA], C_L, LAYOUT, 60)
    assert txline.frequency_response(lad, 6e4) == 0
    with pytest.raises(ValueError):
        txline.build_ladder(0.0, C_L, LAYOUT)


def test_current_vanishes_at_frequency_extremes():
    lad = txline.build_ladder(SIGMA, C_L, LAYOUT, 128)
    mid = abs(txline.frequency_response(lad, 3e4))
    assert abs(txline.frequency_response(lad, 1.0)) < 1e-3 * mid
    assert abs(txline.frequency_response(lad, 1e8)) < 1e-3 * mid


def _clean(N=256):
    lad = txline.build_ladder(SIGMA, C_L, LAYOUT, N)
    f = np.geomspace(1e3, 1e6, 41)
    return lad, txline.sweep(lad, f)


def test_fit_noiseless_round_trip():
    lad, data = _clean()
    fit = txline.fit_conductivity(data, txline.with_sigma(lad, 3 * SIGMA))
    assert fit.sigma == pytest.approx(SIGMA, rel=1e-3)
    assert fit.converged
    assert fit.report().startswith("[conductivity_fit]\nsigma_S = ")


def test_fit_with_noise_monte_carlo():
    lad, data = _clean(128)
    start = txline.with_sigma(lad, 3 * SIGMA)
    scale = np.abs(data.current)
    errs = []
    for seed in range(100):
        rng = np.random.default_rng(seed)
        noise = 0.02 * scale * (rng.standard_normal(41) + 1j * rng.standard_normal(41)) / math.sqrt(2)
        fit = txline.fit_conductivity(txline.FreqResponse(data.f, data.current + noise), start)
        errs.append(fit.sigma / SIGMA - 1)
    assert math.sqrt(np.mean(np.square(errs))) <= 0.05


def test_fit_rejects_flat_response():
    lad, data = _clean(64)
    flat = txline.FreqResponse(data.f, np.full(len(data.f), 1e-9 + 0j))
    with pytest.raises(FitError, match="unidentifiable"):
        txline.fit_conductivity(flat, lad)
    with pytest.raises(FitError):
        txline.fit_conductivity(txline.FreqResponse(data.f[:4], data.current[:4]), lad)


def test_response_csv_round_trip(tmp_path):
    _, data = _clean(32)
    p = tmp_path / "r.csv"
    cols = data.columns()
    lines = ["f_hz,re_amp,im_amp"] + [f"{float(a)!r},{float(b)!r},{float(c)!r}" for a, b, c in zip(*cols.values())]
    p.write_text("\n".join(lines) + "\n# trailer\n")
    back = txline.FreqResponse.from_csv(p)
    assert np.array_equal(back.f, data.f) and np.array_equal(back.current, data.current)
    p.write_text("f,re,im\n1,2,3\n")
    with pytest.raises(ValueError):
        txline.FreqResponse.from_csv(p)


@pytest.mark.parametrize("N", [1, 2, 5, 64, 1000])
def test_elmore_matches_ladder_sum(N):
    r, L, W = 1.0 / (SIGMA * 9e-3), 15e-3, 9e-3
    R = np.full(N, r * L / N)
    C = np.full(N, C_L * W * L / N)
    assert txline.elmore_delay(r, C_L, L, W, N) == pytest.approx(txline.ladder_elmore_delay(R, C), rel=1e-12)


def test_elmore_large_n_limit():
    r, L, W = 1.0 / (1.58e-6 * 9e-3), 15e-3, 9e-3
    tau = txline.elmore_delay(r, 1.08e-7, L, W, 10 ** 6)
    assert tau == pytest.approx(r * L * 1.08e-7 * W * L / 2, rel=1e-5)
    assert tau == pytest.approx(7.7e-6, rel=0.02)


def test_drude_relations():
    mu = txline.mobility_from_sigma(1.58e-6, 1.9e13)
    assert mu == pytest.approx(0.5190, rel=1e-3)
    assert txline.vapor_collision_rate(10.0) == pytest.approx(17.6e9, rel=0.02)
    with pytest.raises(ValueError):
        txline.mobility_from_sigma(1e-6, 0.0)

import warnings

import numpy as np
import pytest
from hypothesis import given, strategies as st

from hesaw import film
from hesaw.constants import DEFAULT_CONSTANTS, areal_density_si

PARAMS = film.FilmParams.calibrated(0.2e-3, 77e-9)


def test_calibrated_alpha_value():
    alpha = film.calibrate_alpha(0.2e-3, 77e-9, rho=145.0, g=DEFAULT_CONSTANTS.g)
    assert alpha == pytest.approx(1.00e-29, rel=0.01)


def test_alpha_quartic_in_thickness():
    a1 = film.calibrate_alpha(0.2e-3, 77e-9)
    a2 = film.calibrate_alpha(0.2e-3, 154e-9)
    assert a2 / a1 == pytest.approx(16.0, rel=1e-12)


@pytest.mark.parametrize("H, d0", [(0.0, 77e-9), (0.2e-3, 0.0), (-1.0, 77e-9), (0.2e-3, np.nan)])
def test_calibration_rejects_non_positive(H, d0):
    with pytest.raises(ValueError):
        film.calibrate_alpha(H, d0)


def test_reference_thicknesses():
    assert film.neutral_thickness(0.2e-3, PARAMS) == pytest.approx(77e-9, rel=1e-12)
    d = film.charged_thickness(0.2e-3, areal_density_si(0.8e9), PARAMS)
    assert abs(d - 72e-9) <= 1e-9


def test_zero_density_gives_neutral_thickness_exactly():
    assert film.charged_thickness(0.2e-3, 0.0, PARAMS) == film.neutral_thickness(0.2e-3, PARAMS)
    st0 = film.film_state(0.2e-3, 0.0, PARAMS)
    assert st0.d == st0.d0


@given(st.floats(1e-5, 2e-3), st.floats(1e10, 5e13), st.floats(1e10, 5e13))
def test_charged_thickness_decreases_with_density(H, n1, n2):
    lo, hi = sorted((n1, n2))
    d_lo = film.charged_thickness(H, lo, PARAMS)
    d_hi = film.charged_thickness(H, hi, PARAMS)
    assert d_hi <= d_lo <= film.neutral_thickness(H, PARAMS)


@given(st.floats(1e-5, 2e-3), st.floats(1e-5, 2e-3))
def test_neutral_thickness_decreases_with_level_depth(H1, H2):
    lo, hi = sorted((H1, H2))
    assert film.neutral_thickness(hi, PARAMS) <= film.neutral_thickness(lo, PARAMS)


def test_thin_film_flag_and_warning():
    with pytest.warns(film.ThinFilmWarning):
        state = film.film_state(0.2e-3, areal_density_si(5e9), PARAMS)
    assert state.thin_film and state.d < 60e-9
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        assert not film.film_state(0.2e-3, areal_density_si(0.8e9), PARAMS).thin_film


def test_film_state_invariants():
    with pytest.raises(ValueError):
        film.FilmState(d0=77e-9, d=80e-9, H=0.2e-3, n=1e12)
    with pytest.raises(ValueError):
        film.FilmState(d0=77e-9, d=77e-9, H=0.2e-3, n=1e12)
    with pytest.raises(ValueError):
        film.FilmState(d0=77e-9, d=70e-9, H=0.2e-3, n=0.0)


def test_default_level_table_anchor():
    table = film.LevelTable.default()
    assert film.level_from_volume(0.44, table) == pytest.approx(0.2e-3, rel=1e-12)
    assert len(table) >= 2


def test_level_table_interpolates_linearly():
    table = film.LevelTable([0.0, 1.0], [2e-3, 1e-3])
    assert table.level_from_volume(0.25) == pytest.approx(1.75e-3)
    with pytest.raises(ValueError):
        table.level_from_volume(1.5)


@pytest.mark.parametrize("v, h", [([0.0], [1e-3]), ([0.0, 0.0], [2e-3, 1e-3]), ([0.0, 1.0], [1e-3, 2e-3])])
def test_level_table_validation(v, h):
    with pytest.raises(ValueError):
        film.LevelTable(v, h)


def test_level_table_csv(tmp_path):
    p = tmp_path / "t.csv"
    p.write_text("# digitized\nvolume_cc,H_m\n0.1,1e-3\n0.5,0.1e-3\n")
    assert film.LevelTable.from_csv(p).level_from_volume(0.3) == pytest.approx(0.55e-3)
    bad = tmp_path / "bad.csv"
    bad.write_text("vol,H\n0.1,1e-3\n0.5,1e-4\n")
    with pytest.raises(ValueError, match="header"):
        film.LevelTable.from_csv(bad)

import numpy as np
import pytest
from hypothesis import given, strategies as st

from hesaw.fitkit import (FitError, FitProblem, exp_fit, finite_difference_jacobian,
                          least_squares)

T = np.linspace(0.0, 30e-6, 300)


def test_linear_model_exact():
    x = np.linspace(0.0, 2.0, 20)
    y = 2.5 * x
    res = least_squares(FitProblem(lambda p: p[0] * x - y, [1.0]))
    assert res.params[0] == pytest.approx(2.5, rel=1e-10)
    # the initial damping leaves a 1e-3 fraction of the first step; two more close it
    assert res.iterations <= 4 and res.converged


def test_exponential_from_poor_guess():
    y = 3.0 * np.exp(-T / 5e-6)
    res = least_squares(FitProblem(lambda p: p[0] * np.exp(-T / p[1]) - y, [1.0, 1e-6],
                                   [-np.inf, 1e-9], [np.inf, 1.0]))
    assert res.converged
    assert res.params[0] == pytest.approx(3.0, rel=1e-6)
    assert res.params[1] == pytest.approx(5e-6, rel=1e-6)


def test_exponential_noise_monte_carlo():
    errs = []
    for seed in range(100):
        rng = np.random.default_rng(seed)
        y = 3.0 * np.exp(-T / 5e-6) + 0.03 * rng.standard_normal(T.size)
        res = least_squares(FitProblem(lambda p: p[0] * np.exp(-T / p[1]) - y, [1.0, 1e-6],
                                       [-np.inf, 1e-9], [np.inf, 1.0]))
        errs.append(res.params[1] / 5e-6 - 1)
    assert np.sqrt(np.mean(np.square(errs))) <= 0.03


@pytest.mark.parametrize("tau_us", np.round(np.arange(4.6, 6.51, 0.1), 2))
def test_exp_fit_time_constant_range(tau_us):
    tau = tau_us * 1e-6
    t = np.linspace(0.0, 40e-6, 400)
    fit = exp_fit(t, 2e-11 * np.exp(-t / tau) - 1e-12, (0.0, 40e-6))
    assert fit.tau == pytest.approx(tau, rel=0.01)
    assert fit.offset == pytest.approx(-1e-12, rel=1e-3)


def test_exp_fit_exact_parameters_with_window():
    t = np.linspace(0.0, 50e-6, 501)
    y = 4.0 * np.exp(-(t - 10e-6) / 3e-6) + 0.5
    fit = exp_fit(t, y, (10e-6, 50e-6))
    assert fit.t0 == pytest.approx(10e-6)
    assert fit.amplitude == pytest.approx(4.0, rel=1e-8)
    assert fit.tau == pytest.approx(3e-6, rel=1e-8)
    assert fit.offset == pytest.approx(0.5, rel=1e-8)


def test_exp_fit_without_offset():
    y = 2.0 * np.exp(-T / 4e-6)
    fit = exp_fit(T, y, offset=False)
    assert fit.offset == 0.0 and fit.tau == pytest.approx(4e-6, rel=1e-8)


def _flag_rate(window, trials=50):
    flagged = 0
    for seed in range(trials):
        rng = np.random.default_rng(seed)
        t = np.linspace(0.0, window, 40)
        y = np.exp(-t / 5e-6) + 0.01 * rng.standard_normal(t.size)
        flagged += exp_fit(t, y).poorly_determined
    return flagged / trials


def test_short_window_flagged():
    # 0.4 tau of data cannot separate decay from offset at 1 % noise
    assert _flag_rate(2e-6) >= 0.75
    assert _flag_rate(30e-6) == 0.0


def test_exp_fit_errors():
    with pytest.raises(FitError, match="unidentifiable"):
        exp_fit(T, np.full(T.size, 2.0))
    with pytest.raises(FitError, match="8 samples"):
        exp_fit(T[:7], np.exp(-T[:7] / 1e-6))


def test_non_finite_residual_reports_last_iterate():
    def r(p):
        return np.array([np.nan if p[0] > 1.5 else p[0] - 3.0])
    with pytest.raises(FitError) as info:
        least_squares(FitProblem(r, [1.0]))
    assert info.value.result is not None and info.value.result.params[0] == 1.0


def test_initial_residual_must_be_finite():
    with pytest.raises(FitError):
        least_squares(FitProblem(lambda p: np.array([np.inf]), [0.0]))


def test_iteration_cap():
    y = 3.0 * np.exp(-T / 5e-6)
    res = least_squares(FitProblem(lambda p: p[0] * np.exp(-T / p[1]) - y, [1.0, 1e-6],
                                   [-np.inf, 1e-9], [np.inf, 1.0], max_iter=2))
    assert not res.converged and res.iterations == 2


def test_problem_validation():
    with pytest.raises(ValueError):
        FitProblem(lambda p: p, [0.0], [1.0], [0.0])
    with pytest.raises(ValueError):
        FitProblem(lambda p: p, [2.0], [0.0], [1.0])


def test_bounds_respected():
    x = np.linspace(0, 1, 10)
    res = least_squares(FitProblem(lambda p: p[0] * x - 5 * x, [0.5], [0.0], [2.0]))
    assert res.params[0] == pytest.approx(2.0) and res.at_bound(FitProblem(lambda p: p, [1.0], [0.0], [2.0]))[0]


@given(st.floats(0.5, 5.0), st.floats(0.05, 0.9), st.floats(-1.0, 1.0))
def test_residual_norm_non_increasing(a, tau, phase):
    ts = np.linspace(0, 1, 40)
    y = a * np.exp(-ts / tau) + 0.05 * np.sin(20 * ts + phase)
    res = least_squares(FitProblem(lambda p: p[0] * np.exp(-ts / p[1]) - y, [1.0, 0.5],
                                   [-np.inf, 1e-3], [np.inf, 10.0]))
    assert np.all(np.diff(res.history) <= 0)
    assert res.residual_norm >= 0


@given(st.floats(1e-3, 1e3))
def test_time_scaling_invariance(c):
    t = np.linspace(0.0, 10.0, 200)
    y = 1.5 * np.exp(-t / 2.0) + 0.2 + 0.01 * np.cos(7 * t)
    base = exp_fit(t, y)
    scaled = exp_fit(c * t, y)
    assert scaled.tau == pytest.approx(c * base.tau, rel=1e-8)
    assert scaled.residual_norm == pytest.approx(base.residual_norm, rel=1e-6, abs=1e-12)


def test_jacobian_matches_analytic():
    ts = np.linspace(0, 1, 30)
    rng = np.random.default_rng(5)
    for _ in range(25):
        p = rng.uniform([0.5, 0.05], [5.0, 1.0])
        J_an = np.column_stack([np.exp(-ts / p[1]), p[0] * ts / p[1] ** 2 * np.exp(-ts / p[1])])
        J_fd = finite_difference_jacobian(lambda q: q[0] * np.exp(-ts / q[1]), p)
        assert np.max(np.abs(J_fd - J_an)) <= 1e-4 * np.max(np.abs(J_an))


def test_supplied_jacobian_used():
    x = np.linspace(0, 1, 10)
    calls = []

    def jac(p):
        calls.append(1)
        return x[:, None]
    res = least_squares(FitProblem(lambda p: p[0] * x - 2 * x, [0.0], jacobian=jac))
    assert calls and res.params[0] == pytest.approx(2.0)


def test_standard_errors_from_normal_matrix():
    rng = np.random.default_rng(2)
    x = np.linspace(0, 1, 200)
    y = 2.0 * x + 0.1 * rng.standard_normal(200)
    res = least_squares(FitProblem(lambda p: p[0] * x - y, [1.0]))
    s2 = res.residual_norm ** 2 / 199
    assert res.stderr[0] == pytest.approx(np.sqrt(s2 / np.sum(x * x)), rel=1e-4)

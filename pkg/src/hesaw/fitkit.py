"""Small Levenberg-Marquardt least-squares engine.

Damped Gauss-Newton with the Nielsen-style damping schedule: start at
``1e-3 * max(diag(J^T J))``, divide by ten on an accepted step and
multiply by ten on a rejected one.  Steps are projected onto box bounds.
The Jacobian is built by forward differences unless one is supplied.
"""

from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

REL_STEP = 1e-6


class FitError(RuntimeError):
    """Fit could not proceed; ``result`` holds the last good iterate if any."""

    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result


@dataclass
class FitProblem:
    residuals: Callable[[np.ndarray], np.ndarray]
    x0: Sequence[float]
    lower: Optional[Sequence[float]] = None
    upper: Optional[Sequence[float]] = None
    max_iter: int = 200
    gtol: float = 1e-12
    xtol: float = 1e-12
    jacobian: Optional[Callable[[np.ndarray], np.ndarray]] = None

    def __post_init__(self):
        self.x0 = np.atleast_1d(np.asarray(self.x0, dtype=float))
        p = len(self.x0)
        self.lower = np.full(p, -np.inf) if self.lower is None else np.asarray(self.lower, float)
        self.upper = np.full(p, np.inf) if self.upper is None else np.asarray(self.upper, float)
        if self.lower.shape != (p,) or self.upper.shape != (p,):
            raise ValueError("bounds must match the parameter vector")
        if np.any(self.lower > self.upper):
            raise ValueError("lower bounds exceed upper bounds")
        if np.any(self.x0 < self.lower) or np.any(self.x0 > self.upper):
            raise ValueError("initial parameters lie outside the bounds")


@dataclass
class FitResult:
    params: np.ndarray
    residual_norm: float
    iterations: int
    converged: bool
    stderr: np.ndarray
    message: str = ""
    history: List[float] = field(default_factory=list)  # residual norm after each accepted step
    jac: Optional[np.ndarray] = field(default=None, repr=False)

    def at_bound(self, problem: FitProblem, rtol: float = 1e-9) -> np.ndarray:
        span = np.maximum(np.abs(self.params), 1.0) * rtol
        return (np.abs(self.params - problem.lower) <= span) | (np.abs(self.params - problem.upper) <= span)


def finite_difference_jacobian(fun, x, f0=None, rel_step=REL_STEP, lower=None, upper=None):
    """Forward-difference Jacobian with relative step ``rel_step``.

    The step flips sign when a forward step would leave the upper bound.
    """
    x = np.asarray(x, dtype=float)
    f0 = np.asarray(fun(x)) if f0 is None else f0
    J = np.empty((f0.size, x.size))
    for j in range(x.size):
        h = rel_step * max(abs(x[j]), 1.0) if x[j] == 0 else rel_step * abs(x[j])
        if upper is not None and x[j] + h > upper[j]:
            h = -h
        xp = x.copy()
        xp[j] += h
        J[:, j] = (np.asarray(fun(xp)) - f0) / (xp[j] - x[j])
    return J


def _stderr(J, r, p):
    m = r.size
    JTJ = J.T @ J
    dof = m - p
    if dof <= 0:
        return np.full(p, np.nan)
    s2 = float(r @ r) / dof
    try:
        cov = np.linalg.inv(JTJ) * s2
    except np.linalg.LinAlgError:
        return np.full(p, np.inf)
    return np.sqrt(np.abs(np.diag(cov)))


def least_squares(problem: FitProblem) -> FitResult:
    """Minimize ``0.5 * |r(x)|^2`` over the box given by the problem bounds."""
    lo, hi = problem.lower, problem.upper
    fun = problem.residuals

    def evaluate(x):
        r = np.atleast_1d(np.asarray(fun(x), dtype=float)).ravel()
        return r

    def jac(x, r):
        if problem.jacobian is not None:
            return np.atleast_2d(np.asarray(problem.jacobian(x), dtype=float))
        return finite_difference_jacobian(evaluate, x, r, lower=lo, upper=hi)

    x = problem.x0.copy()
    r = evaluate(x)
    if not np.all(np.isfinite(r)):
        raise FitError("residuals are not finite at the initial parameters")
    cost = float(r @ r)
    J = jac(x, r)
    p = x.size
    JTJ = J.T @ J
    lam = 1e-3 * float(np.max(np.diag(JTJ))) if np.any(JTJ) else 1e-3
    history = [np.sqrt(cost)]
    converged = False
    message = "iteration limit reached"
    it = 0
    while it < problem.max_iter:
        g = J.T @ r
        if np.max(np.abs(g)) <= problem.gtol * max(1.0, cost):
            converged, message = True, "gradient tolerance met"
            break
        it += 1
        A = JTJ + lam * np.eye(p)
        try:
            step = -np.linalg.solve(A, g)
        except np.linalg.LinAlgError:
            lam *= 10.0
            continue
        x_new = np.clip(x + step, lo, hi)
        actual = x_new - x
        if np.linalg.norm(actual) <= problem.xtol * (np.linalg.norm(x) + problem.xtol):
            converged, message = True, "step tolerance met"
            break
        r_new = evaluate(x_new)
        if not np.all(np.isfinite(r_new)):
            last = FitResult(x, float(np.sqrt(cost)), it, False, np.full(p, np.nan),
                             "non-finite residual", history, J)
            raise FitError(f"non-finite residual at iteration {it}", last)
        cost_new = float(r_new @ r_new)
        if cost_new < cost:
            x, r, cost = x_new, r_new, cost_new
            J = jac(x, r)
            JTJ = J.T @ J
            lam /= 10.0
            history.append(np.sqrt(cost))
            if cost == 0.0:
                converged, message = True, "exact fit"
                break
        else:
            lam *= 10.0
            if lam > 1e300:
                converged, message = True, "no further decrease possible"
                break
    return FitResult(x, float(np.sqrt(cost)), it, converged, _stderr(J, r, p), message, history, J)


@dataclass
class ExpFit:
    """``y = amplitude * exp(-(t - t0) / tau) + offset`` on ``[t0, t1]``."""

    amplitude: float
    tau: float
    offset: float
    t0: float
    stderr: np.ndarray
    converged: bool
    residual_norm: float
    iterations: int

    @property
    def tau_rel_err(self) -> float:
        return float(self.stderr[1] / self.tau) if self.tau else np.inf

    @property
    def poorly_determined(self) -> bool:
        return not self.tau_rel_err <= 0.2


def _initial_tau(ts, ys):
    q = max(len(ts) // 4, 1)
    y1, y2 = ys[:q].mean(), ys[-q:].mean()
    t1, t2 = ts[:q].mean(), ts[-q:].mean()
    if y1 * y2 > 0 and abs(y1) > abs(y2):
        return (t2 - t1) / np.log(y1 / y2)
    return (ts[-1] - ts[0]) / 3.0


def exp_fit(t, y, window: Optional[Tuple[float, float]] = None, offset: bool = True,
            max_iter: int = 200) -> ExpFit:
    """Fit a single exponential decay (with optional constant offset).

    Time is measured from the window start and internally rescaled to the
    window length; ``y`` is rescaled to its largest magnitude.  If the first
    attempt fails, three spread initial time constants are tried.
    """
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    if window is not None:
        m = (t >= window[0]) & (t <= window[1])
        t, y = t[m], y[m]
    if len(t) < 8:
        raise FitError(f"need at least 8 samples in the fit window, got {len(t)}")
    yscale = np.max(np.abs(y))
    if yscale == 0 or np.ptp(y) <= 1e-12 * yscale:
        raise FitError("constant data: decay time is unidentifiable")
    t0 = t[0]
    T = t[-1] - t0
    ts = (t - t0) / T
    ys = y / yscale

    # the decay time is fitted as log(tau) so steps cannot cross zero
    def model(p):
        out = p[0] * np.exp(-ts * np.exp(-p[1]))
        return out + p[2] if offset else out

    def residuals(p):
        return model(p) - ys

    log_lo, log_hi = np.log(1e-6), np.log(1e6)
    tau0 = _initial_tau(ts, ys)
    tau0 = float(np.clip(tau0, 1e-3, 1e3))
    guesses = [tau0, tau0 * 0.2, tau0 * 5.0, 1.0]
    best = None
    for tau_guess in guesses:
        x0 = [ys[0] - (ys[-1] if offset else 0.0), np.log(tau_guess)]
        if offset:
            x0.append(ys[-1])
        lower = [-np.inf, log_lo] + ([-np.inf] if offset else [])
        upper = [np.inf, log_hi] + ([np.inf] if offset else [])
        problem = FitProblem(residuals, x0, lower, upper, max_iter=max_iter)
        try:
            res = least_squares(problem)
        except FitError:
            continue
        if res.at_bound(problem)[1]:
            res.converged = False
            res.message = "decay time ran into its search bound"
        if best is None or res.residual_norm < best.residual_norm:
            best = res
        if res.converged:
            break
    if best is None:
        raise FitError("exponential fit failed from every initial guess")
    a, tau = best.params[0], float(np.exp(best.params[1]))
    b = best.params[2] if offset else 0.0
    err = best.stderr.copy()
    err[1] *= tau  # d tau = tau d(log tau)
    scale = np.array([yscale, T, yscale][: len(err)])
    err = err * scale
    if not offset:
        err = np.append(err, 0.0)
    return ExpFit(a * yscale, tau * T, b * yscale, t0, err, best.converged,
                  best.residual_norm * yscale, best.iterations)

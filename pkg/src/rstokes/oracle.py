"""Brute-force reference solver for a single spectral mode.

Integrates ``y' + lam (1 + gamma D^alpha) y = f`` directly in time, without
touching the Laplace representation used by :mod:`rstokes.kernel`.  The
Riemann-Liouville term is handled by product integration of the piecewise
linear interpolant of ``y`` against the exact Abel kernel, the local terms by
implicit Euler.  Only :class:`~rstokes.kernel.ModelParams` is shared with the
spectral path.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import DomainError, InvariantViolation
from .fracderiv import TimeSeries
from .kernel import ModelParams, vectorize_time_function


@dataclass(frozen=True)
class StepperConfig:
    n_steps: int = 4096
    grading: float = 2.0
    richardson: bool = True

    def __post_init__(self):
        if self.n_steps < 8:
            raise DomainError("n_steps must be at least 8")
        if self.grading < 1.0:
            raise DomainError("grading must be >= 1")


def _ramp_increment(a, h, p):
    """(a + h)^p - a^p without cancellation, for a >= 0, h > 0."""
    out = np.empty_like(h)
    zero = a <= 0.0
    out[zero] = h[zero] ** p
    az = a[~zero]
    out[~zero] = az ** p * np.expm1(p * np.log1p(h[~zero] / az))
    return out


def _march(params, lam, y0, f, grid):
    a, g = params.alpha, params.gamma
    n = grid.size - 1
    ft = vectorize_time_function(f)(grid)
    y = np.empty(n + 1)
    y[0] = y0
    slopes = np.empty(n)
    g2 = math.gamma(2.0 - a)
    g3 = math.gamma(3.0 - a)
    p = 2.0 - a
    j_prev = 0.0  # fractional integral I^{1-alpha} y at t_0 = 0
    for m in range(1, n + 1):
        tm = grid[m]
        tau = tm - grid[m - 1]
        # contribution of the already-known linear pieces 0..m-2
        if m > 1:
            aa = tm - grid[1:m]
            hh = np.diff(grid[:m])
            known = float(np.dot(slopes[: m - 1], _ramp_increment(aa, hh, p))) / g3
        else:
            known = 0.0
        known += y0 * tm ** (1.0 - a) / g2
        w = tau ** (1.0 - a) / g3  # J_m = known + (y_m - y_{m-1}) * w
        coef = 1.0 + lam * tau + lam * g * w
        if not coef > 0.0:
            raise InvariantViolation("implicit step coefficient vanished")
        rhs = y[m - 1] + tau * ft[m] - lam * g * (known - y[m - 1] * w - j_prev)
        y[m] = rhs / coef
        slopes[m - 1] = (y[m] - y[m - 1]) / tau
        j_prev = known + (y[m] - y[m - 1]) * w
    return y


def graded_grid(t_end: float, n: int, grading: float) -> np.ndarray:
    return t_end * (np.arange(n + 1) / n) ** grading


def step_mode(params: ModelParams, lam: float, y0: float, f: Optional[Callable],
              cfg: StepperConfig = StepperConfig(), t_end: Optional[float] = None) -> TimeSeries:
    """Time-step one mode from ``y(0) = y0`` up to ``t_end`` (default: horizon).

    With ``cfg.richardson`` the terminal value is replaced by the one-level
    extrapolation ``2 y_N - y_{N/2}``; interior values are left as computed.
    """
    if not lam > 0.0:
        raise DomainError("lambda must be positive")
    t_end = params.horizon_T if t_end is None else float(t_end)
    if not t_end > 0.0:
        raise DomainError("t_end must be positive")
    if f is None:
        f = _zero
    grid = graded_grid(t_end, cfg.n_steps, cfg.grading)
    y = _march(params, lam, y0, f, grid)
    if cfg.richardson:
        coarse = _march(params, lam, y0, f, graded_grid(t_end, cfg.n_steps // 2, cfg.grading))
        y = y.copy()
        y[-1] = 2.0 * y[-1] - coarse[-1]
    return TimeSeries(grid, y)


def _zero(t):
    return np.zeros_like(np.asarray(t, dtype=float))


def shoot_nonlocal(params: ModelParams, lam: float, f: Optional[Callable], psi: float = 1.0,
                   cfg: StepperConfig = StepperConfig()) -> float:
    """Initial value h with y_h(T) - y_h(0) = psi for the mode equation.

    The defect g(h) = y_h(T) - h - psi is affine in h, so two trial solves
    determine the root exactly (up to stepper error).
    """
    g0 = step_mode(params, lam, 0.0, f, cfg).values[-1] - psi
    g1 = step_mode(params, lam, 1.0, f, cfg).values[-1] - 1.0 - psi
    slope = g1 - g0
    if slope == 0.0:
        raise InvariantViolation("non-local defect does not depend on the initial value")
    return -g0 / slope

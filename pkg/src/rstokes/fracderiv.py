"""Discrete Riemann-Liouville derivative on nonuniform time grids.

``D^alpha h = d/dt I^{1-alpha} h``.  The fractional integral is computed by
product integration: ``h`` is replaced by its piecewise-linear interpolant and
integrated exactly against ``(t - s)^{-alpha} / Gamma(1 - alpha)``.  Writing
the interpolant as a constant plus ramps ``(s - t_j)_+`` gives

    I^{1-alpha} h(t_n) = h_0 t_n^{1-alpha} / Gamma(2-alpha)
                         + sum_j slope_j [(t_n - t_j)^{2-alpha} - (t_n - t_{j+1})^{2-alpha}] / Gamma(3-alpha),

whose bracket is evaluated with ``expm1``/``log1p`` so far-field weights do not
lose digits.  The outer derivative is the three-point central difference on
interior nodes; the two end nodes carry no value.

Data behaving like ``t^sigma`` with ``0 < sigma < 1`` near the origin (the
Rayleigh-Stokes propagator has ``sigma = 1 - alpha``) defeats linear
interpolation in the first cells.  Optional starting weights on the first few
nodes make the rule exact for a given set of such powers.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Union

import numpy as np

from .errors import DomainError


@dataclass(frozen=True)
class TimeSeries:
    grid: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        grid = np.asarray(self.grid, dtype=float)
        values = np.asarray(self.values, dtype=float)
        if grid.ndim != 1 or grid.shape != values.shape:
            raise DomainError("grid and values must be 1-D arrays of equal length")
        if grid.size > 1 and np.any(np.diff(grid) <= 0.0):
            raise DomainError("time grid must be strictly increasing")
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "values", values)

    def __len__(self):
        return self.grid.size

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "value"])
        for t, v in zip(self.grid, self.values):
            w.writerow([f"{t:.17g}", f"{v:.17g}"])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "TimeSeries":
        rows = list(csv.reader(io.StringIO(text)))
        if not rows or [c.strip() for c in rows[0]] != ["t", "value"]:
            raise DomainError("time series CSV must start with the header 't,value'")
        data = np.array([[float(a), float(b)] for a, b in rows[1:]], dtype=float)
        return cls(data[:, 0], data[:, 1])


def graded_grid(t_end: float, n_nodes: int, grading: float = 2.0) -> np.ndarray:
    """Nodes ``t_end (j/(n-1))^grading``, j = 0..n-1, clustered at t = 0."""
    if n_nodes < 2:
        raise DomainError("need at least two nodes")
    return t_end * (np.arange(n_nodes) / (n_nodes - 1)) ** grading


def geometric_grid(t_end: float, n_nodes: int, t_min: Optional[float] = None) -> np.ndarray:
    """``0`` followed by ``n_nodes - 1`` geometrically spaced nodes up to ``t_end``."""
    if n_nodes < 3:
        raise DomainError("need at least three nodes")
    t_min = 1e-4 * t_end if t_min is None else t_min
    return np.concatenate([[0.0], np.geomspace(t_min, t_end, n_nodes - 1)])


def _ramp_increment(a, h, p):
    out = np.empty_like(h)
    zero = a <= 0.0
    out[zero] = h[zero] ** p
    az = a[~zero]
    out[~zero] = az ** p * np.expm1(p * np.log1p(h[~zero] / az))
    return out


def _linear_fractional_integral(t, v, order):
    p = order + 1.0
    g1 = math.gamma(order + 1.0)
    g2 = math.gamma(order + 2.0)
    slopes = np.diff(v) / np.diff(t)
    hs = np.diff(t)
    out = np.empty_like(t)
    out[0] = 0.0
    for n in range(1, t.size):
        a = t[n] - t[1 : n + 1]
        out[n] = v[0] * t[n] ** order / g1 + float(
            np.dot(slopes[:n], _ramp_increment(a, hs[:n], p))
        ) / g2
    return out


def fractional_integral(grid: np.ndarray, values: np.ndarray, order: float,
                        exponents: Sequence[float] = ()) -> np.ndarray:
    """Product-integration value of I^order h at every node, 0 < order < 1.

    ``grid[0]`` is the lower terminal.  ``exponents`` lists powers ``sigma``
    for which the rule is corrected to be exact on ``(t - grid[0])^sigma``;
    the correction uses the values at nodes ``0..len(exponents)``.
    """
    t = np.asarray(grid, dtype=float) - grid[0]
    v = np.asarray(values, dtype=float)
    J = _linear_fractional_integral(t, v, order)
    sig = [float(s) for s in exponents]
    if not sig:
        return J
    m = len(sig) + 1
    if t.size <= m:
        raise DomainError("too few nodes for the requested starting correction")
    # starting weights w_n on nodes 0..m-1, exact for 1 and each t^sigma
    V = np.ones((m, m))
    E = np.zeros((t.size, m))
    for i, s in enumerate(sig, start=1):
        V[:, i] = t[:m] ** s
        exact = math.gamma(s + 1.0) / math.gamma(s + 1.0 + order) * t ** (s + order)
        E[:, i] = exact - _linear_fractional_integral(t, t ** s, order)
    W = np.linalg.solve(V.T, E.T).T
    return J + W @ v[:m]


def equation_exponents(alpha: float) -> list:
    """Singular powers k(1 - alpha) < 1 of Rayleigh-Stokes mode solutions."""
    out = []
    k = 1
    while k * (1.0 - alpha) < 1.0 - 1e-9:
        out.append(k * (1.0 - alpha))
        k += 1
    return out


def central_difference(grid: np.ndarray, values: np.ndarray) -> np.ndarray:
    """Three-point derivative on interior nodes 1..n-2 of a nonuniform grid."""
    t = np.asarray(grid, dtype=float)
    v = np.asarray(values, dtype=float)
    h1 = t[1:-1] - t[:-2]
    h2 = t[2:] - t[1:-1]
    return (
        -h2 / (h1 * (h1 + h2)) * v[:-2]
        + (h2 - h1) / (h1 * h2) * v[1:-1]
        + h1 / (h2 * (h1 + h2)) * v[2:]
    )


def _check_series(series, alpha):
    if not (0.0 < alpha < 1.0):
        raise DomainError(f"alpha must lie in (0, 1), got {alpha}")
    if len(series) < 3:
        raise DomainError("need at least three points")
    if not np.all(np.isfinite(series.values)):
        raise DomainError("series values must be finite")


def rl_derivative(series: TimeSeries, alpha: float,
                  singular_exponents: Sequence[float] = ()) -> TimeSeries:
    """Riemann-Liouville derivative of order ``alpha`` on the interior nodes.

    The lower terminal is ``series.grid[0]`` (normally 0).
    """
    _check_series(series, alpha)
    J = fractional_integral(series.grid, series.values, 1.0 - alpha, singular_exponents)
    return TimeSeries(series.grid[1:-1], central_difference(series.grid, J))


def residual_operator(series: TimeSeries, params, lam: float,
                      f: Optional[Callable] = None,
                      singular_exponents: Union[str, Sequence[float]] = "auto") -> TimeSeries:
    """``y' + lam (1 + gamma D^alpha) y - f`` on interior nodes.

    ``y'`` and the outer derivative of the fractional integral use the same
    central stencil.  ``"auto"`` corrects the fractional integral for the
    powers returned by :func:`equation_exponents`.
    """
    _check_series(series, params.alpha)
    if isinstance(singular_exponents, str):
        if singular_exponents != "auto":
            raise DomainError(f"unknown exponent policy {singular_exponents!r}")
        singular_exponents = equation_exponents(params.alpha)
    t, y = series.grid, series.values
    dy = central_difference(t, y)
    da = rl_derivative(series, params.alpha, singular_exponents).values
    res = dy + lam * y[1:-1] + lam * params.gamma * da
    if f is not None:
        from .kernel import vectorize_time_function

        res = res - vectorize_time_function(f)(t[1:-1])
    return TimeSeries(t[1:-1], res)

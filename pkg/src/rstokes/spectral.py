"""Finite spectral surrogate for the positive self-adjoint operator A.

An operator is represented by its first ``n_modes`` eigenvalues.  Two
generators come with explicit orthonormal eigenfunctions (Dirichlet Laplacian
on an interval and on a rectangle); an explicit list carries eigenvalues only.
Truncation is always explicit: every object knows its ``n_modes``.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Tuple

import numpy as np
from scipy import integrate

from .errors import DomainError

GENERATORS = ("interval_dirichlet", "rectangle_dirichlet", "explicit_list")


class UnsupportedGeneratorError(DomainError):
    """The spectrum has no attached eigenfunctions."""


@dataclass(frozen=True, eq=False)
class Spectrum:
    eigenvalues: np.ndarray
    generator: str = "explicit_list"
    # L for intervals, (Lx, Ly) for rectangles, () for explicit lists
    geometry: Tuple[float, ...] = ()
    # mode index per eigenvalue: (k,) or (m, n)
    indices: Tuple[Tuple[int, ...], ...] = field(default=(), repr=False)

    def __post_init__(self):
        ev = np.asarray(self.eigenvalues, dtype=float)
        if ev.ndim != 1 or ev.size == 0:
            raise DomainError("a spectrum needs at least one eigenvalue")
        if not np.all(np.isfinite(ev)) or np.any(ev <= 0.0):
            raise DomainError("eigenvalues must be finite and strictly positive")
        if np.any(np.diff(ev) < 0.0):
            raise DomainError("eigenvalues must be nondecreasing")
        if self.generator not in GENERATORS:
            raise DomainError(f"unknown generator {self.generator!r}")
        ev.setflags(write=False)
        object.__setattr__(self, "eigenvalues", ev)

    @property
    def n_modes(self) -> int:
        return self.eigenvalues.size

    @property
    def lambda1(self) -> float:
        return float(self.eigenvalues[0])

    @property
    def has_eigenfunctions(self) -> bool:
        return self.generator != "explicit_list"

    def header(self) -> str:
        if self.generator == "interval_dirichlet":
            geo = f" L={self.geometry[0]:.17g}"
        elif self.generator == "rectangle_dirichlet":
            geo = f" Lx={self.geometry[0]:.17g} Ly={self.geometry[1]:.17g}"
        else:
            geo = ""
        return f"# generator={self.generator}{geo} n_modes={self.n_modes}"


def make_spectrum(generator: str, n_modes: Optional[int] = None, *, L: float = math.pi,
                  Lx: float = math.pi, Ly: float = math.pi,
                  values: Optional[Sequence[float]] = None) -> Spectrum:
    """Build a spectrum.

    >>> make_spectrum("interval_dirichlet", 3).eigenvalues.tolist()
    [1.0, 4.0, 9.0]
    """
    if generator == "explicit_list":
        if values is None:
            raise DomainError("explicit_list requires 'values'")
        ev = np.sort(np.asarray(values, dtype=float), kind="stable")
        if n_modes is not None:
            if n_modes < 1 or n_modes > ev.size:
                raise DomainError("n_modes out of range for the explicit list")
            ev = ev[:n_modes]
        return Spectrum(ev, "explicit_list")
    if n_modes is None or n_modes < 1:
        raise DomainError("n_modes must be >= 1")
    if generator == "interval_dirichlet":
        if not L > 0.0:
            raise DomainError("L must be positive")
        k = np.arange(1, n_modes + 1)
        return Spectrum((k * math.pi / L) ** 2, generator, (float(L),),
                        tuple((int(i),) for i in k))
    if generator == "rectangle_dirichlet":
        if not (Lx > 0.0 and Ly > 0.0):
            raise DomainError("Lx and Ly must be positive")
        # any of the n smallest has m, n <= n_modes
        pairs = [(m, n) for m in range(1, n_modes + 1) for n in range(1, n_modes + 1)]
        lam = [(m * math.pi / Lx) ** 2 + (n * math.pi / Ly) ** 2 for m, n in pairs]
        order = sorted(range(len(pairs)), key=lambda i: (lam[i], pairs[i]))[:n_modes]
        return Spectrum(np.array([lam[i] for i in order]), generator,
                        (float(Lx), float(Ly)), tuple(pairs[i] for i in order))
    raise DomainError(f"unknown generator {generator!r}")


def _check_len(v, spectrum):
    v = np.asarray(v, dtype=float)
    if v.shape != (spectrum.n_modes,):
        raise DomainError(
            f"coefficient vector has length {v.size}, spectrum has {spectrum.n_modes} modes"
        )
    return v


def norm_tau(v, spectrum: Spectrum, tau: float) -> float:
    """Norm of D(A^tau): sqrt(sum lambda_k^(2 tau) v_k^2)."""
    v = _check_len(v, spectrum)
    if tau == 0.0:
        return float(math.sqrt(float(np.dot(v, v))))
    w = spectrum.eigenvalues ** tau * v
    return float(math.sqrt(float(np.dot(w, w))))


def eigenfunction(spectrum: Spectrum, k: int) -> Callable:
    """Orthonormal eigenfunction of mode ``k`` (0-based) as a vectorized callable."""
    if not spectrum.has_eigenfunctions:
        raise UnsupportedGeneratorError("explicit_list spectra carry no eigenfunctions")
    if spectrum.generator == "interval_dirichlet":
        (L,) = spectrum.geometry
        (j,) = spectrum.indices[k]
        c = math.sqrt(2.0 / L)
        return lambda x: c * np.sin(j * math.pi * np.asarray(x, dtype=float) / L)
    Lx, Ly = spectrum.geometry
    m, n = spectrum.indices[k]
    c = 2.0 / math.sqrt(Lx * Ly)

    def v(x, y):
        return c * np.sin(m * math.pi * np.asarray(x, dtype=float) / Lx) * np.sin(
            n * math.pi * np.asarray(y, dtype=float) / Ly)

    return v


def _simpson_nodes(length, max_index, min_panels, oversample=8):
    # 8x oversampled relative to the highest mode, even count for Simpson
    n = max(min_panels, int(oversample * max_index * 2))
    n += n % 2
    return np.linspace(0.0, length, n + 1)


def project_function(h: Callable, spectrum: Spectrum) -> np.ndarray:
    """Fourier coefficients (h, v_k) by composite Simpson quadrature.

    ``h`` takes ``x`` (interval) or ``(x, y)`` (rectangle) as arrays.
    """
    if not spectrum.has_eigenfunctions:
        raise UnsupportedGeneratorError("cannot project onto an explicit_list spectrum")
    if spectrum.generator == "interval_dirichlet":
        (L,) = spectrum.geometry
        kmax = max(i[0] for i in spectrum.indices)
        x = _simpson_nodes(L, kmax, 2048)
        hx = np.broadcast_to(np.asarray(h(x), dtype=float), x.shape)
        out = np.empty(spectrum.n_modes)
        for k in range(spectrum.n_modes):
            out[k] = integrate.simpson(hx * eigenfunction(spectrum, k)(x), x=x)
        return out
    Lx, Ly = spectrum.geometry
    mmax = max(i[0] for i in spectrum.indices)
    nmax = max(i[1] for i in spectrum.indices)
    x = _simpson_nodes(Lx, mmax, 256)
    y = _simpson_nodes(Ly, nmax, 256)
    X, Y = np.meshgrid(x, y, indexing="ij")
    H = np.broadcast_to(np.asarray(h(X, Y), dtype=float), X.shape)
    out = np.empty(spectrum.n_modes)
    for k in range(spectrum.n_modes):
        inner = integrate.simpson(H * eigenfunction(spectrum, k)(X, Y), x=y, axis=1)
        out[k] = integrate.simpson(inner, x=x)
    return out


@dataclass(frozen=True, eq=False)
class SolutionField:
    """Mode trajectories T_k(t_j); rows are modes, columns times."""

    time_grid: np.ndarray
    trajectories: np.ndarray
    spectrum: Spectrum

    def __post_init__(self):
        t = np.asarray(self.time_grid, dtype=float)
        T = np.asarray(self.trajectories, dtype=float)
        if T.shape != (self.spectrum.n_modes, t.size):
            raise DomainError(
                f"trajectory matrix must be {self.spectrum.n_modes} x {t.size}, got {T.shape}"
            )
        if np.any(np.diff(t) < 0.0):
            raise DomainError("time grid must be nondecreasing")
        if not np.all(np.isfinite(T)):
            raise DomainError("trajectories contain non-finite entries")
        object.__setattr__(self, "time_grid", t)
        object.__setattr__(self, "trajectories", T)

    def at(self, j: int) -> np.ndarray:
        return self.trajectories[:, j]


def sample_physical(field: SolutionField, points, time_index: int) -> np.ndarray:
    """Truncated eigenfunction sum sum_k T_k(t_j) v_k at the given points.

    ``points`` is an array of x values (interval) or of (x, y) pairs.
    """
    spec = field.spectrum
    if not spec.has_eigenfunctions:
        raise UnsupportedGeneratorError("explicit_list spectra carry no eigenfunctions")
    n_t = field.time_grid.size
    if not -n_t <= time_index < n_t:
        raise IndexError(f"time index {time_index} out of range for {n_t} times")
    coef = field.trajectories[:, time_index]
    pts = np.asarray(points, dtype=float)
    if spec.generator == "interval_dirichlet":
        out = np.zeros(pts.shape)
        for k in range(spec.n_modes):
            out += coef[k] * eigenfunction(spec, k)(pts)
        return out
    pts = pts.reshape(-1, 2)
    out = np.zeros(pts.shape[0])
    for k in range(spec.n_modes):
        out += coef[k] * eigenfunction(spec, k)(pts[:, 0], pts[:, 1])
    return out


# --- CSV serialization ----------------------------------------------------

def _parse_header(line):
    if not line.startswith("#"):
        raise DomainError("CSV must start with a '# generator=...' header line")
    meta = {}
    for tok in line[1:].split():
        key, _, val = tok.partition("=")
        meta[key] = val
    if "generator" not in meta:
        raise DomainError("header must name the generator")
    return meta


def spectrum_to_csv(spectrum: Spectrum) -> str:
    lines = [spectrum.header(), "eigenvalue"]
    lines += [f"{x:.17g}" for x in spectrum.eigenvalues]
    return "\n".join(lines) + "\n"


def spectrum_from_csv(text: str) -> Spectrum:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    meta = _parse_header(lines[0])
    if lines[1].strip() != "eigenvalue":
        raise DomainError("expected column header 'eigenvalue'")
    values = [float(x) for x in lines[2:]]
    gen = meta["generator"]
    if gen == "interval_dirichlet":
        spec = make_spectrum(gen, len(values), L=float(meta["L"]))
    elif gen == "rectangle_dirichlet":
        spec = make_spectrum(gen, len(values), Lx=float(meta["Lx"]), Ly=float(meta["Ly"]))
    else:
        return make_spectrum("explicit_list", values=values)
    if not np.allclose(spec.eigenvalues, values, rtol=1e-14, atol=0.0):
        raise DomainError("eigenvalues do not match the declared generator")
    return spec


def coefvec_to_csv(coeffs, spectrum: Spectrum) -> str:
    v = _check_len(coeffs, spectrum)
    buf = io.StringIO()
    buf.write(spectrum.header() + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["coefficient"])
    for x in v:
        w.writerow([f"{x:.17g}"])
    return buf.getvalue()


def coefvec_from_csv(text: str) -> np.ndarray:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    _parse_header(lines[0])
    if lines[1].strip() != "coefficient":
        raise DomainError("expected column header 'coefficient'")
    return np.array([float(x) for x in lines[2:]])

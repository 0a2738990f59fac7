"""Run configuration: a strict TOML schema mapped onto library objects.

Every table accepts a fixed set of keys; anything else is a hard error naming
the offending key.  See ``examples/configs`` in the repository for one file
per problem kind.
"""
from __future__ import annotations

import math
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover - exercised on 3.10
    import tomli as tomllib

from .errors import DomainError
from .fracderiv import geometric_grid, graded_grid
from .kernel import ModelParams
from .solvers import ProblemSpec, SourceTerm
from .spectral import Spectrum, make_spectrum, project_function


class ConfigError(ValueError):
    """Malformed or inconsistent run configuration."""


_SECTIONS = {
    "model": {"alpha", "gamma", "horizon_T", "quad_rel_tol", "quad_abs_tol", "tail_cutoff_policy"},
    "spectrum": {"generator", "n_modes", "L", "Lx", "Ly", "values"},
    "problem": {"kind", "data"},
    "source": {"profile", "spatial", "time", "smoothness_eps"},
    "time_grid": {"kind", "n_nodes", "t_min", "grading"},
    "output": {"directory", "formats", "plot"},
    "kernel_eval": {"lambdas", "times"},
    "verify": {"eps", "n_instances", "seed", "amplification_threshold"},
    "demo": {"eps", "modes"},
}
_PROFILE_KEYS = {
    "coefficients": {"profile", "values"},
    "single_mode": {"profile", "mode", "amplitude"},
    "polynomial": {"profile", "coefficients"},
    "gaussian_bump": {"profile", "center", "width", "amplitude"},
    "random": {"profile", "seed", "decay", "scale"},
    "zero": {"profile"},
}
FORMATS = ("csv", "json")


@dataclass
class RunConfig:
    params: ModelParams
    spectrum: Spectrum
    kind: str
    data: np.ndarray
    source: SourceTerm
    time_grid: np.ndarray
    out_dir: Path = Path("out")
    formats: tuple = FORMATS
    plot: bool = False
    kernel_lambdas: List[float] = field(default_factory=lambda: [1.0, 10.0, 100.0])
    kernel_times: List[float] = field(default_factory=lambda: [0.0, 0.1, 0.5, 1.0])
    verify: Dict[str, Any] = field(default_factory=dict)
    demo: Dict[str, Any] = field(default_factory=dict)
    # description of the source for reports
    source_desc: Dict[str, Any] = field(default_factory=dict)

    def problem(self) -> ProblemSpec:
        return ProblemSpec(self.params, self.spectrum, self.kind, self.data, self.source,
                           self.time_grid)


def _check_keys(table: Dict, allowed, where: str):
    if not isinstance(table, dict):
        raise ConfigError(f"[{where}] must be a table")
    unknown = sorted(set(table) - set(allowed))
    if unknown:
        raise ConfigError(f"[{where}] unknown key(s): {', '.join(unknown)}")


def _num(table, key, where, default=None, positive=False):
    if key not in table:
        if default is None:
            raise ConfigError(f"[{where}] missing required key '{key}'")
        return default
    v = table[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"[{where}] '{key}' must be a number")
    v = float(v)
    if not math.isfinite(v) or (positive and v <= 0.0):
        raise ConfigError(f"[{where}] '{key}' must be {'positive and ' if positive else ''}finite")
    return v


def _numlist(v, where, key):
    if not isinstance(v, list) or not all(
            isinstance(x, (int, float)) and not isinstance(x, bool) for x in v):
        raise ConfigError(f"[{where}] '{key}' must be a list of numbers")
    return [float(x) for x in v]


def _model(t):
    _check_keys(t, _SECTIONS["model"], "model")
    try:
        return ModelParams(
            alpha=_num(t, "alpha", "model"),
            gamma=_num(t, "gamma", "model"),
            horizon_T=_num(t, "horizon_T", "model", 1.0),
            quad_rel_tol=_num(t, "quad_rel_tol", "model", 1e-10),
            quad_abs_tol=_num(t, "quad_abs_tol", "model", 1e-12),
            tail_cutoff_policy=t.get("tail_cutoff_policy", "exp_bound"),
        )
    except DomainError as exc:
        raise ConfigError(f"[model] {exc}") from exc


def _spectrum(t):
    _check_keys(t, _SECTIONS["spectrum"], "spectrum")
    gen = t.get("generator")
    if gen is None:
        raise ConfigError("[spectrum] missing required key 'generator'")
    n = t.get("n_modes")
    if n is not None and (isinstance(n, bool) or not isinstance(n, int)):
        raise ConfigError("[spectrum] 'n_modes' must be an integer")
    kw = {}
    for key in ("L", "Lx", "Ly"):
        if key in t:
            kw[key] = _num(t, key, "spectrum", positive=True)
    if "values" in t:
        kw["values"] = _numlist(t["values"], "spectrum", "values")
    try:
        return make_spectrum(gen, n, **kw)
    except DomainError as exc:
        raise ConfigError(f"[spectrum] {exc}") from exc


def _poly_eval(coeffs, x):
    out = np.zeros(np.shape(x))
    for c in reversed(coeffs):
        out = out * x + c
    return out


def coefficients_from_profile(desc: Dict, spectrum: Spectrum, where: str,
                              seed_override: Optional[int] = None) -> np.ndarray:
    """Coefficient vector for a named profile table."""
    if not isinstance(desc, dict) or "profile" not in desc:
        raise ConfigError(f"[{where}] needs a 'profile' key")
    name = desc["profile"]
    if name not in _PROFILE_KEYS:
        raise ConfigError(f"[{where}] unknown profile {name!r}; choose from {sorted(_PROFILE_KEYS)}")
    _check_keys(desc, _PROFILE_KEYS[name], where)
    n = spectrum.n_modes
    if name == "zero":
        return np.zeros(n)
    if name == "coefficients":
        vals = _numlist(desc.get("values"), where, "values")
        if len(vals) != n:
            raise ConfigError(f"[{where}] has {len(vals)} values for {n} modes")
        return np.array(vals)
    if name == "single_mode":
        k = desc.get("mode")
        if isinstance(k, bool) or not isinstance(k, int) or not 1 <= k <= n:
            raise ConfigError(f"[{where}] 'mode' must be an integer in 1..{n}")
        out = np.zeros(n)
        out[k - 1] = _num(desc, "amplitude", where, 1.0)
        return out
    if name == "random":
        seed = desc.get("seed", 0) if seed_override is None else seed_override
        if isinstance(seed, bool) or not isinstance(seed, int):
            raise ConfigError(f"[{where}] 'seed' must be an integer")
        decay = _num(desc, "decay", where, 0.0)
        scale = _num(desc, "scale", where, 1.0)
        rng = np.random.default_rng(seed)
        return scale * rng.standard_normal(n) * np.arange(1, n + 1) ** (-decay)
    if not spectrum.has_eigenfunctions:
        raise ConfigError(f"[{where}] profile {name!r} needs a spectrum with eigenfunctions")
    if name == "polynomial":
        coeffs = _numlist(desc.get("coefficients"), where, "coefficients")
        if spectrum.generator == "interval_dirichlet":
            h = lambda x: _poly_eval(coeffs, x)  # noqa: E731
        else:
            h = lambda x, y: _poly_eval(coeffs, x) * _poly_eval(coeffs, y)  # noqa: E731
    else:
        amp = _num(desc, "amplitude", where, 1.0)
        width = _num(desc, "width", where, 0.3, positive=True)
        geo = spectrum.geometry
        if spectrum.generator == "interval_dirichlet":
            c = _num(desc, "center", where, geo[0] / 2.0)
            h = lambda x: amp * np.exp(-((x - c) ** 2) / (2 * width ** 2))  # noqa: E731
        else:
            cen = desc.get("center", [geo[0] / 2.0, geo[1] / 2.0])
            cen = _numlist(cen, where, "center")
            if len(cen) != 2:
                raise ConfigError(f"[{where}] 'center' must be a pair on a rectangle")
            cx, cy = cen
            h = lambda x, y: amp * np.exp(  # noqa: E731
                -((x - cx) ** 2 + (y - cy) ** 2) / (2 * width ** 2))
    return project_function(h, spectrum)


def _source(t, spectrum, T, seed_override):
    if t is None:
        return SourceTerm.zero(spectrum.n_modes), {"profile": "zero"}
    _check_keys(t, _SECTIONS["source"], "source")
    eps = _num(t, "smoothness_eps", "source", 0.5)
    if eps < 0.0:
        raise ConfigError("[source] 'smoothness_eps' must be nonnegative")
    if t.get("profile", None) == "zero" or not t:
        if set(t) - {"profile", "smoothness_eps"}:
            raise ConfigError("[source] profile 'zero' takes no other keys")
        return SourceTerm([None] * spectrum.n_modes, eps), {"profile": "zero"}
    if "profile" in t:
        raise ConfigError("[source] 'profile' only accepts \"zero\"; use 'spatial' and 'time'")
    if "spatial" not in t:
        raise ConfigError("[source] missing required key 'spatial'")
    coeffs = coefficients_from_profile(t["spatial"], spectrum, "source.spatial", seed_override)
    tcoef = _numlist(t.get("time", [1.0]), "source", "time")
    if not tcoef:
        raise ConfigError("[source] 'time' must hold at least one coefficient")
    if len(tcoef) == 1:
        src = SourceTerm.constant(coeffs * tcoef[0], eps)
    else:
        src = SourceTerm.separable(coeffs, lambda s: _poly_eval(tcoef, s), eps)
    return src, {"profile": "separable", "time": tcoef, "smoothness_eps": eps}


def _time_grid(t, T):
    t = t or {}
    _check_keys(t, _SECTIONS["time_grid"], "time_grid")
    kind = t.get("kind", "geometric")
    n = t.get("n_nodes", 64)
    if isinstance(n, bool) or not isinstance(n, int) or n < 3:
        raise ConfigError("[time_grid] 'n_nodes' must be an integer >= 3")
    if kind == "geometric":
        if "grading" in t:
            raise ConfigError("[time_grid] 'grading' applies to kind = \"graded\" only")
        t_min = _num(t, "t_min", "time_grid", 1e-4 * T, positive=True)
        if t_min >= T:
            raise ConfigError("[time_grid] 't_min' must be below the horizon")
        return geometric_grid(T, n, t_min)
    if kind == "graded":
        if "t_min" in t:
            raise ConfigError("[time_grid] 't_min' applies to kind = \"geometric\" only")
        return graded_grid(T, n, _num(t, "grading", "time_grid", 2.0, positive=True))
    raise ConfigError(f"[time_grid] unknown kind {kind!r}")


def parse_config(text: str, base_dir: Path = Path("."), seed: Optional[int] = None) -> RunConfig:
    """Parse TOML text into a validated :class:`RunConfig`."""
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"TOML syntax error: {exc}") from exc
    _check_keys(doc, _SECTIONS, "top level")
    for sec, table in doc.items():
        _check_keys(table, _SECTIONS[sec], sec)
    for sec in ("model", "spectrum", "problem"):
        if sec not in doc:
            raise ConfigError(f"missing required table [{sec}]")
    params = _model(doc["model"])
    spectrum = _spectrum(doc["spectrum"])
    prob = doc["problem"]
    _check_keys(prob, _SECTIONS["problem"], "problem")
    kind = prob.get("kind")
    if kind not in ("forward", "backward", "nonlocal"):
        raise ConfigError("[problem] 'kind' must be forward, backward or nonlocal")
    data = coefficients_from_profile(prob.get("data", {"profile": "zero"}), spectrum,
                                     "problem.data", seed)
    source, sdesc = _source(doc.get("source"), spectrum, params.horizon_T, seed)
    grid = _time_grid(doc.get("time_grid"), params.horizon_T)

    out = doc.get("output", {})
    _check_keys(out, _SECTIONS["output"], "output")
    fmts = out.get("formats", list(FORMATS))
    if not isinstance(fmts, list) or not set(fmts) <= set(FORMATS) or not fmts:
        raise ConfigError(f"[output] 'formats' must be a non-empty subset of {list(FORMATS)}")
    plot = out.get("plot", False)
    if not isinstance(plot, bool):
        raise ConfigError("[output] 'plot' must be true or false")
    out_dir = Path(out.get("directory", "out"))
    if not out_dir.is_absolute():
        out_dir = base_dir / out_dir

    ke = doc.get("kernel_eval", {})
    _check_keys(ke, _SECTIONS["kernel_eval"], "kernel_eval")
    lams = _numlist(ke.get("lambdas", [1.0, 10.0, 100.0]), "kernel_eval", "lambdas")
    times = _numlist(ke.get("times", [0.0, 0.1, 0.5, 1.0]), "kernel_eval", "times")

    ver = doc.get("verify", {})
    _check_keys(ver, _SECTIONS["verify"], "verify")
    dem = doc.get("demo", {})
    _check_keys(dem, _SECTIONS["demo"], "demo")

    try:
        cfg = RunConfig(params, spectrum, kind, data, source, grid, out_dir,
                        tuple(f for f in FORMATS if f in fmts), plot, lams, times,
                        dict(ver), dict(dem), sdesc)
        cfg.problem()
    except DomainError as exc:
        raise ConfigError(f"inconsistent configuration: {exc}") from exc
    return cfg


def load_config(path, seed: Optional[int] = None) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text, path.parent, seed)

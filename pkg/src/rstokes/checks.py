"""Property suites run by ``rstokes verify`` and by the test-suite.

Each suite returns a list of records: plain dicts with at least ``name`` and
``passed``.  ``margin`` is the worst measured/bound ratio where that makes
sense (pass means margin <= 1).
"""
from __future__ import annotations

import math
from typing import Dict, List, Optional, Sequence

import numpy as np

from . import calibration as cal
from . import constants as _constants
from .kernel import ModelParams, eval_B, lower_bound_const
from .oracle import StepperConfig, shoot_nonlocal
from .solvers import (
    ProblemSpec, SourceTerm, solve_backward, solve_forward, solve_nonlocal,
    verify_backward_two_sided, verify_coercive, verify_conditional_stability,
)
from .spectral import Spectrum, norm_tau

FLOOR_TOL = 1e-8
INTEGRAL_TOL = 1e-8
NONLOCAL_TOL = 1e-8
SHOOTING_TOL = 1e-6


def _record(name, ratios, **extra):
    ratios = np.asarray(ratios, dtype=float)
    worst = float(np.max(ratios)) if ratios.size else 0.0
    rec = {"name": name, "passed": bool(np.all(ratios <= 1.0)), "n_points": int(ratios.size),
           "n_violations": int(np.count_nonzero(ratios > 1.0)), "margin": worst}
    rec.update(extra)
    return rec


def kernel_bounds_suite(alphas=cal.ALPHAS, gammas=cal.GAMMAS, lambdas=cal.LAMBDAS,
                        T: float = 1.0, n_times: int = cal.N_TIMES,
                        consts: Optional[Dict[str, float]] = None) -> List[Dict]:
    """Kernel bounds on a (alpha, gamma, lambda, t) grid.

    Checks: 0 < B < 1, monotone decay in t, the propagator bound, the
    integral bound, the explicit lower floor and the derivative envelopes.
    """
    consts = _constants.load() if consts is None else consts
    lam1 = min(lambdas)
    unit, mono, integ, floor = [], [], [], []
    ratios: Dict[str, List[float]] = {}
    for a in alphas:
        for g in gammas:
            p = ModelParams(a, g, T)
            cl = lower_bound_const(p, lam1)
            for lam in lambdas:
                prev = 1.0
                for t in cal.calibration_times(T, n_times):
                    rec = cal.sample_kernel_point(p, lam, t)
                    B = rec["B"]
                    unit.append(0.0 if 0.0 < B < 1.0 else 2.0)
                    # B(t) <= B(t_prev) + 2 abs_tol, expressed as a ratio
                    mono.append((B - prev) / (2.0 * p.quad_abs_tol) if B > prev else 0.0)
                    prev = B
                    floor.append((cl / lam - FLOOR_TOL) / B)
                    for k, v in cal.kernel_ratios(rec).items():
                        ratios.setdefault(k, []).append(v / consts[k])
                integ.append(cal.integral_B(p, lam) / (1.0 / lam + INTEGRAL_TOL))
    out = [
        _record("B_in_open_unit_interval", unit),
        _record("B_monotone_in_t", mono),
        _record("integral_bound", integ),
        _record("lower_floor", floor, lambda1=lam1),
    ]
    for k in sorted(ratios):
        out.append(_record(k, ratios[k], constant=consts[k]))
    return out


def coercive_kind(spec: ProblemSpec) -> str:
    has_data = bool(np.any(spec.data))
    has_src = not spec.source.is_zero
    if spec.kind == "nonlocal":
        return "nonlocal" if has_src else "nonlocal_aux"
    if has_data or not has_src:
        return "forward"
    return "auxiliary_constant" if spec.source.is_constant else "auxiliary"


def coercive_suite(spec: ProblemSpec, consts: Optional[Dict[str, float]] = None) -> List[Dict]:
    """Solve the configured problem and compare its coercive data with the frozen bound."""
    consts = _constants.load() if consts is None else consts
    if spec.kind == "backward":
        back = solve_backward(spec)
        spec = spec.with_data("forward", back.recovered_initial)
    rep = solve_nonlocal(spec) if spec.kind == "nonlocal" else solve_forward(spec)
    kind = coercive_kind(spec)
    rec = verify_coercive(spec, rep, kind, consts)
    rec.pop("times")
    rec["name"] = f"coercive_{kind}"
    rec["margin"] = rec.pop("max_lhs_over_rhs")
    return [rec]


def backward_suite(spec: ProblemSpec, consts: Optional[Dict[str, float]] = None,
                   threshold: float = 1e8) -> List[Dict]:
    """Roundtrip, amplification law and (source-free) two-sided bracket."""
    consts = _constants.load() if consts is None else consts
    p, sp = spec.params, spec.spectrum
    out = []
    if spec.kind == "forward":
        phi0 = spec.data
        fwd = solve_forward(spec)
        bspec = spec.with_data("backward", fwd.field.trajectories[:, -1])
    elif spec.kind == "backward":
        phi0 = None
        bspec = spec
    else:
        bspec = spec.with_data("backward", spec.data)
        phi0 = None
    back = solve_backward(bspec, amplification_threshold=threshold)
    if phi0 is not None:
        scale = np.maximum(np.abs(phi0), 1e-300)
        rel = np.where(phi0 != 0.0, np.abs(back.recovered_initial - phi0) / scale,
                       np.abs(back.recovered_initial))
        tol = 1e-6 if spec.source.is_zero else 1e-4
        out.append(_record("roundtrip_relative_error", rel / tol, tolerance=tol,
                           worst=float(rel.max())))
    defect = back.diagnostics["terminal_defect"]
    out.append(_record("terminal_defect", [defect / (10.0 * p.quad_abs_tol + 1e-12 *
                                                     norm_tau(bspec.data, sp, 0.0))],
                       value=defect))
    amp = np.asarray(back.diagnostics["amplification"])
    C1 = back.diagnostics["lower_bound_const"]
    C2 = consts["lemma31_C"] * min(1.0 / p.horizon_T, p.horizon_T ** (p.alpha - 1.0))
    lam = sp.eigenvalues
    out.append(_record("amplification_upper", amp / (lam / C1), C1=C1))
    out.append(_record("amplification_lower", (lam / C2) / amp, C2=C2))
    if spec.source.is_zero:
        tw = verify_backward_two_sided(bspec, back, consts)
        ratio = tw["ratio"]
        out.append({"name": "two_sided_bracket", "passed": bool(tw["lower_ok"] and tw["upper_ok"]),
                    "ratio": ratio, "C1": tw["C1"], "C2": tw["C2"], "vacuous": tw["vacuous"],
                    "margin": 0.0 if ratio is None else max(tw["C1"] / ratio, ratio / tw["C2"])})
    else:
        out.append({"name": "two_sided_bracket", "passed": True, "skipped": "source present"})
    return out


def random_stability_instances(params: ModelParams, spectrum: Spectrum, grid,
                               n_instances: int, seed: int):
    """Seeded forward problems: random phi, and a ramp source on odd instances."""
    rng = np.random.default_rng(seed)
    n = spectrum.n_modes
    decay = np.arange(1, n + 1, dtype=float) ** -1.0
    for i in range(n_instances):
        phi = rng.standard_normal(n) * decay
        if i % 2:
            c = 0.1 * rng.standard_normal(n) * decay
            src = SourceTerm.separable(c, lambda t: 1.0 + t, 0.5)
        else:
            src = SourceTerm.zero(n)
        yield ProblemSpec(params, spectrum, "forward", phi, src, grid)


def conditional_stability_suite(params: ModelParams, spectrum: Spectrum, grid,
                                eps_list: Sequence[float] = (0.25, 0.5, 1.0),
                                n_instances: int = 20, seed: int = 0) -> List[Dict]:
    ratios, per = [], []
    for i, spec in enumerate(random_stability_instances(params, spectrum, grid, n_instances, seed)):
        for eps in eps_list:
            phi0 = norm_tau(spec.data, spectrum, eps)
            r = verify_conditional_stability(spec, 0.0, eps, phi0)
            ratios.append(r["lhs"] / r["rhs"] if r["rhs"] > 0 else (0.0 if r["lhs"] == 0 else math.inf))
            per.append({"instance": i, "eps": eps, "lhs": r["lhs"], "rhs": r["rhs"],
                        "holder_ok": bool(r["norm_sq"] <= r["holder_bound"] * (1 + 1e-10))})
    rec = _record("conditional_stability", ratios, n_instances=n_instances, seed=seed,
                  eps=list(eps_list))
    rec["holder_split_ok"] = all(p["holder_ok"] for p in per)
    rec["passed"] = rec["passed"] and rec["holder_split_ok"]
    rec["instances"] = per
    return [rec]


def nonlocal_suite(spec: ProblemSpec, oracle_cfg: StepperConfig = StepperConfig()) -> List[Dict]:
    """Exactness of the non-local condition and a shooting cross-check on mode 1."""
    nspec = spec if spec.kind == "nonlocal" else spec.with_data("nonlocal", spec.data)
    rep = solve_nonlocal(nspec)
    d = rep.diagnostics
    out = [
        _record("nonlocal_defect", [d["nonlocal_defect"] / NONLOCAL_TOL], value=d["nonlocal_defect"]),
        {"name": "denominators_negative", "passed": d["denominator_max"] < 0.0,
         "denominator_max": d["denominator_max"]},
        _record("split_consistency", [d["split_discrepancy"] / NONLOCAL_TOL],
                value=d["split_discrepancy"]),
    ]
    h_spec = float(rep.recovered_initial[0])
    f1 = nspec.source.mode_functions[0]
    if f1 is None and nspec.data[0] == 0.0:
        out.append({"name": "shooting_oracle_mode1", "passed": True, "vacuous": True,
                    "h_spectral": 0.0, "h_oracle": 0.0, "margin": 0.0})
    else:
        h_orc = shoot_nonlocal(nspec.params, nspec.spectrum.lambda1, f1, float(nspec.data[0]),
                               oracle_cfg)
        gap = abs(h_orc - h_spec)
        out.append(_record("shooting_oracle_mode1", [gap / SHOOTING_TOL],
                           h_spectral=h_spec, h_oracle=h_orc, gap=gap))
    return out


def illposed_rows(params: ModelParams, spectrum: Spectrum, ks: Sequence[int], eps: float,
                  consts: Optional[Dict[str, float]] = None):
    """Rows of the ill-posedness curve for psi^(k) = lambda_k^(eps - 1) e_k.

    ||phi^(k)|| = lambda_k^eps / (lambda_k B(lambda_k, T)) is bracketed by the
    propagator ceiling C2 from below and the explicit floor C1 from above.
    """
    if not 0.0 < eps < 1.0:
        raise ValueError("eps must lie in (0, 1)")
    consts = _constants.load() if consts is None else consts
    T = params.horizon_T
    c_floor = lower_bound_const(params, spectrum.lambda1)
    c_ceil = consts["lemma31_C"] * min(1.0 / T, T ** (params.alpha - 1.0))
    rows = []
    for k in ks:
        if not 1 <= k <= spectrum.n_modes:
            raise ValueError(f"mode {k} outside 1..{spectrum.n_modes}")
        lam = float(spectrum.eigenvalues[k - 1])
        psi = np.zeros(spectrum.n_modes)
        psi[k - 1] = lam ** (eps - 1.0)
        BT = eval_B(params, lam, T).value
        rows.append({
            "k": int(k), "lambda_k": lam,
            "psi_norm": norm_tau(psi, spectrum, 0.0),
            "phi_norm": abs(psi[k - 1] / BT),
            "amplification": 1.0 / BT,
            "psi_norm1": norm_tau(psi, spectrum, 1.0),
            "phi_lower_bound": lam ** eps / c_ceil,
            "phi_upper_bound": lam ** eps / c_floor,
        })
    return rows


def illposed_suite(rows) -> List[Dict]:
    psi = [r["psi_norm"] for r in rows]
    phi = [r["phi_norm"] for r in rows]
    return [
        {"name": "psi_strictly_decreasing", "passed": all(b < a for a, b in zip(psi, psi[1:]))},
        {"name": "phi_strictly_increasing", "passed": all(b > a for a, b in zip(phi, phi[1:]))},
        _record("phi_above_lower_bound", [r["phi_lower_bound"] / r["phi_norm"] for r in rows]),
        _record("phi_below_upper_bound", [r["phi_norm"] / r["phi_upper_bound"] for r in rows]),
    ]

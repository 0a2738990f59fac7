import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra import numpy as hnp

from rstokes.errors import DomainError, IllConditionedWarning, InvariantViolation, PreconditionError
from rstokes.kernel import ModelParams, eval_A, eval_B
from rstokes.oracle import StepperConfig, shoot_nonlocal, step_mode
from rstokes.solvers import (
    ProblemSpec, SourceTerm, coercive_rhs, solve, solve_auxiliary_zero_init, solve_backward,
    solve_forward, solve_nonlocal, stability_constant, verify_backward_two_sided,
    verify_coercive, verify_conditional_stability,
)
from rstokes.spectral import make_spectrum, norm_tau

P = ModelParams(0.5, 1.0)
SP = make_spectrum("interval_dirichlet", 6)
GRID = np.concatenate([[0.0], np.geomspace(1e-3, 1.0, 15)])


def _spec(kind, data, source=None, params=P, sp=SP):
    return ProblemSpec(params, sp, kind, np.asarray(data, dtype=float), source, GRID)


class TestProblemSpec:
    def test_defaults(self):
        s = ProblemSpec(P, SP, "forward", np.ones(6))
        assert s.source.is_zero
        assert s.time_grid[0] == 0.0 and s.time_grid[-1] == 1.0

    @pytest.mark.parametrize("kw", [
        {"kind": "sideways"},
        {"data": np.ones(5)},
        {"data": np.array([1, 2, np.nan, 0, 0, 0.0])},
        {"time_grid": np.array([0.0, 0.5])},
        {"time_grid": np.array([0.1, 0.5, 1.0])},
        {"time_grid": np.array([0.0, 0.6, 0.5, 1.0])},
        {"source": SourceTerm.zero(3)},
    ])
    def test_rejects(self, kw):
        base = dict(params=P, spectrum=SP, kind="forward", data=np.ones(6))
        base.update(kw)
        with pytest.raises(DomainError):
            ProblemSpec(**base)

    def test_source_eps_nonnegative(self):
        with pytest.raises(DomainError):
            SourceTerm([None], smoothness_eps=-0.1)


class TestForward:
    def test_zero_data_zero_solution(self):
        rep = solve_forward(_spec("forward", np.zeros(6)))
        assert np.all(rep.field.trajectories == 0.0)
        assert np.all(rep.coercive_lhs == 0.0)

    def test_single_mode_is_kernel(self):
        e = np.eye(6)[2]
        rep = solve_forward(_spec("forward", e))
        tr = rep.field.trajectories
        assert np.all(tr[[0, 1, 3, 4, 5]] == 0.0)
        assert tr[2, -1] == eval_B(P, 9.0, 1.0).value

    def test_matches_oracle(self):
        src = SourceTerm.separable([1, 0, -0.5, 0, 0, 0], np.cos)
        rep = solve_forward(_spec("forward", [1, 0.3, 0, 0, 0, 0], src))
        for k, (y0, f) in enumerate([(1.0, src.mode_functions[0]), (0.3, None), (0.0, src.mode_functions[2])]):
            ref = step_mode(P, SP.eigenvalues[k], y0, f, StepperConfig(n_steps=4096)).values[-1]
            assert rep.field.trajectories[k, -1] == pytest.approx(ref, rel=2e-5, abs=1e-9)

    def test_residual_shrinks_with_grid(self):
        sp = make_spectrum("interval_dirichlet", 1)
        res = []
        for n in (64, 256):
            g = np.linspace(0, 1, n + 1) ** 2
            res.append(solve_forward(ProblemSpec(P, sp, "forward", np.ones(1), None, g)).diagnostics["residual_max"])
        assert res[1] < res[0] < 0.5

    def test_exact_and_fd_coercive_agree_on_low_modes(self):
        sp = make_spectrum("interval_dirichlet", 2)
        g = np.concatenate([[0.0], np.geomspace(1e-3, 1.0, 200)])
        s = ProblemSpec(P, sp, "forward", np.array([1.0, 0.5]), None, g)
        rep = solve_forward(s)
        far = rep.coercive_times > 0.05
        assert np.allclose(rep.coercive_lhs_fd[far], rep.coercive_lhs[far], rtol=5e-2)

    @settings(max_examples=10, deadline=None)
    @given(hnp.arrays(float, 6, elements=st.floats(-10, 10)), st.floats(-10, 10))
    def test_linearity(self, v, c):
        a = solve_forward(_spec("forward", v)).field.trajectories
        b = solve_forward(_spec("forward", c * v)).field.trajectories
        assert np.allclose(b, c * a, rtol=1e-12, atol=1e-12)


class TestAuxiliary:
    def test_corollary_matches_duhamel(self):
        src = SourceTerm.constant([1.0, 0, 2.0, 0, 0, 0.5])
        s = _spec("forward", np.zeros(6), src)
        a = solve_auxiliary_zero_init(s, path="corollary")
        b = solve_auxiliary_zero_init(s, path="duhamel")
        assert np.allclose(a.field.trajectories, b.field.trajectories, rtol=1e-8, atol=1e-13)
        assert np.allclose(a.coercive_lhs, b.coercive_lhs, rtol=1e-6)
        assert a.diagnostics["path"] == "corollary"

    def test_closed_form_value(self):
        s = _spec("forward", np.zeros(6), SourceTerm.constant(np.eye(6)[1]))
        rep = solve_auxiliary_zero_init(s)
        assert rep.field.trajectories[1, -1] == pytest.approx((1 - eval_A(P, 4.0, 1.0).value) / 4.0)

    def test_rejects(self):
        with pytest.raises(DomainError):
            solve_auxiliary_zero_init(_spec("forward", np.ones(6), SourceTerm.constant(np.ones(6))))
        with pytest.raises(DomainError):
            solve_auxiliary_zero_init(_spec("forward", np.zeros(6), SourceTerm.separable(np.ones(6), np.sin)),
                                      path="corollary")
        with pytest.raises(DomainError):
            solve_auxiliary_zero_init(_spec("forward", np.zeros(6), SourceTerm.constant(np.ones(6))), path="x")

    def test_dispatch(self):
        s = _spec("forward", np.zeros(6), SourceTerm.constant(np.ones(6)))
        assert solve(s, auxiliary=True).diagnostics["path"] == "corollary"


class TestBackward:
    def test_roundtrip(self):
        phi = np.array([1.0, -0.5, 0.25, 0.1, 0.0, 0.02])
        psi = solve_forward(_spec("forward", phi)).field.trajectories[:, -1]
        rep = solve_backward(_spec("backward", psi))
        assert np.max(np.abs(rep.recovered_initial - phi)) <= 1e-10
        assert rep.diagnostics["terminal_defect"] < 1e-14

    def test_roundtrip_with_source(self):
        src = SourceTerm.separable(np.ones(6), lambda t: 1 + t)
        phi = np.linspace(1, 0, 6)
        psi = solve_forward(_spec("forward", phi, src)).field.trajectories[:, -1]
        rep = solve_backward(_spec("backward", psi, src))
        assert np.allclose(rep.recovered_initial, phi, rtol=1e-8, atol=1e-10)

    def test_amplification_and_floor(self):
        rep = solve_backward(_spec("backward", np.ones(6)))
        d = rep.diagnostics
        assert d["amplification"] == pytest.approx([1 / eval_B(P, l, 1.0).value for l in SP.eigenvalues])
        assert d["lambdaB_T_min"] >= d["lower_bound_const"]

    def test_warning_and_cutoff(self):
        sp = make_spectrum("explicit_list", values=[1.0, 1e6])
        s = ProblemSpec(P, sp, "backward", np.array([1.0, 1.0]), None, GRID)
        with pytest.warns(IllConditionedWarning):
            solve_backward(s, amplification_threshold=10.0)
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            rep = solve_backward(s, cutoff=100.0)
        assert rep.diagnostics["dropped_modes"] == [1]
        assert rep.recovered_initial[1] == 0.0
        assert rep.diagnostics["terminal_defect"] is None

    def test_two_sided(self):
        consts = {"lemma31_C": 10.0}
        phi = np.array([1.0, 0.5, 0, 0, 0, 0.1])
        psi = solve_forward(_spec("forward", phi)).field.trajectories[:, -1]
        s = _spec("backward", psi)
        res = verify_backward_two_sided(s, solve_backward(s), consts)
        assert res["lower_ok"] and res["upper_ok"] and not res["vacuous"]
        assert res["C1"] <= res["ratio"] <= res["C2"]

    def test_two_sided_zero_and_source(self):
        s = _spec("backward", np.zeros(6))
        assert verify_backward_two_sided(s, solve_backward(s), {"lemma31_C": 1.0})["vacuous"]
        s2 = _spec("backward", np.ones(6), SourceTerm.constant(np.ones(6)))
        with pytest.raises(PreconditionError):
            verify_backward_two_sided(s2, solve_backward(s2), {"lemma31_C": 1.0})


class TestNonlocal:
    def test_condition_holds(self):
        src = SourceTerm.separable(np.linspace(1, 2, 6), np.cos)
        rep = solve_nonlocal(_spec("nonlocal", np.ones(6), src))
        tr = rep.field.trajectories
        assert np.max(np.abs(tr[:, -1] - tr[:, 0] - 1.0)) <= 1e-12
        assert rep.diagnostics["denominator_max"] < 0.0
        assert rep.diagnostics["split_discrepancy"] <= 1e-12

    def test_matches_shooting(self):
        rep = solve_nonlocal(_spec("nonlocal", np.eye(6)[0]))
        h = shoot_nonlocal(P, 1.0, None, 1.0, StepperConfig(n_steps=4096))
        assert rep.recovered_initial[0] == pytest.approx(h, rel=1e-6)

    def test_bad_denominator(self, monkeypatch):
        import rstokes.solvers as sv

        monkeypatch.setattr(sv, "_kernel_on_grid", lambda spec: np.ones((6, GRID.size)))
        with pytest.raises(InvariantViolation):
            sv.solve_nonlocal(_spec("nonlocal", np.ones(6)))

    def test_kind_checked(self):
        with pytest.raises(DomainError):
            solve_nonlocal(_spec("forward", np.ones(6)))
        with pytest.raises(DomainError):
            solve_backward(_spec("forward", np.ones(6)))
        with pytest.raises(DomainError):
            solve_forward(_spec("nonlocal", np.ones(6)))


class TestStability:
    def test_constant_formula(self):
        from rstokes.kernel import lower_bound_const

        c = lower_bound_const(P, 1.0)
        assert stability_constant(P, 1.0, 1.0) == pytest.approx(math.sqrt(2) ** 0.5 * c ** -0.5)

    @pytest.mark.parametrize("eps", [0.25, 0.5, 1.0])
    def test_exact_data_passes(self, eps):
        phi = 1.0 / SP.eigenvalues
        Phi0 = norm_tau(phi, SP, eps)
        res = verify_conditional_stability(_spec("forward", phi), 0.0, eps, Phi0)
        assert res["passed"] and res["margin"] >= 0
        assert res["norm_sq"] <= res["holder_bound"] * (1 + 1e-9)

    def test_noise_passes(self):
        phi = 1.0 / SP.eigenvalues
        res = verify_conditional_stability(_spec("forward", phi), 1e-6, 0.5, 10.0, seed=3)
        assert res["passed"]

    def test_seed_deterministic(self):
        phi = 1.0 / SP.eigenvalues
        a = verify_conditional_stability(_spec("forward", phi), 1e-4, 0.5, 10.0, seed=7)
        b = verify_conditional_stability(_spec("forward", phi), 1e-4, 0.5, 10.0, seed=7)
        assert a == b

    def test_precondition(self):
        with pytest.raises(PreconditionError):
            verify_conditional_stability(_spec("forward", np.ones(6)), 0.0, 0.5, 1.0)
        with pytest.raises(DomainError):
            verify_conditional_stability(_spec("forward", np.ones(6)), 0.0, 0.0, 1e9)


CONSTS = {
    "coercive_forward_C": 1.0, "coercive_nonlocal_w_C": 2.0, "coercive_constant_source_C": 3.0,
    "coercive_source_C_eps@0.25": 4.0, "coercive_source_C_eps@0.5": 5.0,
    "coercive_nonlocal_C_eps@0.25": 6.0, "coercive_nonlocal_C_eps@0.5": 7.0,
}


class TestCoerciveRhs:
    def test_forward_pure_data(self):
        r = coercive_rhs("forward", [0.5, 1.0], 2.0, 0.0, CONSTS)
        assert r.tolist() == [16.0, 4.0]

    def test_mixture_factor(self):
        r = coercive_rhs("forward", [1.0], 1.0, 1.0, CONSTS, eps=0.6)
        assert r[0] == 2 * (1.0 + 5.0)

    def test_eps_key_selection(self):
        assert coercive_rhs("auxiliary", [1.0], 0.0, 1.0, CONSTS, eps=0.3)[0] == 4.0
        assert coercive_rhs("nonlocal", [1.0], 0.0, 1.0, CONSTS, eps=2.0)[0] == 7.0

    def test_other_kinds(self):
        assert coercive_rhs("auxiliary_constant", [1.0, 2.0], 0.0, 2.0, CONSTS).tolist() == [12.0, 12.0]
        assert coercive_rhs("nonlocal_aux", [0.5], 1.0, 0.0, CONSTS)[0] == 8.0
        with pytest.raises(DomainError):
            coercive_rhs("nope", [1.0], 1.0, 0.0, CONSTS)

    def test_verify_reports_violation(self):
        s = _spec("forward", np.ones(6))
        rep = solve_forward(s)
        tiny = dict(CONSTS, coercive_forward_C=1e-12)
        res = verify_coercive(s, rep, "forward", tiny)
        assert not res["passed"] and res["n_violations"] > 0
        big = dict(CONSTS, coercive_forward_C=1e12)
        assert verify_coercive(s, rep, "forward", big)["passed"]

    def test_auxiliary_constant_needs_constant(self):
        s = _spec("forward", np.zeros(6), SourceTerm.separable(np.ones(6), np.sin))
        with pytest.raises(PreconditionError):
            verify_coercive(s, solve_forward(s), "auxiliary_constant", CONSTS)

"""Spectral solution of the fractional Rayleigh-Stokes equation.

The equation ``u' + (1 + gamma D^alpha) A u = f`` is reduced to scalar mode
equations on a finite spectrum of ``A``; the per-mode propagator is evaluated
from its Laplace representation.
"""
from .errors import (
    DomainError, IllConditionedWarning, InvariantViolation, PreconditionError, QuadratureError,
)
from .kernel import (
    KernelValue, ModelParams, duhamel, eval_A, eval_B, eval_B_batch, eval_density,
    lower_bound_const,
)
from .spectral import (
    SolutionField, Spectrum, eigenfunction, make_spectrum, norm_tau, project_function,
    sample_physical,
)
from .fracderiv import TimeSeries, residual_operator, rl_derivative
from .solvers import (
    ProblemSpec, SolveReport, SourceTerm, solve_auxiliary_zero_init, solve_backward,
    solve_forward, solve_nonlocal, verify_backward_two_sided, verify_coercive,
    verify_conditional_stability,
)
from .oracle import StepperConfig, shoot_nonlocal, step_mode

__version__ = "0.1.0"

"""zop: zeroth-order inexact proximal stochastic gradient for composite problems.

    phi(x) = E[F(x, xi)] + r(x),  F(., xi) Lipschitz and possibly nonsmooth,

solved with two function evaluations per iteration, a proximal step on r and
a randomized output iterate.  Stationarity is certified through the Moreau
envelope of the ball-smoothed surrogate.
"""

from ._backend import BACKEND
from .errors import (CertificationError, ConfigurationError, InputError, OracleError,
                     RunAborted, UnsupportedOperation, ZopError)
from .oracles import (InexactOracle, InnerQP, InnerSolveReport, make_ergodic_max_oracle,
                      make_exact_oracle, make_inner_max_oracle, make_inner_min_oracle,
                      make_noisy_oracle)
from .problem import (CompositeProblem, Regularizer, ScenarioLaw, ScenarioStream,
                      StochasticFunction, evaluate_exact, lipschitz_audit, sample_scenario,
                      validate_point)
from .problems import (ProblemSpec, ReferenceSolution, build_problem, lipschitz_constant,
                       list_problems, reference_solution, saa_objective)
from .prox import (apply_prox, huber_envelope_abs, prox_box, prox_l1, prox_l1_plus_box,
                   prox_l2ball)
from .rng import CounterStream
from .smoothing import (GradientEstimate, SmoothingParams, ball_volume_constant,
                        estimate_smoothed_gradient, estimate_smoothed_value, sample_ball,
                        sample_sphere, two_point_estimate)
from .solver import (RunRecord, SolverConfig, estimate_phi_upper, run_ziproxsg, select_iterate,
                     theorem_step_size)
from .stationarity import (Certificate, CertifyParams, GoldsteinDiagnostic, certify,
                           envelope_gradient_norm, estimate_prox_point, goldstein_diagnostic,
                           goldstein_min_norm)

__version__ = "0.1.0"

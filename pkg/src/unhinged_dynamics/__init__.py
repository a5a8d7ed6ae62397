"""Closed-form and simulated dynamics of features and prototypes under the unhinged loss."""

from .shapes import (ProblemShape, State, CouplingMatrix, NcReport, build_coupling,
                     unhinged_loss, batch_loss, gradients, train_accuracy, nc_metrics,
                     loss_lower_bound, random_state, etf_prototypes, etf_optimal_state)
from .subspaces import (Component, Decomposition, project_e1, project_e2, project_e3,
                        decompose, apply_b, eigenvalue_of)
from .schedules import Schedule, constant, cosine_annealing, piecewise_table, rescaled_eta
from .closed_form import (unconstrained_state, unconstrained_bias, unconstrained_limit,
                          unconstrained_coefficients, regularized_state, regularized_bias,
                          regularized_limit, regularized_scalars, anchored_state, ntk_state)
from .simulators import (Trace, SphericalScalars, run, step_unconstrained, step_regularized,
                         step_anchored, step_spherical, step_ntk, scalar_spherical_step)
from .analysis import (RateFit, fit_exponential_rate, dist_to_limit, compare_closed_form,
                       norm_growth_report)
from .experiment import (ConfigError, ExperimentConfig, parse_config, load_config,
                         run_experiment)
from .estimators import ClosedFormFlow
from .verify import verify

__version__ = "0.1.0"

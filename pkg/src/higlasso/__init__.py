"""Hierarchical integrative group LASSO: selection of nonlinear main and
two-way interaction effects under strong heredity."""

from .design import GroupedDesign, RawDataset, expand_basis, interaction_block, preprocess
from .exceptions import HiglassoError, InputError, RankDeficientError
from .penalty import (GLQASurrogate, PenaltyConfig, glqa_surrogate, group_weight,
                      lqa_coefficients, penalty_value)
from .solver import (FitOptions, ModelState, compute_gamma, fit, kkt_residuals,
                     line_search, objective, partial_residual_beta,
                     partial_residual_eta, smooth_gradient, update_beta_block,
                     update_eta)
from .baselines import (SelectionResult, TuningGrid, cross_validate, default_grid,
                        fit_group_lasso, fit_lasso, select_terms)
from .simulation import (MetricsReport, Scenario, compute_metrics, gen_covariates,
                         gen_response, mean_function, run_study)

__version__ = "0.1.0"

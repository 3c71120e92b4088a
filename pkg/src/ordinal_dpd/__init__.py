"""Robust estimation in cumulative-link ordinal regression by minimum
density power divergence, with likelihood-based and weighted competitors."""

from .errors import (ConvergenceWarning, DegenerateProbability, EmptyCategoryWarning,
                     ExactTooLarge, InsufficientLowPredictor, InvalidData, InvalidTheta,
                     NoConvergence, OrdinalDPDError, SingularPsi, SingularScatter, ZeroMadColumn)
from .estimate import (FitConfig, FitResult, default_init, fit, fit_croux_wml, fit_iannario,
                       fit_mdpde, fit_mle)
from .inference import Sandwich, efficiency, omega_hat_n, psi_hat_n, sandwich, xi_hat
from .links import LINK_NAMES, Link, get_link
from .model import (Dataset, Theta, category_probs, log_likelihood, predict_categories,
                    prob_gradient, prob_hessian, score)
from .objective import DpdObjective, h_n, h_n_gradient, v_i
from .preprocess import robust_trim, standardize, unstandardize
from .robustness import (GesRequest, ImplosionScenario, dpd_generalized_residual, ges,
                         implosion_experiment, influence_contrib)
from .simulate import ContaminationSpec, McReport, ModelSpec, contaminate, generate, run_study
from .tuning import TuneConfig, select_alpha, wj_mse

__version__ = "0.1.0"

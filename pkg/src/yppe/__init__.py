"""Yang-Prentice short/long-term hazard-ratio survival model with a
piecewise-exponential baseline, fitted by maximum likelihood."""

from .baseline import (
    PiecewiseExponential,
    TimeGrid,
    baseline_cdf,
    baseline_hazard,
    baseline_odds,
    baseline_survival,
    build_grid_per_event,
    build_grid_sqrt_n,
    cum_hazard,
    locate_interval,
)
from .crossing import CrossingResult, find_crossing
from .data import SurvivalData, load_gastric, read_dataset
from .inference import FitConfig, FitResult, fit, initialize, observed_information, wald_summary
from .model import (
    ParameterVector,
    conditional_hazard,
    conditional_survival,
    linear_predictors,
    log_likelihood,
    log_likelihood_gradient,
)
from .nonparam import StepSurvival, kaplan_meier
from .simulate import SimDesign, calibrate_tau, generate_dataset, invert_yp_weibull, relative_bias, run_monte_carlo

__version__ = "0.1.0"

"""Parametric lower-bound estimation of Wasserstein-penalized worst-case risk.

Around a baseline model mu, the worst-case functional

    I(h)f = sup_nu ( int f dnu - phi_h(W_p(mu, nu)) ),   phi_h = h*phi(./h),

is estimated from below through parametrized Monge perturbations
y -> y + theta(y) (plus mean- and martingale-constrained variants), with
closed-form first-order asymptotics in h and the optimizing fields.
"""

from .asymptotics import (
    first_order_coefficient,
    hessian_max,
    ray_optimize,
    steepest_ascent_field,
)
from .errors import *  # noqa: F401,F403
from .fields import (
    CallPortfolioField,
    CenteredField,
    Field,
    FunctionField,
    MLPField,
    ScaledField,
    TabularField,
    backprop,
    lp_norm,
    mean_center,
)
from .finance import MarketSpec, bs_call, bull_spread_bounds, norm_cdf
from .loss import (
    LossFunction,
    bull_spread_on_returns,
    bump_loss,
    call_loss,
    constant_loss,
    fd_gradient,
    linear_loss,
    negate_loss,
    quadratic_loss,
    sum_loss,
)
from .measure import (
    DiscreteMeasure,
    GaussianMeasure,
    LognormalReturnsMeasure,
    Measure,
    empirical_measure,
    p_moment,
    rng_stream,
)
from .objective import Regime, check_regime_penalty, evaluate, theta_gradient
from .penalty import (
    BallPenalty,
    Penalty,
    PowerPenalty,
    TablePenalty,
    penalty_from_json,
    penalty_to_json,
    phi_h,
    phi_star,
)
from .results import ExpansionReport, RiskEstimate, combined_stderr
from .solvers import (
    MLPArchitecture,
    SolveOptions,
    TrainOptions,
    TransferOptions,
    solve_discrete,
    train_mlp,
    transfer_retrain,
)
from .transport import wasserstein_enumerate, wasserstein_p

__version__ = "0.1.0"

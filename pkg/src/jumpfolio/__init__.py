"""Optimal investment and consumption under dynamic VaR/ES limits in
jump-diffusion markets, verified against Monte Carlo and brute-force
oracles."""

from . import errors
from .constrained import (
    ConstraintCertificate,
    DiffGammaReport,
    certify_es_gamma,
    certify_var_gamma,
    es_slack_path,
    rho_es_gamma1,
    rho_var_gamma1,
    slack_path,
    solve_diff_gamma,
    solve_es_gamma1,
    solve_no_consumption,
    solve_var_gamma1,
    transformed_es_constraint,
    transformed_var_constraint,
    var_slack_path,
)
from .market import (
    CoefficientPath,
    JumpDist,
    JumpSpec,
    K_transform,
    MarketModel,
    Q_transform,
    R_integral,
    TimeGrid,
    UtilitySpec,
    expected_jump_exponential,
    inner_product_path,
    theta,
    theta_hat,
    theta_hat_path,
    theta_path,
    xi_lambda,
)
from .negjumps import (
    NegJumpAdjustment,
    adjusted_solve,
    beta_hat,
    effective_level,
    epsilon_t,
    F_hat,
)
from .riskmetrics import (
    F_beta,
    NegJumpMethod,
    RiskKind,
    RiskSpec,
    es_stoch_exp,
    gaussian_tail_bounds,
    normal_quantile,
    quantile_stoch_exp,
)
from .simulate import (
    GridOracleResult,
    NodeStats,
    PathEnsemble,
    constraint_profile,
    empirical_es,
    empirical_var,
    estimate_cost,
    grid_oracle,
    simulate,
    simulate_node_stats,
)
from .unconstrained import (
    MertonComparison,
    SolveReport,
    Strategy,
    chi_value,
    compare_merton,
    cost_function,
    eta_1d,
    rho_path,
    solve_linear,
    solve_power_1d,
    solve_power_equal,
    v_star_path,
    V_integral,
)

__version__ = "0.1.0"

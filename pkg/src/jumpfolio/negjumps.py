"""Confidence-level adjustment when assets can jump down.

If a negative jump happens on [0, T] with probability eps_T < beta, the
downside constraints stay valid after tightening the confidence level to
beta_hat = (beta - eps_T) / (1 - eps_T): the quantile level q_beta is
replaced by q_beta_hat in the VaR transform, and the log tail function
F_beta(u) is shifted down to F_beta(u) + ln(1 - eps_T) (evaluated at the
beta_hat quantile offset) in the ES transform.

Two estimates of eps_T ship side by side.  ExactThinning computes the exact
probability of seeing at least one negative jump (thinned Poisson counts per
asset); PaperFormula evaluates the product formula
prod_j (1 - exp(-lambda_j t)) P(xi_j < 0), which disagrees with the exact
count on generic inputs and is kept for comparison.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import EpsilonTooLarge, NegativeJumpsPresent
from .market import JumpSpec, MarketModel, UtilitySpec
from .riskmetrics import F_beta, NegJumpMethod, RiskSpec, normal_quantile


@dataclass(frozen=True)
class NegJumpAdjustment:
    """Adjusted level data: eps_T, beta_hat and the method that produced it."""

    epsilon_T: float
    beta_hat: float
    method: NegJumpMethod


def epsilon_t(jumps: JumpSpec, t: float,
              method: NegJumpMethod = NegJumpMethod.THINNING) -> float:
    """Probability of at least one negative jump in any asset on [0, t]."""
    if t < 0:
        raise ValueError("t must be nonnegative")
    method = NegJumpMethod(method)
    lam = jumps.lambdas
    p_neg = jumps.negative_mass
    if method == NegJumpMethod.THINNING:
        # negative jumps of asset j arrive Poisson with rate lambda_j p_neg_j
        return float(-np.expm1(-t * float(lam @ p_neg)))
    if method == NegJumpMethod.PAPER:
        factors = -np.expm1(-lam * t) * p_neg
        return float(np.prod(factors))
    raise ValueError("no adjustment method selected")


def beta_hat(beta: float, epsilon: float) -> float:
    """Tightened confidence level (beta - eps) / (1 - eps).

    Decreasing in eps; requires eps < beta so the level stays positive.
    """
    if epsilon < 0:
        raise ValueError("epsilon must be nonnegative")
    if epsilon >= beta:
        raise EpsilonTooLarge(
            f"negative-jump probability {epsilon:.6g} >= beta {beta:.6g}")
    return (beta - epsilon) / (1.0 - epsilon)


def F_hat(u, beta: float, epsilon_T: float):
    """Adjusted log tail function for the ES constraint.

    F_hat(u) = F_beta(u) + ln(1 - eps_T), identically F_{beta_hat}(u) +
    ln((beta - eps_T) / beta); reduces to F_beta when eps_T = 0.
    """
    if not (0.0 <= epsilon_T < beta):
        raise EpsilonTooLarge("need 0 <= eps_T < beta")
    return F_beta(u, beta) + math.log1p(-epsilon_T)


@dataclass(frozen=True)
class EffectiveLevel:
    """Quantile level and tail function actually used by the solvers."""

    beta: float             # effective confidence level
    q_level: float          # lower quantile at the effective level
    log_shift: float        # additive ES shift ln(1 - eps_T)
    epsilon_T: float
    adjustment: NegJumpAdjustment | None = None

    def F(self, u):
        """Effective log tail function, zero-shifted at u = |q_level|."""
        return F_beta(u, self.beta) + self.log_shift


def effective_level(model: MarketModel, risk: RiskSpec) -> EffectiveLevel:
    """Resolve the risk level against the market's jump signs.

    With adjustment off, negative jumps are rejected; otherwise eps_T is
    estimated by the selected method and the level is tightened.
    """
    method = risk.negjump_method
    if method == NegJumpMethod.OFF:
        if model.jumps.has_negative_jumps():
            raise NegativeJumpsPresent(
                "market allows negative jumps; pick a negjump method")
        return EffectiveLevel(beta=risk.beta,
                              q_level=normal_quantile(risk.beta),
                              log_shift=0.0, epsilon_T=0.0)
    eps = epsilon_t(model.jumps, model.grid.horizon, method)
    bh = beta_hat(risk.beta, eps)
    adj = NegJumpAdjustment(epsilon_T=eps, beta_hat=bh, method=method)
    return EffectiveLevel(beta=bh, q_level=normal_quantile(bh),
                          log_shift=math.log1p(-eps), epsilon_T=eps,
                          adjustment=adj)


def adjusted_solve(model: MarketModel, risk: RiskSpec, utility: UtilitySpec,
                   x: float = 1.0, force: bool = False):
    """Constrained solve honoring the risk spec's negative-jump method.

    Dispatches on the utility exponents: linear utilities go to the gamma=1
    closed forms, equal gamma in (0, 1) to the inactivity certificate (the
    unconstrained optimum is returned when certified), distinct gammas to
    the consume-all solution.
    """
    from . import constrained  # local import; constrained uses this module
    from .errors import ConditionViolated
    from .riskmetrics import RiskKind

    if utility.is_linear:
        if risk.kind == RiskKind.VAR:
            return constrained.solve_var_gamma1(model, risk, x)
        return constrained.solve_es_gamma1(model, risk, x, force=force)
    if utility.is_equal:
        if risk.kind == RiskKind.VAR:
            cert = constrained.certify_var_gamma(model, utility, risk)
        else:
            cert = constrained.certify_es_gamma(model, utility, risk)
        if cert.active and not force:
            err = ConditionViolated(
                "inactivity certificate failed: lhs="
                f"{cert.condition_lhs:.6g} > kappa={cert.condition_rhs:.6g}")
            err.certificate = cert
            raise err
        report = cert.report
        report.diagnostics["certificate"] = cert
        return report
    return constrained.solve_diff_gamma(model, utility, risk, x, force=force)

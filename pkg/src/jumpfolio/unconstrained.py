"""Unconstrained consumption-investment solvers.

Everything rests on the closed form for the power moment of wealth: for a
deterministic strategy (y, v) with pi the wealth fractions,

    E[X_t^g] = x^g exp(A_g(t)),
    A_g(t) = g (R_t - V_t + (y, theta)_t - (1-g)/2 ||y||_t^2)
             + sum_j int_0^t K_j(pi_j(s)) ds,

so the pointwise growth rate to maximize over the allocation box is

    h(t; y) = g (r_t + y_t . theta_t) - g(1-g)/2 |y_t|^2 + sum_j K_j(pi_j).

The first-order condition in y reads, with eps = sigma_t^{-1},

    theta_t^i + (g - 1) y_t^i + sum_j eps_ij(t) Q_j(pi_t^j) = 0,

and the optimal consumption rate follows from the Bernoulli equation for the
value-function coefficient rho(t).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DriftBelowRate, InvalidStrategy, NoConvergence
from .market import (
    K_transform_path,
    MarketModel,
    Q_transform,
    Q_transform_path,
    R_path,
    TimeGrid,
    UtilitySpec,
    cumtrapz,
    l2_time_norm,
    l2_time_norm_sq_path,
    path_integral,
    theta_path,
    trapz,
)

_BOX_TOL = 1e-10


# ---------------------------------------------------------------------------
# Strategies and solve reports
# ---------------------------------------------------------------------------

@dataclass
class Strategy:
    """Deterministic strategy: allocation paths and consumption rate.

    y is the volatility-scaled allocation sigma_t' pi_t, pi the wealth
    fractions (componentwise in [0, 1], no short selling), v the consumption
    rate.  All paths are sampled on the grid.  Solvers that know the
    consumption integral in closed form may pass it as V_path; otherwise V
    is the trapezoid integral of v.
    """

    grid: TimeGrid
    y: np.ndarray       # (N, d)
    pi: np.ndarray      # (N, d)
    v: np.ndarray       # (N,)
    V_path: np.ndarray | None = None

    def __post_init__(self):
        self.y = np.asarray(self.y, dtype=float)
        self.pi = np.asarray(self.pi, dtype=float)
        self.v = np.asarray(self.v, dtype=float)
        if self.y.ndim == 1:
            self.y = self.y[:, None]
        if self.pi.ndim == 1:
            self.pi = self.pi[:, None]
        n = self.grid.n
        if self.y.shape != self.pi.shape or self.y.shape[0] != n:
            raise InvalidStrategy("y and pi must both be (N, d) paths")
        if self.v.shape != (n,):
            raise InvalidStrategy("v must be an (N,) path")
        if self.V_path is not None:
            self.V_path = np.asarray(self.V_path, dtype=float)
            if self.V_path.shape != (n,):
                raise InvalidStrategy("V_path must be an (N,) path")

    @classmethod
    def from_pi(cls, model: MarketModel, pi, v=None) -> "Strategy":
        pi = np.asarray(pi, dtype=float)
        if pi.ndim == 1:
            pi = pi[:, None]
        y = np.einsum("nji,nj->ni", model.coeffs.sigma, pi)
        v = np.zeros(model.grid.n) if v is None else np.asarray(v, dtype=float)
        return cls(model.grid, y, pi, v)

    @classmethod
    def from_y(cls, model: MarketModel, y, v=None) -> "Strategy":
        y = np.asarray(y, dtype=float)
        if y.ndim == 1:
            y = y[:, None]
        sigma_t = model.coeffs.sigma.transpose(0, 2, 1)
        pi = np.linalg.solve(sigma_t, y[..., None])[..., 0]
        v = np.zeros(model.grid.n) if v is None else np.asarray(v, dtype=float)
        return cls(model.grid, y, pi, v)

    @classmethod
    def riskless(cls, model: MarketModel) -> "Strategy":
        n, d = model.grid.n, model.d
        return cls(model.grid, np.zeros((n, d)), np.zeros((n, d)), np.zeros(n))

    @property
    def d(self) -> int:
        return int(self.y.shape[1])

    @property
    def V(self) -> np.ndarray:
        """Cumulative consumption integral V_t."""
        if self.V_path is not None:
            return self.V_path
        return cumtrapz(self.grid, self.v)

    def y_norm_sq_path(self) -> np.ndarray:
        return l2_time_norm_sq_path(self.grid, self.y)

    def y_norm_path(self) -> np.ndarray:
        return np.sqrt(self.y_norm_sq_path())

    def validate(self, model: MarketModel, tol: float = _BOX_TOL) -> None:
        """Check admissibility against a model; raises InvalidStrategy."""
        if self.d != model.d or self.grid.n != model.grid.n:
            raise InvalidStrategy("strategy and model shapes disagree")
        if np.any(self.pi < -tol) or np.any(self.pi > 1.0 + tol):
            raise InvalidStrategy("pi must stay componentwise in [0, 1]")
        if np.any(self.v < -tol):
            raise InvalidStrategy("consumption rate must be nonnegative")
        y_ref = np.einsum("nji,nj->ni", model.coeffs.sigma, self.pi)
        if np.max(np.abs(y_ref - self.y)) > 1e-10:
            raise InvalidStrategy("y != sigma' pi on the grid")


def V_integral(strategy: Strategy, t: float) -> float:
    """Cumulative consumption integral V_t at a grid node."""
    return path_integral(strategy.grid, strategy.v, t)


@dataclass
class SolveReport:
    """Solver output: optimal strategy, value and diagnostics."""

    strategy: Strategy
    J_star: float
    h_star: np.ndarray | None = None
    g: np.ndarray | None = None
    rho: np.ndarray | None = None
    chi: float | None = None
    diagnostics: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# Growth rate and value assembly
# ---------------------------------------------------------------------------

def growth_rate_path(model: MarketModel, gamma: float, y: np.ndarray,
                     pi: np.ndarray) -> np.ndarray:
    """Pointwise growth rate h(t; y) of E[X_t^gamma] for v = 0."""
    c = model.coeffs
    th = theta_path(model)
    drift = np.sum(y * th, axis=1)
    ysq = np.sum(y * y, axis=1)
    return (gamma * (c.r + drift) - 0.5 * gamma * (1.0 - gamma) * ysq
            + K_transform_path(model.jumps, pi, gamma))


def rho_path(grid: TimeGrid, h_star: np.ndarray, utility: UtilitySpec) -> np.ndarray:
    """Value-function coefficient rho(t) from the growth-rate path.

    rho(t) = [(g^q(T) + int_t^T g^q) / g^q(t)]^(1/q) with g = exp(int h*);
    solves rho' + h* rho = (gamma - 1) rho^(gamma/(gamma-1)), rho(T) = 1.
    """
    q = utility.q
    g = np.exp(cumtrapz(grid, np.asarray(h_star, dtype=float)))
    gq = g**q
    cum = cumtrapz(grid, gq)
    tail = cum[-1] - cum
    return ((gq[-1] + tail) / gq) ** (1.0 / q)


def v_star_path(grid: TimeGrid, h_star: np.ndarray, utility: UtilitySpec) -> np.ndarray:
    """Optimal consumption rate v*_t = g^q(t) / (g^q(T) + int_t^T g^q)."""
    q = utility.q
    g = np.exp(cumtrapz(grid, np.asarray(h_star, dtype=float)))
    gq = g**q
    cum = cumtrapz(grid, gq)
    tail = cum[-1] - cum
    return gq / (gq[-1] + tail)


def chi_value(grid: TimeGrid, g: np.ndarray, utility: UtilitySpec) -> float:
    """Terminal consumption discount chi = g^q(T) / (||g||_{q,T}^q + g^q(T)).

    Equals exp(-V*_T) for the optimal consumption rate.
    """
    q = utility.q
    gq = np.asarray(g, dtype=float) ** q
    return float(gq[-1] / (trapz(grid, gq) + gq[-1]))


def cost_function(model: MarketModel, utility: UtilitySpec,
                  strategy: Strategy, x: float) -> float:
    """Exact expected cost of a deterministic strategy.

    J = x^g1 int_0^T v_t^g1 exp(A_g1(t)) dt + x^g2 exp(A_g2(T)) with A_g the
    log power moment exponent; all time integrals by trapezoid on the grid.
    """
    grid = model.grid
    th = theta_path(model)
    R = R_path(model)
    V = strategy.V
    ip = cumtrapz(grid, np.sum(strategy.y * th, axis=1))
    ysq = l2_time_norm_sq_path(grid, strategy.y)

    def exponent(g: float) -> np.ndarray:
        jumps = cumtrapz(grid, K_transform_path(model.jumps, strategy.pi, g))
        return g * (R - V + ip - 0.5 * (1.0 - g) * ysq) + jumps

    a1 = exponent(utility.gamma1)
    consumption = trapz(grid, strategy.v**utility.gamma1 * np.exp(a1))
    terminal = float(np.exp(exponent(utility.gamma2)[-1]))
    return x**utility.gamma1 * consumption + x**utility.gamma2 * terminal


# ---------------------------------------------------------------------------
# Linear utility
# ---------------------------------------------------------------------------

def solve_linear(model: MarketModel, x: float = 1.0) -> SolveReport:
    """Optimal rule for gamma1 = gamma2 = 1 (consume nothing, ride the drift).

    Requires mu_t^j >= r_t everywhere.  When the excess drift vanishes in
    time-L2 norm any box allocation is optimal and we return pi = 0;
    otherwise pi*_t = (mu_t - r_t 1) sqrt(T) / ||mu - r 1||_T and
    J* = x exp(R_T + sqrt(T) ||mu - r 1||_T).
    """
    c = model.coeffs
    excess = c.mu - c.r[:, None]
    if np.any(excess < -1e-12):
        raise DriftBelowRate("mu_t^j < r_t at some node")
    grid = model.grid
    R_T = float(R_path(model)[-1])
    norm = l2_time_norm(grid, excess)
    if norm <= 1e-14:
        strategy = Strategy.riskless(model)
        J = x * float(np.exp(R_T))
        diag = {"excess_norm": norm, "pi_in_box": True}
    else:
        pi = excess * np.sqrt(grid.horizon) / norm
        strategy = Strategy.from_pi(model, pi)
        J = x * float(np.exp(R_T + np.sqrt(grid.horizon) * norm))
        diag = {
            "excess_norm": norm,
            "pi_in_box": bool(np.all((pi >= -_BOX_TOL) & (pi <= 1 + _BOX_TOL))),
        }
    return SolveReport(strategy=strategy, J_star=J, diagnostics=diag)


# ---------------------------------------------------------------------------
# Equal gamma in (0, 1)
# ---------------------------------------------------------------------------

def eta_1d(model: MarketModel, node: int, pi, gamma: float):
    """First-order function of the one-dimensional allocation problem.

    eta(pi) = mu_t - r_t + (gamma - 1) sigma_t^2 pi + Q(pi), the derivative
    (up to the factor gamma) of the growth rate in pi.  Strictly decreasing
    on [0, 1]; an interior optimum is its unique root.
    """
    if model.d != 1:
        raise ValueError("eta_1d is defined for one-asset markets")
    c = model.coeffs
    drift = c.mu[node, 0] - c.r[node]
    sig2 = c.sigma[node, 0, 0] ** 2
    qv = Q_transform(model.jumps, 0, pi, gamma)
    out = drift + (gamma - 1.0) * sig2 * np.asarray(pi, dtype=float) + qv
    return float(out) if np.ndim(pi) == 0 else out


def _eta_1d_all_nodes(model: MarketModel, pi: np.ndarray, gamma: float) -> np.ndarray:
    c = model.coeffs
    drift = c.mu[:, 0] - c.r
    sig2 = c.sigma[:, 0, 0] ** 2
    qv = np.zeros_like(pi)
    if model.jumps.lambdas[0] > 0:
        qv = Q_transform(model.jumps, 0, pi, gamma)
    return drift + (gamma - 1.0) * sig2 * pi + qv


def _assemble_power_report(model, utility, y, pi, x, diagnostics) -> SolveReport:
    grid = model.grid
    h = growth_rate_path(model, utility.gamma, y, pi)
    g = np.exp(cumtrapz(grid, h))
    rho = rho_path(grid, h, utility)
    v = v_star_path(grid, h, utility)
    chi = chi_value(grid, g, utility)
    strategy = Strategy(grid, y, pi, v)
    J = cost_function(model, utility, strategy, x)
    diagnostics = dict(diagnostics)
    diagnostics["J_star_rho0"] = x**utility.gamma * float(rho[0])
    return SolveReport(strategy=strategy, J_star=J, h_star=h, g=g, rho=rho,
                       chi=chi, diagnostics=diagnostics)


def solve_power_1d(model: MarketModel, utility: UtilitySpec,
                   x: float = 1.0) -> SolveReport:
    """One-dimensional equal-gamma solver by bisection on eta.

    Nodes where eta brackets a root get the interior optimum to 1e-13 in pi;
    elsewhere the boundary maximizer is used and a no_interior_root flag is
    raised in the diagnostics (the growth rate is concave, so the sign of
    eta at the endpoints decides).
    """
    if model.d != 1:
        raise ValueError("solve_power_1d needs a one-asset market")
    gamma = utility.gamma
    if gamma >= 1.0:
        raise ValueError("solve_power_1d needs gamma < 1")
    n = model.grid.n
    eta0 = _eta_1d_all_nodes(model, np.zeros(n), gamma)
    eta1 = _eta_1d_all_nodes(model, np.ones(n), gamma)
    interior = (eta0 > 0.0) & (eta1 < 0.0)

    pi = np.where(eta0 <= 0.0, 0.0, 1.0)
    if np.any(interior):
        lo = np.zeros(n)
        hi = np.ones(n)
        while np.max(hi - lo) > 1e-13:
            mid = 0.5 * (lo + hi)
            s = _eta_1d_all_nodes(model, mid, gamma)
            above = s > 0.0
            lo = np.where(above, mid, lo)
            hi = np.where(above, hi, mid)
        pi = np.where(interior, 0.5 * (lo + hi), pi)

    y = np.einsum("nji,nj->ni", model.coeffs.sigma, pi[:, None])
    resid = np.abs(_eta_1d_all_nodes(model, pi, gamma))
    diag = {
        "no_interior_root": bool(np.any(~interior)),
        "eta_residual": float(resid[interior].max()) if np.any(interior) else 0.0,
    }
    return _assemble_power_report(model, utility, y, pi[:, None], x, diag)


def _optimal_allocation(model: MarketModel, gamma: float, max_iter: int = 500,
                        damping: float = 0.5, tol: float = 1e-12):
    """Damped fixed point for the d-dimensional first-order system.

    Iterates y <- q (theta + sigma^{-1} Q(pi)) with pi the box projection of
    (sigma')^{-1} y.  Returns the final (y, pi, residual, iterations); the
    residual is the first-order defect over components strictly inside the
    box.
    """
    q = 1.0 / (1.0 - gamma)
    sigma = model.coeffs.sigma
    sigma_t = sigma.transpose(0, 2, 1)
    th = theta_path(model)
    y = q * th
    delta = np.inf
    iterations = max_iter
    for it in range(1, max_iter + 1):
        pi = np.clip(np.linalg.solve(sigma_t, y[..., None])[..., 0], 0.0, 1.0)
        qv = Q_transform_path(model.jumps, pi, gamma)
        target = q * (th + np.linalg.solve(sigma, qv[..., None])[..., 0])
        delta = float(np.max(np.abs(target - y)))
        y = y + damping * (target - y)
        if delta < tol:
            iterations = it
            break
    else:
        raise NoConvergence(
            f"allocation fixed point stalled at delta = {delta:.3e} "
            f"after {max_iter} iterations"
        )
    pi = np.clip(np.linalg.solve(sigma_t, y[..., None])[..., 0], 0.0, 1.0)
    y_final = np.einsum("nji,nj->ni", sigma, pi)
    qv = Q_transform_path(model.jumps, pi, gamma)
    foc = th + (gamma - 1.0) * y_final + np.linalg.solve(sigma, qv[..., None])[..., 0]
    inside = (pi > _BOX_TOL) & (pi < 1.0 - _BOX_TOL)
    residual = float(np.max(np.abs(foc[inside]))) if np.any(inside) else 0.0
    return y_final, pi, residual, iterations, bool(np.any(~inside))


def solve_power_equal(model: MarketModel, utility: UtilitySpec, x: float = 1.0,
                      max_iter: int = 500, damping: float = 0.5,
                      tol: float = 1e-12) -> SolveReport:
    """Equal-gamma solver in d dimensions via the damped first-order system."""
    gamma = utility.gamma
    if gamma >= 1.0:
        raise ValueError("solve_power_equal needs gamma < 1")
    y, pi, residual, iterations, clipped = _optimal_allocation(
        model, gamma, max_iter=max_iter, damping=damping, tol=tol)
    diag = {
        "foc_residual": residual,
        "iterations": iterations,
        "boundary_clipped": clipped,
    }
    return _assemble_power_report(model, utility, y, pi, x, diag)


# ---------------------------------------------------------------------------
# Jump versus no-jump comparison
# ---------------------------------------------------------------------------

@dataclass
class MertonComparison:
    """Optimal policies with jumps against the pure-diffusion market."""

    t: np.ndarray
    pi_jump: np.ndarray
    pi_diffusion: np.ndarray
    v_jump: np.ndarray
    v_diffusion: np.ndarray
    report_jump: SolveReport
    report_diffusion: SolveReport

    CSV_HEADER = "t,pi_jump,pi_diffusion,v_jump,v_diffusion"

    def to_csv(self, path) -> None:
        rows = np.column_stack(
            [self.t, self.pi_jump, self.pi_diffusion, self.v_jump, self.v_diffusion]
        )
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.CSV_HEADER + "\n")
            for row in rows:
                fh.write(",".join(f"{val:.17g}" for val in row) + "\n")


def compare_merton(model: MarketModel, utility: UtilitySpec) -> MertonComparison:
    """Solve the one-asset problem with jumps and with jumps switched off.

    Positive jump laws pull the allocation down and the consumption rate up
    relative to the pure-diffusion optimum.
    """
    rep_jump = solve_power_1d(model, utility)
    rep_diff = solve_power_1d(model.without_jumps(), utility)
    return MertonComparison(
        t=model.grid.nodes.copy(),
        pi_jump=rep_jump.strategy.pi[:, 0].copy(),
        pi_diffusion=rep_diff.strategy.pi[:, 0].copy(),
        v_jump=rep_jump.strategy.v.copy(),
        v_diffusion=rep_diff.strategy.v.copy(),
        report_jump=rep_jump,
        report_diffusion=rep_diff,
    )

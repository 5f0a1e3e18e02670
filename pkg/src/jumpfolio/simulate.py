"""Exact Monte Carlo simulation of the wealth process and brute-force oracles.

Wealth is simulated through its exponential solution: a deterministic factor
exp(R_t - V_t + (y, theta_hat)_t), the lognormal martingale factor driven by
one Gaussian increment per interval with the same trapezoid variance the
analytic formulas use, and a compound Poisson jump factor with per-interval
counts and sizes drawn from the jump law (pi enters each jump at the left
grid node).  Consequently the simulated law at the grid nodes matches the
closed forms exactly, with no time-discretization bias between the two
sides of any comparison.

The bit generator is counter-based (Philox keyed by the seed) with a fixed
draw order per interval, so ensembles are reproducible bit for bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .constrained import slack_path
from .errors import EmptyFeasibleSet, InvalidStrategy
from .market import MarketModel, R_path, UtilitySpec, cumtrapz, theta_hat_path
from .riskmetrics import (
    RiskKind,
    RiskSpec,
    empirical_lower_quantile,
    empirical_shortfall,
    tail_count,
)
from .unconstrained import Strategy, cost_function


@dataclass
class PathEnsemble:
    """Simulated wealth paths on the grid plus per-asset jump totals."""

    grid: object
    x: float
    n_paths: int
    seed: int
    wealth: np.ndarray        # (n_paths, N), all entries positive
    jump_counts: np.ndarray   # (n_paths, d)


def _validated(model: MarketModel, strategy: Strategy) -> None:
    try:
        strategy.validate(model)
    except InvalidStrategy:
        raise
    except Exception as exc:  # shape errors from mismatched arrays
        raise InvalidStrategy(str(exc)) from exc


def _draw_jumps(model: MarketModel, strategy: Strategy, n_paths: int, rng):
    """Draw all jumps up front: per path and asset a Poisson total over the
    horizon, then exact uniform jump times and sizes from the jump law.

    Returns (counts, node_bounds, path_idx, log_factor): jumps are sorted by
    the first node they affect, so node k applies the slice
    [node_bounds[k], node_bounds[k + 1]).  pi enters each jump at the grid
    node left of its time.
    """
    grid = model.grid
    horizon = grid.horizon
    counts = np.zeros((n_paths, model.d), dtype=np.int64)
    idx_parts, node_parts, fac_parts = [], [], []
    for j in range(model.d):
        lam = float(model.jumps.lambdas[j])
        if lam <= 0.0:
            continue
        m = rng.poisson(lam * horizon, n_paths)
        counts[:, j] = m
        total = int(m.sum())
        if total == 0:
            continue
        times = rng.uniform(0.0, horizon, total)
        dist = model.jumps.dists[j]
        sizes = rng.choice(dist.z, size=total, p=dist.w)
        hit = np.flatnonzero(m)
        path_idx = np.repeat(hit, m[hit])
        interval = np.clip(np.searchsorted(grid.nodes, times, side="right") - 1,
                           0, grid.n - 2)
        idx_parts.append(path_idx)
        node_parts.append(interval + 1)           # first node seeing the jump
        fac_parts.append(np.log1p(strategy.pi[interval, j] * sizes))
    if idx_parts:
        path_idx = np.concatenate(idx_parts)
        nodes = np.concatenate(node_parts)
        factors = np.concatenate(fac_parts)
        order = np.argsort(nodes, kind="stable")
        path_idx, nodes, factors = path_idx[order], nodes[order], factors[order]
    else:
        path_idx = np.empty(0, dtype=np.int64)
        nodes = np.empty(0, dtype=np.int64)
        factors = np.empty(0)
    node_bounds = np.searchsorted(nodes, np.arange(grid.n + 1))
    return counts, node_bounds, path_idx, factors


def _march(model: MarketModel, strategy: Strategy, x: float, n_paths: int,
           seed: int, node_callback) -> np.ndarray:
    """Drive n_paths through the grid, calling node_callback(k, log_wealth).

    log_wealth is the (n_paths,) vector of log wealth at node k.  Returns
    the per-asset jump-count totals.  Draw order: per active asset one
    Poisson block, one time block and one size block, then one standard
    normal block per interval.
    """
    grid = model.grid
    n_nodes = grid.n
    det_log = (math.log(x) + R_path(model) - strategy.V
               + cumtrapz(grid, np.sum(strategy.y * theta_hat_path(model),
                                       axis=1)))
    ysq = np.sum(strategy.y**2, axis=1)
    s2 = 0.5 * (ysq[1:] + ysq[:-1]) * grid.dt          # per-interval variance

    rng = np.random.Generator(np.random.Philox(seed))
    counts, bounds, jump_path, jump_factor = _draw_jumps(
        model, strategy, n_paths, rng)
    log_w = np.full(n_paths, det_log[0])

    node_callback(0, log_w)
    for k in range(1, n_nodes):
        z = rng.standard_normal(n_paths)
        log_w += det_log[k] - det_log[k - 1]
        if s2[k - 1] > 0.0:
            log_w += math.sqrt(s2[k - 1]) * z
            log_w -= 0.5 * s2[k - 1]
        lo, hi = bounds[k], bounds[k + 1]
        if hi > lo:
            np.add.at(log_w, jump_path[lo:hi], jump_factor[lo:hi])
        node_callback(k, log_w)
    return counts


def simulate(model: MarketModel, strategy: Strategy, x: float,
             n_paths: int, seed: int) -> PathEnsemble:
    """Simulate the full wealth matrix; deterministic in (model, strategy,
    n_paths, seed)."""
    if n_paths < 1:
        raise ValueError("n_paths must be at least 1")
    _validated(model, strategy)
    if n_paths * model.grid.n > 300_000_000:
        raise ValueError("ensemble too large to materialize; "
                         "use simulate_node_stats instead")
    wealth = np.empty((n_paths, model.grid.n))

    def collect(k, log_w):
        wealth[:, k] = np.exp(log_w)

    counts = _march(model, strategy, x, n_paths, seed, collect)
    return PathEnsemble(grid=model.grid, x=x, n_paths=n_paths, seed=seed,
                        wealth=wealth, jump_counts=counts)


@dataclass
class NodeStats:
    """Per-node tail statistics collected without storing paths."""

    beta: float
    n_paths: int
    q_beta: np.ndarray        # empirical lower beta-quantile of wealth
    tail_mean: np.ndarray     # mean of the ceil(beta n) smallest values
    tail_std: np.ndarray      # spread of that tail slice
    mean: np.ndarray
    below: np.ndarray | None  # counts of wealth strictly under thresholds
    thresholds: np.ndarray | None = None

    def shortfall_standard_error(self) -> np.ndarray:
        """Influence-function standard error of the tail mean per node."""
        k = tail_count(self.beta, self.n_paths)
        frac = k / self.n_paths
        m = self.tail_mean - self.q_beta
        second = frac * (self.tail_std**2 + m**2)
        var_infl = second - (frac * m) ** 2
        return np.sqrt(np.maximum(var_infl, 0.0) / self.n_paths) / self.beta


def simulate_node_stats(model: MarketModel, strategy: Strategy, x: float,
                        beta: float, n_paths: int, seed: int,
                        thresholds: np.ndarray | None = None) -> NodeStats:
    """Stream the ensemble node by node, keeping only tail statistics.

    Memory stays O(n_paths) regardless of the grid size, and the draws are
    bit-identical to simulate() with the same seed.
    """
    _validated(model, strategy)
    n_nodes = model.grid.n
    k_tail = tail_count(beta, n_paths)
    q = np.empty(n_nodes)
    tail = np.empty(n_nodes)
    spread = np.empty(n_nodes)
    mean = np.empty(n_nodes)
    below = np.empty(n_nodes, dtype=np.int64) if thresholds is not None else None

    def collect(k, log_w):
        w = np.exp(log_w)
        part = np.partition(w, k_tail - 1)
        q[k] = part[k_tail - 1]
        tail[k] = part[:k_tail].mean()
        spread[k] = part[:k_tail].std()
        mean[k] = w.mean()
        if below is not None:
            below[k] = int(np.count_nonzero(w < thresholds[k]))

    _march(model, strategy, x, n_paths, seed, collect)
    return NodeStats(beta=beta, n_paths=n_paths, q_beta=q, tail_mean=tail,
                     tail_std=spread, mean=mean, below=below,
                     thresholds=thresholds)


# ---------------------------------------------------------------------------
# Empirical risk measures and cost
# ---------------------------------------------------------------------------

def empirical_var(ensemble: PathEnsemble, model: MarketModel, x: float,
                  beta: float, t: float) -> float:
    """Empirical downside risk x e^{R_t} - q_beta(X_t) at a grid node."""
    k = model.grid.index_of(t)
    ref = x * math.exp(R_path(model)[k])
    return ref - empirical_lower_quantile(ensemble.wealth[:, k], beta)


def empirical_es(ensemble: PathEnsemble, model: MarketModel, x: float,
                 beta: float, t: float) -> float:
    """Empirical shortfall risk x e^{R_t} - ES_beta(X_t) at a grid node."""
    k = model.grid.index_of(t)
    ref = x * math.exp(R_path(model)[k])
    return ref - empirical_shortfall(ensemble.wealth[:, k], beta)


def estimate_cost(ensemble: PathEnsemble, strategy: Strategy,
                  utility: UtilitySpec) -> tuple:
    """Monte Carlo cost estimate (mean, standard error)."""
    g1, g2 = utility.gamma1, utility.gamma2
    consumption = (strategy.v[None, :] * ensemble.wealth) ** g1
    per_path = (np.trapezoid(consumption, ensemble.grid.nodes, axis=1)
                + ensemble.wealth[:, -1] ** g2)
    n = ensemble.n_paths
    return float(per_path.mean()), float(per_path.std(ddof=1) / math.sqrt(n))


# ---------------------------------------------------------------------------
# Constraint profiles
# ---------------------------------------------------------------------------

def _profile_from_slack(slack: np.ndarray, kappa: float) -> np.ndarray:
    # risk ratio implied by the transformed slack:
    # slack = 0 means the ratio touches 1 exactly
    return (1.0 - (1.0 - kappa) * np.exp(slack)) / kappa


def constraint_profile(source, model: MarketModel, risk: RiskSpec,
                       x: float) -> np.ndarray:
    """Ratio Risk_t / (kappa x e^{R_t}) along the grid; feasible iff <= 1.

    Pass a PathEnsemble for the empirical profile at the original level, a
    NodeStats for its streamed version, or a Strategy for the closed-form
    jump-free profile (the transform the solvers bind against).
    """
    R = R_path(model)
    ref = x * np.exp(R)
    if isinstance(source, Strategy):
        return _profile_from_slack(slack_path(source, model, risk), risk.kappa)
    if isinstance(source, NodeStats):
        if source.beta != risk.beta:
            raise ValueError("NodeStats level differs from the risk spec")
        tail_value = source.q_beta if risk.kind == RiskKind.VAR else source.tail_mean
        return (ref - tail_value) / (risk.kappa * ref)
    ensemble = source
    n_nodes = model.grid.n
    out = np.empty(n_nodes)
    for k in range(n_nodes):
        column = ensemble.wealth[:, k]
        if risk.kind == RiskKind.VAR:
            tail_value = empirical_lower_quantile(column, risk.beta)
        else:
            tail_value = empirical_shortfall(column, risk.beta)
        out[k] = (ref[k] - tail_value) / (risk.kappa * ref[k])
    return out


# ---------------------------------------------------------------------------
# Brute-force optimization oracle
# ---------------------------------------------------------------------------

@dataclass
class GridOracleResult:
    pi: float
    v_scale: float
    J: float
    strategy: Strategy
    n_feasible: int
    table: np.ndarray = field(repr=False, default=None)


def grid_oracle(model: MarketModel, utility: UtilitySpec,
                risk: RiskSpec | None, x: float, pi_grid, v_scale_grid,
                v_shape: np.ndarray | None = None) -> GridOracleResult:
    """Exhaustive search over constant allocations and scaled consumption.

    Candidates are pi constant on the grid and v = scale * v_shape (default
    shape 1 / (1 + T - t)).  When a risk spec is given, candidates failing
    the transformed constraint anywhere are discarded; the best survivor by
    exact cost is returned.
    """
    if model.d != 1:
        raise ValueError("the grid oracle handles one-asset markets")
    grid = model.grid
    if v_shape is None:
        v_shape = 1.0 / (1.0 + grid.horizon - grid.nodes)
    pi_grid = np.asarray(pi_grid, dtype=float)
    v_scale_grid = np.asarray(v_scale_grid, dtype=float)
    best = None
    n_feasible = 0
    table = np.full((pi_grid.size, v_scale_grid.size), np.nan)
    for i, p in enumerate(pi_grid):
        pi_path = np.full((grid.n, 1), p)
        for j, s in enumerate(v_scale_grid):
            strategy = Strategy.from_pi(model, pi_path, s * v_shape)
            if risk is not None:
                if slack_path(strategy, model, risk).min() < -1e-10:
                    continue
            n_feasible += 1
            J = cost_function(model, utility, strategy, x)
            table[i, j] = J
            if best is None or J > best[0]:
                best = (J, float(p), float(s), strategy)
    if best is None:
        raise EmptyFeasibleSet("no grid candidate satisfies the constraint")
    J, p, s, strategy = best
    return GridOracleResult(pi=p, v_scale=s, J=J, strategy=strategy,
                            n_feasible=n_feasible, table=table)

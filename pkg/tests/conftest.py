import numpy as np
import pytest

from jumpfolio import (
    CoefficientPath,
    JumpDist,
    JumpSpec,
    MarketModel,
    TimeGrid,
    UtilitySpec,
)


def make_model(n=129, horizon=1.0, r=0.02, mu=0.07, sigma=0.3,
               lam=0.0, jump=None):
    """One-asset market with constant coefficients."""
    grid = TimeGrid.uniform(horizon, n)
    coeffs = CoefficientPath.constant(grid, r, [mu], [[sigma]])
    if lam > 0:
        dist = jump if jump is not None else JumpDist.point_masses([0.05], [1.0])
        jumps = JumpSpec(np.array([lam]), (dist,))
    else:
        jumps = JumpSpec.none(1)
    return MarketModel(grid, coeffs, jumps)


def make_model_2d(n=65, horizon=1.0, r=0.02, mu=(0.06, 0.05),
                  sigma=((0.3, 0.05), (0.0, 0.35)), lams=(0.0, 0.0),
                  dists=None):
    grid = TimeGrid.uniform(horizon, n)
    coeffs = CoefficientPath.constant(grid, r, list(mu),
                                      [list(row) for row in sigma])
    if dists is None:
        dists = tuple(JumpDist.degenerate() for _ in mu)
    return MarketModel(grid, coeffs, JumpSpec(np.asarray(lams, float), dists))


@pytest.fixture
def diffusion_1d():
    return make_model()


@pytest.fixture
def jump_1d():
    # positive point-mass jumps, interior optimum for gamma around 0.5
    return make_model(mu=0.055, sigma=0.3, lam=0.8,
                      jump=JumpDist.point_masses([0.03, 0.10], [0.6, 0.4]))


@pytest.fixture
def mixed_jump_1d():
    return make_model(mu=0.07, sigma=0.3, lam=0.6,
                      jump=JumpDist.point_masses([-0.05, 0.08], [0.25, 0.75]))


@pytest.fixture
def equal_utility():
    return UtilitySpec.equal(0.5)


@pytest.fixture
def linear_utility():
    return UtilitySpec(1.0, 1.0)

"""Shared fixtures: the worked two-point market and random valid instances."""

from __future__ import annotations

import numpy as np
import pytest

from popmdp import DomainError, MVProblem, build_market


def two_point_market(horizon: int, rate: float = 0.5):
    """Stationary single-asset market with gross returns {1+4i, 1-i} at p=1/2.

    With rate i the relative risk is {3i/(1+i), -2i/(1+i)}, whose trade-off
    scalar happens to be 1/26 for every rate.
    """
    stage = ([[1.0 + 4.0 * rate], [1.0 - rate]], [0.5, 0.5])
    return build_market([rate] * horizon, [stage] * horizon)


@pytest.fixture
def market_n1():
    return two_point_market(1)


@pytest.fixture
def market_n2():
    return two_point_market(2)


def _asset_atoms(rng: np.random.Generator, k: int):
    """k-point relative-risk law with prescribed mean excess and volatility.

    Controlling the mean/vol ratio per asset keeps the per-period trade-off
    scalar comfortably inside (0, 0.5); unconstrained atom clouds almost
    always imply absurd risk premia.
    """
    m = float(rng.uniform(0.01, 0.08) * rng.choice([-1.0, 1.0]))
    s = float(rng.uniform(0.15, 0.35))
    if k == 2:
        p = float(rng.uniform(0.3, 0.7))
        pts = np.array([m + s * np.sqrt((1 - p) / p), m - s * np.sqrt(p / (1 - p))])
        probs = np.array([p, 1.0 - p])
    else:  # symmetric three-point
        q = float(rng.uniform(0.2, 0.4))
        c = 1.0 / np.sqrt(2.0 * q)
        pts = np.array([m - s * c, m, m + s * c])
        probs = np.array([q, 1.0 - 2.0 * q, q])
    return pts, probs


def _product_return_law(rng: np.random.Generator, rate: float, d: int,
                        max_atoms: int):
    """Independent per-asset laws combined into a product gross-return law.

    Independence keeps the covariance well conditioned for d > 1; a random
    cloud of few atoms in 3-D almost always has a near-degenerate direction.
    """
    per_pts, per_probs = [], []
    for _ in range(d):
        k = int(rng.integers(2, max_atoms + 1))
        pts, probs = _asset_atoms(rng, k)
        per_pts.append((1.0 + rate) * (1.0 + pts))  # back to gross returns
        per_probs.append(probs)
    grids = np.meshgrid(*per_pts, indexing="ij")
    pts = np.stack([g.ravel() for g in grids], axis=1)
    probs = np.ones(pts.shape[0])
    for pg in np.meshgrid(*per_probs, indexing="ij"):
        probs = probs * pg.ravel()
    return pts, probs


def random_market(rng: np.random.Generator, d: int, horizon: int):
    """A random valid instance; regenerates on moment-validity failures.

    Instances with a per-period trade-off above 0.5 are redrawn: they are
    nearly deterministic bets, and the 1e-12 identity checks lose meaning
    once 1/shrink blows up past float resolution.
    """
    max_atoms = 2 if d == 3 else 3  # keeps exact product supports tractable
    for _ in range(200):
        rates = rng.uniform(0.0, 0.1, horizon)
        returns = [_product_return_law(rng, rates[n], d, max_atoms)
                   for n in range(horizon)]
        model = build_market(rates, returns)
        try:
            problem = MVProblem.from_market(model, 1.0, x0=0.0)
        except DomainError:
            continue
        if float(problem.moments.tradeoff.max()) > 0.5:
            continue
        return model
    raise RuntimeError("could not draw a valid random market")


def random_instances(seed: int, count: int):
    """Deterministic batch of (model, lam, x0) triples covering d in 1..3
    and horizons 1..6."""
    rng = np.random.default_rng(seed)
    out = []
    for k in range(count):
        d = k % 3 + 1
        horizon = k % 6 + 1
        model = random_market(rng, d, horizon)
        lam = float(rng.uniform(0.1, 2.0))
        x0 = float(rng.uniform(-1.0, 1.0))
        out.append((model, lam, x0))
    return out

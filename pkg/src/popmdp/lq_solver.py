"""Scalar linear-quadratic regulator with a nonlinear terminal term.

The objective is E[sum_k A_k^2] + (E[X_N])^2 under the dynamics
X' = b*X + d*A + sigma*R with zero-mean i.i.d. noise.  The squared *mean*
at the horizon makes the problem non-separable in the usual sense; lifting
the state to laws restores the recursion and yields a backward sequence of
quadratic value coefficients

    beta_N = 1,    beta_n = beta_{n+1} * b^2 / (1 + d^2 * beta_{n+1}),

with stage rules that are constant in the state and proportional to the
current mean.  For comparison, the subgame-perfect (equilibrium) strategy
applies the same coefficient to the *state*, which costs an additive value
penalty gamma_0 > 0 whenever N >= 2, b, d != 0 and sigma > 0.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from popmdp.errors import InputError, NegativeVariance, NonUnitVariance, NotDirac
from popmdp.measures import AffineRule, DiscreteMeasure, dirac, make_measure, mean


@dataclass(frozen=True)
class LQModel:
    """Dynamics x' = b*x + d*a + sigma*r with finite zero-mean noise law."""

    b: float
    d: float
    sigma: float
    horizon: int
    noise: DiscreteMeasure
    mu0: DiscreteMeasure

    @property
    def noise_variance(self) -> float:
        return float(self.noise.weights @ (self.noise.points * self.noise.points))


def make_lq(b: float, d: float, sigma: float, horizon: int, noise,
            *, x0: float | None = None, mu0: DiscreteMeasure | None = None) -> LQModel:
    """Validate and assemble an `LQModel`.

    ``noise`` is a `DiscreteMeasure` or a (points, probs) pair with scalar
    atoms; its mean must vanish to within 1e-12.
    """
    if not isinstance(noise, DiscreteMeasure):
        noise = make_measure(*noise)
    if noise.points.ndim != 1:
        raise InputError("noise atoms must be scalars")
    if abs(mean(noise)) > 1e-12:
        raise InputError(f"noise mean must be 0, got {mean(noise)!r}")
    if not sigma > 0.0:
        raise InputError(f"sigma must be > 0, got {sigma!r}")
    if horizon < 1:
        raise InputError(f"horizon must be >= 1, got {horizon}")
    if (x0 is None) == (mu0 is None):
        raise InputError("give exactly one of x0 and mu0")
    if mu0 is None:
        mu0 = dirac(float(x0))
    return LQModel(b=float(b), d=float(d), sigma=float(sigma), horizon=int(horizon),
                   noise=noise, mu0=mu0)


class LQBackward(NamedTuple):
    beta: np.ndarray       # (N+1,), beta[N] = 1
    mean_coefs: np.ndarray  # (N,), action at stage n = mean_coefs[n] * mean(mu_n)


def lq_backward(m: LQModel) -> LQBackward:
    """Value coefficients beta_n and the measure-dependent rule coefficients.

    beta is iterated through its reciprocal, 1/beta_n = (1/beta_{n+1} + d^2)/b^2,
    which for b = d = 1 counts integers exactly and so reproduces
    beta_{N-k} = 1/(k+1) to the last bit.
    """
    n_stages = m.horizon
    beta = np.empty(n_stages + 1)
    beta[n_stages] = 1.0
    if m.b == 0.0:
        beta[:n_stages] = 0.0
    else:
        b2 = m.b * m.b
        d2 = m.d * m.d
        ginv = 1.0
        for n in range(n_stages - 1, -1, -1):
            ginv = (ginv + d2) / b2
            beta[n] = 1.0 / ginv
    coefs = np.empty(n_stages)
    for n in range(n_stages):
        coefs[n] = -m.b * m.d * beta[n + 1] / (1.0 + m.d * m.d * beta[n + 1])
    return LQBackward(beta=beta, mean_coefs=coefs)


class LQForward(NamedTuple):
    means: np.ndarray               # (N+1,), E[X_n] along the optimal path
    rules: tuple[AffineRule, ...]   # realized constant actions
    values: np.ndarray              # (N+1,), J_n = beta_n * means[n]^2


def lq_forward(m: LQModel, backward: LQBackward) -> LQForward:
    """Realize the optimal policy along the deterministic mean trajectory.

    The realized action at stage n is the constant mean_coefs[n] * E[X_n]
    with E[X_{n+1}] = E[X_n] * b / (1 + d^2 beta_{n+1}); constants depend on
    the initial mean, so the policy is semi-Markov in the original model.
    """
    n_stages = m.horizon
    beta = backward.beta
    means = np.empty(n_stages + 1)
    means[0] = mean(m.mu0)
    rules = []
    for n in range(n_stages):
        rules.append(AffineRule.constant(backward.mean_coefs[n] * means[n]))
        means[n + 1] = means[n] * m.b / (1.0 + m.d * m.d * beta[n + 1])
    values = beta * means * means
    return LQForward(means=means, rules=tuple(rules), values=values)


class LQEquilibrium(NamedTuple):
    alpha: np.ndarray              # (N+1,)
    gamma: np.ndarray              # (N+1,), gamma[N] = 0
    value: float                   # beta_0 * x0^2 + gamma_0
    rules: tuple[AffineRule, ...]  # state-linear rules


def lq_equilibrium(m: LQModel) -> LQEquilibrium:
    """Equilibrium strategy value for unit-variance noise and a point start.

    Value function at stage n is beta_n x^2 + gamma_n with
    gamma_n = gamma_{n+1} + sigma^2 (beta_{n+1} - alpha_{n+1}^2) and
    alpha_n = alpha_{n+1} b / (1 + d^2 beta_{n+1}); the rule applies the
    optimal mean coefficient to the current state instead of the mean.
    """
    if abs(m.noise_variance - 1.0) > 1e-9:
        raise NonUnitVariance(
            f"equilibrium value requires noise variance 1, got {m.noise_variance!r}"
        )
    if m.mu0.points.ndim != 1 or not m.mu0.is_dirac:
        raise NotDirac("equilibrium comparison is defined for point-mass starts")
    x0 = float(m.mu0.points[0])
    n_stages = m.horizon
    back = lq_backward(m)
    beta = back.beta
    alpha = np.empty(n_stages + 1)
    gamma = np.empty(n_stages + 1)
    alpha[n_stages] = 1.0
    gamma[n_stages] = 0.0
    s2 = m.sigma * m.sigma
    for n in range(n_stages - 1, -1, -1):
        alpha[n] = alpha[n + 1] * m.b / (1.0 + m.d * m.d * beta[n + 1])
        gamma[n] = gamma[n + 1] + s2 * (beta[n + 1] - alpha[n + 1] ** 2)
    rules = tuple(
        AffineRule.linear(float(back.mean_coefs[n]), 0.0) for n in range(n_stages)
    )
    value = beta[0] * x0 * x0 + gamma[0]
    return LQEquilibrium(alpha=alpha, gamma=gamma, value=value, rules=rules)


class LQOneStep(NamedTuple):
    action: float
    value_coefficient: float


def lq_one_step(nu_mean: float, b: float, d: float, beta: float) -> LQOneStep:
    """One-period optimum: constant action -b*d*beta/(1+d^2 beta) * nu_mean.

    Among all rules with a given action mean, the constant rule minimizes
    the quadratic action cost, so the problem reduces to a scalar quadratic
    whose minimum value is (nu_mean^2) * beta * b^2 / (1 + d^2 beta).
    """
    if not beta > 0.0:
        raise InputError(f"beta must be > 0, got {beta!r}")
    denom = 1.0 + d * d * beta
    action = -(b * d * beta / denom) * nu_mean
    return LQOneStep(action=action, value_coefficient=beta * b * b / denom)


def gaussian_propagate(rho: float, var: float, slope: float, intercept: float,
                       b: float, d: float, sigma: float, noise_var: float
                       ) -> tuple[float, float]:
    """Mean/variance update under a linear rule a = slope*x + intercept.

    mean' = (b + d*slope) * rho + d*intercept
    var'  = (b + d*slope)^2 * var + sigma^2 * noise_var

    The noise term enters as sigma^2 times the noise *variance* (tau^2 for
    N(0, tau^2) shocks): that is the dimensionally consistent reading, and
    the one used here throughout.
    """
    if var < 0.0:
        raise NegativeVariance(f"variance must be >= 0, got {var!r}")
    if noise_var < 0.0:
        raise NegativeVariance(f"noise variance must be >= 0, got {noise_var!r}")
    gain = b + d * slope
    mean2 = gain * rho + d * intercept
    var2 = gain * gain * var + sigma * sigma * noise_var
    return mean2, var2


@dataclass(frozen=True)
class MeanActionRule:
    """Measure-dependent LQ generator: nu -> constant action coef * mean(nu)."""

    stage: int
    coef: float

    def realize(self, nu: DiscreteMeasure) -> AffineRule:
        return AffineRule.constant(self.coef * mean(nu))


def lq_rule_generators(backward: LQBackward) -> tuple[MeanActionRule, ...]:
    return tuple(
        MeanActionRule(stage=n, coef=float(c)) for n, c in enumerate(backward.mean_coefs)
    )


@dataclass(frozen=True)
class LQSolution:
    """Everything the CLI reports: optimal and (if defined) equilibrium parts."""

    beta: np.ndarray
    means: np.ndarray
    rules: tuple[AffineRule, ...]
    value_opt: float
    alpha: np.ndarray | None
    gamma: np.ndarray | None
    value_eq: float | None


def solve_lq(m: LQModel) -> LQSolution:
    """Backward + forward pass; equilibrium parts only for unit-variance noise."""
    back = lq_backward(m)
    fwd = lq_forward(m, back)
    alpha = gamma = value_eq = None
    if abs(m.noise_variance - 1.0) <= 1e-9 and m.mu0.is_dirac:
        eq = lq_equilibrium(m)
        alpha, gamma, value_eq = eq.alpha, eq.gamma, eq.value
    return LQSolution(beta=back.beta, means=fwd.means, rules=fwd.rules,
                      value_opt=float(fwd.values[0]), alpha=alpha, gamma=gamma,
                      value_eq=value_eq)


# -- JSON interface ------------------------------------------------------------

def lq_from_dict(doc: dict) -> LQModel:
    """Build a model from {"b","d","sigma","N","x0","noise":{"points","probs"}}."""
    try:
        noise = make_measure(doc["noise"]["points"], doc["noise"]["probs"])
        return make_lq(doc["b"], doc["d"], doc["sigma"], doc["N"], noise,
                       x0=doc["x0"])
    except KeyError as exc:
        raise InputError(f"LQ document missing key {exc}") from exc


def lq_to_dict(m: LQModel) -> dict:
    return {
        "b": m.b,
        "d": m.d,
        "sigma": m.sigma,
        "N": m.horizon,
        "x0": float(m.mu0.points[0]) if m.mu0.is_dirac else None,
        "noise": {"points": m.noise.points.tolist(),
                  "probs": m.noise.weights.tolist()},
    }


def load_lq(path) -> LQModel:
    with open(path, "r", encoding="utf-8") as fh:
        return lq_from_dict(json.load(fh))

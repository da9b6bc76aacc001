"""Closed-form solvers for the multi-period mean-variance problem.

The objective is Var[X_N] - 2*lam*E[X_N] over all investment policies, with
wealth recursion X' = (1+rate) * (X + A . R).  Three solutions are provided:

* `precommit_policy`   -- the optimum for a point-mass start, found through
  the quadratic auxiliary problem; its rules depend on the initial wealth.
* `equilibrium_policy` -- the subgame-perfect strategy of the intrapersonal
  game; constant-in-wealth rules, generally suboptimal (see `value_gap`).
* `population_backward` / `population_forward` -- the lift of the problem to
  laws of wealth, where transitions are deterministic pushforwards and the
  standard value recursion holds.  The backward pass yields measure-dependent
  rule generators; the forward pass realizes them along the deterministic
  trajectory of laws.  For a point-mass start the realized policy and value
  coincide with the pre-commitment solution.

All value formulas are exact given the per-period moment quantities of
`popmdp.market`; nothing here iterates to convergence.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from popmdp.errors import BadEll, DegenerateRisk, InputError, NotDirac
from popmdp.market import (
    MarketModel,
    StageMoments,
    compute_moments,
    relative_risk,
    wealth_transition,
)
from popmdp.measures import (
    AffineRule,
    DiscreteMeasure,
    MeasureRule,
    dirac,
    mean,
    pushforward,
    terminal_mv_cost,
    variance,
)

KIND_PRECOMMIT = "precommit"
KIND_EQUILIBRIUM = "equilibrium"
KIND_POPULATION = "population"


@dataclass(frozen=True)
class MVProblem:
    """A mean-variance instance: market, moments, risk weight, initial law."""

    model: MarketModel
    moments: StageMoments
    lam: float
    mu0: DiscreteMeasure

    def __post_init__(self):
        # lam = 0 (pure variance minimization) is well-defined throughout,
        # so only negative weights are rejected.
        if not np.isfinite(self.lam) or self.lam < 0.0:
            raise InputError(f"risk weight lam must be >= 0, got {self.lam!r}")

    @classmethod
    def from_market(cls, model: MarketModel, lam: float, *, x0: float | None = None,
                    mu0: DiscreteMeasure | None = None) -> "MVProblem":
        if (x0 is None) == (mu0 is None):
            raise InputError("give exactly one of x0 and mu0")
        if mu0 is None:
            mu0 = dirac(float(x0))
        return cls(model=model, moments=compute_moments(model), lam=lam, mu0=mu0)

    @property
    def horizon(self) -> int:
        return self.model.horizon


@dataclass(frozen=True)
class MVSolution:
    """A solved instance: per-epoch rules, objective value, optional laws."""

    kind: str
    rules: tuple[AffineRule, ...]
    value: float
    measures: tuple[DiscreteMeasure, ...] | None = None


def _dirac_point(mu: DiscreteMeasure) -> float:
    if mu.points.ndim != 1 or not mu.is_dirac:
        raise NotDirac("this operation is defined only for a point-mass initial law")
    return float(mu.points[0])


def precommit_policy(p: MVProblem) -> MVSolution:
    """Optimal policy and value for a point-mass start.

    Rule at epoch n: (kappa_n - x) * directions[n] with
    kappa_n = (x0 + lam / (bond[N] * shrink[0])) * bond[n]; value
    lam^2 * (1 - 1/shrink[0]) - 2 * lam * x0 * bond[N].
    """
    x0 = _dirac_point(p.mu0)
    mo = p.moments
    n_stages = p.horizon
    bond_n = mo.bond[n_stages]
    target = x0 + p.lam / (bond_n * mo.shrink[0])
    rules = tuple(
        AffineRule.mean_variance(target * mo.bond[n], mo.directions[n])
        for n in range(n_stages)
    )
    value = p.lam * p.lam * (1.0 - 1.0 / mo.shrink[0]) - 2.0 * p.lam * x0 * bond_n
    return MVSolution(kind=KIND_PRECOMMIT, rules=rules, value=value)


def precommit_moments(p: MVProblem) -> tuple[float, float]:
    """(E[X_N], E[X_N^2]) under the pre-commitment policy.

    Uses the pivot b = bond[N]*x0 + lam/shrink[0]:
    E[X_N] = x0*bond[N]*shrink[0] + b*(1 - shrink[0]) and
    E[X_N^2] = (x0*bond[N])^2*shrink[0] + b^2*(1 - shrink[0]).
    """
    x0 = _dirac_point(p.mu0)
    mo = p.moments
    bond_n = mo.bond[p.horizon]
    d0 = mo.shrink[0]
    b = bond_n * x0 + p.lam / d0
    first = x0 * bond_n * d0 + b * (1.0 - d0)
    second = (x0 * bond_n) ** 2 * d0 + b * b * (1.0 - d0)
    return first, second


def equilibrium_policy(p: MVProblem) -> MVSolution:
    """Subgame-perfect (equilibrium) strategy and its value.

    The rule at epoch n is the constant vector
    lam * (bond[n]/bond[N]) * Sigma_{n+1}^{-1} E[R_{n+1}]; the value is
    -2*lam*x0*bond[N] - lam^2 * sum_k tradeoff_k / (1 - tradeoff_k).
    Suboptimal for two or more periods -- see `value_gap`.
    """
    x0 = _dirac_point(p.mu0)
    mo = p.moments
    n_stages = p.horizon
    bond_n = mo.bond[n_stages]
    rules = []
    for n in range(n_stages):
        vec = p.lam * (mo.bond[n] / bond_n) * np.linalg.solve(mo.sigma[n], mo.mean_r[n])
        rules.append(AffineRule.constant(vec))
    h = mo.tradeoff / (1.0 - mo.tradeoff)
    value = -2.0 * p.lam * x0 * bond_n - p.lam * p.lam * float(np.sum(h))
    return MVSolution(kind=KIND_EQUILIBRIUM, rules=tuple(rules), value=value)


def weierstrass_gap(h: Sequence[float]) -> float:
    """prod(1 + h_k) - 1 - sum(h_k) for nonnegative h_k, always >= 0.

    Evaluated through the running-product recurrence p <- p + h + p*h so a
    single factor gives exactly 0.0 in floating point.
    """
    p = 0.0
    s = 0.0
    for hk in h:
        p = p + hk + p * hk
        s += hk
    return p - s


def value_gap(p: MVProblem) -> float:
    """Equilibrium value minus pre-commitment value; zero iff one period.

    Equals lam^2 * (prod(1 + h_k) - 1 - sum h_k) with
    h_k = tradeoff_k / (1 - tradeoff_k), which is nonnegative by the
    Weierstrass product inequality and strictly positive for N >= 2.
    """
    _dirac_point(p.mu0)
    h = p.moments.tradeoff / (1.0 - p.moments.tradeoff)
    return p.lam * p.lam * weierstrass_gap(h)


def stationary_gap_series(ell: float, lam: float, n_max: int) -> list[tuple[int, float, float, float]]:
    """Rows (N, precommit value, equilibrium value, gap) for a stationary model.

    All periods share the trade-off scalar ``ell`` and the start is a point
    mass at 0, where the two values reduce to -lam^2*(prod(1+h)^N - 1) and
    -lam^2*N*h with h = ell/(1-ell).  The gap does not depend on the
    interest rate, hence no rate argument.
    """
    if not (np.isfinite(ell) and 0.0 < ell < 1.0):
        raise BadEll(f"trade-off scalar must lie strictly in (0, 1), got {ell!r}")
    if n_max < 1:
        raise InputError(f"horizon count must be >= 1, got {n_max}")
    h = ell / (1.0 - ell)
    lam2 = lam * lam
    rows = []
    prod_minus_one = 0.0
    for n in range(1, n_max + 1):
        prod_minus_one = prod_minus_one + h + prod_minus_one * h
        v_opt = -lam2 * prod_minus_one
        v_eq = -lam2 * (n * h)
        rows.append((n, v_opt, v_eq, lam2 * (prod_minus_one - n * h)))
    return rows


def population_backward(p: MVProblem) -> tuple[MeasureRule, ...]:
    """Measure-dependent rule generators of the lifted problem.

    Stage n maps a law nu to the rule
    (lam*bond[n]/(shrink[n]*bond[N]) + mean(nu) - x) * directions[n].
    """
    mo = p.moments
    bond_n = mo.bond[p.horizon]
    return tuple(
        MeasureRule(
            stage=n,
            kappa_const=p.lam * mo.bond[n] / (mo.shrink[n] * bond_n),
            add_mean=True,
            direction=mo.directions[n],
        )
        for n in range(p.horizon)
    )


def population_forward(
    p: MVProblem, generators: Sequence[MeasureRule]
) -> MVSolution:
    """Realize the generators along the deterministic trajectory of laws.

    Returns the realized rules, the laws mu_0..mu_N, and the objective
    value evaluated as the terminal cost of mu_N.  For a point-mass start
    the realized rules coincide with `precommit_policy`.
    """
    if len(generators) != p.horizon:
        raise InputError(f"{len(generators)} generators for horizon {p.horizon}")
    mu = p.mu0
    measures = [mu]
    rules = []
    for n in range(p.horizon):
        rule = generators[n].realize(mu)
        rules.append(rule)
        mu = pushforward(
            mu, rule, wealth_transition(p.model.rates[n]), relative_risk(p.model, n)
        )
        measures.append(mu)
    value = terminal_mv_cost(mu, p.lam)
    return MVSolution(
        kind=KIND_POPULATION, rules=tuple(rules), value=value, measures=tuple(measures)
    )


def population_value(p: MVProblem) -> float:
    """Closed-form value of the lifted problem for an arbitrary initial law:

    bond[N]^2 * shrink[0] * Var(mu0) - 2*lam*bond[N]*mean(mu0)
    - lam^2 * (1/shrink[0] - 1).
    """
    mo = p.moments
    bond_n = mo.bond[p.horizon]
    d0 = mo.shrink[0]
    return (
        bond_n * bond_n * d0 * variance(p.mu0)
        - 2.0 * p.lam * bond_n * mean(p.mu0)
        - p.lam * p.lam * (1.0 / d0 - 1.0)
    )


def population_stage_value(p: MVProblem, nu: DiscreteMeasure, n: int) -> float:
    """Stage-n value of the lifted recursion evaluated at the law ``nu``.

    J_n(nu) = shrink[n] * (bond[N]/bond[n])^2 * Var(nu)
              - 2*lam*(bond[N]/bond[n]) * mean(nu)
              - lam^2 * sum_{k>n} tradeoff_k / shrink_{k-1}.

    Diagnostic used by the consistency tests: along the realized optimal
    trajectory J_n(mu_n) is constant in n and equals the terminal cost of
    mu_N (there is no running cost in this problem).
    """
    if not 0 <= n <= p.horizon:
        raise InputError(f"stage {n} outside 0..{p.horizon}")
    mo = p.moments
    growth_to_end = mo.bond[p.horizon] / mo.bond[n]
    tail = float(np.sum(mo.tradeoff[n:] / mo.shrink[n:p.horizon]))
    return (
        mo.shrink[n] * growth_to_end * growth_to_end * variance(nu)
        - 2.0 * p.lam * growth_to_end * mean(nu)
        - p.lam * p.lam * tail
    )


def expected_wealth_forward(p: MVProblem) -> np.ndarray:
    """E[X_n] for n = 0..N under the realized population-optimal policy:

    bond[n] * (mean(mu0) + (lam/bond[N]) * sum_{k<=n} tradeoff_k / shrink_{k-1}).
    """
    mo = p.moments
    n_stages = p.horizon
    bond_n = mo.bond[n_stages]
    out = np.empty(n_stages + 1)
    acc = 0.0
    out[0] = mean(p.mu0)
    for n in range(1, n_stages + 1):
        acc += mo.tradeoff[n - 1] / mo.shrink[n - 1]
        out[n] = mo.bond[n] * (mean(p.mu0) + (p.lam / bond_n) * acc)
    return out


class OneStepMV(NamedTuple):
    kappa: float
    b: float
    direction: np.ndarray


def one_step_mv(nu_mean: float, lam: float, rate: float, c, mean_r) -> OneStepMV:
    """Single-period optimum given the current law's mean.

    With ell = mean_r^T C^{-1} mean_r the optimal pivot is
    b = nu_mean + (lam/(1+rate)) * ell/(1-ell), the rule is
    (kappa - x) * C^{-1} mean_r with kappa = b + lam/(1+rate)
    = nu_mean + lam / ((1+rate)*(1-ell)).  Raises `DegenerateRisk` unless
    ell lies strictly inside (0, 1).
    """
    c = np.atleast_2d(np.asarray(c, dtype=float))
    m1 = np.atleast_1d(np.asarray(mean_r, dtype=float))
    direction = np.linalg.solve(c, m1)
    ell = float(m1 @ direction)
    if not 0.0 < ell < 1.0:
        raise DegenerateRisk(f"trade-off scalar {ell!r} outside (0, 1)")
    growth = 1.0 + rate
    b = nu_mean + (lam / growth) * ell / (1.0 - ell)
    kappa = b + lam / growth
    return OneStepMV(kappa=kappa, b=b, direction=direction)


def solve_mv(p: MVProblem, method: str) -> MVSolution:
    """Dispatch to one of the three solution methods by name."""
    if method == KIND_PRECOMMIT:
        return precommit_policy(p)
    if method == KIND_EQUILIBRIUM:
        return equilibrium_policy(p)
    if method == KIND_POPULATION:
        return population_forward(p, population_backward(p))
    raise InputError(f"unknown method {method!r}")


def solution_to_dict(sol: MVSolution, include_measures: bool = False) -> dict:
    """JSON-ready view of a solution: kind, value, per-stage rules."""
    doc = {
        "kind": sol.kind,
        "value": sol.value,
        "rules": [dict(stage=n, **rule.as_dict()) for n, rule in enumerate(sol.rules)],
    }
    if include_measures and sol.measures is not None:
        doc["measures"] = [
            {"points": m.points.tolist(), "weights": m.weights.tolist()}
            for m in sol.measures
        ]
    return doc

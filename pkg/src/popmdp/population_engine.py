"""General finite-horizon decision processes with a nonlinear terminal term.

The objective is E[sum_k c_k(X_k, A_k) + c_N(X_N)] + G(E[h(X_N)]).  The
G term breaks the usual additive recursion, so the engine works on the lift
of the problem: states are laws of X, actions are whole decision rules, the
transition is the exact pushforward of `popmdp.measures`, and costs are
integrals against the current law.  On the lifted problem the one standard
value recursion holds, and a backward-forward pass produces a policy that is
optimal within the supplied rule families.

Because laws form an uncountable space, the infimum over all measurable
rules is replaced by finite per-stage rule families and exhaustive search
over rule sequences (exact within the families, capped in size).  The two
worked problems (mean-variance portfolio, LQ regulator) have closed-form
optimal generators that can be placed inside a family; `mean_variance_spec`
and `lq_spec` build the matching process descriptions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from popmdp.errors import InputError, NonFiniteCost, SearchBlowup
from popmdp.lq_solver import LQModel
from popmdp.market import MarketModel, StageMoments, relative_risk, wealth_transition
from popmdp.measures import DEFAULT_SUPPORT_CAP, DiscreteMeasure, pushforward

DEFAULT_SEARCH_CAP = 1_000_000

FAMILY_CAVEAT = (
    "optimal within the declared rule families only; rules outside the "
    "families are not searched"
)


@dataclass(frozen=True)
class GeneralMDP:
    """Process data: per-stage transition/noise/cost plus terminal h and G.

    All callables must accept NumPy arrays (they are evaluated on whole
    atom vectors at once).  ``G(inf)`` is treated as ``inf`` by convention:
    a non-finite mean of h yields value +inf rather than an error.
    ``kernel_hint`` marks dynamics with a compiled fast path (set by
    `lq_spec`); it never changes results.
    """

    horizon: int
    transitions: tuple[Callable, ...]
    noises: tuple[DiscreteMeasure, ...]
    stage_costs: tuple[Callable, ...]
    terminal_cost: Callable
    h: Callable
    g: Callable
    kernel_hint: tuple | None = field(default=None, compare=False)


def _per_stage(obj, horizon: int) -> tuple:
    if callable(obj) or isinstance(obj, DiscreteMeasure):
        return tuple([obj] * horizon)
    seq = tuple(obj)
    if len(seq) != horizon:
        raise InputError(f"expected {horizon} per-stage entries, got {len(seq)}")
    return seq


def make_mdp(horizon: int, transition, noise, stage_cost, terminal_cost, h, g,
             kernel_hint: tuple | None = None) -> GeneralMDP:
    """Assemble a `GeneralMDP`, broadcasting single entries across stages."""
    if horizon < 0:
        raise InputError(f"horizon must be >= 0, got {horizon}")
    return GeneralMDP(
        horizon=int(horizon),
        transitions=_per_stage(transition, horizon),
        noises=_per_stage(noise, horizon),
        stage_costs=_per_stage(stage_cost, horizon),
        terminal_cost=terminal_cost,
        h=h,
        g=g,
        kernel_hint=kernel_hint,
    )


@dataclass(frozen=True)
class RuleFamily:
    """Finite candidate rule sets, one tuple per stage.

    Entries are either measure-dependent generators (anything with a
    ``realize(mu) -> rule`` method) or plain rules (an `AffineRule` or a
    callable x -> a), which are treated as constant in the law.
    """

    stages: tuple[tuple, ...]

    def __post_init__(self):
        for n, fam in enumerate(self.stages):
            if len(fam) == 0:
                raise InputError(f"stage {n} has an empty rule family")

    @property
    def sizes(self) -> tuple[int, ...]:
        return tuple(len(fam) for fam in self.stages)


def _realize(entry, mu: DiscreteMeasure):
    if hasattr(entry, "realize"):
        return entry.realize(mu)
    return entry


def _integrate(values: np.ndarray, weights: np.ndarray, what: str) -> float:
    values = np.asarray(values, dtype=float)
    if not np.all(np.isfinite(values)):
        raise NonFiniteCost(f"{what} evaluated to a non-finite value")
    return float(weights @ values)


def _terminal_cost(spec: GeneralMDP, mu: DiscreteMeasure) -> float:
    total = _integrate(spec.terminal_cost(mu.points), mu.weights, "terminal cost")
    h_vals = np.asarray(spec.h(mu.points), dtype=float)
    h_mean = float(mu.weights @ h_vals)
    if not math.isfinite(h_mean):
        return math.inf  # G(inf) = inf convention
    g_val = float(spec.g(h_mean))
    if math.isnan(g_val) or g_val == -math.inf:
        raise NonFiniteCost(f"G({h_mean!r}) evaluated to {g_val!r}")
    return total + g_val


def lifted_cost(spec: GeneralMDP, mu: DiscreteMeasure, rule, n: int) -> float:
    """Stage cost integrated against ``mu``; ``n == horizon`` selects the
    terminal cost (the rule argument is then ignored)."""
    if not 0 <= n <= spec.horizon:
        raise InputError(f"stage {n} outside 0..{spec.horizon}")
    if n == spec.horizon:
        return _terminal_cost(spec, mu)
    realized = _realize(rule, mu)
    actions = realized(mu.points)
    return _integrate(spec.stage_costs[n](mu.points, actions), mu.weights,
                      f"stage-{n} cost")


def evaluate_policy(spec: GeneralMDP, rules: Sequence, mu0: DiscreteMeasure,
                    support_cap: int = DEFAULT_SUPPORT_CAP) -> float:
    """Exact value of one rule sequence: sum of lifted stage costs along the
    deterministic trajectory of laws plus the terminal cost."""
    if len(rules) != spec.horizon:
        raise InputError(f"{len(rules)} rules for horizon {spec.horizon}")
    mu = mu0
    total = 0.0
    for n in range(spec.horizon):
        rule = _realize(rules[n], mu)
        total += lifted_cost(spec, mu, rule, n)
        mu = pushforward(mu, rule, spec.transitions[n], spec.noises[n],
                         cap=support_cap)
    return total + _terminal_cost(spec, mu)


@dataclass(frozen=True)
class EngineResult:
    """Winning rule sequence of the exhaustive search.

    ``values[n]`` is the cost-to-go from the realized law ``measures[n]``,
    so ``values[0]`` is the overall value.  ``caveat`` records that
    optimality holds only relative to the declared families.
    """

    indices: tuple[int, ...]
    rules: tuple
    measures: tuple[DiscreteMeasure, ...]
    values: np.ndarray
    value: float
    caveat: str = FAMILY_CAVEAT


def engine_backward(spec: GeneralMDP, families: RuleFamily | Sequence,
                    mu0: DiscreteMeasure, *,
                    search_cap: int = DEFAULT_SEARCH_CAP,
                    support_cap: int = DEFAULT_SUPPORT_CAP) -> EngineResult:
    """Exhaustive depth-first search over rule sequences.

    The lifted problem is deterministic, so enumerating sequences evaluates
    the value recursion exactly along every reachable trajectory of laws.
    Sequences are visited in lexicographic order (stage 0 most significant)
    and only strictly better values replace the incumbent, which breaks
    ties toward the lowest family index at the earliest stage.  Raises
    `SearchBlowup` when the product of family sizes exceeds ``search_cap``.
    """
    if not isinstance(families, RuleFamily):
        families = RuleFamily(stages=tuple(tuple(fam) for fam in families))
    if len(families.stages) != spec.horizon:
        raise InputError(
            f"{len(families.stages)} families for horizon {spec.horizon}"
        )
    total_sequences = math.prod(families.sizes)
    if total_sequences > search_cap:
        raise SearchBlowup(
            f"{total_sequences} rule sequences exceed the cap {search_cap}"
        )

    best_value = math.inf
    best_indices: tuple[int, ...] | None = None

    def descend(n: int, mu: DiscreteMeasure, cost: float, prefix: tuple[int, ...]):
        nonlocal best_value, best_indices
        if n == spec.horizon:
            total = cost + _terminal_cost(spec, mu)
            if total < best_value:
                best_value = total
                best_indices = prefix
            return
        for idx, entry in enumerate(families.stages[n]):
            rule = _realize(entry, mu)
            stage = lifted_cost(spec, mu, rule, n)
            mu_next = pushforward(mu, rule, spec.transitions[n], spec.noises[n],
                                  cap=support_cap)
            descend(n + 1, mu_next, cost + stage, prefix + (idx,))

    descend(0, mu0, 0.0, ())
    if best_indices is None:  # horizon 0: single empty sequence
        best_indices = ()
        best_value = _terminal_cost(spec, mu0)

    # replay the winner to collect laws, realized rules and costs-to-go
    measures = [mu0]
    rules = []
    stage_costs = []
    mu = mu0
    for n, idx in enumerate(best_indices):
        rule = _realize(families.stages[n][idx], mu)
        rules.append(rule)
        stage_costs.append(lifted_cost(spec, mu, rule, n))
        mu = pushforward(mu, rule, spec.transitions[n], spec.noises[n],
                         cap=support_cap)
        measures.append(mu)
    values = np.empty(spec.horizon + 1)
    values[spec.horizon] = _terminal_cost(spec, mu)
    for n in range(spec.horizon - 1, -1, -1):
        values[n] = stage_costs[n] + values[n + 1]
    return EngineResult(indices=tuple(best_indices), rules=tuple(rules),
                        measures=tuple(measures), values=values,
                        value=float(values[0]))


# -- lower bounding function checks --------------------------------------------

@dataclass(frozen=True)
class BoundingConstants:
    """Constants of the growth conditions a candidate bound must satisfy."""

    cbar_stage: float
    cbar_terminal: float
    cbar_h: float
    alpha_b: float


@dataclass(frozen=True)
class BoundingReport:
    passed: bool
    violations: tuple[str, ...]
    checks: int


def check_bounding(spec: GeneralMDP, bound: Callable, states, actions,
                   constants: BoundingConstants) -> BoundingReport:
    """Sample-based check of the four growth conditions for a candidate
    lower bounding function ``b``:

    (i)   c_n(x, a)^- <= cbar_stage * b(x)        for every stage,
    (ii)  c_N(x)^-    <= cbar_terminal * b(x),
    (iii) h(x)^-      <= cbar_h * b(x),
    (iv)  integral of b against one transition    <= alpha_b * b(x)
          (using each sampled action as a constant rule).

    Advisory only: violations are reported, never raised, and checking is
    limited to the supplied sample points.
    """
    xs = np.asarray(states, dtype=float)
    acts = np.asarray(actions, dtype=float)
    b_x = np.asarray(bound(xs), dtype=float)
    violations: list[str] = []
    checks = 0

    def neg_part(v):
        return np.maximum(-np.asarray(v, dtype=float), 0.0)

    for n in range(spec.horizon):
        for a in acts:
            checks += len(xs)
            bad = neg_part(spec.stage_costs[n](xs, np.full_like(xs, a))) \
                > constants.cbar_stage * b_x
            for x in xs[bad]:
                violations.append(f"(i) stage {n}: c({x!r}, {a!r})^- too large")
    checks += len(xs)
    bad = neg_part(spec.terminal_cost(xs)) > constants.cbar_terminal * b_x
    for x in xs[bad]:
        violations.append(f"(ii) terminal: c_N({x!r})^- too large")
    checks += len(xs)
    bad = neg_part(spec.h(xs)) > constants.cbar_h * b_x
    for x in xs[bad]:
        violations.append(f"(iii) statistic: h({x!r})^- too large")
    for n in range(spec.horizon):
        noise = spec.noises[n]
        for a in acts:
            checks += len(xs)
            for x, bx in zip(xs, b_x):
                nxt = spec.transitions[n](
                    np.full(noise.support_size, x),
                    np.full(noise.support_size, a),
                    noise.points,
                )
                integral = float(noise.weights @ np.asarray(bound(nxt), dtype=float))
                if integral > constants.alpha_b * bx:
                    violations.append(
                        f"(iv) stage {n}: drift at ({x!r}, {a!r}) is "
                        f"{integral!r} > {constants.alpha_b * bx!r}"
                    )
    return BoundingReport(passed=not violations, violations=tuple(violations),
                          checks=checks)


# -- named specifications --------------------------------------------------------

def mean_variance_spec(model: MarketModel, moments: StageMoments,
                       lam: float) -> GeneralMDP:
    """Portfolio objective Var - 2*lam*mean as a `GeneralMDP`:
    no running cost, c_N(x) = x^2 - 2*lam*x, h(x) = x, G(y) = -y^2."""
    transitions = tuple(wealth_transition(r) for r in model.rates)
    noises = tuple(relative_risk(model, k) for k in range(model.horizon))

    def zero_cost(x, a):
        return np.zeros(np.shape(x))

    def terminal(x):
        return x * x - 2.0 * lam * x

    return make_mdp(model.horizon, transitions, noises, zero_cost, terminal,
                    h=lambda x: x, g=lambda y: -(y * y))


def lq_spec(m: LQModel) -> GeneralMDP:
    """Regulator objective E[sum A^2] + (E[X_N])^2 as a `GeneralMDP`."""
    b, d, sigma = m.b, m.d, m.sigma

    def transition(x, a, r):
        return (b * x + d * a) + sigma * r

    def action_cost(x, a):
        return np.asarray(a, dtype=float) ** 2

    def zero(x):
        return np.zeros(np.shape(x))

    return make_mdp(m.horizon, transition, m.noise, action_cost, zero,
                    h=lambda x: x, g=lambda y: y * y,
                    kernel_hint=("lq", b, d, sigma))


def spec_from_dict(doc: dict):
    """Build a named spec from a JSON document.

    kind "mean-variance": market fields plus "lambda"; returns
    (GeneralMDP, MVProblem).  kind "lq": LQ fields; returns
    (GeneralMDP, LQModel).
    """
    from popmdp.lq_solver import lq_from_dict
    from popmdp.market import market_from_dict
    from popmdp.mv_solver import MVProblem

    kind = doc.get("kind")
    if kind == "mean-variance":
        model = market_from_dict(doc)
        problem = MVProblem.from_market(model, float(doc["lambda"]),
                                        x0=float(doc.get("x0", 0.0)))
        return mean_variance_spec(model, problem.moments, problem.lam), problem
    if kind == "lq":
        m = lq_from_dict(doc)
        return lq_spec(m), m
    raise InputError(f"unknown spec kind {kind!r}")

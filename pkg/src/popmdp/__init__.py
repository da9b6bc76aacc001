"""Measure-lifted dynamic programming for time-inconsistent control.

Lifting the state space to probability measures turns a non-separable
finite-horizon control problem (variance terms, nonlinear functions of a
terminal mean) into a deterministic dynamic program for which the standard
value recursion holds.  The package ships exact closed-form solvers for the
multi-period mean-variance portfolio problem and a scalar LQ regulator, a
general backward-forward engine over finite rule families, exact measure
pushforwards, and Monte Carlo validation of every value.
"""

from popmdp._backend import BACKEND
from popmdp.errors import (
    BadEll,
    BadProbabilities,
    BadWeights,
    DegenerateRisk,
    DomainError,
    EmptySupport,
    InputError,
    LengthMismatch,
    NegativeVariance,
    NonFiniteCost,
    NonPositiveReturn,
    NonUnitVariance,
    NotDirac,
    PopmdpError,
    ResourceCapError,
    SearchBlowup,
    SingularCovariance,
    SupportBlowup,
    TooFewSamples,
    ZeroMeanRisk,
)
from popmdp.lq_solver import (
    LQModel,
    LQSolution,
    gaussian_propagate,
    lq_backward,
    lq_equilibrium,
    lq_forward,
    lq_from_dict,
    lq_one_step,
    make_lq,
    solve_lq,
)
from popmdp.market import (
    MarketModel,
    StageMoments,
    build_market,
    compute_moments,
    load_market,
    market_from_dict,
    relative_risk,
    sigma_quadratic,
    wealth_transition,
)
from popmdp.measures import (
    AffineRule,
    DiscreteMeasure,
    MeasureRule,
    dirac,
    epsilon_merge,
    make_measure,
    mean,
    pushforward,
    second_moment,
    terminal_mv_cost,
    variance,
)
from popmdp.montecarlo import (
    Estimate,
    SimConfig,
    estimate_mv_objective,
    simulate_general,
    simulate_mv,
    simulate_mv_stages,
)
from popmdp.mv_solver import (
    MVProblem,
    MVSolution,
    equilibrium_policy,
    expected_wealth_forward,
    one_step_mv,
    population_backward,
    population_forward,
    population_stage_value,
    population_value,
    precommit_moments,
    precommit_policy,
    solve_mv,
    value_gap,
)
from popmdp.population_engine import (
    BoundingConstants,
    GeneralMDP,
    RuleFamily,
    check_bounding,
    engine_backward,
    evaluate_policy,
    lifted_cost,
    lq_spec,
    make_mdp,
    mean_variance_spec,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]

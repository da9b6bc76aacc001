import math

import numpy as np
import pytest

from popmdp import (
    AffineRule,
    BoundingConstants,
    MVProblem,
    NonFiniteCost,
    RuleFamily,
    SearchBlowup,
    check_bounding,
    dirac,
    engine_backward,
    evaluate_policy,
    lifted_cost,
    lq_backward,
    lq_spec,
    make_lq,
    make_measure,
    make_mdp,
    mean_variance_spec,
    population_backward,
    precommit_policy,
    terminal_mv_cost,
)
from popmdp.errors import InputError
from popmdp.lq_solver import lq_rule_generators
from popmdp.population_engine import spec_from_dict

from conftest import two_point_market

UNIT_NOISE = ([1.0, -1.0], [0.5, 0.5])


def quadratic_mdp(horizon=1, g=lambda y: y * y):
    """Toy spec: x' = x + a + r, cost a^2, terminal 0, h = x."""
    return make_mdp(
        horizon,
        transition=lambda x, a, r: x + a + r,
        noise=make_measure([0.0], [1.0]),
        stage_cost=lambda x, a: np.asarray(a, dtype=float) ** 2,
        terminal_cost=lambda x: np.zeros(np.shape(x)),
        h=lambda x: x,
        g=g,
    )


class TestLiftedCost:
    def test_constant_rule_quadratic_cost(self):
        spec = quadratic_mdp()
        mu = make_measure([5.0, -3.0], [0.5, 0.5])
        assert lifted_cost(spec, mu, AffineRule.constant(0.7), 0) == \
            pytest.approx(0.49, abs=1e-15)

    def test_terminal_with_g_of_mean(self):
        spec = quadratic_mdp()
        mu = make_measure([0.0, 2.0], [0.5, 0.5])
        assert lifted_cost(spec, mu, None, 1) == pytest.approx(1.0, abs=1e-15)

    def test_mv_embedding_matches_terminal_cost(self):
        model = two_point_market(1)
        p = MVProblem.from_market(model, 1.0, x0=0.0)
        spec = mean_variance_spec(model, p.moments, 1.0)
        mu = make_measure([0.24, -0.16], [0.5, 0.5])
        assert lifted_cost(spec, mu, None, 1) == pytest.approx(
            terminal_mv_cost(mu, 1.0), abs=1e-14
        )

    def test_non_finite_stage_cost(self):
        spec = make_mdp(
            1,
            transition=lambda x, a, r: x,
            noise=make_measure([0.0], [1.0]),
            stage_cost=lambda x, a: np.full(np.shape(x), np.nan),
            terminal_cost=lambda x: np.zeros(np.shape(x)),
            h=lambda x: x,
            g=lambda y: y,
        )
        with pytest.raises(NonFiniteCost):
            lifted_cost(spec, dirac(0.0), AffineRule.constant(0.0), 0)

    def test_g_of_infinite_mean_is_plus_infinity(self):
        spec = make_mdp(
            0,
            transition=(),
            noise=(),
            stage_cost=(),
            terminal_cost=lambda x: np.zeros(np.shape(x)),
            h=lambda x: np.full(np.shape(x), np.inf),
            g=lambda y: y,
        )
        mu = make_measure([40.0], [1.0])
        assert lifted_cost(spec, mu, None, 0) == math.inf


class TestEvaluatePolicy:
    def test_zero_horizon_is_terminal_cost(self):
        spec = quadratic_mdp(horizon=0)
        mu = make_measure([0.0, 2.0], [0.5, 0.5])
        assert evaluate_policy(spec, [], mu) == pytest.approx(1.0, abs=1e-15)

    def test_single_stage_lq_constant_rule(self):
        # value = t^2 + (x0 + t)^2 for unit coefficients and zero-mean noise
        model = make_lq(1.0, 1.0, 1.0, 1, UNIT_NOISE, x0=0.5)
        spec = lq_spec(model)
        for t in (-1.0, 0.0, 0.75):
            value = evaluate_policy(spec, [AffineRule.constant(t)], model.mu0)
            assert value == pytest.approx(t * t + (0.5 + t) ** 2, abs=1e-12)

    def test_mean_variance_single_stage_optimum(self):
        model = two_point_market(1)
        p = MVProblem.from_market(model, 1.0, x0=0.0)
        spec = mean_variance_spec(model, p.moments, 1.0)
        value = evaluate_policy(spec, list(population_backward(p)), p.mu0)
        assert value == pytest.approx(-0.04, abs=1e-12)

    def test_rule_count_checked(self):
        with pytest.raises(InputError):
            evaluate_policy(quadratic_mdp(), [], dirac(0.0))


class TestEngineBackward:
    def test_selects_optimal_rule_over_zero_rule(self):
        model = two_point_market(2)
        p = MVProblem.from_market(model, 1.0, x0=0.0)
        spec = mean_variance_spec(model, p.moments, 1.0)
        zero = AffineRule.constant(np.zeros(1))
        families = [[gen, zero] for gen in population_backward(p)]
        result = engine_backward(spec, families, p.mu0)
        assert result.indices == (0, 0)
        assert result.value == pytest.approx(precommit_policy(p).value, abs=1e-9)

    def test_singleton_families_reduce_to_evaluate_policy(self):
        model = make_lq(1.0, 1.0, 1.0, 3, UNIT_NOISE, x0=2.0)
        spec = lq_spec(model)
        gens = lq_rule_generators(lq_backward(model))
        result = engine_backward(spec, [[g] for g in gens], model.mu0)
        assert result.value == pytest.approx(
            evaluate_policy(spec, list(gens), model.mu0), abs=1e-12
        )

    def test_lq_grid_recovers_closed_form(self):
        model = make_lq(1.0, 1.0, 1.0, 3, UNIT_NOISE, x0=2.0)
        spec = lq_spec(model)
        back = lq_backward(model)
        gens = lq_rule_generators(back)

        from popmdp.lq_solver import MeanActionRule

        families = [
            [MeanActionRule(g.stage, g.coef + off) for off in (-0.05, 0.0, 0.05)]
            for g in gens
        ]
        result = engine_backward(spec, families, model.mu0)
        assert result.indices == (1, 1, 1)
        assert result.value == pytest.approx(back.beta[0] * 4.0, abs=1e-9)

    def test_values_along_path_decrease_by_stage_cost(self):
        model = make_lq(1.0, 1.0, 1.0, 2, UNIT_NOISE, x0=1.0)
        spec = lq_spec(model)
        gens = lq_rule_generators(lq_backward(model))
        result = engine_backward(spec, [[g] for g in gens], model.mu0)
        for n in range(2):
            stage = lifted_cost(spec, result.measures[n], result.rules[n], n)
            assert result.values[n] == pytest.approx(
                stage + result.values[n + 1], abs=1e-12
            )

    def test_search_cap(self):
        spec = quadratic_mdp(horizon=3)
        fam = [AffineRule.constant(t) for t in np.linspace(-1, 1, 101)]
        with pytest.raises(SearchBlowup):
            engine_backward(spec, [fam] * 3, dirac(0.0), search_cap=1000)

    def test_monotone_in_family_size(self):
        spec = quadratic_mdp(horizon=2)
        small = [AffineRule.constant(t) for t in (-0.5, 0.0)]
        large = small + [AffineRule.constant(t) for t in (0.25, -0.25)]
        v_small = engine_backward(spec, [small, small], dirac(1.0)).value
        v_large = engine_backward(spec, [large, large], dirac(1.0)).value
        assert v_large <= v_small + 1e-15

    def test_deterministic_and_reproducible(self):
        spec = quadratic_mdp(horizon=2)
        fam = [AffineRule.constant(t) for t in (-0.4, -0.2, 0.0)]
        a = engine_backward(spec, [fam, fam], dirac(1.0))
        b = engine_backward(spec, [fam, fam], dirac(1.0))
        assert a.indices == b.indices
        assert a.value == b.value  # bit-for-bit

    def test_tie_broken_toward_lowest_index(self):
        # both rules identical: the first must win at every stage
        spec = quadratic_mdp(horizon=2)
        fam = [AffineRule.constant(0.1), AffineRule.constant(0.1)]
        result = engine_backward(spec, [fam, fam], dirac(1.0))
        assert result.indices == (0, 0)

    def test_empty_family_rejected(self):
        with pytest.raises(InputError):
            RuleFamily(stages=((),))


class TestLinearGCollapse:
    def test_value_is_mixture_of_dirac_values(self):
        # with G(y) = y and no terminal cost, the lifted value of a fixed
        # policy is the weight-average of point-start values
        spec = make_mdp(
            2,
            transition=lambda x, a, r: 0.8 * x + a + r,
            noise=make_measure([0.5, -0.5], [0.5, 0.5]),
            stage_cost=lambda x, a: np.asarray(x, dtype=float) ** 2,
            terminal_cost=lambda x: np.zeros(np.shape(x)),
            h=lambda x: x * x,
            g=lambda y: y,
        )
        rules = [AffineRule.constant(0.3), AffineRule.constant(-0.1)]
        points = [-1.0, 0.5, 2.0]
        weights = [0.2, 0.3, 0.5]
        mixed = evaluate_policy(spec, rules, make_measure(points, weights))
        split = sum(
            w * evaluate_policy(spec, rules, dirac(pt))
            for pt, w in zip(points, weights)
        )
        assert mixed == pytest.approx(split, abs=1e-9)


class TestCheckBounding:
    def test_quadratic_bound_passes_on_lq(self):
        model = make_lq(1.0, 0.5, 1.0, 2, UNIT_NOISE, x0=0.0)
        spec = lq_spec(model)
        report = check_bounding(
            spec,
            bound=lambda x: 1.0 + np.asarray(x, dtype=float) ** 2,
            states=np.linspace(-3, 3, 13),
            actions=np.linspace(-1, 1, 5),
            constants=BoundingConstants(cbar_stage=1.0, cbar_terminal=1.0,
                                        cbar_h=1.0, alpha_b=4.0),
        )
        assert report.passed
        assert report.checks > 0

    def test_exponential_cost_violates_constant_bound(self):
        spec = make_mdp(
            1,
            transition=lambda x, a, r: x + r,
            noise=make_measure([0.0], [1.0]),
            stage_cost=lambda x, a: -np.exp(np.asarray(x, dtype=float)),
            terminal_cost=lambda x: np.zeros(np.shape(x)),
            h=lambda x: x,
            g=lambda y: y,
        )
        report = check_bounding(
            spec,
            bound=lambda x: np.ones(np.shape(x)),
            states=np.array([0.0, 5.0, 10.0]),
            actions=np.array([0.0]),
            constants=BoundingConstants(1.0, 1.0, 1.0, 2.0),
        )
        assert not report.passed
        assert any("(i)" in v for v in report.violations)

    def test_identity_statistic_with_linear_bound(self):
        spec = quadratic_mdp()
        report = check_bounding(
            spec,
            bound=lambda x: 1.0 + np.abs(np.asarray(x, dtype=float)),
            states=np.linspace(-5, 5, 11),
            actions=np.array([0.0, 0.5]),
            constants=BoundingConstants(cbar_stage=1.0, cbar_terminal=1.0,
                                        cbar_h=1.0, alpha_b=2.0),
        )
        assert all("(iii)" not in v for v in report.violations)


class TestNamedSpecs:
    def test_mean_variance_from_dict(self):
        doc = {
            "kind": "mean-variance",
            "rates": [0.5],
            "returns": [{"points": [[3.0], [0.5]], "probs": [0.5, 0.5]}],
            "lambda": 1.0,
            "x0": 0.0,
        }
        spec, problem = spec_from_dict(doc)
        value = evaluate_policy(spec, list(population_backward(problem)), problem.mu0)
        assert value == pytest.approx(-0.04, abs=1e-12)

    def test_lq_from_dict(self):
        doc = {"kind": "lq", "b": 1.0, "d": 1.0, "sigma": 1.0, "N": 3, "x0": 2.0,
               "noise": {"points": [1.0, -1.0], "probs": [0.5, 0.5]}}
        spec, model = spec_from_dict(doc)
        assert spec.kernel_hint == ("lq", 1.0, 1.0, 1.0)
        gens = lq_rule_generators(lq_backward(model))
        assert evaluate_policy(spec, list(gens), model.mu0) == \
            pytest.approx(1.0, abs=1e-12)

    def test_unknown_kind(self):
        with pytest.raises(InputError):
            spec_from_dict({"kind": "bandit"})

"""Exact-arithmetic cross-checks.

The stationary two-point market and the unit-coefficient regulator have
fully rational solutions.  Recomputing them with `fractions.Fraction`
(direct recursions and closed forms, no floating point) gives an oracle
that is independent of the float evaluation order used by the solvers.
"""

from fractions import Fraction

import numpy as np
import pytest

from popmdp import (
    MVProblem,
    equilibrium_policy,
    expected_wealth_forward,
    lq_backward,
    lq_equilibrium,
    make_lq,
    population_value,
    precommit_moments,
    precommit_policy,
    value_gap,
)

from conftest import two_point_market

# stationary two-point instance: rate 1/2, relative risk {1, -2/3} at 1/2 each
ELL = Fraction(1, 26)
GROWTH = Fraction(3, 2)


def _rel_close(float_value: float, exact: Fraction, rtol: float = 1e-13):
    scale = max(1.0, abs(float(exact)))
    assert abs(float_value - float(exact)) <= rtol * scale, (
        f"{float_value!r} vs exact {exact} = {float(exact)!r}"
    )


class TestStationaryPortfolioRationals:
    @pytest.mark.parametrize("horizon", [1, 2, 3, 7])
    def test_precommit_value_and_rules(self, horizon):
        lam = 1
        p = MVProblem.from_market(two_point_market(horizon), float(lam), x0=0.0)
        sol = precommit_policy(p)

        d0 = (1 - ELL) ** horizon
        bond_n = GROWTH ** horizon
        _rel_close(sol.value, lam * lam * (1 - 1 / d0))
        direction = Fraction(3, 13)  # (1/6) / (13/18)
        for n, rule in enumerate(sol.rules):
            kappa = (lam / (bond_n * d0)) * GROWTH ** n
            _rel_close(rule.kappa, kappa)
            _rel_close(float(rule.direction[0]), direction)

    @pytest.mark.parametrize("horizon", [1, 2, 5])
    def test_precommit_terminal_moments(self, horizon):
        p = MVProblem.from_market(two_point_market(horizon), 1.0, x0=0.0)
        first, second = precommit_moments(p)
        growth_ratio = 1 / (1 - ELL) ** horizon  # (26/25)^N
        _rel_close(first, growth_ratio - 1)
        _rel_close(second, growth_ratio**2 - growth_ratio)

    @pytest.mark.parametrize("horizon", [1, 2, 4, 10])
    def test_equilibrium_value_and_gap(self, horizon):
        p = MVProblem.from_market(two_point_market(horizon), 1.0, x0=0.0)
        h = ELL / (1 - ELL)  # 1/25
        _rel_close(equilibrium_policy(p).value, -horizon * h)
        exact_gap = (1 / (1 - ELL) ** horizon - 1) - horizon * h
        _rel_close(value_gap(p), exact_gap)

    @pytest.mark.parametrize("horizon", [1, 3])
    def test_population_value_with_spread_start(self, horizon):
        from popmdp import make_measure

        mu0 = make_measure([-1.0, 2.0], [2.0 / 3.0, 1.0 / 3.0])  # mean 0, var 2
        p = MVProblem.from_market(two_point_market(horizon), 1.0, mu0=mu0)
        bond_n = GROWTH ** horizon
        d0 = (1 - ELL) ** horizon
        exact = bond_n**2 * d0 * 2 - 0 - (1 / d0 - 1)
        _rel_close(population_value(p), exact)

    @pytest.mark.parametrize("horizon", [1, 2, 6])
    def test_expected_wealth_sequence(self, horizon):
        lam = 1
        p = MVProblem.from_market(two_point_market(horizon), float(lam), x0=0.0)
        out = expected_wealth_forward(p)
        for n in range(horizon + 1):
            acc = Fraction(0)
            for k in range(1, n + 1):
                shrink_before = (1 - ELL) ** (horizon - k + 1)
                acc += ELL / shrink_before
            exact = GROWTH**n * (lam / GROWTH**horizon) * acc
            _rel_close(float(out[n]), exact)


class TestRegulatorRationals:
    @staticmethod
    def _exact_sequences(b: Fraction, d: Fraction, horizon: int):
        beta = [Fraction(0)] * (horizon + 1)
        alpha = [Fraction(0)] * (horizon + 1)
        gamma = [Fraction(0)] * (horizon + 1)
        beta[horizon] = Fraction(1)
        alpha[horizon] = Fraction(1)
        for n in range(horizon - 1, -1, -1):
            beta[n] = beta[n + 1] * b * b / (1 + d * d * beta[n + 1])
            alpha[n] = alpha[n + 1] * b / (1 + d * d * beta[n + 1])
            gamma[n] = gamma[n + 1] + (beta[n + 1] - alpha[n + 1] ** 2)
        return beta, alpha, gamma

    @pytest.mark.parametrize("b,d,horizon", [
        (Fraction(1), Fraction(1), 6),
        (Fraction(3, 2), Fraction(1, 2), 5),
        (Fraction(-4, 5), Fraction(2, 3), 4),
    ])
    def test_backward_sequences(self, b, d, horizon):
        model = make_lq(float(b), float(d), 1.0, horizon,
                        ([1.0, -1.0], [0.5, 0.5]), x0=1.0)
        back = lq_backward(model)
        beta, alpha, gamma = self._exact_sequences(b, d, horizon)
        for n in range(horizon + 1):
            _rel_close(float(back.beta[n]), beta[n])
        eq = lq_equilibrium(model)
        for n in range(horizon + 1):
            _rel_close(float(eq.alpha[n]), alpha[n])
            _rel_close(float(eq.gamma[n]), gamma[n])
        # realized mean coefficient at each stage
        for n in range(horizon):
            exact = -b * d * beta[n + 1] / (1 + d * d * beta[n + 1])
            _rel_close(float(back.mean_coefs[n]), exact)

    def test_gamma_for_unit_dynamics_is_known_rational(self):
        # gamma_0 for b=d=sigma=1: sum over n of (1/(n+1) - harmonic-ratio^2)
        model = make_lq(1.0, 1.0, 1.0, 3, ([1.0, -1.0], [0.5, 0.5]), x0=0.0)
        _, _, gamma = self._exact_sequences(Fraction(1), Fraction(1), 3)
        assert gamma[0] == Fraction(17, 36)
        assert float(lq_equilibrium(model).gamma[0]) == pytest.approx(
            17.0 / 36.0, abs=1e-15
        )

    def test_wealth_market_shrink_is_rational_power(self):
        mo = MVProblem.from_market(two_point_market(4), 1.0, x0=0.0).moments
        for n in range(5):
            _rel_close(float(mo.shrink[n]), (1 - ELL) ** (4 - n))

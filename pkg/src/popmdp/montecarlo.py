"""Monte Carlo simulation of the original (non-lifted) processes.

Every closed-form value in the package can be validated by simulating the
underlying paths under the realized policy and estimating the objective.

Randomness contract: the generator is Philox4x64-10 (counter based), keyed
by (seed, stream).  Stream 0 draws the initial states, stream n >= 1 draws
the period-n shocks, and path p always consumes element p of each stream,
so results depend only on (seed, stream, path) -- never on scheduling or
thread count.  The hot path recursions run in the compiled kernels when the
extension is built (see `popmdp._backend`); the NumPy fallback is
bit-identical.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from numpy.random import Generator, Philox

from popmdp import _kernels_py
from popmdp._backend import BACKEND, kernels
from popmdp.errors import InputError, TooFewSamples
from popmdp.market import MarketModel, relative_risk
from popmdp.measures import AffineRule, DiscreteMeasure
from popmdp.population_engine import GeneralMDP

_MASK64 = (1 << 64) - 1


@dataclass(frozen=True)
class SimConfig:
    """Path count, seed, and the optional antithetic pairing flag."""

    n_paths: int
    seed: int
    antithetic: bool = False

    def __post_init__(self):
        if self.n_paths < 2:
            raise InputError(f"n_paths must be >= 2, got {self.n_paths}")
        if self.antithetic and self.n_paths % 2 != 0:
            raise InputError("antithetic pairing needs an even n_paths")


@dataclass(frozen=True)
class Estimate:
    """Point estimate with its standard error and the paths used."""

    value: float
    stderr: float
    n: int


def _uniforms(seed: int, stream: int, n: int) -> np.ndarray:
    key = np.array([seed & _MASK64, stream & _MASK64], dtype=np.uint64)
    return Generator(Philox(key=key)).random(n)


def _is_symmetric_two_point(noise: DiscreteMeasure) -> bool:
    return (noise.support_size == 2
            and abs(noise.weights[0] - 0.5) <= 1e-12
            and abs(noise.weights[1] - 0.5) <= 1e-12)


def _stage_uniforms(cfg: SimConfig, stream: int) -> np.ndarray:
    if not cfg.antithetic:
        return _uniforms(cfg.seed, stream, cfg.n_paths)
    half = _uniforms(cfg.seed, stream, cfg.n_paths // 2)
    return np.concatenate([half, 1.0 - half])


def _initial_states(mu0: DiscreteMeasure, cfg: SimConfig) -> np.ndarray:
    if mu0.points.ndim != 1:
        raise InputError("simulation requires a scalar-state initial law")
    if cfg.antithetic:
        half = _uniforms(cfg.seed, 0, cfg.n_paths // 2)
        u = np.concatenate([half, half])  # antithetic pairs share the start
    else:
        u = _uniforms(cfg.seed, 0, cfg.n_paths)
    cum = np.cumsum(mu0.weights)
    return mu0.points[_kernels_py.sample_indices(cum, u)].astype(float)


def _check_antithetic(cfg: SimConfig, noises: Sequence[DiscreteMeasure]) -> None:
    if not cfg.antithetic:
        return
    for n, noise in enumerate(noises):
        if not _is_symmetric_two_point(noise):
            raise InputError(
                f"antithetic variates need symmetric two-point noise; "
                f"stage {n} is not (exact pairing would break)"
            )


def _kernel_mv_arrays(rules: Sequence, d: int):
    """(kinds, kappas, directions) when every rule fits the compiled kernel."""
    kinds = np.empty(len(rules), dtype=np.int64)
    kappas = np.zeros(len(rules))
    dirs = np.empty((len(rules), d))
    for n, rule in enumerate(rules):
        if not isinstance(rule, AffineRule):
            return None
        if rule.form == "mv" and rule.direction is not None and len(rule.direction) == d:
            kinds[n] = _kernels_py.RULE_AFFINE
            kappas[n] = rule.offset
            dirs[n] = rule.direction
        elif rule.form == "constant":
            kinds[n] = _kernels_py.RULE_CONSTANT
            if rule.direction is not None and len(rule.direction) == d:
                dirs[n] = rule.direction
            elif rule.direction is None and d == 1:
                dirs[n] = rule.offset
            else:
                return None
        else:
            return None
    return kinds, kappas, dirs


def simulate_mv_stages(model: MarketModel, rules: Sequence, mu0: DiscreteMeasure,
                       cfg: SimConfig) -> np.ndarray:
    """All wealth stages, shape (N+1, n_paths); row n is the time-n sample."""
    n_stages = model.horizon
    if len(rules) != n_stages:
        raise InputError(f"{len(rules)} rules for horizon {n_stages}")
    risks = [relative_risk(model, n) for n in range(n_stages)]
    _check_antithetic(cfg, risks)
    atoms = [np.ascontiguousarray(r.points) for r in risks]
    cumprobs = [np.cumsum(r.weights) for r in risks]
    uniforms = np.stack([_stage_uniforms(cfg, n + 1) for n in range(n_stages)]) \
        if n_stages else np.empty((0, cfg.n_paths))
    x0 = _initial_states(mu0, cfg)
    out = np.empty((n_stages + 1, cfg.n_paths))
    growths = 1.0 + model.rates

    packed = _kernel_mv_arrays(rules, model.n_assets)
    if packed is not None:
        kinds, kappas, dirs = packed
        kernels.mv_paths(x0, growths, kinds, kappas, dirs, atoms, cumprobs,
                         uniforms, out)
        return out

    # generic rules: same lookup and accumulation order, plain NumPy
    x = x0.copy()
    out[0] = x
    for n in range(n_stages):
        j = _kernels_py.sample_indices(cumprobs[n], uniforms[n])
        r = atoms[n][j]
        a = np.asarray(rules[n](x), dtype=float)
        if a.ndim == 1:
            a = a[:, None]
        pay = np.zeros_like(x)
        for k in range(model.n_assets):
            pay += a[:, k] * r[:, k]
        x = growths[n] * (x + pay)
        out[n + 1] = x
    return out


def simulate_mv(model: MarketModel, rules: Sequence, mu0: DiscreteMeasure,
                cfg: SimConfig) -> np.ndarray:
    """Terminal wealth samples (n_paths,) under the given per-stage rules."""
    return simulate_mv_stages(model, rules, mu0, cfg)[-1].copy()


def estimate_mv_objective(samples: np.ndarray, lam: float) -> Estimate:
    """Plug-in objective estimate: unbiased sample variance - 2*lam*mean.

    The standard error comes from the delta method applied to the pair
    (mean, second moment) with their sample covariance.
    """
    samples = np.asarray(samples, dtype=float)
    n = len(samples)
    if n < 2:
        raise TooFewSamples(f"need at least 2 samples, got {n}")
    m1 = float(samples.mean())
    value = float(samples.var(ddof=1)) - 2.0 * lam * m1
    cov = np.cov(np.stack([samples, samples * samples]), ddof=1)
    grad = np.array([-2.0 * m1 - 2.0 * lam, 1.0])
    var_obj = float(grad @ cov @ grad) / n
    return Estimate(value=value, stderr=math.sqrt(max(var_obj, 0.0)), n=n)


def _affine_scalar(rules: Sequence) -> tuple[np.ndarray, np.ndarray] | None:
    slopes = np.empty(len(rules))
    intercepts = np.empty(len(rules))
    for n, rule in enumerate(rules):
        if not isinstance(rule, AffineRule) or rule.direction is not None:
            return None
        slopes[n] = rule.x_coef
        intercepts[n] = rule.offset
    return slopes, intercepts


def simulate_general(spec: GeneralMDP, rules: Sequence, mu0: DiscreteMeasure,
                     cfg: SimConfig) -> Estimate:
    """Estimate of E[sum of running costs + terminal cost] + G(E[h(X_N)]).

    G is applied once to the estimated mean of h (plug-in; bias O(1/n)).
    The standard error adds the additive part's error and the delta-method
    term |G'| * stderr(mean of h), with G' from a central finite difference
    of step 1e-4 * max(1, |mean of h|).
    """
    n_stages = spec.horizon
    if len(rules) != n_stages:
        raise InputError(f"{len(rules)} rules for horizon {n_stages}")
    _check_antithetic(cfg, spec.noises)
    cumprobs = [np.cumsum(noise.weights) for noise in spec.noises]
    uniforms = [_stage_uniforms(cfg, n + 1) for n in range(n_stages)]
    x0 = _initial_states(mu0, cfg)

    cost = np.zeros(cfg.n_paths)
    hint = spec.kernel_hint
    packed = _affine_scalar(rules) if hint is not None and hint[0] == "lq" else None
    if packed is not None and all(n.points.ndim == 1 for n in spec.noises):
        _, b, d, sigma = hint
        slopes, intercepts = packed
        atoms = [np.ascontiguousarray(noise.points) for noise in spec.noises]
        states = np.empty((n_stages + 1, cfg.n_paths))
        actions = np.empty((n_stages, cfg.n_paths))
        kernels.lq_paths(x0, b, d, sigma, slopes, intercepts, atoms, cumprobs,
                         np.stack(uniforms) if n_stages else np.empty((0, cfg.n_paths)),
                         states, actions)
        for n in range(n_stages):
            cost += np.asarray(spec.stage_costs[n](states[n], actions[n]), dtype=float)
        x = states[-1]
    else:
        x = x0
        for n in range(n_stages):
            a = np.asarray(rules[n](x), dtype=float)
            cost += np.asarray(spec.stage_costs[n](x, a), dtype=float)
            j = _kernels_py.sample_indices(cumprobs[n], uniforms[n])
            r = spec.noises[n].points[j]
            x = np.asarray(spec.transitions[n](x, a, r), dtype=float)

    cost += np.asarray(spec.terminal_cost(x), dtype=float)
    h_vals = np.asarray(spec.h(x), dtype=float)
    m_h = float(h_vals.mean())
    value = float(cost.mean()) + float(spec.g(m_h))
    se_add = float(cost.std(ddof=1)) / math.sqrt(cfg.n_paths)
    se_h = float(h_vals.std(ddof=1)) / math.sqrt(cfg.n_paths)
    step = 1e-4 * max(1.0, abs(m_h))
    g_prime = (float(spec.g(m_h + step)) - float(spec.g(m_h - step))) / (2.0 * step)
    return Estimate(value=value, stderr=se_add + abs(g_prime) * se_h,
                    n=cfg.n_paths)


def samples_to_csv(samples: np.ndarray, fileobj=None) -> str:
    """One terminal value per row."""
    text = "\n".join(repr(float(v)) for v in np.asarray(samples)) + "\n"
    if fileobj is not None:
        fileobj.write(text)
    return text


def backend_name() -> str:
    """Which kernel backend is active: "compiled" or "python"."""
    return BACKEND

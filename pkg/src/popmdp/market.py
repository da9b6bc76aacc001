"""Financial market model and the per-period moment quantities.

The market has one riskless account and ``n_assets`` risky assets over a
horizon of N periods.  Everything is indexed by the decision epoch at which
a period starts: ``rates[k]`` is the simple interest earned on the riskless
account over [k, k+1) and ``returns[k]`` is the finite-support law of the
gross risky returns realized over the same period.  Where an operation takes
a 1-based period label n (see `sigma_quadratic`), period n runs from epoch
n-1 to epoch n, i.e. n = k + 1.

From each period's gross returns R~ the relative risk R = R~/(1+rate) - 1 is
formed, and from it the quantities every solver consumes: the second-moment
matrix C = E[R R^T], its inverse, the covariance, the scalar trade-off
ell = E[R]^T C^{-1} E[R], and the backward product shrink[n] of (1 - ell)
over the periods still to come.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from popmdp.errors import (
    BadProbabilities,
    InputError,
    LengthMismatch,
    NonPositiveReturn,
    SingularCovariance,
    ZeroMeanRisk,
)
from popmdp.measures import DiscreteMeasure, make_measure

# relative eigenvalue floor for positive-definiteness checks
_PD_RTOL = 1e-10


@dataclass(frozen=True)
class MarketModel:
    """Validated market data: one rate and one gross-return law per period.

    Immutable after construction; share freely across threads.
    """

    rates: np.ndarray                       # (N,)
    returns: tuple[DiscreteMeasure, ...]    # gross returns, points (m_k, d)
    n_assets: int

    @property
    def horizon(self) -> int:
        return len(self.rates)


@dataclass(frozen=True)
class StageMoments:
    """Per-period moments of the relative risk plus derived sequences.

    Arrays indexed by period start epoch k = 0..N-1: ``mean_r[k]``, ``c[k]``,
    ``c_inv[k]``, ``sigma[k]``, ``tradeoff[k]`` (the scalar ell of period
    k+1) and ``directions[k] = solve(c[k], mean_r[k])``, the vector every
    optimal portfolio rule points along.  ``shrink`` has length N+1 with
    shrink[N] = 1 and shrink[n] = shrink[n+1] * (1 - tradeoff[n]); ``bond``
    has length N+1 with bond[0] = 1 and bond[n+1] = (1 + rates[n]) * bond[n].
    """

    mean_r: np.ndarray      # (N, d)
    c: np.ndarray           # (N, d, d)
    c_inv: np.ndarray       # (N, d, d)
    sigma: np.ndarray       # (N, d, d)
    tradeoff: np.ndarray    # (N,)
    directions: np.ndarray  # (N, d)
    shrink: np.ndarray      # (N+1,)
    bond: np.ndarray        # (N+1,)

    @property
    def horizon(self) -> int:
        return len(self.tradeoff)


def _as_return_measure(entry, k: int) -> DiscreteMeasure:
    if isinstance(entry, DiscreteMeasure):
        pts, probs = entry.points, entry.weights
    elif isinstance(entry, dict):
        pts, probs = entry["points"], entry["probs"]
    else:
        pts, probs = entry
    pts = np.asarray(pts, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None]
    if pts.ndim != 2:
        raise LengthMismatch(f"period {k}: return points must be 1- or 2-D")
    probs = np.asarray(probs, dtype=float)
    if probs.shape != (pts.shape[0],):
        raise BadProbabilities(f"period {k}: {pts.shape[0]} points, {probs.shape} probs")
    if not np.all(np.isfinite(probs)) or np.any(probs < 0.0):
        raise BadProbabilities(f"period {k}: probabilities must be finite and >= 0")
    total = float(probs.sum())
    if abs(total - 1.0) > 1e-9:
        raise BadProbabilities(f"period {k}: probabilities sum to {total!r}")
    if not np.all(np.isfinite(pts)) or np.any(pts <= 0.0):
        raise NonPositiveReturn(f"period {k}: gross returns must be > 0")
    return make_measure(pts, probs)


def build_market(rates, returns) -> MarketModel:
    """Validate raw inputs and assemble a `MarketModel`.

    ``returns`` entries may be `DiscreteMeasure`s, (points, probs) pairs, or
    dicts with keys "points"/"probs"; scalar point lists are treated as a
    single risky asset.  Derives nothing beyond validation.
    """
    rates = np.asarray(rates, dtype=float)
    if rates.ndim != 1:
        raise LengthMismatch("rates must be a flat sequence")
    if len(rates) != len(returns):
        raise LengthMismatch(f"{len(rates)} rates but {len(returns)} return laws")
    if len(rates) == 0:
        raise LengthMismatch("horizon must be at least one period")
    if not np.all(np.isfinite(rates)) or np.any(rates <= -1.0):
        raise InputError("each rate must be finite and exceed -1")
    measures = tuple(_as_return_measure(entry, k) for k, entry in enumerate(returns))
    d = measures[0].points.shape[1]
    for k, m in enumerate(measures):
        if m.points.shape[1] != d:
            raise LengthMismatch(f"period {k}: {m.points.shape[1]} assets, expected {d}")
    rates = rates.copy()
    rates.flags.writeable = False
    return MarketModel(rates=rates, returns=measures, n_assets=d)


def relative_risk(model: MarketModel, k: int) -> DiscreteMeasure:
    """Law of the relative risk R = R~/(1+rates[k]) - 1 over period k."""
    gross = model.returns[k]
    pts = gross.points / (1.0 + model.rates[k]) - 1.0
    return make_measure(pts, gross.weights)


def wealth_transition(rate: float):
    """One-period wealth map (x, a, r) -> (1+rate) * (x + a . r), vectorized."""
    growth = 1.0 + rate

    def transition(x, a, r):
        return growth * (x + np.sum(np.asarray(a) * np.asarray(r), axis=-1))

    return transition


def _check_pd(mat: np.ndarray, what: str, k: int) -> None:
    eigs = np.linalg.eigvalsh(mat)
    if eigs[0] <= _PD_RTOL * max(eigs[-1], 0.0) or eigs[-1] <= 0.0:
        raise SingularCovariance(
            f"period {k}: {what} is not positive definite (eigenvalues {eigs})"
        )


def compute_moments(model: MarketModel) -> StageMoments:
    """Relative-risk moments per period plus the shrink and bond sequences.

    Raises `SingularCovariance` when a period's covariance fails the
    positive-definiteness check and `ZeroMeanRisk` when the relative risk
    has numerically zero mean (both are excluded by model assumptions).
    """
    n = model.horizon
    d = model.n_assets
    mean_r = np.empty((n, d))
    c = np.empty((n, d, d))
    c_inv = np.empty((n, d, d))
    sig = np.empty((n, d, d))
    tradeoff = np.empty(n)
    directions = np.empty((n, d))
    for k in range(n):
        risk = relative_risk(model, k)
        r, w = risk.points, risk.weights
        m1 = w @ r
        if np.linalg.norm(m1) <= 1e-12:
            raise ZeroMeanRisk(f"period {k}: relative risk has zero mean")
        cmat = (r * w[:, None]).T @ r
        cmat = 0.5 * (cmat + cmat.T)
        smat = cmat - np.outer(m1, m1)
        smat = 0.5 * (smat + smat.T)
        _check_pd(smat, "risk covariance", k)
        _check_pd(cmat, "second-moment matrix", k)
        mean_r[k] = m1
        c[k] = cmat
        sig[k] = smat
        c_inv[k] = np.linalg.inv(cmat)
        directions[k] = np.linalg.solve(cmat, m1)
        ell = float(m1 @ directions[k])
        if not 0.0 < ell < 1.0:
            raise SingularCovariance(
                f"period {k}: trade-off scalar {ell!r} outside (0, 1)"
            )
        tradeoff[k] = ell
    shrink = np.empty(n + 1)
    shrink[n] = 1.0
    for k in range(n - 1, -1, -1):
        shrink[k] = shrink[k + 1] * (1.0 - tradeoff[k])
    bond = np.empty(n + 1)
    bond[0] = 1.0
    for k in range(n):
        bond[k + 1] = (1.0 + model.rates[k]) * bond[k]
    for arr in (mean_r, c, c_inv, sig, tradeoff, directions, shrink, bond):
        arr.flags.writeable = False
    return StageMoments(mean_r=mean_r, c=c, c_inv=c_inv, sigma=sig,
                        tradeoff=tradeoff, directions=directions,
                        shrink=shrink, bond=bond)


def sigma_quadratic(moments: StageMoments, n: int) -> float:
    """Quadratic form E[R_n]^T Sigma_n^{-1} E[R_n] for 1-based period n.

    Computed by a direct linear solve; algebraically this always equals
    tradeoff / (1 - tradeoff) for the same period, which the test suite
    checks to 1e-9 relative.
    """
    if not 1 <= n <= moments.horizon:
        raise InputError(f"period {n} outside 1..{moments.horizon}")
    k = n - 1
    m1 = moments.mean_r[k]
    try:
        x = np.linalg.solve(moments.sigma[k], m1)
    except np.linalg.LinAlgError as exc:
        raise SingularCovariance(f"period {n}: covariance solve failed") from exc
    return float(m1 @ x)


# -- JSON interface ------------------------------------------------------------

def market_from_dict(doc: dict) -> MarketModel:
    """Build a model from {"rates": [...], "assets": d, "returns": [...]}

    where each returns entry is {"points": [[...], ...], "probs": [...]}.
    """
    try:
        rates = doc["rates"]
        returns = doc["returns"]
    except KeyError as exc:
        raise InputError(f"market document missing key {exc}") from exc
    model = build_market(rates, returns)
    declared = doc.get("assets")
    if declared is not None and int(declared) != model.n_assets:
        raise LengthMismatch(
            f"document declares {declared} assets, points imply {model.n_assets}"
        )
    return model


def market_to_dict(model: MarketModel) -> dict:
    return {
        "rates": model.rates.tolist(),
        "assets": model.n_assets,
        "returns": [
            {"points": m.points.tolist(), "probs": m.weights.tolist()}
            for m in model.returns
        ],
    }


def load_market(path) -> MarketModel:
    with open(path, "r", encoding="utf-8") as fh:
        return market_from_dict(json.load(fh))

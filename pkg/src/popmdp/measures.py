"""Finite-support probability measures on the state space and decision rules.

A measure is stored as a flat array of support points with matching weights.
States are scalars for the portfolio and regulator problems; vector points
are allowed so the same type can carry the noise laws (one row per atom).

Pushing a measure through one period of controlled dynamics is exact and
deterministic: every (state atom, noise atom) pair becomes a new atom of the
image measure, so the lifted transition never needs sampling or smoothing.
Atoms are kept verbatim (no merging) unless `epsilon_merge` is called.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Callable

import numpy as np

from popmdp.errors import BadWeights, EmptySupport, SupportBlowup

DEFAULT_SUPPORT_CAP = 10_000_000

# weight sums further off than this are an error; anything closer is renormalized
_WEIGHT_SUM_TOL = 1e-9


@dataclass(frozen=True)
class DiscreteMeasure:
    """Weighted particle representation of a probability measure.

    ``points`` has shape (m,) for scalar states or (m, k) for vector ones;
    ``weights`` has shape (m,), is nonnegative and sums to one.  Instances
    are immutable; build them through `make_measure`.
    """

    points: np.ndarray
    weights: np.ndarray

    @property
    def support_size(self) -> int:
        return self.points.shape[0]

    @property
    def is_dirac(self) -> bool:
        """True when all support points coincide (a point mass in law)."""
        return bool(np.all(self.points == self.points[0]))


def make_measure(points, weights) -> DiscreteMeasure:
    """Validate and assemble a `DiscreteMeasure`.

    Weights off from total mass one by less than 1e-9 are renormalized;
    anything worse raises `BadWeights`.  Duplicate points are kept as-is.
    """
    pts = np.asarray(points, dtype=float)
    w = np.asarray(weights, dtype=float)
    if pts.ndim == 0:
        pts = pts.reshape(1)
    if pts.shape[0] == 0:
        raise EmptySupport("measure needs at least one support point")
    if w.shape != (pts.shape[0],):
        raise BadWeights(f"{pts.shape[0]} points but {w.shape} weights")
    if not np.all(np.isfinite(pts)):
        raise BadWeights("support points must be finite")
    if not np.all(np.isfinite(w)) or np.any(w < 0.0):
        raise BadWeights("weights must be finite and nonnegative")
    total = float(w.sum())
    if abs(total - 1.0) > _WEIGHT_SUM_TOL:
        raise BadWeights(f"weights sum to {total!r}, not 1")
    if total != 1.0:
        w = w / total
    pts = pts.copy()
    w = w.copy()
    pts.flags.writeable = False
    w.flags.writeable = False
    return DiscreteMeasure(points=pts, weights=w)


def dirac(point) -> DiscreteMeasure:
    """Point mass at ``point``."""
    return make_measure([point] if np.ndim(point) == 0 else [point], [1.0])


def _require_scalar_states(mu: DiscreteMeasure) -> None:
    if mu.points.ndim != 1:
        raise ValueError("operation requires a scalar-state measure")


def mean(mu: DiscreteMeasure) -> float:
    _require_scalar_states(mu)
    return float(mu.weights @ mu.points)


def second_moment(mu: DiscreteMeasure) -> float:
    _require_scalar_states(mu)
    return float(mu.weights @ (mu.points * mu.points))


def variance(mu: DiscreteMeasure) -> float:
    """Second moment minus squared mean, clamped to 0 if within -1e-12."""
    m1 = mean(mu)
    v = second_moment(mu) - m1 * m1
    if -1e-12 < v < 0.0:
        return 0.0
    return v


def terminal_mv_cost(mu: DiscreteMeasure, lam: float) -> float:
    """Terminal cost of the lifted mean-variance problem: Var - 2*lam*mean."""
    return variance(mu) - 2.0 * lam * mean(mu)


@dataclass(frozen=True)
class AffineRule:
    """One-period decision rule, affine in the current state.

    Every rule evaluates as ``(offset + x_coef * x) * direction``; with
    ``direction`` None the action is the scalar ``offset + x_coef * x``.
    The ``form`` tag records the constructor for export:

    * ``"mv"``        -- portfolio form (kappa - x) * v, vector action,
    * ``"linear"``    -- scalar form m*x + t,
    * ``"constant"``  -- state-independent action.
    """

    offset: float
    x_coef: float
    direction: np.ndarray | None
    form: str

    @classmethod
    def mean_variance(cls, kappa: float, direction) -> "AffineRule":
        v = np.asarray(direction, dtype=float).reshape(-1).copy()
        v.flags.writeable = False
        return cls(offset=float(kappa), x_coef=-1.0, direction=v, form="mv")

    @classmethod
    def linear(cls, slope: float, intercept: float) -> "AffineRule":
        return cls(offset=float(intercept), x_coef=float(slope), direction=None,
                   form="linear")

    @classmethod
    def constant(cls, value) -> "AffineRule":
        if np.ndim(value) == 0:
            return cls(offset=float(value), x_coef=0.0, direction=None,
                       form="constant")
        v = np.asarray(value, dtype=float).reshape(-1).copy()
        v.flags.writeable = False
        return cls(offset=1.0, x_coef=0.0, direction=v, form="constant")

    @property
    def kappa(self) -> float:
        return self.offset

    @property
    def slope(self) -> float:
        return self.x_coef

    @property
    def intercept(self) -> float:
        return self.offset

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        coef = self.offset + self.x_coef * x
        if self.direction is None:
            return coef
        return np.multiply.outer(coef, self.direction)

    def as_dict(self) -> dict:
        d = {"form": self.form, "kappa": None, "slope": None, "intercept": None,
             "direction": None}
        if self.form == "mv":
            d["kappa"] = self.offset
            d["direction"] = [float(v) for v in self.direction]
        elif self.form == "linear":
            d["slope"] = self.x_coef
            d["intercept"] = self.offset
        else:  # constant
            if self.direction is None:
                d["intercept"] = self.offset
            else:
                d["direction"] = [float(v) for v in self.direction]
        return d


def rule_from_dict(d: dict) -> AffineRule:
    form = d.get("form")
    if form == "mv":
        return AffineRule.mean_variance(d["kappa"], d["direction"])
    if form == "linear":
        return AffineRule.linear(d["slope"], d["intercept"])
    if form == "constant":
        if d.get("direction") is not None:
            return AffineRule.constant(d["direction"])
        return AffineRule.constant(d["intercept"])
    raise ValueError(f"unknown rule form {form!r}")


@dataclass(frozen=True)
class MeasureRule:
    """Measure-dependent generator of a portfolio-form `AffineRule`.

    Realizing the generator on a law ``nu`` yields the rule
    ``(kappa_const + mean(nu) - x) * direction`` (the mean term is dropped
    when ``add_mean`` is False).  Storing the generator as plain data keeps
    the forward pass serializable and testable.
    """

    stage: int
    kappa_const: float
    add_mean: bool
    direction: np.ndarray

    def realize(self, nu: DiscreteMeasure) -> AffineRule:
        kappa = self.kappa_const + (mean(nu) if self.add_mean else 0.0)
        return AffineRule.mean_variance(kappa, self.direction)


def pushforward(
    mu: DiscreteMeasure,
    rule,
    transition: Callable,
    noise: DiscreteMeasure,
    cap: int = DEFAULT_SUPPORT_CAP,
) -> DiscreteMeasure:
    """Exact image law of one controlled period.

    The result has one atom ``transition(x_i, rule(x_i), r_j)`` of weight
    ``w_i * p_j`` per (state atom i, noise atom j) pair, ordered i-major /
    j-minor.  No atoms are merged.  Raises `SupportBlowup` before allocating
    anything when the product support would exceed ``cap``.
    """
    m = mu.support_size
    k = noise.support_size
    if m * k > cap:
        raise SupportBlowup(f"pushforward support {m}*{k} exceeds cap {cap}")
    actions = np.asarray(rule(mu.points), dtype=float)
    xs = np.repeat(mu.points, k, axis=0)
    acts = np.repeat(actions, k, axis=0)
    reps = (m,) + (1,) * (noise.points.ndim - 1)
    rs = np.tile(noise.points, reps)
    new_points = np.asarray(transition(xs, acts, rs), dtype=float)
    new_weights = (mu.weights[:, None] * noise.weights[None, :]).ravel()
    return make_measure(new_points, new_weights)


def epsilon_merge(mu: DiscreteMeasure, eps: float = 1e-12) -> DiscreteMeasure:
    """Merge scalar atoms within ``eps`` of a group representative.

    Opt-in only: exactness of the default pushforward is preserved by never
    merging automatically.  Representative = first atom of each sorted run.
    """
    _require_scalar_states(mu)
    order = np.argsort(mu.points, kind="stable")
    pts = mu.points[order]
    w = mu.weights[order]
    out_pts: list[float] = []
    out_w: list[float] = []
    for p, wi in zip(pts, w):
        if out_pts and p - out_pts[-1] <= eps:
            out_w[-1] += wi
        else:
            out_pts.append(float(p))
            out_w.append(float(wi))
    return make_measure(out_pts, out_w)


# -- serialization -------------------------------------------------------------

def measure_to_dict(mu: DiscreteMeasure) -> dict:
    return {"points": mu.points.tolist(), "weights": mu.weights.tolist()}


def measure_from_dict(doc: dict) -> DiscreteMeasure:
    return make_measure(doc["points"], doc["weights"])


def measure_to_csv(mu: DiscreteMeasure, fileobj=None) -> str:
    """Write (point, weight) rows; returns the CSV text."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    if mu.points.ndim == 1:
        writer.writerow(["point", "weight"])
        for p, w in zip(mu.points, mu.weights):
            writer.writerow([repr(float(p)), repr(float(w))])
    else:
        ncols = mu.points.shape[1]
        writer.writerow([f"x{i}" for i in range(ncols)] + ["weight"])
        for row, w in zip(mu.points, mu.weights):
            writer.writerow([repr(float(v)) for v in row] + [repr(float(w))])
    text = buf.getvalue()
    if fileobj is not None:
        fileobj.write(text)
    return text

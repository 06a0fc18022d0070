"""The parametric objective J(theta; h) in the three regimes.

    unconstrained:  J = int f(y + theta(y)) mu(dy) - phi_h(||theta||_{L_p})
    mean:           same, with theta replaced by theta - int theta dmu
    martingale:     J = int [f(y+theta(y)) + f(y-theta(y))]/2 mu(dy)
                        - phi_h(||theta||_{L_p}^2)

Atomic measures evaluate exactly; samplers use one common Monte Carlo
batch per call, shared by the pushforward integral, the norm and the
centering mean, so gradients are exact for the sampled objective.
"""

from __future__ import annotations

import enum
import math

import numpy as np

from .errors import DimensionMismatch, RegimePenaltyMismatch
from .fields import TabularField
from .measure import DiscreteMeasure, Measure
from .penalty import Penalty


class Regime(str, enum.Enum):
    UNCONSTRAINED = "unconstrained"
    MEAN = "mean"
    MARTINGALE = "martingale"

    @classmethod
    def parse(cls, value) -> "Regime":
        if isinstance(value, Regime):
            return value
        try:
            return cls(str(value))
        except ValueError:
            raise ValueError(f"unknown regime: {value!r}") from None


def required_growth(regime: Regime, p: float) -> float:
    return p / 2.0 if regime is Regime.MARTINGALE else p


def check_regime_penalty(penalty: Penalty, p: float, regime) -> None:
    """Reject penalties whose declared growth is too small for the regime."""
    regime = Regime.parse(regime)
    need = required_growth(regime, p)
    if penalty.growth_exponent < need:
        raise RegimePenaltyMismatch(
            f"regime {regime.value!r} with p={p} needs penalty growth >= {need}, "
            f"got {penalty.growth_exponent}"
        )


def _batch(measure: Measure, mc_batch, seed, batch):
    """Common evaluation points and weights; exact on atoms."""
    if batch is not None:
        pts = np.asarray(batch, dtype=float)
        return pts, np.full(pts.shape[0], 1.0 / pts.shape[0]), False
    if isinstance(measure, DiscreteMeasure):
        return measure.atoms, measure.weights, True
    pts = measure.sample(mc_batch, seed)
    return pts, np.full(pts.shape[0], 1.0 / pts.shape[0]), False


def _theta_values(field, pts, measure, exact):
    if field is None:
        return np.zeros_like(pts)
    if isinstance(field, TabularField) and exact:
        if field.shifts.shape != pts.shape:
            raise DimensionMismatch("tabular field does not match the atoms")
        return field.shifts
    theta = np.asarray(field(pts), dtype=float)
    if theta.shape != pts.shape:
        raise DimensionMismatch(f"field returned {theta.shape}, expected {pts.shape}")
    return theta


def _norm_gradient_rows(theta, w, p, norm):
    """Rows d||theta||_{L_p}/d theta_i = w_i ||theta_i||^(p-2) theta_i / N^(p-1)."""
    if norm <= 0.0:
        return np.zeros_like(theta)
    mags = np.linalg.norm(theta, axis=-1, keepdims=True)
    with np.errstate(invalid="ignore", divide="ignore"):
        rows = np.where(mags > 0.0, mags ** (p - 2.0) * theta, 0.0)
    return (w[:, None] * rows) / norm ** (p - 1.0)


def objective_core(f, pts, w, theta, h, penalty, regime, p, need_grad=False, exact=True):
    """Value (and per-point upstream gradients) of J on fixed points.

    The returned gradient rows are dJ/d theta(y_i) including the quadrature
    weights, so a backprop over sum_i <G_i, theta(x_i)> yields dJ/dparams.
    """
    regime = Regime.parse(regime)
    if h <= 0:
        raise ValueError("uncertainty level h must be positive")
    info = {"n": pts.shape[0]}

    if regime is Regime.MEAN:
        theta = theta - w @ theta

    norms = np.linalg.norm(theta, axis=-1)
    norm_p = float((w @ norms**p) ** (1.0 / p))
    kappa = 2.0 if regime is Regime.MARTINGALE else 1.0
    pen_arg = norm_p**kappa
    pen = float(penalty.rescaled(h, pen_arg))
    info["norm"] = norm_p
    info["penalty"] = pen

    if regime is Regime.MARTINGALE:
        vals = 0.5 * (
            np.asarray(f.value(pts + theta), dtype=float)
            + np.asarray(f.value(pts - theta), dtype=float)
        )
    else:
        vals = np.asarray(f.value(pts + theta), dtype=float)
    integral = float(w @ vals)
    info["integral"] = integral
    info["mc_stderr"] = None if exact else float(vals.std(ddof=1) / math.sqrt(vals.size))

    if not math.isfinite(pen):
        info["norm_violation"] = norm_p
        return -math.inf, None, info

    value = integral - pen
    if not need_grad:
        return value, None, info

    if regime is Regime.MARTINGALE:
        gplus = np.asarray(f.grad(pts + theta), dtype=float)
        gminus = np.asarray(f.grad(pts - theta), dtype=float)
        rows = 0.5 * w[:, None] * (gplus - gminus)
        # d phi_h(N^2)/d theta = phi'(N^2/h) * 2 N * dN/d theta
        pen_rows = (
            float(penalty.rescaled_derivative(h, pen_arg))
            * 2.0
            * norm_p
            * _norm_gradient_rows(theta, w, p, norm_p)
        )
        grad = rows - pen_rows
    else:
        rows = w[:, None] * np.asarray(f.grad(pts + theta), dtype=float)
        pen_rows = float(penalty.rescaled_derivative(h, pen_arg)) * _norm_gradient_rows(
            theta, w, p, norm_p
        )
        grad = rows - pen_rows
        if regime is Regime.MEAN:
            # centering Jacobian: theta_k moves every centered value by -w_k
            grad = grad - w[:, None] * grad.sum(axis=0)
    return value, grad, info


def evaluate(
    f,
    measure: Measure,
    field,
    h: float,
    penalty: Penalty,
    regime=Regime.UNCONSTRAINED,
    p: float = 2.0,
    mc_batch: int = 32768,
    seed: int = 0,
    batch=None,
):
    """J(theta; h) with diagnostics (norm, penalty paid, MC standard error).

    Infinite ball-indicator penalties yield the -inf sentinel together with
    the violating norm in the diagnostics, keeping the arithmetic total.
    """
    regime = Regime.parse(regime)
    check_regime_penalty(penalty, p, regime)
    pts, w, exact = _batch(measure, mc_batch, seed, batch)
    theta = _theta_values(field, pts, measure, exact)
    value, _, info = objective_core(
        f, pts, w, theta, h, penalty, regime, p, need_grad=False, exact=exact
    )
    info.update({"seed": seed, "h": h, "regime": regime.value})
    return value, info


def theta_gradient(
    f,
    measure: Measure,
    field,
    h: float,
    penalty: Penalty,
    regime=Regime.UNCONSTRAINED,
    p: float = 2.0,
    mc_batch: int = 32768,
    seed: int = 0,
    batch=None,
):
    """Per-point upstream gradients dJ/d theta(y_i) plus diagnostics.

    Feeding these rows to ``fields.backprop`` gives exact parameter
    gradients of the (sampled) objective.
    """
    regime = Regime.parse(regime)
    check_regime_penalty(penalty, p, regime)
    pts, w, exact = _batch(measure, mc_batch, seed, batch)
    theta = _theta_values(field, pts, measure, exact)
    value, grad, info = objective_core(
        f, pts, w, theta, h, penalty, regime, p, need_grad=True, exact=exact
    )
    info.update({"seed": seed, "h": h, "regime": regime.value, "value": value})
    return grad, info

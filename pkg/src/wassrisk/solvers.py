"""Optimizers producing the parametric risk estimate I_Theta(h)f.

Atomic baselines reduce to an n*d-dimensional concave-ish maximization
(solved by BFGS with Armijo backtracking); samplers train a feedforward
network by stochastic gradient ascent with fresh batches per step (Adam).
Every estimate is a certified lower bound of the worst-case functional.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .asymptotics import ray_optimize, steepest_ascent_field
from .errors import (
    DivergenceDetected,
    MissingLipField,
    MissingScaleLayer,
    NonFiniteObjective,
)
from .fields import MLPField, TabularField
from .measure import DiscreteMeasure, Measure
from .objective import Regime, check_regime_penalty, objective_core
from .penalty import BallPenalty, Penalty
from .results import RiskEstimate


@dataclass
class SolveOptions:
    gtol: float = 1e-8
    max_iter: int = 500
    armijo_c1: float = 1e-4
    shrink: float = 0.5
    max_backtracks: int = 60


@dataclass
class MLPArchitecture:
    depth: int = 4
    width: int = 20
    activation: str = "relu"
    scale_layer: bool = False


@dataclass
class TrainOptions:
    lr: float = 1e-3
    batch: int = 32768
    epochs: int = 1000
    seed: int = 0
    window: int = 100


def _bfgs(fun, grad, x0, opts: SolveOptions):
    """Minimize with inverse-Hessian BFGS updates and Armijo backtracking.

    Returns (x_best, f_best, iterations, flags); a failed line search stops
    the run and is reported as a flag, with the best-so-far iterate kept.
    """
    x = np.asarray(x0, dtype=float).copy()
    n = x.size
    fx = fun(x)
    if not math.isfinite(fx):
        raise NonFiniteObjective(f"objective is {fx} at the starting point")
    gx = grad(x)
    if not np.all(np.isfinite(gx)):
        raise NonFiniteObjective("gradient is non-finite at the starting point")
    eye = np.eye(n)
    H = eye.copy()
    best_x, best_f = x.copy(), fx
    flags = []
    it = 0
    for it in range(1, opts.max_iter + 1):
        if np.max(np.abs(gx)) <= opts.gtol:
            break
        d = -H @ gx
        gd = float(gx @ d)
        if gd >= 0.0:  # stale curvature; restart from steepest descent
            H = eye.copy()
            d = -gx
            gd = float(gx @ d)
            if gd >= 0.0:
                break
        t = 1.0
        ok = False
        for _ in range(opts.max_backtracks):
            fn = fun(x + t * d)
            if math.isfinite(fn) and fn <= fx + opts.armijo_c1 * t * gd:
                ok = True
                break
            t *= opts.shrink
        if not ok:
            flags.append("line_search_failure")
            break
        s = t * d
        xn = x + s
        fn = fun(xn)
        gn = grad(xn)
        if not np.all(np.isfinite(gn)):
            flags.append("non_finite_gradient")
            break
        y = gn - gx
        sy = float(s @ y)
        if sy > 1e-12 * float(np.linalg.norm(s)) * float(np.linalg.norm(y)):
            rho = 1.0 / sy
            V = eye - rho * np.outer(s, y)
            H = V @ H @ V.T + rho * np.outer(s, s)
        x, fx, gx = xn, fn, gn
        if fx < best_f:
            best_x, best_f = x.copy(), fx
    return best_x, best_f, it, flags


def solve_discrete(
    f,
    measure: DiscreteMeasure,
    h: float,
    penalty: Penalty,
    regime=Regime.UNCONSTRAINED,
    p: float = 2.0,
    init: Optional[TabularField] = None,
    opts: Optional[SolveOptions] = None,
) -> RiskEstimate:
    """Exact finite-dimensional solve over per-atom shifts.

    Maximizes sum_i a_i f(x_i + theta_i) - phi_h((sum_i a_i ||theta_i||^p)^(1/p))
    (regime variants analogous) by BFGS on the n*d shift variables.  Runs
    from the provided init (default zero) plus one restart from scaled
    steepest-ascent shifts, which guards against the flat stationary point
    at zero for compactly supported losses.
    """
    if not isinstance(measure, DiscreteMeasure):
        raise TypeError("solve_discrete requires an atomic (discrete) measure")
    regime = Regime.parse(regime)
    check_regime_penalty(penalty, p, regime)
    opts = opts or SolveOptions()
    atoms, w = measure.atoms, measure.weights
    n, d = atoms.shape

    def fun(x):
        value, _, _ = objective_core(
            f, atoms, w, x.reshape(n, d), h, penalty, regime, p, need_grad=False
        )
        return -value if math.isfinite(value) else math.inf

    def grad(x):
        _, g, _ = objective_core(
            f, atoms, w, x.reshape(n, d), h, penalty, regime, p, need_grad=True
        )
        if g is None:
            return np.full(n * d, np.nan)
        return -g.ravel()

    starts = [np.zeros(n * d) if init is None else np.asarray(init.shifts, dtype=float).ravel()]
    try:
        sa = steepest_ascent_field(f, p / (p - 1.0))(atoms)
        if np.any(sa != 0.0):
            starts.append(1e-3 * np.asarray(sa, dtype=float).ravel())
    except MissingLipField:
        pass

    best = None
    total_iters = 0
    all_flags: list[str] = []
    for x0 in starts:
        x, fx, iters, flags = _bfgs(fun, grad, x0, opts)
        total_iters += iters
        all_flags.extend(flags)
        if best is None or fx < best[1]:
            best = (x, fx)
    shifts = best[0].reshape(n, d)
    if regime is Regime.MEAN:
        shifts = shifts - w @ shifts
    value, _, info = objective_core(f, atoms, w, shifts, h, penalty, regime, p)
    return RiskEstimate(
        value=value,
        h=h,
        regime=regime.value,
        penalty_paid=info["penalty"],
        iterations=total_iters,
        seed=measure.seed,
        mc_batch=None,
        mc_stderr=None,
        field=TabularField(shifts, atoms),
        flags=tuple(dict.fromkeys(all_flags)),
        diagnostics={"norm": info["norm"], "integral": info["integral"]},
    )


class _Adam:
    """Adam with the standard moment estimates (b1=0.9, b2=0.999, eps=1e-8)."""

    def __init__(self, params, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = lr
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, params, grads):
        self.t += 1
        b1t = 1.0 - self.beta1**self.t
        b2t = 1.0 - self.beta2**self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / b1t) / (np.sqrt(v / b2t) + self.eps)


def train_mlp(
    f,
    measure: Measure,
    h: float,
    penalty: Penalty,
    regime=Regime.UNCONSTRAINED,
    arch: Optional[MLPArchitecture] = None,
    opts: Optional[TrainOptions] = None,
    p: float = 2.0,
) -> RiskEstimate:
    """Stochastic gradient ascent on the network parameters (Adam).

    Each step draws a fresh batch; the pushforward integral, the norm and
    the centering mean all reuse that batch.  The reported value is the best
    moving average of the objective over a trailing window (default 100
    epochs), with the window standard error as ``mc_stderr``; raw per-epoch
    values are kept in ``diagnostics["log"]``.
    """
    regime = Regime.parse(regime)
    check_regime_penalty(penalty, p, regime)
    arch = arch or MLPArchitecture()
    opts = opts or TrainOptions()
    mlp = MLPField(
        measure.dim,
        arch.depth,
        arch.width,
        activation=arch.activation,
        scale=1.0 if arch.scale_layer else None,
        seed=opts.seed,
    )
    params = mlp.parameters()
    adam = _Adam(params, opts.lr)
    window = max(1, min(opts.window, opts.epochs))
    raw = np.empty(opts.epochs)
    log = []
    best_ma = -math.inf
    best_epoch = -1
    ball_radius = penalty.a * h if isinstance(penalty, BallPenalty) else None
    if ball_radius is not None and regime is Regime.MARTINGALE:
        ball_radius = math.sqrt(ball_radius)

    for epoch in range(opts.epochs):
        pts = measure.sample(opts.batch, seed_offset=(opts.seed, epoch))
        wts = np.full(pts.shape[0], 1.0 / pts.shape[0])
        theta = mlp(pts)
        value, grad, info = objective_core(
            f, pts, wts, theta, h, penalty, regime, p, need_grad=True, exact=False
        )
        if not math.isfinite(value):
            if ball_radius is not None:
                # infeasible ball step: shrink the scale layer to the boundary
                # (restores feasibility before the gradient step)
                if mlp.scale_arr is not None and info["norm"] > 0:
                    mlp.scale_arr *= ball_radius / info["norm"]
                    theta = mlp(pts)
                    value, grad, info = objective_core(
                        f, pts, wts, theta, h, penalty, regime, p, need_grad=True, exact=False
                    )
                else:
                    raise DivergenceDetected(
                        "ball-indicator penalty violated and no scale layer to project"
                    )
            if not math.isfinite(value):
                raise DivergenceDetected(f"objective became {value} at epoch {epoch}")
        backup = None
        if ball_radius is not None and mlp.scale_arr is None:
            backup = [q.copy() for q in params]
        grads = mlp.backprop(pts, -grad).as_list()
        adam.step(params, grads)
        if ball_radius is not None:
            new_norm_p = float(
                (wts @ np.linalg.norm(mlp(pts), axis=-1) ** p) ** (1.0 / p)
            )
            if new_norm_p > ball_radius:
                if mlp.scale_arr is not None:
                    mlp.scale_arr *= ball_radius / new_norm_p
                elif backup is not None:  # reject the step
                    for q, b in zip(params, backup):
                        q[...] = b
        raw[epoch] = value
        ma = float(raw[max(0, epoch - window + 1) : epoch + 1].mean()) if epoch + 1 >= window else math.nan
        if epoch + 1 >= window and ma > best_ma:
            best_ma = ma
            best_epoch = epoch
        log.append((epoch, value, ma, info["norm"], info["penalty"]))

    wvals = raw[best_epoch - window + 1 : best_epoch + 1]
    stderr = float(wvals.std(ddof=1) / math.sqrt(window)) if window > 1 else None
    return RiskEstimate(
        value=best_ma,
        h=h,
        regime=regime.value,
        penalty_paid=float(log[best_epoch][4]),
        iterations=opts.epochs,
        seed=opts.seed,
        mc_batch=opts.batch,
        mc_stderr=stderr,
        field=mlp,
        flags=(),
        diagnostics={"log": log, "best_epoch": best_epoch, "window": window},
    )


@dataclass
class TransferOptions:
    batch: int = 4096
    seed: int = 0
    method: str = "golden"  # or "adam"
    adam_epochs: int = 300
    adam_lr: float = 1e-2


def transfer_retrain(
    pretrained: MLPField,
    f,
    measure_new: Measure,
    h: float,
    penalty: Penalty,
    regime=Regime.UNCONSTRAINED,
    p: float = 2.0,
    opts: Optional[TransferOptions] = None,
    compare_full: Optional[TrainOptions] = None,
) -> RiskEstimate:
    """Reoptimize only the scalar output layer of a pretrained network.

    The inner affine maps stay frozen; the scale is found by a golden-section
    search with common random numbers (both signs of the field are tried), or
    by Adam on the single parameter.  With ``compare_full`` a full retrain
    runs as well and the excess-value ratio and wall times are reported.
    """
    if pretrained.scale_arr is None:
        raise MissingScaleLayer("transfer retraining needs a pretrained scale layer")
    regime = Regime.parse(regime)
    check_regime_penalty(penalty, p, regime)
    opts = opts or TransferOptions()
    inner = pretrained.copy()
    inner.scale_arr = None

    t0 = time.perf_counter()
    if opts.method == "golden":
        best = None
        for sign in (1.0, -1.0):
            probe = inner if sign > 0 else _negated_mlp(inner)
            est = ray_optimize(
                f, measure_new, probe, h, penalty, regime, p=p,
                mc_batch=opts.batch, seed=opts.seed,
            )
            if best is None or est.value > best[0].value:
                best = (est, sign)
        est, sign = best
        c_new = sign * (est.lambda_star or 0.0)
    elif opts.method == "adam":
        est, c_new = _adam_scale(
            f, measure_new, inner, h, penalty, regime, p, opts
        )
    else:
        raise ValueError(f"unknown transfer method: {opts.method!r}")
    partial_time = time.perf_counter() - t0

    tuned = pretrained.copy()
    tuned.scale_arr = np.asarray(float(c_new))
    est = replace(est, field=tuned)
    est.diagnostics["scale"] = float(c_new)
    est.diagnostics["wall_time"] = partial_time

    if compare_full is not None:
        arch = MLPArchitecture(
            depth=pretrained.depth,
            width=pretrained.width,
            activation=pretrained.activation,
            scale_layer=True,
        )
        t1 = time.perf_counter()
        full = train_mlp(f, measure_new, h, penalty, regime, arch, compare_full, p=p)
        full_time = time.perf_counter() - t1
        est.diagnostics["full_value"] = full.value
        est.diagnostics["full_stderr"] = full.mc_stderr
        est.diagnostics["full_wall_time"] = full_time
    return est


def _negated_mlp(mlp: MLPField) -> MLPField:
    out = mlp.copy()
    out.weights[-1] = -out.weights[-1]
    out.biases[-1] = -out.biases[-1]
    return out


def _adam_scale(f, measure, inner, h, penalty, regime, p, opts: TransferOptions):
    scale = np.asarray(1.0)
    adam = _Adam([scale], opts.adam_lr)
    value = -math.inf
    for epoch in range(opts.adam_epochs):
        pts = measure.sample(opts.batch, seed_offset=(opts.seed, epoch))
        wts = np.full(pts.shape[0], 1.0 / pts.shape[0])
        base = np.asarray(inner(pts), dtype=float)
        theta = float(scale) * base
        value, grad, _ = objective_core(
            f, pts, wts, theta, h, penalty, regime, p, need_grad=True, exact=False
        )
        if not math.isfinite(value):
            raise DivergenceDetected(f"scale training diverged at epoch {epoch}")
        dscale = -float(np.sum(grad * base))
        adam.step([scale], [np.asarray(dscale)])
    est = RiskEstimate(
        value=value,
        h=h,
        regime=Regime.parse(regime).value,
        iterations=opts.adam_epochs,
        seed=opts.seed,
        mc_batch=opts.batch,
        lambda_star=abs(float(scale)),
    )
    return est, float(scale)

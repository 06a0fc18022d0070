"""Closed-form first-order expansions and asymptotically optimal directions.

As the uncertainty level h drops to zero,

    unconstrained:  (I(h)f - mu f)/h -> phi*( || |f|_Lip ||_{L_q(mu)} ),
                    q = p/(p-1), optimizer theta(x) = v(x) |f|_Lip(x)^(q-1)
    mean (p = 2):   phi*( ( int ||grad f - mean grad f||^2 dmu )^(1/2) ),
                    optimizer theta(x) = grad f(x) - int grad f dmu
    martingale:     phi*( (1/2) ( int |hess f|_Max^(p/(p-2)) dmu )^((p-2)/p) ),
                    p > 2, optimizer theta(x) = v(x) |hess f(x)|_Max^(1/(p-2))

with v the direction of steepest ascent (resp. maximal curvature).
"""

from __future__ import annotations

import math

import numpy as np

from .errors import (
    ExponentUndefined,
    MissingGradient,
    MissingLipField,
    NoHessian,
    RegimeRequiresHessian,
    RegimeRequiresP2,
)
from .fields import FunctionField, ScaledField
from .measure import DiscreteMeasure, Measure, rng_stream
from .objective import Regime, check_regime_penalty, objective_core, _batch, _theta_values
from .penalty import Penalty, phi_star
from .results import ExpansionReport, RiskEstimate

_INV_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


def steepest_ascent_field(f, q: float) -> FunctionField:
    """theta(x) = v(x) * (|f|_Lip(x))^(q-1); equals grad f for C^1 f and q = 2."""
    if f.lip_field is None and f.gradient is None:
        raise MissingLipField(f"loss {f.name!r} has neither lip_field nor gradient")
    if f.ascent_dir is None and f.gradient is None:
        raise MissingLipField(f"loss {f.name!r} has neither ascent_dir nor gradient")

    def fn(x):
        lip = np.maximum(np.asarray(f.lip(x), dtype=float), 0.0)
        return np.asarray(f.ascent(x), dtype=float) * lip[..., None] ** (q - 1.0)

    return FunctionField(fn, f.dim, name=f"steepest_ascent(q={q})")


def hessian_max(f, x, tol: float = 1e-10, max_iter: int = 2000):
    """Positive part of the top Hessian eigenvalue at x, with its direction.

    Power iteration on S + sigma*I through the hessian_vec interface, with
    sigma a Gershgorin bound assembled from d probe products; convergence is
    measured on the Rayleigh quotient.  Returns (0, zero vector) when the
    Hessian is negative semidefinite (the supremum is attained at w = 0).
    """
    if f.hessian_vec is None:
        raise NoHessian(f"loss {f.name!r} exposes no hessian_vec")
    x = np.asarray(x, dtype=float).ravel()
    d = x.size

    def hv(w):
        return np.asarray(f.hessian_vec(x, w), dtype=float).ravel()

    cols = np.stack([hv(e) for e in np.eye(d)], axis=1)
    sigma = float(np.max(np.abs(cols).sum(axis=0)))
    if sigma == 0.0:
        return 0.0, np.zeros(d)
    w = rng_stream(0xA5E1, d).standard_normal(d)
    w /= np.linalg.norm(w)
    ray_prev = math.inf
    for _ in range(max_iter):
        u = hv(w) + sigma * w
        nu = float(np.linalg.norm(u))
        if nu == 0.0:
            return 0.0, np.zeros(d)
        w = u / nu
        ray = float(w @ hv(w))
        if abs(ray - ray_prev) <= tol * max(1.0, abs(ray)):
            break
        ray_prev = ray
    if ray <= 0.0:
        return 0.0, np.zeros(d)
    return ray, w


def _max_curvature_field(f, expo: float) -> FunctionField:
    def fn(x):
        x = np.asarray(x, dtype=float)
        flat = x.reshape(-1, x.shape[-1])
        out = np.zeros_like(flat)
        for i, xi in enumerate(flat):
            val, direc = hessian_max(f, xi)
            out[i] = direc * val**expo
        return out.reshape(x.shape)

    return FunctionField(fn, f.dim, name="max_curvature")


def first_order_coefficient(
    f,
    measure: Measure,
    p: float,
    penalty: Penalty,
    regime=Regime.UNCONSTRAINED,
    mc_batch: int = 65536,
    seed: int = 0,
) -> ExpansionReport:
    """Expansion coefficient phi*(inner_norm) with the optimal direction field.

    Exact on atomic measures; Monte Carlo (with the inner norm's standard
    error reported, expansion tagged approximate) on samplers.
    """
    regime = Regime.parse(regime)
    check_regime_penalty(penalty, p, regime)
    q = p / (p - 1.0)
    exact = isinstance(measure, DiscreteMeasure)
    if exact:
        pts, w = measure.atoms, measure.weights
    else:
        pts = measure.sample(mc_batch, seed)
        w = np.full(pts.shape[0], 1.0 / pts.shape[0])

    stderr = None
    if regime is Regime.UNCONSTRAINED:
        lips = np.maximum(np.asarray(f.lip(pts), dtype=float), 0.0)
        powq = lips**q
        m = float(w @ powq)
        inner = m ** (1.0 / q)
        if not exact and m > 0:
            se_m = float(powq.std(ddof=1) / math.sqrt(powq.size))
            stderr = se_m * inner / (q * m)
        direction = steepest_ascent_field(f, q)
    elif regime is Regime.MEAN:
        if p != 2:
            raise RegimeRequiresP2(f"mean-constrained expansion needs p = 2, got p = {p}")
        if f.gradient is None:
            raise MissingGradient(f"mean-constrained expansion needs grad of {f.name!r}")
        grads = np.asarray(f.gradient(pts), dtype=float)
        mean_grad = w @ grads
        sq = np.sum((grads - mean_grad) ** 2, axis=-1)
        m = float(w @ sq)
        inner = math.sqrt(m)
        if not exact and m > 0:
            se_m = float(sq.std(ddof=1) / math.sqrt(sq.size))
            stderr = se_m / (2.0 * inner)

        def centered(x, _m=mean_grad):
            return np.asarray(f.gradient(x), dtype=float) - _m

        direction = FunctionField(centered, f.dim, name="centered_gradient")
    elif regime is Regime.MARTINGALE:
        if p <= 2:
            raise ExponentUndefined(
                f"martingale exponent p/(p-2) needs p > 2, got p = {p}"
            )
        if f.hessian_vec is None:
            raise RegimeRequiresHessian(f"martingale expansion needs hessian_vec of {f.name!r}")
        e = p / (p - 2.0)
        hmax = np.array([hessian_max(f, xi)[0] for xi in pts])
        powe = hmax**e
        m = float(w @ powe)
        inner = 0.5 * m ** (1.0 / e)
        if not exact and m > 0:
            se_m = float(powe.std(ddof=1) / math.sqrt(powe.size))
            stderr = 0.5 * se_m * m ** (1.0 / e - 1.0) / e
        direction = _max_curvature_field(f, 1.0 / (p - 2.0))
    else:  # pragma: no cover
        raise ValueError(regime)

    return ExpansionReport(
        coefficient=phi_star(penalty, inner),
        inner_norm=inner,
        regime=regime.value,
        p=p,
        direction=direction,
        inner_stderr=stderr,
        approximate=not exact,
    )


def ray_optimize(
    f,
    measure: Measure,
    theta0,
    h: float,
    penalty: Penalty,
    regime=Regime.UNCONSTRAINED,
    p: float = 2.0,
    mc_batch: int = 32768,
    seed: int = 0,
    lam_tol: float = 1e-8,
    max_expand: int = 250,
) -> RiskEstimate:
    """Maximize lambda -> J(lambda * theta0; h) over lambda >= 0.

    Bracketing by doubling, then golden-section refinement: to relative
    tolerance ``lam_tol`` on the exact path, or until the value spread falls
    below 3x the Monte Carlo standard error on the sampled path.  Sampler
    measures use one fixed batch for all probes (common random numbers).
    """
    regime = Regime.parse(regime)
    check_regime_penalty(penalty, p, regime)
    pts, w, exact = _batch(measure, mc_batch, seed, None)
    tv = _theta_values(theta0, pts, measure, exact)
    evals = 0

    def g(lam):
        nonlocal evals
        evals += 1
        value, _, info = objective_core(
            f, pts, w, lam * tv, h, penalty, regime, p, need_grad=False, exact=exact
        )
        return value, info

    v0, info0 = g(0.0)
    norm0 = float((w @ np.linalg.norm(tv, axis=-1) ** p) ** (1.0 / p))
    flags = []

    def estimate(lam, value, info):
        return RiskEstimate(
            value=value,
            h=h,
            regime=regime.value,
            penalty_paid=info.get("penalty", 0.0),
            iterations=evals,
            seed=seed,
            mc_batch=None if exact else pts.shape[0],
            mc_stderr=info.get("mc_stderr"),
            field=ScaledField(theta0, lam),
            lambda_star=lam,
            flags=tuple(flags),
            diagnostics={"baseline": v0, "norm": info.get("norm", 0.0)},
        )

    if norm0 == 0.0 or not np.isfinite(norm0):
        return estimate(0.0, v0, info0)

    lam = h / (1024.0 * norm0)
    v, info = g(lam)
    if v < v0:
        for _ in range(60):
            lam /= 4.0
            v, info = g(lam)
            if v >= v0:
                break
        else:
            return estimate(0.0, v0, info0)

    lams = [0.0, lam]
    vals = [v0, v]
    while len(lams) < max_expand:
        nxt = lams[-1] * 2.0
        vn, _ = g(nxt)
        lams.append(nxt)
        vals.append(vn)
        if vn < vals[-2]:
            break
    else:
        flags.append("no_bracket")
    lo, hi = lams[-3], lams[-1]

    x1 = hi - _INV_GOLDEN * (hi - lo)
    x2 = lo + _INV_GOLDEN * (hi - lo)
    (g1, i1), (g2, i2) = g(x1), g(x2)
    se = (i1.get("mc_stderr") or 0.0) if not exact else 0.0
    while hi - lo > lam_tol * max(1.0, hi):
        if not exact and abs(g1 - g2) <= 3.0 * se and hi - lo <= 1e-2 * max(1.0, hi):
            break
        if g1 >= g2:
            hi, x2, g2, i2 = x2, x1, g1, i1
            x1 = hi - _INV_GOLDEN * (hi - lo)
            g1, i1 = g(x1)
        else:
            lo, x1, g1, i1 = x1, x2, g2, i2
            x2 = lo + _INV_GOLDEN * (hi - lo)
            g2, i2 = g(x2)
    lam_best, v_best, info_best = (x1, g1, i1) if g1 >= g2 else (x2, g2, i2)
    if v0 >= v_best:
        return estimate(0.0, v0, info0)
    return estimate(lam_best, v_best, info_best)

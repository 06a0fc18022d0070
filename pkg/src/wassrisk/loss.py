"""Loss/payoff functions with derivative information.

Conventions: points live on the last axis, so ``value`` maps an array of
shape (..., d) to (...), ``gradient`` and ``ascent_dir`` preserve the
shape, ``lip_field`` returns (...).  ``lip_p_constant`` is the constant
L_f of the polynomially-weighted Lipschitz bound

    |f(x1) - f(x2)| <= L_f (1 + max(||x1||, ||x2||))**(p-1) ||x1 - x2||,

which implies |f(x)| <= (|f(0)| + L_f)(1 + ||x||)**p.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import BadStrikes, MissingGradient, MissingLipField

_ZERO_DIR_TOL = 1e-12


def _unit_or_zero(g: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(g, axis=-1, keepdims=True)
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.where(norms > _ZERO_DIR_TOL, g / norms, 0.0)
    return out


@dataclass
class LossFunction:
    """A loss f with optional derivative data.

    gradient / hessian_vec / lip_field / ascent_dir may be None; ``grad``,
    ``lip`` and ``ascent`` fall back to finite differences or to the
    gradient-based defaults where possible.
    """

    value: Callable[[np.ndarray], np.ndarray]
    dim: int
    gradient: Optional[Callable[[np.ndarray], np.ndarray]] = None
    hessian_vec: Optional[Callable[[np.ndarray, np.ndarray], np.ndarray]] = None
    lip_field: Optional[Callable[[np.ndarray], np.ndarray]] = None
    ascent_dir: Optional[Callable[[np.ndarray], np.ndarray]] = None
    lip_p_constant: float = 0.0
    fd_step: Optional[float] = None
    name: str = "custom"

    def grad(self, x: np.ndarray) -> np.ndarray:
        if self.gradient is not None:
            return np.asarray(self.gradient(x), dtype=float)
        if self.fd_step is not None:
            return fd_gradient(self, x, self.fd_step)
        raise MissingGradient(
            f"loss {self.name!r} has no analytic gradient and finite differences are disabled"
        )

    def lip(self, x: np.ndarray) -> np.ndarray:
        """Local Lipschitz constant |f|_Lip; equals ||grad f|| where f is C^1."""
        if self.lip_field is not None:
            return np.asarray(self.lip_field(x), dtype=float)
        if self.gradient is not None:
            return np.linalg.norm(self.gradient(x), axis=-1)
        return _fd_lip(self, x)

    def ascent(self, x: np.ndarray) -> np.ndarray:
        """Measurable direction of steepest ascent (unit or zero vectors)."""
        if self.ascent_dir is not None:
            return np.asarray(self.ascent_dir(x), dtype=float)
        if self.gradient is not None:
            return _unit_or_zero(np.asarray(self.gradient(x), dtype=float))
        raise MissingLipField(
            f"loss {self.name!r} exposes neither an ascent direction nor a gradient"
        )


def fd_gradient(f: LossFunction, x: np.ndarray, step: float) -> np.ndarray:
    """Central finite differences per coordinate."""
    x = np.asarray(x, dtype=float)
    g = np.empty_like(x)
    d = x.shape[-1]
    for j in range(d):
        e = np.zeros(d)
        e[j] = step
        g[..., j] = (np.asarray(f.value(x + e)) - np.asarray(f.value(x - e))) / (2.0 * step)
    return g


def _fd_directions(dim: int, count: int = 64) -> np.ndarray:
    if dim == 1:
        return np.array([[1.0], [-1.0]])
    if dim == 2:
        ang = np.linspace(0.0, 2.0 * np.pi, count, endpoint=False)
        return np.stack([np.cos(ang), np.sin(ang)], axis=1)
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([0x11D5, dim])))
    dirs = rng.standard_normal((count, dim))
    return dirs / np.linalg.norm(dirs, axis=1, keepdims=True)


def _fd_lip(f: LossFunction, x: np.ndarray, step: float = 1e-4) -> np.ndarray:
    # Approximate sup over directions of the one-sided difference quotient;
    # exact fields must be user-supplied for kinked losses.
    x = np.asarray(x, dtype=float)
    base = np.asarray(f.value(x), dtype=float)
    best = np.zeros_like(base)
    for u in _fd_directions(x.shape[-1]):
        best = np.maximum(best, (np.asarray(f.value(x + step * u)) - base) / step)
    return np.maximum(best, 0.0)


def constant_loss(level: float, dim: int = 1) -> LossFunction:
    def value(x):
        x = np.asarray(x, dtype=float)
        return np.full(x.shape[:-1], float(level))

    return LossFunction(
        value=value,
        dim=dim,
        gradient=lambda x: np.zeros_like(np.asarray(x, dtype=float)),
        hessian_vec=lambda x, v: np.zeros_like(np.asarray(v, dtype=float)),
        lip_field=lambda x: np.zeros(np.asarray(x).shape[:-1]),
        ascent_dir=lambda x: np.zeros_like(np.asarray(x, dtype=float)),
        lip_p_constant=0.0,
        name="constant",
    )


def linear_loss(c) -> LossFunction:
    """f(x) = <c, x>."""
    c = np.asarray(c, dtype=float).ravel()
    nc = float(np.linalg.norm(c))
    unit = c / nc if nc > _ZERO_DIR_TOL else np.zeros_like(c)

    return LossFunction(
        value=lambda x: np.asarray(x, dtype=float) @ c,
        dim=c.size,
        gradient=lambda x: np.broadcast_to(c, np.asarray(x).shape).copy(),
        hessian_vec=lambda x, v: np.zeros_like(np.asarray(v, dtype=float)),
        lip_field=lambda x: np.full(np.asarray(x).shape[:-1], nc),
        ascent_dir=lambda x: np.broadcast_to(unit, np.asarray(x).shape).copy(),
        lip_p_constant=nc,
        name="linear",
    )


def quadratic_loss(dim: int = 2) -> LossFunction:
    """f(x) = ||x||^2 / 2; Hessian is the identity."""

    def value(x):
        x = np.asarray(x, dtype=float)
        return 0.5 * np.sum(x * x, axis=-1)

    return LossFunction(
        value=value,
        dim=dim,
        gradient=lambda x: np.asarray(x, dtype=float).copy(),
        hessian_vec=lambda x, v: np.asarray(v, dtype=float).copy(),
        lip_field=lambda x: np.linalg.norm(np.asarray(x, dtype=float), axis=-1),
        ascent_dir=lambda x: _unit_or_zero(np.asarray(x, dtype=float)),
        lip_p_constant=1.0,
        name="quadratic",
    )


def bump_loss(c: float, r: float, center) -> LossFunction:
    """Compactly supported Gaussian-kernel bump.

    f(x) = c * exp(1 + r^2 / (||x - center||^2 - r^2)) inside the open ball
    of radius r around the center, 0 outside; value and gradient both decay
    to 0 at the boundary.  c is the peak level (attained at the center).
    """
    if c <= 0 or r <= 0:
        raise ValueError("bump loss requires c > 0 and r > 0")
    center = np.asarray(center, dtype=float).ravel()
    dim = center.size
    r2 = r * r

    def _parts(x):
        x = np.asarray(x, dtype=float)
        dx = x - center
        s = np.sum(dx * dx, axis=-1)
        return dx, s

    def value(x):
        _, s = _parts(x)
        with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
            expo = np.where(s < r2, 1.0 + r2 / (s - r2), -np.inf)
        return c * np.exp(expo)

    def _g1(s):
        # d/ds of c*exp(1 + r2/(s - r2)); underflows to 0 at the boundary
        with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
            e = np.where(s < r2, np.exp(1.0 + r2 / (s - r2)), 0.0)
            out = np.where(s < r2, -c * r2 * e / (s - r2) ** 2, 0.0)
        return np.nan_to_num(out, nan=0.0, posinf=0.0, neginf=0.0)

    def _g2(s):
        with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
            e = np.where(s < r2, np.exp(1.0 + r2 / (s - r2)), 0.0)
            out = np.where(
                s < r2,
                c * e * (r2 * r2 / (s - r2) ** 4 + 2.0 * r2 / (s - r2) ** 3),
                0.0,
            )
        return np.nan_to_num(out, nan=0.0, posinf=0.0, neginf=0.0)

    def gradient(x):
        dx, s = _parts(x)
        return 2.0 * _g1(s)[..., None] * dx

    def hessian_vec(x, v):
        dx, s = _parts(x)
        v = np.asarray(v, dtype=float)
        dot = np.sum(dx * v, axis=-1, keepdims=True)
        return 2.0 * _g1(s)[..., None] * v + 4.0 * _g2(s)[..., None] * dot * dx

    # sup ||grad f|| over the radial profile, on a fine grid
    rho = np.linspace(1e-9, r * (1.0 - 1e-9), 8192)
    grad_mag = 2.0 * np.abs(_g1(rho * rho)) * rho
    lip_const = float(grad_mag.max())

    return LossFunction(
        value=value,
        dim=dim,
        gradient=gradient,
        hessian_vec=hessian_vec,
        lip_p_constant=lip_const,
        name=f"bump(c={c},r={r})",
    )


def sum_loss(parts, dim: Optional[int] = None) -> LossFunction:
    """Pointwise sum of losses; gradients/Hessians sum where all parts have them."""
    parts = list(parts)
    if not parts:
        if dim is None:
            raise ValueError("empty sum_loss needs an explicit dim")
        return constant_loss(0.0, dim=dim)
    d = parts[0].dim
    if any(p.dim != d for p in parts):
        raise ValueError("sum_loss parts must share a dimension")

    def value(x):
        return sum(np.asarray(p.value(x), dtype=float) for p in parts)

    gradient = None
    if all(p.gradient is not None for p in parts):
        def gradient(x):
            return sum(np.asarray(p.gradient(x), dtype=float) for p in parts)

    hessian_vec = None
    if all(p.hessian_vec is not None for p in parts):
        def hessian_vec(x, v):
            return sum(np.asarray(p.hessian_vec(x, v), dtype=float) for p in parts)

    return LossFunction(
        value=value,
        dim=d,
        gradient=gradient,
        hessian_vec=hessian_vec,
        lip_p_constant=float(sum(p.lip_p_constant for p in parts)),
        name="sum(" + ",".join(p.name for p in parts) + ")",
    )


def negate_loss(f: LossFunction) -> LossFunction:
    """-f.  Lip/ascent fields are rebuilt from the (negated) gradient defaults."""
    gradient = None
    if f.gradient is not None:
        def gradient(x):
            return -np.asarray(f.gradient(x), dtype=float)

    hessian_vec = None
    if f.hessian_vec is not None:
        def hessian_vec(x, v):
            return -np.asarray(f.hessian_vec(x, v), dtype=float)

    return LossFunction(
        value=lambda x: -np.asarray(f.value(x), dtype=float),
        dim=f.dim,
        gradient=gradient,
        hessian_vec=hessian_vec,
        lip_p_constant=f.lip_p_constant,
        fd_step=f.fd_step,
        name=f"neg({f.name})",
    )


def call_loss(K: float) -> LossFunction:
    """European call payoff (x - K)^+ on R.

    |f|_Lip is 0 left of the strike and 1 from the strike on, and the
    steepest-ascent direction is the indicator of [K, inf) -- this covers
    reference measures that put mass on the kink itself.
    """
    K = float(K)

    def value(x):
        return np.maximum(np.asarray(x, dtype=float)[..., 0] - K, 0.0)

    def indicator(x):
        return (np.asarray(x, dtype=float)[..., 0] >= K).astype(float)

    return LossFunction(
        value=value,
        dim=1,
        gradient=lambda x: indicator(x)[..., None],
        lip_field=indicator,
        ascent_dir=lambda x: indicator(x)[..., None],
        lip_p_constant=1.0,
        name=f"call(K={K})",
    )


def _hinge(t, eps):
    if eps == 0.0:
        return np.maximum(t, 0.0)
    return np.where(t <= -eps, 0.0, np.where(t >= eps, t, (t + eps) ** 2 / (4.0 * eps)))


def _hinge_d(t, eps):
    if eps == 0.0:
        return (t >= 0.0).astype(float)
    return np.where(t <= -eps, 0.0, np.where(t >= eps, 1.0, (t + eps) / (2.0 * eps)))


def _hinge_dd(t, eps):
    if eps == 0.0:
        return np.zeros_like(np.asarray(t, dtype=float))
    return np.where((t > -eps) & (t < eps), 1.0 / (2.0 * eps), 0.0)


def bull_spread_on_returns(K1: float, K2: float, smoothing: float = 0.0) -> LossFunction:
    """Bull spread (x-K1)^+ - (x-K2)^+ composed with exp, on log-returns.

    With smoothing eps > 0 each kink (x-K)^+ becomes the blend
    eps*s((x-K)/eps), s(t) = 0 for t <= -1, t for t >= 1 and the Hermite
    polynomial (t+1)^2/4 in between, matching value and first derivative at
    both ends; the payoff changes by at most eps near each strike.
    """
    if K1 <= 0 or K1 >= K2:
        raise BadStrikes(f"strikes must satisfy 0 < K1 < K2, got K1={K1}, K2={K2}")
    if smoothing < 0:
        raise ValueError("smoothing must be nonnegative")
    eps = float(smoothing)

    def _x(y):
        return np.exp(np.asarray(y, dtype=float)[..., 0])

    def value(y):
        x = _x(y)
        return _hinge(x - K1, eps) - _hinge(x - K2, eps)

    def _d1(y):
        x = _x(y)
        return (_hinge_d(x - K1, eps) - _hinge_d(x - K2, eps)) * x

    def gradient(y):
        return _d1(y)[..., None]

    def hessian_vec(y, v):
        x = _x(y)
        d2 = (_hinge_dd(x - K1, eps) - _hinge_dd(x - K2, eps)) * x * x + (
            _hinge_d(x - K1, eps) - _hinge_d(x - K2, eps)
        ) * x
        return d2[..., None] * np.asarray(v, dtype=float)

    def lip_field(y):
        return np.abs(_d1(y))

    def ascent_dir(y):
        d = _d1(y)
        return np.where(np.abs(d) > _ZERO_DIR_TOL, np.sign(d), 0.0)[..., None]

    return LossFunction(
        value=value,
        dim=1,
        gradient=gradient,
        hessian_vec=hessian_vec,
        lip_field=lip_field,
        ascent_dir=ascent_dir,
        lip_p_constant=K2 + eps,
        name=f"bull_spread_returns(K1={K1},K2={K2},eps={eps})",
    )

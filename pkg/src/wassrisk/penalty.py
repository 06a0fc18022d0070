"""Penalty functions, uncertainty rescaling and convex conjugates.

A penalty is a nondecreasing function phi: [0, inf) -> [0, inf] with
phi(0) = 0.  Rescaling by an uncertainty level h > 0 gives

    phi_h(v) = h * phi(v / h),

and the convex conjugate (restricted to nonnegative arguments) is

    phi*(u) = sup_{v >= 0} (u*v - phi(v)).

Every penalty declares a growth exponent gamma > 0 with
liminf_{v->inf} phi(v)/v**gamma > 0; the objective constructors check
gamma against the integrability order p of the problem (gamma >= p for
the unconstrained/mean regimes, gamma >= p/2 for the martingale regime),
which keeps the conjugate finite wherever it is used.

+inf is a legitimate penalty value (hard Wasserstein balls); conjugates
are always finite under the declared growth.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import NonconvergentConjugate

_INV_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


class Penalty:
    """Base class; subclasses implement value/derivative/conjugate."""

    kind = "abstract"

    @property
    def growth_exponent(self) -> float:
        raise NotImplementedError

    def value(self, v):
        """phi(v), elementwise; may return +inf."""
        raise NotImplementedError

    def derivative(self, v):
        """Right-derivative of phi at v (0 where phi is infinite)."""
        raise NotImplementedError

    def conjugate(self, u) -> float:
        """phi*(u); closed form where available, numeric otherwise."""
        return self.conjugate_numeric(u)

    def rescaled(self, h, v):
        """phi_h(v) = h * phi(v/h)."""
        if h <= 0:
            raise ValueError("uncertainty level h must be positive")
        return h * self.value(np.asarray(v, dtype=float) / h)

    def rescaled_derivative(self, h, v):
        """d/dv phi_h(v) = phi'(v/h)."""
        if h <= 0:
            raise ValueError("uncertainty level h must be positive")
        return self.derivative(np.asarray(v, dtype=float) / h)

    def conjugate_numeric(self, u, rel_tol: float = 1e-10, return_argmax: bool = False):
        """Maximize v -> u*v - phi(v) by doubling bracket + grid + golden section.

        The doubling search looks for V with phi(V) > u*V, which exists by the
        growth condition; it gives up after reaching 2**60 (growth violation).
        """
        u = float(u)
        if u < 0:
            raise ValueError("conjugate argument must be nonnegative")
        if u == 0.0:
            return (0.0, 0.0) if return_argmax else 0.0
        vmax = 1.0
        for _ in range(61):
            if float(self.value(vmax)) > u * vmax:
                break
            vmax *= 2.0
        else:
            raise NonconvergentConjugate(
                f"no v <= 2**60 with phi(v) > {u}*v; growth condition violated"
            )
        grid = np.linspace(0.0, vmax, 4097)
        vals = u * grid - np.asarray(self.value(grid), dtype=float)
        vals = np.where(np.isfinite(vals), vals, -np.inf)
        k = int(np.argmax(vals))
        lo = grid[max(k - 1, 0)]
        hi = grid[min(k + 1, grid.size - 1)]

        def g(v):
            gv = u * v - float(self.value(v))
            return gv if math.isfinite(gv) else -math.inf

        x1 = hi - _INV_GOLDEN * (hi - lo)
        x2 = lo + _INV_GOLDEN * (hi - lo)
        g1, g2 = g(x1), g(x2)
        while hi - lo > rel_tol * max(1.0, hi):
            if g1 >= g2:
                hi, x2, g2 = x2, x1, g1
                x1 = hi - _INV_GOLDEN * (hi - lo)
                g1 = g(x1)
            else:
                lo, x1, g1 = x1, x2, g2
                x2 = lo + _INV_GOLDEN * (hi - lo)
                g2 = g(x2)
        vstar = 0.5 * (lo + hi)
        best = max(g(vstar), 0.0)
        return (best, vstar) if return_argmax else best

    def describe(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class PowerPenalty(Penalty):
    """phi(v) = a * v**m with a > 0, m > 1."""

    a: float
    m: float

    kind = "power"

    def __post_init__(self):
        if not self.a > 0:
            raise ValueError("power penalty requires a > 0")
        if not self.m > 1:
            raise ValueError("power penalty requires exponent m > 1")

    @property
    def growth_exponent(self) -> float:
        return self.m

    def value(self, v):
        return self.a * np.asarray(v, dtype=float) ** self.m

    def derivative(self, v):
        return self.a * self.m * np.asarray(v, dtype=float) ** (self.m - 1.0)

    def conjugate(self, u) -> float:
        # sup u*v - a*v**m is attained at v = (u/(a*m))**(1/(m-1))
        u = float(u)
        if u < 0:
            raise ValueError("conjugate argument must be nonnegative")
        if u == 0.0:
            return 0.0
        return (self.m - 1.0) * self.a * (u / (self.m * self.a)) ** (self.m / (self.m - 1.0))

    def describe(self) -> dict:
        return {"kind": "power", "a": self.a, "m": self.m}


@dataclass(frozen=True)
class BallPenalty(Penalty):
    """Hard-ball indicator: 0 on [0, a], +inf beyond (radius a*h after rescaling)."""

    a: float

    kind = "ball"

    def __post_init__(self):
        if self.a < 0:
            raise ValueError("ball penalty requires radius a >= 0")

    @property
    def growth_exponent(self) -> float:
        return math.inf

    def value(self, v):
        v = np.asarray(v, dtype=float)
        return np.where(v <= self.a, 0.0, np.inf)

    def derivative(self, v):
        return np.zeros_like(np.asarray(v, dtype=float))

    def conjugate(self, u) -> float:
        u = float(u)
        if u < 0:
            raise ValueError("conjugate argument must be nonnegative")
        return self.a * u

    def describe(self) -> dict:
        return {"kind": "ball", "a": self.a}


class TablePenalty(Penalty):
    """Piecewise-linear interpolation of user samples (v_k, phi_k).

    Beyond the last sample the penalty continues with the declared growth
    power: phi(v) = phi(v_N) * (v/v_N)**gamma when phi(v_N) > 0, else
    (v - v_N)**gamma.  Samples must start at (0, 0) and be nondecreasing.
    Nonconvex samples are accepted; conjugation then implicitly computes
    the conjugate of the convex envelope.
    """

    kind = "table"

    def __init__(self, v, phi, growth_exponent: float):
        v = np.asarray(v, dtype=float)
        phi = np.asarray(phi, dtype=float)
        if v.ndim != 1 or v.shape != phi.shape or v.size < 2:
            raise ValueError("table penalty needs matching 1-D sample arrays, length >= 2")
        if v[0] != 0.0 or phi[0] != 0.0:
            raise ValueError("table penalty samples must start at (0, 0)")
        if not np.all(np.diff(v) > 0):
            raise ValueError("table penalty knots must be strictly increasing")
        if not np.all(np.diff(phi) >= 0):
            raise ValueError("table penalty values must be nondecreasing")
        if not np.all(np.isfinite(phi)):
            raise ValueError("table penalty samples must be finite")
        if not growth_exponent > 0:
            raise ValueError("growth exponent must be positive")
        self._v = v
        self._phi = phi
        self._gamma = float(growth_exponent)
        self._slopes = np.diff(phi) / np.diff(v)

    @property
    def growth_exponent(self) -> float:
        return self._gamma

    def value(self, v):
        v = np.asarray(v, dtype=float)
        vn, pn = self._v[-1], self._phi[-1]
        inside = np.interp(np.minimum(v, vn), self._v, self._phi)
        if pn > 0:
            ext = pn * (np.maximum(v, vn) / vn) ** self._gamma
        else:
            ext = np.maximum(v - vn, 0.0) ** self._gamma
        return np.where(v <= vn, inside, ext)

    def derivative(self, v):
        v = np.asarray(v, dtype=float)
        vn, pn = self._v[-1], self._phi[-1]
        seg = np.clip(np.searchsorted(self._v, v, side="right") - 1, 0, self._slopes.size - 1)
        inside = self._slopes[seg]
        with np.errstate(invalid="ignore"):
            if pn > 0:
                ext = pn * self._gamma * np.maximum(v, vn) ** (self._gamma - 1.0) / vn**self._gamma
            else:
                ext = self._gamma * np.maximum(v - vn, 0.0) ** (self._gamma - 1.0)
        return np.where(v < vn, inside, ext)

    def describe(self) -> dict:
        return {
            "kind": "table",
            "v": self._v.tolist(),
            "phi": self._phi.tolist(),
            "growth": self._gamma,
        }


def phi_h(penalty: Penalty, h: float, v):
    """Rescaled penalty phi_h(v) = h * phi(v/h)."""
    return penalty.rescaled(h, v)


def phi_star(penalty: Penalty, u) -> float:
    """Convex conjugate phi*(u) = sup_{v>=0} (u*v - phi(v))."""
    return penalty.conjugate(u)


def penalty_from_json(d: dict) -> Penalty:
    """Build a penalty from its JSON descriptor."""
    kind = d.get("kind")
    if kind == "power":
        return PowerPenalty(a=float(d["a"]), m=float(d["m"]))
    if kind == "ball":
        return BallPenalty(a=float(d["a"]))
    if kind == "table":
        return TablePenalty(d["v"], d["phi"], float(d["growth"]))
    raise ValueError(f"unknown penalty kind: {kind!r}")


def penalty_to_json(penalty: Penalty) -> dict:
    return penalty.describe()

"""Parametrized perturbation vector fields theta: R^d -> R^d.

Families: per-atom tabular shifts (for atomic baselines), scaled rays
lambda*theta0, fully connected networks A_m o psi o ... o psi o A_0 with an
optional scalar output layer, and one-dimensional call/digital portfolios.
Fields are callables on (..., d) arrays.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import DimensionMismatch
from .measure import DiscreteMeasure, Measure

_MLP_FORMAT = "wassrisk-mlp-v1"


class Field:
    dim: int

    def __call__(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def describe(self) -> dict:
        raise NotImplementedError


class TabularField(Field):
    """One shift vector per atom of an associated atomic measure.

    Off-atom evaluation uses the nearest atom, a mu-a.e. equivalent
    representative (the field only matters on the atoms).
    """

    def __init__(self, shifts, atoms):
        self.shifts = np.asarray(shifts, dtype=float)
        self.atoms = np.asarray(atoms, dtype=float)
        if self.shifts.shape != self.atoms.shape:
            raise DimensionMismatch(
                f"shifts {self.shifts.shape} do not match atoms {self.atoms.shape}"
            )
        self.dim = self.atoms.shape[1]

    @classmethod
    def zeros(cls, measure: DiscreteMeasure) -> "TabularField":
        return cls(np.zeros_like(measure.atoms), measure.atoms)

    def __call__(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        flat = x.reshape(-1, self.dim)
        d2 = ((flat[:, None, :] - self.atoms[None, :, :]) ** 2).sum(axis=2)
        out = self.shifts[np.argmin(d2, axis=1)]
        return out.reshape(x.shape)

    def describe(self) -> dict:
        return {"kind": "tabular", "shifts": self.shifts.tolist()}


class FunctionField(Field):
    """A plain callable with a declared dimension."""

    def __init__(self, fn: Callable[[np.ndarray], np.ndarray], dim: int, name: str = "function"):
        self.fn = fn
        self.dim = dim
        self.name = name

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(self.fn(x), dtype=float)

    def describe(self) -> dict:
        return {"kind": "function", "name": self.name}


class ScaledField(Field):
    """lambda * base(x) for lambda >= 0 (the ray family of the asymptotics)."""

    def __init__(self, base, scale: float):
        if scale < 0:
            raise ValueError("ray scale must be nonnegative")
        self.base = base
        self.scale = float(scale)
        self.dim = base.dim

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return self.scale * np.asarray(self.base(x), dtype=float)

    def describe(self) -> dict:
        base = self.base.describe() if hasattr(self.base, "describe") else {"kind": "callable"}
        return {"kind": "scaled", "scale": self.scale, "base": base}


class CenteredField(Field):
    """base(x) - offset, with offset the (exact or Monte Carlo) mean of base."""

    def __init__(self, base, offset):
        self.base = base
        self.offset = np.asarray(offset, dtype=float)
        self.dim = base.dim

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(self.base(x), dtype=float) - self.offset

    def describe(self) -> dict:
        base = self.base.describe() if hasattr(self.base, "describe") else {"kind": "callable"}
        return {"kind": "centered", "offset": self.offset.tolist(), "base": base}


class CallPortfolioField(Field):
    """1-D portfolio sum_j w_j (x - K_j)^+ (call) or sum_j w_j 1_{[K_j, inf)} (digital)."""

    def __init__(self, strikes, weights, style: str = "call"):
        self.strikes = np.asarray(strikes, dtype=float).ravel()
        self.weights = np.asarray(weights, dtype=float).ravel()
        if self.strikes.shape != self.weights.shape:
            raise DimensionMismatch("strikes and weights must have equal length")
        if style not in ("call", "digital"):
            raise ValueError("style must be 'call' or 'digital'")
        self.style = style
        self.dim = 1

    def __call__(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        x0 = x[..., 0][..., None]
        if self.style == "call":
            parts = np.maximum(x0 - self.strikes, 0.0)
        else:
            parts = (x0 >= self.strikes).astype(float)
        return (parts @ self.weights)[..., None]

    def describe(self) -> dict:
        return {
            "kind": "call_portfolio",
            "strikes": self.strikes.tolist(),
            "weights": self.weights.tolist(),
            "style": self.style,
        }


@dataclass
class MLPGradients:
    weights: list
    biases: list
    scale: Optional[float] = None

    def as_list(self) -> list:
        out = [*self.weights, *self.biases]
        if self.scale is not None:
            out.append(np.asarray(self.scale, dtype=float))
        return out


class MLPField(Field):
    """Feedforward network R^d -> R^d of depth m and width n.

    The map is A_m o psi o A_{m-1} o ... o psi o A_0 with componentwise
    activation psi (relu or bounded_sigmoid) and affine A_i = M_i x + b_i;
    depth counts activation applications (m + 1 affine maps).  An optional
    scalar output layer multiplies the result by c, the knob used for
    transfer retraining.  Density in L_p(mu) holds for the bounded
    activation at any depth; for single-layer relu it needs extra layers.

    Weights initialize uniformly on [-1/sqrt(fan_in), +1/sqrt(fan_in)],
    seeded, so runs are reproducible.
    """

    def __init__(
        self,
        dim: int,
        depth: int,
        width: int,
        activation: str = "relu",
        scale: Optional[float] = None,
        seed: int = 0,
        weights=None,
        biases=None,
    ):
        if depth < 0 or (depth > 0 and width < 1):
            raise ValueError("depth must be >= 0 and width >= 1")
        if activation not in ("relu", "bounded_sigmoid"):
            raise ValueError("activation must be 'relu' or 'bounded_sigmoid'")
        self.dim = int(dim)
        self.depth = int(depth)
        self.width = int(width)
        self.activation = activation
        dims = [self.dim] + [self.width] * self.depth + [self.dim]
        self._dims = dims
        if weights is None:
            rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed) & ((1 << 64) - 1)])))
            self.weights = []
            self.biases = []
            for fan_in, fan_out in zip(dims[:-1], dims[1:]):
                bound = 1.0 / np.sqrt(fan_in)
                self.weights.append(rng.uniform(-bound, bound, size=(fan_out, fan_in)))
                self.biases.append(rng.uniform(-bound, bound, size=fan_out))
        else:
            self.weights = [np.asarray(w, dtype=float) for w in weights]
            self.biases = [np.asarray(b, dtype=float) for b in biases]
            got = [w.shape for w in self.weights]
            want = [(o, i) for i, o in zip(dims[:-1], dims[1:])]
            if got != want:
                raise DimensionMismatch(f"layer shapes {got} do not chain as {want}")
        self.scale_arr = None if scale is None else np.asarray(float(scale))

    @property
    def scale(self) -> Optional[float]:
        return None if self.scale_arr is None else float(self.scale_arr)

    def _act(self, z: np.ndarray) -> np.ndarray:
        if self.activation == "relu":
            return np.maximum(z, 0.0)
        return 1.0 / (1.0 + np.exp(-z))

    def _act_deriv(self, z: np.ndarray) -> np.ndarray:
        if self.activation == "relu":
            # subgradient at 0 taken as 0
            return (z > 0.0).astype(float)
        s = 1.0 / (1.0 + np.exp(-z))
        return s * (1.0 - s)

    def __call__(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        a = x.reshape(-1, self.dim)
        last = len(self.weights) - 1
        for i, (M, b) in enumerate(zip(self.weights, self.biases)):
            a = a @ M.T + b
            if i < last:
                a = self._act(a)
        if self.scale_arr is not None:
            a = float(self.scale_arr) * a
        return a.reshape(x.shape)

    def _forward_cache(self, x2d: np.ndarray):
        inputs = [x2d]
        pre = []
        a = x2d
        last = len(self.weights) - 1
        for i, (M, b) in enumerate(zip(self.weights, self.biases)):
            z = a @ M.T + b
            pre.append(z)
            a = self._act(z) if i < last else z
            if i < last:
                inputs.append(a)
        return a, inputs, pre

    def backprop(self, x_batch: np.ndarray, upstream: np.ndarray) -> MLPGradients:
        """Exact reverse-mode gradients of sum_i <upstream_i, theta(x_i)>."""
        x = np.asarray(x_batch, dtype=float).reshape(-1, self.dim)
        g = np.asarray(upstream, dtype=float).reshape(-1, self.dim)
        if x.shape != g.shape:
            raise DimensionMismatch(
                f"upstream shape {g.shape} does not match batch shape {x.shape}"
            )
        out, inputs, pre = self._forward_cache(x)
        dscale = None
        if self.scale_arr is not None:
            dscale = float(np.sum(g * out))
            g = g * float(self.scale_arr)
        dW = [None] * len(self.weights)
        db = [None] * len(self.biases)
        for i in range(len(self.weights) - 1, -1, -1):
            dW[i] = g.T @ inputs[i]
            db[i] = g.sum(axis=0)
            if i > 0:
                g = (g @ self.weights[i]) * self._act_deriv(pre[i - 1])
        return MLPGradients(weights=dW, biases=db, scale=dscale)

    def parameters(self) -> list:
        """Live parameter arrays, in the order matching MLPGradients.as_list()."""
        ps = [*self.weights, *self.biases]
        if self.scale_arr is not None:
            ps.append(self.scale_arr)
        return ps

    def copy(self) -> "MLPField":
        return MLPField(
            self.dim,
            self.depth,
            self.width,
            activation=self.activation,
            scale=self.scale,
            weights=[w.copy() for w in self.weights],
            biases=[b.copy() for b in self.biases],
        )

    def to_json_dict(self) -> dict:
        return {
            "format": _MLP_FORMAT,
            "dim": self.dim,
            "depth": self.depth,
            "width": self.width,
            "activation": self.activation,
            "scale": self.scale,
            "weights": [w.tolist() for w in self.weights],
            "biases": [b.tolist() for b in self.biases],
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "MLPField":
        if d.get("format") != _MLP_FORMAT:
            raise ValueError(f"unsupported MLP file format: {d.get('format')!r}")
        return cls(
            d["dim"],
            d["depth"],
            d["width"],
            activation=d["activation"],
            scale=d["scale"],
            weights=d["weights"],
            biases=d["biases"],
        )

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json_dict(), fh)

    @classmethod
    def load(cls, path) -> "MLPField":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_json_dict(json.load(fh))

    def describe(self) -> dict:
        return {
            "kind": "mlp",
            "dim": self.dim,
            "depth": self.depth,
            "width": self.width,
            "activation": self.activation,
            "scale": self.scale,
        }


def backprop(field: MLPField, x_batch, upstream) -> MLPGradients:
    """Module-level alias for MLPField.backprop."""
    return field.backprop(x_batch, upstream)


def _field_values(field, measure: Measure, mc_batch, seed_offset, batch):
    if batch is not None:
        pts = np.asarray(batch, dtype=float)
        w = np.full(pts.shape[0], 1.0 / pts.shape[0])
    elif isinstance(measure, DiscreteMeasure):
        pts = measure.atoms
        w = measure.weights
    else:
        if mc_batch is None:
            raise ValueError("sampler measures need mc_batch or an explicit batch")
        pts = measure.sample(mc_batch, seed_offset)
        w = np.full(pts.shape[0], 1.0 / pts.shape[0])
    if field.dim != measure.dim:
        raise DimensionMismatch(f"field dim {field.dim} != measure dim {measure.dim}")
    if isinstance(field, TabularField) and batch is None and isinstance(measure, DiscreteMeasure):
        theta = field.shifts  # exact per-atom values, no lookup
    else:
        theta = np.asarray(field(pts), dtype=float)
    return pts, w, theta


def lp_norm(field, measure: Measure, p: float, mc_batch=None, seed_offset=0, batch=None) -> float:
    """||theta||_{L_p(mu)}: exact weighted sum for atomic measures, MC otherwise.

    Monte Carlo callers should pass the optimization step's common batch so
    the norm, the pushforward integral and the centering mean share samples.
    """
    if not p > 1:
        raise ValueError("p must exceed 1")
    _, w, theta = _field_values(field, measure, mc_batch, seed_offset, batch)
    norms = np.linalg.norm(theta, axis=-1)
    return float((w @ norms**p) ** (1.0 / p))


def mean_center(field, measure: Measure, mc_batch=None, seed_offset=0, batch=None):
    """Wrap theta as theta - int theta dmu (exact on atoms, MC mean otherwise)."""
    _, w, theta = _field_values(field, measure, mc_batch, seed_offset, batch)
    m = w @ theta
    if isinstance(field, TabularField) and batch is None and isinstance(measure, DiscreteMeasure):
        return TabularField(field.shifts - m, field.atoms)
    return CenteredField(field, m)

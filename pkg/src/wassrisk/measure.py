"""Baseline probability measures on R^d: finite atomic measures and samplers.

All randomness flows through one counter-based generator (Philox) keyed by
``SeedSequence([seed, *seed_offset])``, so distinct offsets give independent
substreams and identical seeds reproduce sample streams bit for bit.
"""

from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1


def rng_stream(seed: int, seed_offset=0) -> np.random.Generator:
    """Deterministic substream for (seed, seed_offset); offset may be a tuple."""
    if isinstance(seed_offset, (tuple, list)):
        entropy = [int(seed) & _MASK64, *(int(o) & _MASK64 for o in seed_offset)]
    else:
        entropy = [int(seed) & _MASK64, int(seed_offset) & _MASK64]
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))


def _as_points(atoms) -> np.ndarray:
    pts = np.asarray(atoms, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None]
    if pts.ndim != 2:
        raise ValueError("atoms must form an (n, d) array")
    return pts


class Measure:
    """Common interface: .dim, .seed, .sample(n, seed_offset)."""

    dim: int
    seed: int

    def sample(self, n: int, seed_offset=0) -> np.ndarray:
        raise NotImplementedError

    def describe(self) -> dict:
        raise NotImplementedError


class DiscreteMeasure(Measure):
    """Finite atomic measure sum_i w_i * delta_{x_i}.

    Bitwise-duplicate atoms are merged at construction (weights summed,
    first-seen order kept).  Weights must be positive and sum to 1 within
    1e-12; they are renormalized exactly afterwards.
    """

    def __init__(self, atoms, weights=None, seed: int = 0):
        pts = _as_points(atoms)
        n = pts.shape[0]
        if weights is None:
            w = np.full(n, 1.0 / n)
        else:
            w = np.asarray(weights, dtype=float)
        if w.shape != (n,):
            raise ValueError("weights must match the number of atoms")
        if np.any(w <= 0):
            raise ValueError("weights must be positive")
        if abs(w.sum() - 1.0) > 1e-12:
            raise ValueError(f"weights sum to {w.sum()!r}, not 1 within 1e-12")
        seen: dict[bytes, int] = {}
        keep: list[int] = []
        merged = []
        for i in range(n):
            key = pts[i].tobytes()
            if key in seen:
                merged[seen[key]] += w[i]
            else:
                seen[key] = len(keep)
                keep.append(i)
                merged.append(w[i])
        self.atoms = pts[keep]
        self.weights = np.asarray(merged, dtype=float)
        self.weights = self.weights / self.weights.sum()
        self.dim = pts.shape[1]
        self.seed = int(seed)

    def __len__(self) -> int:
        return self.atoms.shape[0]

    def sample(self, n: int, seed_offset=0) -> np.ndarray:
        rng = rng_stream(self.seed, seed_offset)
        idx = rng.choice(len(self), size=int(n), p=self.weights)
        return self.atoms[idx]

    def mean(self) -> np.ndarray:
        return self.weights @ self.atoms

    def pushforward(self, shifts: np.ndarray) -> "DiscreteMeasure":
        """Law of x + theta(x): atoms shifted, same weights."""
        shifts = np.asarray(shifts, dtype=float)
        if shifts.shape != self.atoms.shape:
            raise ValueError("shifts must match the atom array")
        return DiscreteMeasure(self.atoms + shifts, self.weights, seed=self.seed)

    def martingale_pushforward(self, shifts: np.ndarray) -> "DiscreteMeasure":
        """Coin-flip randomization: atoms x +- theta(x) with halved weights."""
        shifts = np.asarray(shifts, dtype=float)
        if shifts.shape != self.atoms.shape:
            raise ValueError("shifts must match the atom array")
        atoms = np.vstack([self.atoms + shifts, self.atoms - shifts])
        weights = np.concatenate([self.weights / 2.0, self.weights / 2.0])
        return DiscreteMeasure(atoms, weights, seed=self.seed)

    def describe(self) -> dict:
        return {
            "kind": "discrete",
            "atoms": self.atoms.tolist(),
            "weights": self.weights.tolist(),
        }


class GaussianMeasure(Measure):
    """N(mean, covariance) on R^d; covariance must be symmetric PSD."""

    def __init__(self, mean, covariance, seed: int = 0):
        self.mean_vec = np.asarray(mean, dtype=float).ravel()
        self.dim = self.mean_vec.size
        cov = np.asarray(covariance, dtype=float)
        if cov.shape != (self.dim, self.dim):
            raise ValueError("covariance must be d x d")
        if not np.allclose(cov, cov.T, atol=1e-12):
            raise ValueError("covariance must be symmetric")
        try:
            self._chol = np.linalg.cholesky(cov)
        except np.linalg.LinAlgError as exc:
            raise ValueError("covariance must be positive semidefinite (Cholesky failed)") from exc
        self.covariance = cov
        self.seed = int(seed)

    def sample(self, n: int, seed_offset=0) -> np.ndarray:
        rng = rng_stream(self.seed, seed_offset)
        z = rng.standard_normal((int(n), self.dim))
        return self.mean_vec + z @ self._chol.T

    def describe(self) -> dict:
        return {
            "kind": "gaussian",
            "mean": self.mean_vec.tolist(),
            "cov": self.covariance.tolist(),
            "seed": self.seed,
        }


class LognormalReturnsMeasure(Measure):
    """Law N(drift, variance) of log-returns on R (d = 1).

    Exponentiation is the caller's business (it happens inside the loss);
    the Black-Scholes parametrization uses drift = -sigma^2 T / 2 and
    variance = sigma^2 T, making exp of a draw a martingale increment.
    """

    def __init__(self, drift: float, variance: float, seed: int = 0):
        if not variance > 0:
            raise ValueError("variance must be positive")
        self.drift = float(drift)
        self.variance = float(variance)
        self.dim = 1
        self.seed = int(seed)

    @classmethod
    def from_black_scholes(cls, sigma: float, T: float = 1.0, seed: int = 0):
        if sigma <= 0 or T <= 0:
            raise ValueError("sigma and T must be positive")
        return cls(drift=-0.5 * sigma * sigma * T, variance=sigma * sigma * T, seed=seed)

    def sample(self, n: int, seed_offset=0) -> np.ndarray:
        rng = rng_stream(self.seed, seed_offset)
        z = rng.standard_normal((int(n), 1))
        return self.drift + np.sqrt(self.variance) * z

    def describe(self) -> dict:
        return {
            "kind": "lognormal_returns",
            "drift": self.drift,
            "variance": self.variance,
            "seed": self.seed,
        }


def empirical_measure(path, seed: int = 0) -> DiscreteMeasure:
    """Load a headerless CSV (one point per row) as a uniform atomic measure.

    The result behaves as a DiscreteMeasure for the exact solver and as a
    with-replacement sampler on the Monte Carlo path.
    """
    data = np.loadtxt(path, delimiter=",", ndmin=2, dtype=float)
    return DiscreteMeasure(data, seed=seed)


def p_moment(measure: Measure, p: float, mc_batch: int = 65536, seed_offset: int = 0):
    """|mu|_p = (int ||y||^p mu(dy))^(1/p).

    Returns (value, stderr): exact with stderr 0 for atomic measures, a
    Monte Carlo estimate with delta-method standard error for samplers.
    """
    if not p > 1:
        raise ValueError("p must exceed 1")
    if isinstance(measure, DiscreteMeasure):
        norms = np.linalg.norm(measure.atoms, axis=1)
        return float((measure.weights @ norms**p) ** (1.0 / p)), 0.0
    pts = measure.sample(mc_batch, seed_offset)
    a = np.linalg.norm(pts, axis=1) ** p
    m = float(a.mean())
    se_m = float(a.std(ddof=1) / np.sqrt(a.size))
    if m <= 0:
        return 0.0, 0.0
    value = m ** (1.0 / p)
    return value, se_m * value / (p * m)

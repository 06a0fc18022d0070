"""Exact p-Wasserstein distances between small atomic measures.

Validation-scale oracle only: the transport linear program

    min_pi sum_ij pi_ij ||x_i - z_j||^p,   pi 1 = w_mu,  pi^T 1 = w_nu

is solved exactly (HiGHS dual simplex, deterministic); the distance is the
p-th root of the optimum.
"""

from __future__ import annotations

import itertools

import numpy as np
from scipy.optimize import linprog

from .errors import TooLarge
from .measure import DiscreteMeasure

_MAX_ATOMS = 64


def _cost_matrix(mu: DiscreteMeasure, nu: DiscreteMeasure, p: float) -> np.ndarray:
    diff = mu.atoms[:, None, :] - nu.atoms[None, :, :]
    return np.linalg.norm(diff, axis=2) ** p


def wasserstein_p(mu: DiscreteMeasure, nu: DiscreteMeasure, p: float):
    """Returns (W_p(mu, nu), optimal coupling matrix)."""
    if not p >= 1:
        raise ValueError("p must be >= 1")
    n, m = len(mu), len(nu)
    if n > _MAX_ATOMS or m > _MAX_ATOMS:
        raise TooLarge(f"transport oracle handles at most {_MAX_ATOMS} atoms per side")
    cost = _cost_matrix(mu, nu, p)
    # marginal constraints; the last column constraint is redundant and dropped
    a_eq = np.zeros((n + m - 1, n * m))
    for i in range(n):
        a_eq[i, i * m : (i + 1) * m] = 1.0
    for j in range(m - 1):
        a_eq[n + j, j::m] = 1.0
    b_eq = np.concatenate([mu.weights, nu.weights[:-1]])
    res = linprog(cost.ravel(), A_eq=a_eq, b_eq=b_eq, bounds=(0, None), method="highs")
    if not res.success:  # pragma: no cover
        raise RuntimeError(f"transport LP failed: {res.message}")
    plan = res.x.reshape(n, m)
    distance = float(max(res.fun, 0.0) ** (1.0 / p))
    return distance, plan


def wasserstein_enumerate(mu: DiscreteMeasure, nu: DiscreteMeasure, p: float) -> float:
    """Brute-force oracle over permutation couplings (uniform weights, n = m <= 8).

    For uniform marginals the Birkhoff vertices are permutation matrices, so
    the LP optimum equals the best permutation assignment.
    """
    n, m = len(mu), len(nu)
    if n != m or n > 8:
        raise ValueError("enumeration oracle needs equal uniform supports, n <= 8")
    if not (np.allclose(mu.weights, 1.0 / n) and np.allclose(nu.weights, 1.0 / n)):
        raise ValueError("enumeration oracle needs uniform weights")
    cost = _cost_matrix(mu, nu, p)
    best = min(
        sum(cost[i, perm[i]] for i in range(n)) / n
        for perm in itertools.permutations(range(n))
    )
    return float(best ** (1.0 / p))

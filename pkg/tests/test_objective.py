"""Objective evaluation and gradients in the three regimes.

Finite-difference oracles validate every gradient path; closed forms from
one-line calculus validate the values.
"""

import math

import numpy as np
import pytest

from wassrisk import (
    BallPenalty,
    DiscreteMeasure,
    FunctionField,
    GaussianMeasure,
    MissingGradient,
    PowerPenalty,
    Regime,
    RegimePenaltyMismatch,
    TabularField,
    bump_loss,
    check_regime_penalty,
    evaluate,
    linear_loss,
    lp_norm,
    quadratic_loss,
    theta_gradient,
    wasserstein_p,
)
from wassrisk.loss import LossFunction
from wassrisk.objective import objective_core

RNG = np.random.default_rng(31)
PEN = PowerPenalty(1.0, 2.0)


def constant_field(vec, dim):
    vec = np.asarray(vec, dtype=float)
    return FunctionField(lambda x: np.broadcast_to(vec, np.asarray(x).shape).copy(), dim)


class TestZeroField:
    @pytest.mark.parametrize("regime", ["unconstrained", "mean", "martingale"])
    def test_value_is_baseline(self, regime):
        f = bump_loss(1.0, 1.5, (0, 0))
        mu = DiscreteMeasure([[0.55, 0.0], [0.0, 0.85], [-1.10, 0.0]], [1 / 3] * 3)
        p = 4.0 if regime == "martingale" else 2.0
        pen = PowerPenalty(1.0, 4.0)
        value, info = evaluate(f, mu, None, 0.1, pen, regime, p=p)
        muf = float(mu.weights @ np.asarray(f.value(mu.atoms)))
        assert value == pytest.approx(muf, abs=1e-15)
        assert info["penalty"] == 0.0


class TestClosedForms:
    def test_single_atom_linear_quadratic_penalty(self):
        # J(lam*c) = lam ||c||^2 - lam^2 ||c||^2 / h, maximum h ||c||^2/4 at lam = h/2
        c = np.array([0.6, 0.8])
        f = linear_loss(c)
        mu = DiscreteMeasure([[0.0, 0.0]])
        h = 0.4
        for lam in (0.05, 0.2, 0.35):
            value, _ = evaluate(f, mu, constant_field(lam * c, 2), h, PEN)
            assert value == pytest.approx(lam - lam * lam / h, abs=1e-12)
        value, _ = evaluate(f, mu, constant_field((h / 2) * c, 2), h, PEN)
        assert value == pytest.approx(h / 4, abs=1e-12)

    def test_martingale_cancels_linear_part(self):
        # [f(y+t) + f(y-t)]/2 = f(y) for linear f
        c = np.array([1.0, -2.0])
        f = linear_loss(c)
        mu = DiscreteMeasure([[0.3, 0.4], [0.5, -0.1]], [0.5, 0.5])
        pen = PowerPenalty(1.0, 2.0)
        shifts = np.array([[0.2, 0.1], [-0.1, 0.3]])
        field = TabularField(shifts, mu.atoms)
        value, info = evaluate(f, mu, field, 0.25, pen, "martingale", p=4.0)
        muf = float(mu.weights @ np.asarray(f.value(mu.atoms)))
        norm = lp_norm(field, mu, 4.0)
        expected = muf - float(pen.rescaled(0.25, norm**2))
        assert value == pytest.approx(expected, abs=1e-12)


class TestThetaGradient:
    def test_zero_field_martingale_gradient_vanishes(self):
        f = bump_loss(1.0, 1.5, (0, 0))
        mu = DiscreteMeasure([[0.2, 0.1], [0.4, -0.2]], [0.5, 0.5])
        g, _ = theta_gradient(f, mu, None, 0.1, PowerPenalty(1.0, 2.0), "martingale", p=4.0)
        np.testing.assert_allclose(g, 0.0, atol=1e-15)

    def test_linear_loss_with_negligible_penalty(self):
        # single atom, weight 1: dJ/dtheta = c when the penalty term is off
        c = np.array([2.0, -1.0])
        f = linear_loss(c)
        mu = DiscreteMeasure([[0.0, 0.0]])
        tiny = PowerPenalty(1e-300, 2.0)
        g, _ = theta_gradient(f, mu, constant_field([0.1, 0.1], 2), 1.0, tiny)
        np.testing.assert_allclose(g, c[None, :], atol=1e-12)

    @pytest.mark.parametrize(
        "regime,p,loss",
        [
            ("unconstrained", 2.0, bump_loss(1.0, 1.5, (0, 0))),
            ("mean", 2.0, bump_loss(1.0, 1.5, (0, 0))),
            ("martingale", 4.0, quadratic_loss(2)),
            ("unconstrained", 3.0, bump_loss(1.0, 1.5, (0, 0))),
        ],
    )
    def test_gradient_vs_fd_on_tabular_entries(self, regime, p, loss):
        mu = DiscreteMeasure(
            [[0.55, 0.0], [0.0, 0.85], [-1.10, 0.0], [0.3, 0.3]], [0.1, 0.2, 0.3, 0.4]
        )
        pen = PowerPenalty(0.8, 2.0) if regime != "unconstrained" or p == 2.0 else PowerPenalty(0.8, 3.0)
        h = 0.15
        shifts = 0.2 * RNG.standard_normal(mu.atoms.shape)
        field = TabularField(shifts, mu.atoms)
        g, _ = theta_gradient(loss, mu, field, h, pen, regime, p=p)

        def value_at(s):
            v, _, _ = objective_core(loss, mu.atoms, mu.weights, s, h, pen, regime, p)
            return v

        step = 1e-6
        fd = np.zeros_like(shifts)
        for i in range(shifts.shape[0]):
            for j in range(shifts.shape[1]):
                up = shifts.copy()
                up[i, j] += step
                dn = shifts.copy()
                dn[i, j] -= step
                fd[i, j] = (value_at(up) - value_at(dn)) / (2 * step)
        rel = np.abs(g - fd) / (1e-9 + np.abs(fd))
        assert np.max(rel) < 1e-6

    def test_missing_gradient_raises(self):
        f = LossFunction(value=lambda x: np.abs(np.asarray(x)[..., 0]), dim=1)
        mu = DiscreteMeasure([[0.5]])
        with pytest.raises(MissingGradient):
            theta_gradient(f, mu, constant_field([0.1], 1), 0.1, PEN)


class TestRegimeChecks:
    def test_martingale_needs_half_growth(self):
        check_regime_penalty(PowerPenalty(1.0, 2.0), 4.0, "martingale")  # 2 >= 4/2
        with pytest.raises(RegimePenaltyMismatch):
            check_regime_penalty(PowerPenalty(1.0, 1.5), 4.0, "martingale")

    def test_unconstrained_needs_full_growth(self):
        with pytest.raises(RegimePenaltyMismatch):
            check_regime_penalty(PowerPenalty(1.0, 2.0), 3.0, "unconstrained")
        check_regime_penalty(PowerPenalty(1.0, 3.0), 3.0, "unconstrained")

    def test_ball_satisfies_everything(self):
        check_regime_penalty(BallPenalty(1.0), 10.0, "martingale")

    def test_infinite_penalty_sentinel(self):
        f = linear_loss([1.0])
        mu = DiscreteMeasure([[0.0]])
        ball = BallPenalty(1.0)
        value, info = evaluate(f, mu, constant_field([0.5], 1), 0.1, ball)
        assert value == -math.inf
        assert info["norm_violation"] == pytest.approx(0.5)


class TestInvariants:
    def test_monotone_in_h_fixed_field(self):
        f = bump_loss(1.0, 1.5, (0, 0))
        mu = DiscreteMeasure([[0.55, 0.0], [0.0, 0.85], [-1.10, 0.0]], [1 / 3] * 3)
        field = TabularField(0.1 * RNG.standard_normal(mu.atoms.shape), mu.atoms)
        values = [evaluate(f, mu, field, h, PEN)[0] for h in (0.01, 0.05, 0.1, 0.2, 0.5)]
        assert np.all(np.diff(values) >= -1e-12)

    def test_martingale_randomization_preserves_mean_exactly(self):
        mu = DiscreteMeasure([[0.3, 0.1], [-0.2, 0.5], [0.7, -0.4]], [0.2, 0.3, 0.5])
        shifts = RNG.standard_normal(mu.atoms.shape)
        nu = mu.martingale_pushforward(shifts)
        # the +theta and -theta contributions cancel; only float reordering remains
        np.testing.assert_allclose(nu.mean(), mu.mean(), atol=1e-15)

    def test_feasibility_bound_vs_transport_oracle(self):
        # W_p(mu, mu_theta) <= ||theta||_{L_p(mu)} (perfectly correlated coupling)
        for trial in range(20):
            rng = np.random.default_rng(trial)
            n, d = rng.integers(2, 6), rng.integers(1, 4)
            w = rng.uniform(0.2, 1.0, n)
            mu = DiscreteMeasure(rng.standard_normal((n, d)), w / w.sum())
            shifts = rng.standard_normal((len(mu), mu.dim))
            field = TabularField(shifts, mu.atoms)
            for p in (2.0, 3.0):
                dist, _ = wasserstein_p(mu, mu.pushforward(shifts), p)
                assert dist <= lp_norm(field, mu, p) + 1e-10

    def test_mc_common_batch_is_deterministic(self):
        f = bump_loss(1.0, 1.5, (0, 0))
        mu = GaussianMeasure([1.0, 0.0], np.eye(2), seed=3)
        field = constant_field([0.05, 0.0], 2)
        v1, _ = evaluate(f, mu, field, 0.1, PEN, mc_batch=2048, seed=12)
        v2, _ = evaluate(f, mu, field, 0.1, PEN, mc_batch=2048, seed=12)
        assert v1 == v2

    def test_mean_regime_any_field_is_feasible(self):
        # centering inside the objective zeroes the field mean exactly
        f = bump_loss(1.0, 1.5, (0, 0))
        mu = DiscreteMeasure([[0.3, 0.2], [0.7, -0.1]], [0.4, 0.6])
        field = constant_field([5.0, -2.0], 2)
        value, info = evaluate(f, mu, field, 0.1, PEN, "mean")
        muf = float(mu.weights @ np.asarray(f.value(mu.atoms)))
        assert info["norm"] == pytest.approx(0.0, abs=1e-12)
        assert value == pytest.approx(muf, abs=1e-12)

"""Loss library: values, derivative fidelity, growth and direction invariants."""

import numpy as np
import pytest

from wassrisk import (
    BadStrikes,
    LossFunction,
    MissingGradient,
    bull_spread_on_returns,
    bump_loss,
    call_loss,
    constant_loss,
    fd_gradient,
    linear_loss,
    negate_loss,
    quadratic_loss,
    sum_loss,
)

RNG = np.random.default_rng(2024)


class TestBumpLoss:
    def test_peak_at_center(self):
        f = bump_loss(1.0, 1.5, (0.0, 0.0))
        assert float(f.value(np.zeros(2))) == pytest.approx(1.0, abs=1e-15)
        f2 = bump_loss(0.3, 0.75, (1.25, 0.0))
        assert float(f2.value(np.array([1.25, 0.0]))) == pytest.approx(0.3, abs=1e-15)

    def test_compact_support(self):
        f = bump_loss(1.0, 1.5, (0.0, 0.0))
        pts = np.array([[1.5, 0.0], [0.0, -1.5], [2.0, 2.0]])
        np.testing.assert_array_equal(f.value(pts), 0.0)
        np.testing.assert_array_equal(f.gradient(pts), 0.0)

    def test_interior_value_formula(self):
        # plug x = (0.75, 0) into c*exp(1 + r^2/(||x||^2 - r^2))
        f = bump_loss(1.0, 1.5, (0.0, 0.0))
        expected = np.exp(1.0 - 2.25 / 1.6875)
        assert float(f.value(np.array([0.75, 0.0]))) == pytest.approx(expected, rel=1e-14)

    def test_boundary_continuity(self):
        f = bump_loss(1.0, 1.5, (0.0, 0.0))
        x = np.array([[1.5 - 1e-4, 0.0]])
        assert float(f.value(x)[0]) < 1e-8
        assert np.linalg.norm(f.gradient(x)) < 1e-6

    def test_gradient_matches_fd(self):
        f = bump_loss(1.0, 1.5, (0.2, -0.1))
        pts = np.array([0.2, -0.1]) + 1.2 * RNG.uniform(-1, 1, size=(100, 2)) / np.sqrt(2)
        analytic = f.gradient(pts)
        numeric = fd_gradient(f, pts, 1e-6)
        rel = np.linalg.norm(analytic - numeric, axis=1) / (1e-9 + np.linalg.norm(analytic, axis=1))
        assert np.max(rel) < 1e-5

    def test_hessian_vec_matches_fd(self):
        f = bump_loss(1.0, 1.5, (0.0, 0.0))
        pts = RNG.uniform(-0.8, 0.8, size=(20, 2))
        v = RNG.standard_normal((20, 2))
        step = 1e-5
        numeric = (f.gradient(pts + step * v) - f.gradient(pts - step * v)) / (2 * step)
        analytic = f.hessian_vec(pts, v)
        assert np.max(np.abs(analytic - numeric)) < 1e-4

    def test_gradient_points_to_center(self):
        center = np.array([0.5, -0.25])
        f = bump_loss(2.0, 1.0, center)
        pts = center + 0.9 * RNG.uniform(-1, 1, size=(200, 2)) / np.sqrt(2)
        pts = pts[np.linalg.norm(pts - center, axis=1) > 1e-3]
        grad = f.gradient(pts)
        inner = np.sum(grad * (center - pts), axis=1)
        assert np.all(inner > 0)

    def test_rejects_bad_parameters(self):
        with pytest.raises(ValueError):
            bump_loss(0.0, 1.0, (0, 0))
        with pytest.raises(ValueError):
            bump_loss(1.0, -1.0, (0, 0))


class TestSumLoss:
    def test_double_city_at_origin(self):
        # second bump is supported in ||x - (1.25,0)|| < 0.75, so it vanishes at 0
        fbar = sum_loss([bump_loss(0.5, 1.0, (0, 0)), bump_loss(0.3, 0.75, (1.25, 0))])
        assert float(fbar.value(np.zeros(2))) == pytest.approx(0.5, abs=1e-15)

    def test_empty_sum_is_zero(self):
        z = sum_loss([], dim=2)
        pts = RNG.standard_normal((5, 2))
        np.testing.assert_array_equal(z.value(pts), 0.0)

    def test_linearity(self):
        f = bump_loss(1.0, 1.5, (0, 0))
        twice = sum_loss([f, f])
        pts = RNG.uniform(-2, 2, size=(50, 2))
        np.testing.assert_allclose(twice.value(pts), 2 * np.asarray(f.value(pts)), atol=1e-15)
        np.testing.assert_allclose(twice.gradient(pts), 2 * f.gradient(pts), atol=1e-15)

    def test_lip_constant_sums(self):
        f = bump_loss(1.0, 1.5, (0, 0))
        assert sum_loss([f, f]).lip_p_constant == pytest.approx(2 * f.lip_p_constant)


class TestCallLoss:
    def test_payoff(self):
        f = call_loss(1.0)
        assert float(f.value(np.array([1.5]))) == pytest.approx(0.5)
        assert float(f.value(np.array([0.5]))) == 0.0

    def test_lip_field_at_strike(self):
        f = call_loss(1.0)
        assert float(f.lip(np.array([1.0]))) == 1.0
        assert float(f.lip(np.array([1.0 - 1e-9]))) == 0.0

    def test_ascent_direction(self):
        f = call_loss(2.0)
        x = np.array([[1.9], [2.0], [2.5]])
        np.testing.assert_array_equal(f.ascent(x)[:, 0], [0.0, 1.0, 1.0])


class TestBullSpread:
    def test_zero_at_lower_strike(self):
        f = bull_spread_on_returns(1.0, 1.2, smoothing=0.0)
        assert float(f.value(np.array([np.log(1.0)]))) == 0.0

    def test_saturates_at_spread_width(self):
        f = bull_spread_on_returns(1.0, 1.2, smoothing=0.0)
        assert float(f.value(np.array([3.0]))) == pytest.approx(0.2, rel=1e-12)

    def test_smoothing_stays_close(self):
        eps = 0.01
        f0 = bull_spread_on_returns(1.0, 1.2, smoothing=0.0)
        fe = bull_spread_on_returns(1.0, 1.2, smoothing=eps)
        y = np.log((1.0 + 1.2) / 2)
        assert abs(float(fe.value(np.array([y]))) - float(f0.value(np.array([y])))) <= eps
        ys = np.linspace(-1.0, 1.0, 201)[:, None]
        assert np.max(np.abs(np.asarray(fe.value(ys)) - np.asarray(f0.value(ys)))) <= eps

    def test_gradient_and_hessian_match_fd(self):
        f = bull_spread_on_returns(1.0, 1.2, smoothing=0.05)
        ys = np.linspace(-0.6, 0.6, 41)[:, None]
        # keep clear of the band edges where the second derivative jumps
        x = np.exp(ys[:, 0])
        keep = np.all(np.abs(x[:, None] - np.array([0.95, 1.05, 1.15, 1.25])) > 0.02, axis=1)
        ys = ys[keep]
        numeric = fd_gradient(f, ys, 1e-7)
        np.testing.assert_allclose(f.gradient(ys), numeric, atol=1e-6)
        v = np.ones_like(ys)
        step = 1e-6
        hnum = (f.gradient(ys + step) - f.gradient(ys - step)) / (2 * step)
        np.testing.assert_allclose(f.hessian_vec(ys, v), hnum, atol=1e-4)

    def test_bad_strikes(self):
        with pytest.raises(BadStrikes):
            bull_spread_on_returns(1.2, 1.0)
        with pytest.raises(BadStrikes):
            bull_spread_on_returns(0.0, 1.0)


class TestFdGradient:
    def test_quadratic_is_exact(self):
        f = quadratic_loss(2)
        g = fd_gradient(f, np.array([1.0, 2.0]), 1e-5)
        np.testing.assert_allclose(g, [1.0, 2.0], atol=1e-8)

    def test_constant_is_zero(self):
        f = constant_loss(3.0, dim=2)
        np.testing.assert_array_equal(fd_gradient(f, np.array([[0.4, 0.5]]), 1e-5), 0.0)

    def test_bump_against_analytic(self):
        f = bump_loss(1.0, 1.5, (0.0, 0.0))
        x = np.array([0.5, 0.0])
        np.testing.assert_allclose(fd_gradient(f, x, 1e-6), f.gradient(x), atol=1e-6)

    def test_missing_gradient_raises(self):
        f = LossFunction(value=lambda x: np.abs(np.asarray(x)[..., 0]), dim=1)
        with pytest.raises(MissingGradient):
            f.grad(np.array([[1.0]]))


class TestDefaultFields:
    def test_ascent_is_unit_or_zero(self):
        for f in (bump_loss(1.0, 1.5, (0, 0)), quadratic_loss(2), linear_loss([3.0, 4.0])):
            pts = RNG.uniform(-1, 1, size=(100, f.dim))
            norms = np.linalg.norm(f.ascent(pts), axis=-1)
            assert np.all((np.abs(norms - 1.0) < 1e-12) | (norms < 1e-12))

    def test_lip_equals_gradient_norm_for_smooth(self):
        # |f|_Lip(x) = ||grad f(x)|| wherever f is C^1
        f = bump_loss(1.0, 1.5, (0, 0))
        pts = RNG.uniform(-1, 1, size=(100, 2))
        np.testing.assert_allclose(f.lip(pts), np.linalg.norm(f.gradient(pts), axis=-1), atol=1e-8)

    def test_fd_lip_fallback_on_kink(self):
        f = LossFunction(value=lambda x: np.abs(np.asarray(x)[..., 0]), dim=1)
        lips = f.lip(np.array([[0.5], [-0.5], [0.0]]))
        np.testing.assert_allclose(lips, 1.0, atol=1e-6)


class TestGrowthBound:
    @pytest.mark.parametrize(
        "f,p",
        [
            (bump_loss(1.0, 1.5, (0, 0)), 2.0),
            (call_loss(1.0), 2.0),
            (bull_spread_on_returns(1.0, 1.2, smoothing=1e-3), 3.0),
            (linear_loss([1.0, -2.0]), 2.0),
            (quadratic_loss(2), 2.0),
        ],
    )
    def test_sampled_growth(self, f, p):
        # |f(x)| <= (|f(0)| + L_f)(1 + ||x||)^p on sampled points
        pts = RNG.uniform(-5, 5, size=(500, f.dim))
        f0 = abs(float(f.value(np.zeros(f.dim))))
        lhs = np.abs(np.asarray(f.value(pts), dtype=float))
        rhs = (f0 + f.lip_p_constant) * (1 + np.linalg.norm(pts, axis=-1)) ** p
        assert np.all(lhs <= rhs + 1e-12)


class TestNegation:
    def test_negate_flips_everything(self):
        f = bump_loss(1.0, 1.5, (0, 0))
        g = negate_loss(f)
        pts = RNG.uniform(-1, 1, size=(20, 2))
        np.testing.assert_allclose(np.asarray(g.value(pts)), -np.asarray(f.value(pts)))
        np.testing.assert_allclose(g.gradient(pts), -f.gradient(pts))
        v = RNG.standard_normal((20, 2))
        np.testing.assert_allclose(g.hessian_vec(pts, v), -f.hessian_vec(pts, v))

"""Penalty rescaling and convex conjugation, checked against independent oracles."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wassrisk import (
    BallPenalty,
    NonconvergentConjugate,
    PowerPenalty,
    TablePenalty,
    penalty_from_json,
    penalty_to_json,
    phi_h,
    phi_star,
)


def grid_conjugate(penalty, u, vmax, n=200001):
    """Independent oracle: dense grid maximization of u*v - phi(v)."""
    vs = np.linspace(0.0, vmax, n)
    gs = u * vs - np.asarray(penalty.value(vs), dtype=float)
    gs = np.where(np.isfinite(gs), gs, -np.inf)
    return float(np.max(gs))


class TestRescaling:
    def test_power_example(self):
        # h*phi(v/h) = 0.5 * (1/0.5)^2 = 2
        p = PowerPenalty(1.0, 2.0)
        assert float(phi_h(p, 0.5, 1.0)) == pytest.approx(2.0, abs=1e-15)

    @pytest.mark.parametrize(
        "penalty",
        [PowerPenalty(1.0, 2.0), BallPenalty(1.0), TablePenalty([0, 1, 2], [0, 1, 4], 2.0)],
    )
    def test_zero_is_fixed(self, penalty):
        assert float(phi_h(penalty, 0.3, 0.0)) == 0.0

    def test_ball_rescaled_radius(self):
        # radius a*h = 0.1: inside stays free, outside is rejected
        b = BallPenalty(1.0)
        assert float(phi_h(b, 0.1, 0.05)) == 0.0
        assert float(phi_h(b, 0.1, 0.1)) == 0.0
        assert math.isinf(float(phi_h(b, 0.1, 0.2)))

    @pytest.mark.parametrize(
        "penalty",
        [
            PowerPenalty(0.7, 3.0),
            BallPenalty(2.0),
            TablePenalty([0, 0.5, 1, 2], [0, 0.25, 1, 4], 2.0),
        ],
    )
    def test_monotone_in_h(self, penalty):
        # convexity + phi(0)=0 make h -> phi_h(v) nonincreasing
        vs = np.linspace(0.0, 4.0, 41)
        for h1, h2 in [(0.1, 0.2), (0.2, 1.0), (1.0, 3.0)]:
            a = np.asarray(phi_h(penalty, h1, vs))
            b = np.asarray(phi_h(penalty, h2, vs))
            assert np.all(a >= b - 1e-12)

    def test_h_must_be_positive(self):
        with pytest.raises(ValueError):
            phi_h(PowerPenalty(1.0, 2.0), 0.0, 1.0)


class TestConjugate:
    def test_power_against_grid_oracle(self):
        # maximize 2v - v^2 over [0, 4]: optimum v = 1, value 1
        p = PowerPenalty(1.0, 2.0)
        oracle = grid_conjugate(p, 2.0, 4.0)
        assert oracle == pytest.approx(1.0, abs=1e-8)
        assert phi_star(p, 2.0) == pytest.approx(oracle, abs=1e-8)

    def test_zero_argument_exact(self):
        for pen in (PowerPenalty(2.0, 1.5), BallPenalty(0.3), TablePenalty([0, 1], [0, 1], 2.0)):
            assert phi_star(pen, 0.0) == 0.0

    def test_ball_is_linear(self):
        # sup_{v <= 3} 2v = 6
        b = BallPenalty(3.0)
        assert phi_star(b, 2.0) == pytest.approx(6.0, abs=1e-12)
        assert phi_star(b, 2.0) == pytest.approx(grid_conjugate(b, 2.0, 6.0), abs=1e-8)

    @pytest.mark.parametrize("a,m", [(1.0, 2.0), (0.5, 3.0), (2.0, 1.5)])
    def test_closed_form_vs_numeric(self, a, m):
        p = PowerPenalty(a, m)
        for u in (0.1, 1.0, 10.0):
            cf = p.conjugate(u)
            nm = p.conjugate_numeric(u)
            assert abs(cf - nm) <= 1e-8 * (1.0 + cf)

    @pytest.mark.parametrize(
        "penalty",
        [PowerPenalty(1.0, 2.0), BallPenalty(1.5), TablePenalty([0, 1, 2], [0, 0.5, 2], 3.0)],
    )
    def test_convex_and_nondecreasing(self, penalty):
        us = np.linspace(0.0, 5.0, 26)
        stars = np.array([phi_star(penalty, u) for u in us])
        assert np.all(np.diff(stars) >= -1e-10)
        second = np.diff(stars, 2)
        assert np.all(second >= -1e-8)

    def test_table_tracks_closed_form(self):
        # dense samples of v^2 should conjugate like the power penalty
        vs = np.linspace(0.0, 8.0, 801)
        table = TablePenalty(vs, vs**2, 2.0)
        power = PowerPenalty(1.0, 2.0)
        for u in (0.3, 1.0, 2.5):
            assert phi_star(table, u) == pytest.approx(phi_star(power, u), abs=1e-4)

    def test_nonconvergent_for_sublinear_growth(self):
        # growth exponent 0.5 never overtakes u*v: the bracket search must fail
        t = TablePenalty([0.0, 1.0], [0.0, 0.5], 0.5)
        with pytest.raises(NonconvergentConjugate):
            t.conjugate_numeric(1.0)


class TestFenchelYoung:
    @settings(max_examples=200, deadline=None)
    @given(
        u=st.floats(0.0, 50.0, allow_nan=False),
        v=st.floats(0.0, 50.0, allow_nan=False),
    )
    def test_inequality_power(self, u, v):
        p = PowerPenalty(0.8, 2.5)
        assert u * v <= float(p.value(v)) + p.conjugate(u) + 1e-9 * (1.0 + u * v)

    def test_equality_at_numeric_maximizer(self):
        p = PowerPenalty(0.8, 2.5)
        for u in (0.2, 1.0, 4.0):
            star, vstar = p.conjugate_numeric(u, return_argmax=True)
            gap = float(p.value(vstar)) + star - u * vstar
            assert abs(gap) <= 1e-8 * (1.0 + star)

    def test_inequality_table(self):
        t = TablePenalty([0, 0.5, 1, 2, 4], [0, 0.2, 1, 4, 16], 2.0)
        us = np.linspace(0, 4, 9)
        vs = np.linspace(0, 6, 13)
        for u in us:
            star = phi_star(t, u)
            vals = u * vs - np.asarray(t.value(vs))
            assert np.all(vals <= star + 1e-8)


class TestTablePenalty:
    def test_rejects_decreasing_samples(self):
        with pytest.raises(ValueError):
            TablePenalty([0, 1, 2], [0, 2, 1], 2.0)

    def test_rejects_bad_origin(self):
        with pytest.raises(ValueError):
            TablePenalty([0.5, 1], [0, 1], 2.0)
        with pytest.raises(ValueError):
            TablePenalty([0, 1], [0.1, 1], 2.0)

    def test_growth_extension(self):
        t = TablePenalty([0, 1], [0, 1], 3.0)
        # beyond the last knot: phi(v) = phi(1) * v^3
        assert float(t.value(2.0)) == pytest.approx(8.0, rel=1e-12)
        assert float(t.value(4.0)) == pytest.approx(64.0, rel=1e-12)

    def test_interpolation_inside(self):
        t = TablePenalty([0, 1, 2], [0, 1, 4], 2.0)
        assert float(t.value(1.5)) == pytest.approx(2.5, abs=1e-12)


class TestJsonRoundTrip:
    @pytest.mark.parametrize(
        "descriptor",
        [
            {"kind": "power", "a": 1.0, "m": 2.0},
            {"kind": "ball", "a": 0.04},
            {"kind": "table", "v": [0.0, 1.0, 2.0], "phi": [0.0, 1.0, 4.0], "growth": 3.0},
        ],
    )
    def test_round_trip(self, descriptor):
        pen = penalty_from_json(descriptor)
        again = penalty_from_json(penalty_to_json(pen))
        vs = np.linspace(0, 3, 7)
        np.testing.assert_allclose(
            np.asarray(pen.value(vs), dtype=float),
            np.asarray(again.value(vs), dtype=float),
        )

    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            penalty_from_json({"kind": "cubic"})

    def test_power_validation(self):
        with pytest.raises(ValueError):
            PowerPenalty(-1.0, 2.0)
        with pytest.raises(ValueError):
            PowerPenalty(1.0, 1.0)

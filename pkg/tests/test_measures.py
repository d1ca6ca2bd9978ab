import json
import math

import numpy as np
import pytest

from omegaflow.measures import (
    AtomicMeasure,
    GridDensity,
    MeasureError,
    QuantileMeasure,
    lp_norm,
    make_atomic,
    measure_from_json,
    measure_to_json,
    push_forward,
    quantile_function,
    second_moment,
    to_quantile,
)
from omegaflow.transport import w2_1d


class TestMakeAtomic:
    def test_single_dirac(self):
        m = make_atomic([0.0], [1.0])
        assert m.points.tolist() == [0.0]
        assert m.weights.tolist() == [1.0]

    def test_normalization_and_sort(self):
        m = make_atomic([2.0, 0.0], [1.0, 1.0])
        assert m.points.tolist() == [0.0, 2.0]
        assert m.weights.tolist() == [0.5, 0.5]

    def test_zero_weight_atom_retained(self):
        m = make_atomic([0.0, 1.0, 2.0], [0.0, 1.0, 1.0])
        assert len(m) == 3
        assert m.weights.tolist() == [0.0, 0.5, 0.5]

    def test_empty_rejected(self):
        with pytest.raises(MeasureError):
            make_atomic([], [])

    def test_nan_rejected(self):
        with pytest.raises(MeasureError):
            make_atomic([0.0, np.nan], [0.5, 0.5])
        with pytest.raises(MeasureError):
            make_atomic([0.0, np.inf], [0.5, 0.5])

    def test_negative_weight_rejected(self):
        with pytest.raises(MeasureError):
            make_atomic([0.0, 1.0], [-0.1, 1.1])

    def test_mass_conservation(self, rng):
        for _ in range(20):
            n = int(rng.integers(1, 40))
            m = make_atomic(rng.normal(size=n), rng.uniform(0, 1, n) + 1e-3)
            assert abs(m.total_mass() - 1.0) <= 1e-10

    def test_2d_support(self, rng):
        pts = rng.normal(size=(5, 2))
        m = make_atomic(pts, np.ones(5))
        assert m.dim == 2
        assert m.points_2d().shape == (5, 2)


class TestQuantile:
    def test_dirac_all_positions_zero(self):
        q = to_quantile(make_atomic([0.0], [1.0]), 16)
        assert np.all(q.positions == 0.0)

    def test_uniform_two_nodes(self):
        u = GridDensity(0.0, 0.001, np.ones(1000))
        q = to_quantile(u, 2)
        assert np.allclose(q.positions, [0.25, 0.75], atol=1e-12)

    def test_staircase_inversion(self):
        m = make_atomic([0.0, 1.0], [0.5, 0.5])
        q = to_quantile(m, 4)
        assert q.positions.tolist() == [0.0, 0.0, 1.0, 1.0]

    def test_dimension_error(self, rng):
        m = make_atomic(rng.normal(size=(4, 2)), np.ones(4))
        with pytest.raises(MeasureError):
            to_quantile(m, 8)

    def test_small_n_rejected(self):
        with pytest.raises(MeasureError):
            to_quantile(make_atomic([0.0], [1.0]), 1)

    def test_round_trip_error_halves(self):
        # smooth density bounded away from zero: error decays ~ 1/n
        xs = np.linspace(0.0, 1.0, 2001)
        mids = 0.5 * (xs[:-1] + xs[1:])
        dens = 1.0 + 0.5 * np.cos(2 * np.pi * mids)
        dens /= dens.sum() * (xs[1] - xs[0])
        src = GridDensity(0.0, xs[1] - xs[0], dens)
        errs = []
        for n in (32, 64, 128):
            approx = to_quantile(src, n).to_atomic()
            errs.append(w2_1d(src, approx, return_plan=False))
        assert errs[0] / errs[1] >= 1.8
        assert errs[1] / errs[2] >= 1.8

    def test_discretization_error_bound(self):
        u = GridDensity(0.0, 0.01, np.ones(100))
        for n in (4, 16, 64):
            q = to_quantile(u, n)
            err = w2_1d(u, q.to_atomic(), return_plan=False)
            assert err <= 1.0 / n  # diameter / n_nodes

    def test_gaps_and_densities(self):
        q = to_quantile(GridDensity(0.0, 0.01, np.ones(100)), 8)
        assert np.allclose(q.gaps(), 1.0 / 8)
        assert np.allclose(q.densities(), 1.0)

    def test_zero_width_cell_infinite_density(self):
        q = to_quantile(make_atomic([0.0, 1.0], [0.5, 0.5]), 4)
        assert math.isinf(lp_norm(q, 2))
        assert math.isinf(lp_norm(q, math.inf))


class TestSecondMoment:
    def test_dirac(self):
        assert second_moment(make_atomic([0.0], [1.0])) == 0.0

    def test_symmetric_pair(self):
        assert second_moment(make_atomic([-1.0, 1.0], [0.5, 0.5])) == 1.0

    def test_uniform_grid(self):
        u = GridDensity(0.0, 0.001, np.ones(1000))
        assert abs(second_moment(u) - 1.0 / 3.0) <= 1e-4

    def test_2d_grid(self):
        # uniform density on the unit square: second moment = 2/3
        v = np.ones((50, 50)) / 1.0
        g = GridDensity((0.0, 0.0), 0.02, v)
        assert abs(second_moment(g) - 2.0 / 3.0) <= 1e-3


class TestLpNorm:
    def test_uniform_density_one(self):
        u = GridDensity(0.0, 0.01, np.ones(100))
        for p in (1, 2, 7.5, math.inf):
            assert abs(lp_norm(u, p) - 1.0) <= 1e-12

    def test_tall_block(self):
        g = GridDensity(0.0, 0.125, np.full(4, 2.0))
        assert lp_norm(g, math.inf) == 2.0
        assert abs(lp_norm(g, 2) - math.sqrt(2.0)) <= 1e-12

    def test_monotone_in_p_small_support(self):
        g = GridDensity(0.0, 0.125, np.full(4, 2.0))  # support measure 1/2
        vals = [lp_norm(g, p) for p in (2, 8, 32, 128)]
        assert all(a <= b + 1e-12 for a, b in zip(vals, vals[1:]))
        assert abs(vals[-1] - lp_norm(g, math.inf)) <= 0.02

    def test_atomic_signals_infinity(self):
        m = make_atomic([0.0, 0.0, 1.0], [0.3, 0.3, 0.4])
        assert lp_norm(m, 2) == math.inf
        assert lp_norm(m, 1) == 1.0


class TestPushForward:
    def test_identity(self):
        m = make_atomic([0.0, 1.0], [0.5, 0.5])
        out = push_forward(m, lambda x: x)
        assert np.array_equal(out.points, m.points)
        assert np.array_equal(out.weights, m.weights)

    def test_shift(self):
        out = push_forward(make_atomic([0.0], [1.0]), lambda x: x + 1.0)
        assert out.points.tolist() == [1.0]

    def test_scaling(self):
        out = push_forward(make_atomic([0.0, 1.0], [0.5, 0.5]), lambda x: 2 * x)
        assert out.points.tolist() == [0.0, 2.0]
        assert abs(out.total_mass() - 1.0) <= 1e-15

    def test_nan_image_rejected(self):
        with pytest.raises(MeasureError):
            push_forward(make_atomic([0.0, 1.0], [0.5, 0.5]),
                         lambda x: math.nan if x == 0.0 else x)


class TestSerialization:
    def test_atomic_round_trip(self, rng):
        m = make_atomic(rng.normal(size=6), rng.uniform(0.1, 1, 6))
        back = measure_from_json(measure_to_json(m))
        assert np.array_equal(back.points, m.points)
        assert np.array_equal(back.weights, m.weights)

    def test_quantile_round_trip(self):
        q = to_quantile(GridDensity(0.0, 0.01, np.ones(100)), 16)
        back = measure_from_json(measure_to_json(q))
        assert np.array_equal(back.positions, q.positions)

    def test_grid_round_trip_2d(self):
        g = GridDensity((0.0, -1.0), 0.5, np.full((2, 2), 1.0))
        back = measure_from_json(measure_to_json(g))
        assert back.dim == 2
        assert np.array_equal(back.values, g.values)

    def test_plain_decimal_payload(self):
        payload = json.loads(measure_to_json(make_atomic([0.5], [1.0])))
        assert payload["kind"] == "atomic"
        assert payload["points"] == [0.5]


class TestInvariants:
    def test_immutability(self):
        m = make_atomic([0.0, 1.0], [0.5, 0.5])
        with pytest.raises(ValueError):
            m.points[0] = 5.0

    def test_grid_mass_validation(self):
        with pytest.raises(MeasureError):
            GridDensity(0.0, 0.01, np.ones(50))  # mass 0.5

    def test_quantile_function_inverse_property(self, rng):
        m = make_atomic(rng.normal(size=10), rng.uniform(0.1, 1, 10))
        q = rng.uniform(0.01, 0.99, 50)
        x = quantile_function(m, q)
        cum = np.cumsum(m.weights)
        for qi, xi in zip(q, x):
            k = np.searchsorted(m.points, xi, side="left")
            # CDF at xi (inclusive) must reach the level qi
            idx = np.searchsorted(m.points, xi, side="right") - 1
            assert cum[idx] >= qi - 1e-12


class Test2DSerialization:
    def test_atomic_2d_round_trip(self, rng):
        m = make_atomic(rng.normal(size=(5, 2)), rng.uniform(0.1, 1, 5))
        back = measure_from_json(measure_to_json(m))
        assert back.dim == 2
        assert np.array_equal(back.points, m.points)
        assert np.array_equal(back.weights, m.weights)

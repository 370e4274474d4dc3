import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import de_boor_basis
from pikan.bspline import (basis_derivatives, basis_table, basis_values, in_domain,
                           make_knots)


class TestMakeKnots:
    def test_default_grid_has_24_functions(self):
        kv = make_knots(-1.0, 1.0, 20, 4)
        assert kv.n_basis == 24
        assert kv.knots.shape == (29,)

    def test_degree_zero_single_interval(self):
        kv = make_knots(-1.0, 1.0, 1, 0)
        assert kv.n_basis == 1
        np.testing.assert_array_equal(basis_values(kv, np.array([0.0])), [[1.0]])

    def test_spacing(self):
        kv = make_knots(0.0, 1.0, 5, 3)
        assert kv.n_basis == 8
        assert kv.h == pytest.approx(0.2)
        d = np.diff(kv.knots)
        assert np.all(np.abs(d - kv.h) < 1e-12 * kv.h)

    def test_knots_read_only(self):
        kv = make_knots(0.0, 1.0, 3, 2)
        with pytest.raises(ValueError):
            kv.knots[0] = 5.0

    @pytest.mark.parametrize("a,b", [(1.0, 1.0), (2.0, -1.0)])
    def test_invalid_domain(self, a, b):
        with pytest.raises(ValueError, match="invalid domain"):
            make_knots(a, b, 3, 2)

    @pytest.mark.parametrize("G,k", [(0, 3), (3, -1), (2.5, 3)])
    def test_invalid_size(self, G, k):
        with pytest.raises(ValueError, match="invalid size"):
            make_knots(0.0, 1.0, G, k)

    def test_equality_ignores_identity(self):
        assert make_knots(0, 1, 4, 3) == make_knots(0.0, 1.0, 4, 3)
        assert hash(make_knots(0, 1, 4, 3)) == hash(make_knots(0.0, 1.0, 4, 3))


class TestBasisValues:
    def test_linear_hats_midpoint(self):
        kv = make_knots(0.0, 1.0, 2, 1)
        np.testing.assert_allclose(basis_values(kv, 0.25), [0.5, 0.5, 0.0], atol=1e-15)

    def test_matches_de_boor(self):
        kv = make_knots(-1.0, 1.0, 20, 4)
        x = np.concatenate([[0.3, -1.0, 1.0], np.random.default_rng(0).uniform(-1, 1, 200)])
        ref = de_boor_basis(kv.knots, 4, x)
        np.testing.assert_allclose(basis_values(kv, x), ref, atol=1e-12)

    def test_weighted_sums_match_de_boor(self):
        kv = make_knots(-1.0, 1.0, 20, 4)
        rng = np.random.default_rng(1)
        x = np.array([0.3])
        for _ in range(10):
            c = rng.normal(size=kv.n_basis)
            assert abs(basis_values(kv, x)[0] @ c - de_boor_basis(kv.knots, 4, x)[0] @ c) < 1e-12

    @pytest.mark.parametrize("G,k", [(1, 0), (3, 1), (7, 2), (5, 3), (20, 4), (4, 5)])
    def test_other_orders_match_de_boor(self, G, k):
        kv = make_knots(-0.5, 2.0, G, k)
        x = np.linspace(-0.5, 2.0, 97)
        np.testing.assert_allclose(basis_values(kv, x), de_boor_basis(kv.knots, k, x),
                                   atol=1e-12)

    def test_partition_of_unity_1000_points(self):
        kv = make_knots(-1.0, 1.0, 20, 4)
        x = np.random.default_rng(2).uniform(-1, 1, 1000)
        assert np.max(np.abs(basis_values(kv, x).sum(-1) - 1.0)) < 1e-12

    def test_outside_domain_is_clamped(self):
        kv = make_knots(-1.0, 1.0, 6, 3)
        np.testing.assert_array_equal(basis_values(kv, np.array([-3.0, 7.0])),
                                      basis_values(kv, np.array([-1.0, 1.0])))
        assert list(in_domain(kv, [-3.0, 0.0, 1.0])) == [False, True, True]

    def test_backends_agree(self):
        kv = make_knots(-1.0, 1.0, 9, 4)
        x = np.random.default_rng(3).uniform(-1.2, 1.2, 500)
        a = basis_table(kv, x, 4, use_numba=True)
        b = basis_table(kv, x, 4, use_numba=False)
        np.testing.assert_allclose(a, b, rtol=0, atol=1e-9)

    def test_shape_follows_input(self):
        kv = make_knots(-1.0, 1.0, 5, 2)
        assert basis_table(kv, np.zeros((3, 4)), 2).shape == (3, 3, 4, 7)


@settings(max_examples=60, deadline=None)
@given(G=st.integers(1, 25), k=st.integers(0, 5),
       x=st.floats(-1.0, 1.0, allow_nan=False))
def test_local_support_and_positivity(G, k, x):
    kv = make_knots(-1.0, 1.0, G, k)
    B = basis_values(kv, np.array([x]))[0]
    assert np.all(B >= 0.0)
    assert np.count_nonzero(B) <= k + 1
    assert abs(B.sum() - 1.0) < 1e-12


@settings(max_examples=60, deadline=None)
@given(G=st.integers(1, 25), k=st.integers(1, 5),
       x=st.floats(-0.999, 0.999, allow_nan=False))
def test_derivatives_sum_to_zero(G, k, x):
    kv = make_knots(-1.0, 1.0, G, k)
    T = basis_table(kv, np.array([x]), k)
    for m in range(1, k + 1):
        assert abs(T[m, 0].sum()) < 1e-10 * kv.h ** -m


class TestDerivatives:
    def test_hat_slopes(self):
        kv = make_knots(0.0, 1.0, 4, 1)
        d = basis_derivatives(kv, np.array([0.3]), 1)[0]
        nz = d[d != 0]
        np.testing.assert_allclose(sorted(nz), [-1 / kv.h, 1 / kv.h])

    @pytest.mark.parametrize("m", [1, 2])
    def test_against_central_differences(self, m):
        kv = make_knots(-1.0, 1.0, 20, 4)
        x = np.random.default_rng(4).uniform(-0.99, 0.99, 100)
        x = np.append(x, 0.3)
        h = 1e-4
        lower = basis_table(kv, np.stack([x - h, x, x + h]), m - 1)[m - 1]
        fd = (lower[2] - lower[0]) / (2 * h)
        exact = basis_derivatives(kv, x, m)
        rel = np.max(np.abs(fd - exact)) / np.max(np.abs(exact))
        assert rel < 1e-6

    def test_second_derivative_from_values(self):
        kv = make_knots(-1.0, 1.0, 20, 4)
        x = np.array([0.3])
        h = 1e-4
        fd = (basis_values(kv, x + h) - 2 * basis_values(kv, x) + basis_values(kv, x - h)) / h ** 2
        exact = basis_derivatives(kv, x, 2)
        assert np.max(np.abs(fd - exact)) / np.max(np.abs(exact)) < 1e-6

    def test_order_too_high(self):
        kv = make_knots(-1.0, 1.0, 5, 3)
        with pytest.raises(ValueError, match="order too high"):
            basis_derivatives(kv, 0.0, 4)

    def test_top_derivative_is_piecewise_constant(self):
        kv = make_knots(-1.0, 1.0, 5, 3)
        x = np.linspace(-0.95, -0.65, 7)  # inside the first cell
        d3 = basis_derivatives(kv, x, 3)
        np.testing.assert_allclose(d3, np.broadcast_to(d3[0], d3.shape), atol=1e-9)

    def test_vanish_outside_domain(self):
        kv = make_knots(-1.0, 1.0, 5, 3)
        T = basis_table(kv, np.array([-1.5, 1.5]), 3)
        assert np.all(T[1:] == 0.0)

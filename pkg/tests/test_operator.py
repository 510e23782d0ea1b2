import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from urysohn import (
    LevelOutOfRange, MalformedModel, SeriesTooShort, SignalSeries, UrysohnModel,
    eval_interpolated, eval_quantized, flatten_levels, flatten_multi_input, quantize,
    quantize_levels, stencil, unflatten_level,
)
from urysohn.operator import eval_levels, round_half_away


def reference_loop(U, x, x_min, x_max):
    """Literal double loop over time and lag; levels via half-away rounding."""
    m, n = U.shape
    y = [0.0] * len(x)
    k = []
    for xi in x:
        xi = min(max(xi, x_min), x_max)
        v = (n - 1) * (xi - x_min) / (x_max - x_min)
        r = int(v) + (1 if v - int(v) >= 0.5 else 0)
        k.append(1 + r)
    for i in range(m - 1, len(x)):
        s = 0.0
        for j in range(m):
            s += U[j, k[i - j] - 1]
        y[i] = s
    return np.array(y)


def model(U, x_min=0.0, x_max=1.0):
    return UrysohnModel(np.asarray(U, dtype=float), x_min, x_max)


matrices = st.tuples(st.integers(1, 5), st.integers(2, 7)).flatmap(
    lambda s: hnp.arrays(float, s, elements=st.floats(-10, 10))
)


class TestQuantize:
    def test_grid_point(self):
        assert quantize(0.3, model(np.zeros((1, 11)))) == 4

    def test_endpoints(self):
        M = model(np.zeros((2, 7)), -2.0, 3.0)
        assert quantize(-2.0, M) == 1
        assert quantize(3.0, M) == 7

    def test_tie_rounds_away(self):
        assert quantize(0.25, model(np.zeros((1, 3)))) == 2

    def test_clamps(self):
        M = model(np.zeros((1, 5)))
        assert quantize(-4.0, M) == 1
        assert quantize(9.0, M) == 5

    def test_vector_matches_scalar(self):
        M = model(np.zeros((1, 9)), -1, 2)
        x = np.linspace(-1.5, 2.5, 301)
        assert quantize_levels(x, M).tolist() == [quantize(v, M) for v in x]

    def test_round_half_away_sign(self):
        assert round_half_away(np.array([-2.5, -0.5, 0.5, 2.5])).tolist() == [-3, -1, 1, 3]


class TestStencil:
    def test_midpoint(self):
        s = stencil(0.35, model(np.zeros((1, 11))))
        assert (s.k_lo, s.k_hi) == (4, 5)
        assert s.psi == pytest.approx(0.5)
        assert s.b == pytest.approx(4.5)

    def test_endpoints(self):
        M = model(np.zeros((1, 11)))
        lo, hi = stencil(0.0, M), stencil(1.0, M)
        assert (lo.k_lo, lo.k_hi, lo.psi, lo.b) == (1, 1, 0.0, 1.0)
        assert (hi.k_lo, hi.k_hi, hi.psi, hi.b) == (11, 11, 0.0, 11.0)

    @given(st.floats(-1, 2))
    def test_bounds(self, x):
        s = stencil(x, model(np.zeros((1, 6))))
        assert 1 <= s.k_lo <= s.k_hi <= 6
        assert 0.0 <= s.psi < 1.0
        assert s.k_hi - s.k_lo in (0, 1)


class TestEvalQuantized:
    def test_hand_sum(self):
        M = model([[1, 2], [3, 4]])
        y = eval_quantized(M, SignalSeries([0.0, 1.0, 1.0, 0.0]))
        assert y.values[1:].tolist() == [5.0, 6.0, 5.0]
        assert y.valid.tolist() == [False, True, True, True]

    def test_zero_matrix(self):
        y = eval_quantized(model(np.zeros((3, 4))), SignalSeries(np.random.default_rng(0).random(20)))
        assert not y.values.any()

    def test_memoryless(self):
        U = np.array([[5.0, -1.0, 2.0]])
        x = np.array([0.0, 1.0, 0.5, 0.5, 0.0])
        y = eval_quantized(model(U), SignalSeries(x))
        assert y.values.tolist() == [5.0, 2.0, -1.0, -1.0, 5.0]
        assert y.valid.all()

    def test_too_short(self):
        with pytest.raises(SeriesTooShort):
            eval_quantized(model(np.zeros((4, 3))), SignalSeries([0.1, 0.2, 0.3]))

    def test_level_out_of_range(self):
        with pytest.raises(LevelOutOfRange):
            eval_levels(np.zeros((2, 3)), np.array([1, 4, 2]))

    @settings(max_examples=60)
    @given(matrices, st.data())
    def test_matches_reference_loop(self, U, data):
        m, _ = U.shape
        x = data.draw(hnp.arrays(float, st.integers(m, 30), elements=st.floats(-0.5, 1.5)))
        got = eval_quantized(model(U), SignalSeries(x)).values
        assert np.array_equal(got, reference_loop(U, x, 0.0, 1.0))

    @given(matrices, matrices, st.data())
    def test_linear_in_matrix(self, U1, U2, data):
        if U1.shape != U2.shape:
            U2 = np.resize(U2, U1.shape)
        x = SignalSeries(data.draw(hnp.arrays(float, U1.shape[0] + 5, elements=st.floats(0, 1))))
        for ev in (eval_quantized, eval_interpolated):
            lhs = ev(model(U1 + U2), x).values
            rhs = ev(model(U1), x).values + ev(model(U2), x).values
            np.testing.assert_allclose(lhs, rhs, atol=1e-9)

    @given(matrices, st.data())
    def test_constant_input_gives_column_sum(self, U, data):
        m, n = U.shape
        k = data.draw(st.integers(1, n))
        x = np.full(m + 4, (k - 1) / (n - 1))
        y = eval_quantized(model(U), SignalSeries(x)).values[m - 1:]
        np.testing.assert_allclose(y, U[:, k - 1].sum(), rtol=1e-12, atol=1e-12)


class TestEvalInterpolated:
    def test_midpoint(self):
        y = eval_interpolated(model([[0.0, 10.0]]), SignalSeries([0.5]))
        assert y.values[0] == pytest.approx(5.0)

    def test_grid_collapse(self):
        rng = np.random.default_rng(1)
        U = rng.normal(size=(4, 11))
        x = SignalSeries(rng.integers(0, 11, 200) * 0.1)
        a = eval_interpolated(model(U), x).values
        b = eval_quantized(model(U), x).values
        assert np.max(np.abs(a - b)) <= 1e-12

    def test_dot_product_oracle(self):
        rng = np.random.default_rng(2)
        m, n = 3, 5
        U = rng.normal(size=(m, n))
        x = rng.random(40)
        y = eval_interpolated(model(U), SignalSeries(x)).values
        for i in range(m - 1, x.size):
            row = np.zeros(m * n)
            for j in range(m):
                b = 1 + (n - 1) * x[i - j]
                lo = int(np.floor(b))
                psi = b - lo
                row[j * n + lo - 1] += 1 - psi
                if psi > 0:
                    row[j * n + lo] += psi
            assert y[i] == pytest.approx(row @ U.ravel(), abs=1e-12)

    def test_breakpoints(self):
        M = UrysohnModel(np.array([[0.0, 1.0, 3.0]]), 0.0, 1.0, breakpoints=[0.0, 0.2, 1.0])
        y = eval_interpolated(M, SignalSeries([0.1, 0.6, 0.2])).values
        np.testing.assert_allclose(y, [0.5, 2.0, 1.0])


class TestMultiInput:
    def test_single_input(self):
        assert flatten_multi_input([4], [7]) == 4

    def test_example(self):
        assert flatten_multi_input([2, 3], [2, 3]) == 6

    @pytest.mark.parametrize("dims", [(2, 3), (3, 2, 2), (4, 4), (1, 5), (2, 2, 2, 2)])
    def test_bijection(self, dims):
        seen = []
        for levels in itertools.product(*[range(1, d + 1) for d in dims]):
            k = flatten_multi_input(list(levels), list(dims))
            assert unflatten_level(k, dims) == tuple(levels)
            seen.append(k)
        assert sorted(seen) == list(range(1, int(np.prod(dims)) + 1))

    def test_vectorised(self):
        dims = (3, 4)
        a = np.array([1, 2, 3, 3])
        b = np.array([1, 4, 2, 4])
        assert flatten_levels([a, b], dims).tolist() == [
            flatten_multi_input([p, q], dims) for p, q in zip(a, b)
        ]

    def test_out_of_range(self):
        with pytest.raises(LevelOutOfRange):
            flatten_multi_input([3, 1], [2, 3])


class TestModelValidation:
    def test_bad_range(self):
        with pytest.raises(MalformedModel):
            UrysohnModel(np.zeros((2, 3)), 1.0, 1.0)

    def test_non_finite(self):
        with pytest.raises(MalformedModel):
            UrysohnModel(np.array([[0.0, np.nan]]))

    def test_dims_product(self):
        with pytest.raises(MalformedModel):
            UrysohnModel(np.zeros((2, 6)), dims=[2, 2])

    def test_equality_is_bitwise(self):
        a = model(np.zeros((1, 2)))
        b = model(np.array([[0.0, -0.0]]))
        assert a == a.copy()
        assert a != b

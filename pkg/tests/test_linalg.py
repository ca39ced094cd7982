import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from flowreach.linalg import (
    DimensionError,
    LinearProgram,
    LpInfeasible,
    LpOptimum,
    LpUnbounded,
    affine_step,
    inf_norm,
    lp_optimize,
    mat_exp,
)
from oracles import lp_by_vertex_enumeration, taylor_expm


class TestMatExp:
    def test_zero_matrix_gives_identity(self):
        out = mat_exp(np.zeros((3, 3)), 1.0)
        assert np.array_equal(out, np.eye(3))

    def test_nilpotent_series_terminates(self):
        delta = 0.37
        out = mat_exp(np.array([[0.0, 1.0], [0.0, 0.0]]), delta)
        assert np.allclose(out, [[1.0, delta], [0.0, 1.0]], atol=1e-15)

    def test_matches_series_oracle_small_step(self):
        rng = np.random.default_rng(7)
        for _ in range(20):
            a = rng.uniform(-2, 2, size=(4, 4))
            got = mat_exp(a, 0.01)
            want = taylor_expm(a, 0.01)
            assert np.max(np.abs(got - want)) < 1e-10

    def test_non_square_rejected(self):
        with pytest.raises(DimensionError):
            mat_exp(np.zeros((2, 3)))

    def test_identity_at_time_zero(self):
        rng = np.random.default_rng(3)
        a = rng.normal(size=(5, 5))
        assert np.max(np.abs(mat_exp(a, 0.0) - np.eye(5))) <= 1e-14

    @given(st.integers(0, 2 ** 32 - 1))
    @settings(max_examples=40, deadline=None)
    def test_semigroup_property(self, seed):
        rng = np.random.default_rng(seed)
        a = rng.uniform(-1, 1, size=(3, 3))
        s, t = rng.uniform(0, 1, size=2)
        lhs = mat_exp(a, s) @ mat_exp(a, t)
        rhs = mat_exp(a, s + t)
        assert np.max(np.abs(lhs - rhs)) < 1e-9


class TestInfNorm:
    def test_zero(self):
        assert inf_norm(np.zeros((4, 4))) == 0.0

    def test_known_value(self):
        assert inf_norm(np.array([[1.0, -2.0], [3.0, 0.0]])) == 3.0

    def test_matches_naive_loop(self):
        rng = np.random.default_rng(11)
        a = rng.normal(size=(5, 5))
        naive = max(sum(abs(a[i, j]) for j in range(5)) for i in range(5))
        assert inf_norm(a) == naive


class TestAffineStep:
    def test_pure_clock(self):
        m, v = affine_step(np.zeros((1, 1)), np.array([1.0]), 0.01)
        assert np.allclose(m, [[1.0]])
        assert np.allclose(v, [0.01])

    def test_scalar_exponential_with_offset(self):
        # x' = -x + 2 has fixed point 2; x(t) = 2 + (x0-2) e^{-t}
        m, v = affine_step(np.array([[-1.0]]), np.array([2.0]), 0.5)
        x0 = 5.0
        want = 2.0 + (x0 - 2.0) * np.exp(-0.5)
        assert abs(m[0, 0] * x0 + v[0] - want) < 1e-12


class TestLpOptimize:
    def test_simple_maximum(self):
        lp = LinearProgram(np.array([[1.0], [-1.0]]), np.array([1.0, 0.0]), np.array([1.0]))
        out = lp_optimize(lp)
        assert isinstance(out, LpOptimum)
        assert abs(out.value - 1.0) < 1e-9

    def test_infeasible(self):
        lp = LinearProgram(np.array([[1.0], [-1.0]]), np.array([0.0, -1.0]), np.array([1.0]))
        assert isinstance(lp_optimize(lp), LpInfeasible)

    def test_unbounded(self):
        lp = LinearProgram(np.array([[-1.0]]), np.array([0.0]), np.array([1.0]))
        assert isinstance(lp_optimize(lp), LpUnbounded)

    def test_agrees_with_vertex_enumeration(self):
        rng = np.random.default_rng(21)
        for _ in range(60):
            m = rng.integers(4, 9)
            c = rng.uniform(-1, 1, size=(m, 3))
            d = rng.uniform(-0.5, 1.5, size=m)
            obj = rng.uniform(-1, 1, size=3)
            verdict, value = lp_by_vertex_enumeration(c, d, obj)
            out = lp_optimize(LinearProgram(c, d, obj))
            if verdict == "optimum":
                assert isinstance(out, LpOptimum)
                assert abs(out.value - value) <= 1e-9 * max(1.0, abs(value))
            elif verdict == "infeasible":
                assert isinstance(out, LpInfeasible)
            else:
                assert isinstance(out, LpUnbounded)

    def test_shape_validation(self):
        with pytest.raises(DimensionError):
            LinearProgram(np.zeros((2, 2)), np.zeros(3), np.zeros(2))
        with pytest.raises(DimensionError):
            LinearProgram(np.zeros((2, 2)), np.zeros(2), np.zeros(3))

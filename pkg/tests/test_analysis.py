import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from urysohn import (
    BadPinPattern, Inconsistent, InsufficientQueries, IdentConfig, SignalSeries, Structure,
    TooLarge, UrysohnModel, assemble_system, block_column_rank, brute_rank,
    check_describability, check_describability_recorded, classify_structure,
    enumerate_full_system, eval_quantized, min_norm_solve, pin_and_solve, run_identification,
)
from urysohn.analysis import feedback_black_box, fir_black_box, model_black_box


class TestAssemble:
    def test_orthogonal_rows(self):
        s = assemble_system([1, 2, 1, 3], [0.0] * 4, 3, 3)
        rows = [set(r) for r in s.rows.tolist()]
        assert rows == [{1, 5, 7}, {3, 4, 8}]
        assert not rows[0] & rows[1]

    def test_memoryless(self):
        s = assemble_system([2, 1, 3], [1.0, 2.0, 3.0], 1, 3)
        assert s.rows.tolist() == [[2], [1], [3]] and s.rhs.tolist() == [1.0, 2.0, 3.0]

    def test_constant_input(self):
        s = assemble_system([2] * 6, None, 3, 4)
        assert all(sorted(r) == [2, 6, 10] for r in s.rows.tolist())

    @given(st.integers(1, 4), st.integers(2, 5), st.integers(0, 10 ** 6))
    def test_one_index_per_block(self, m, n, seed):
        k = np.random.default_rng(seed).integers(1, n + 1, m + 10)
        s = assemble_system(k, None, m, n)
        blocks = (s.rows - 1) // n
        assert (np.sort(blocks, axis=1) == np.arange(m)).all()
        assert len(s.rhs) == len(s)


class TestRank:
    def test_identity_pattern(self):
        s = enumerate_full_system(1, 3)
        assert np.array_equal(s.dense(), np.eye(3))

    @pytest.mark.parametrize("m, n, r", [(2, 2, 3), (3, 2, 4), (2, 3, 5), (3, 3, 7)])
    def test_small_cases(self, m, n, r):
        assert brute_rank(enumerate_full_system(m, n)) == r

    def test_single_row(self):
        assert brute_rank(np.array([[1.0, 0.0, 1.0]])) == 1

    @pytest.mark.parametrize("m", range(1, 5))
    @pytest.mark.parametrize("n", range(2, 6))
    def test_full_rank_formula(self, m, n):
        s = enumerate_full_system(m, n)
        assert len(s) == n ** m
        r = brute_rank(s)
        assert r == m * n - m + 1
        assert r == np.linalg.matrix_rank(s.dense())

    @pytest.mark.parametrize("m", range(2, 5))
    @pytest.mark.parametrize("n", range(2, 5))
    def test_block_deficiency(self, m, n):
        s = enumerate_full_system(m, n)
        for a in range(1, m + 1):
            for b in range(a + 1, m + 1):
                assert block_column_rank(s, [a, b]) == 2 * n - 1

    @settings(max_examples=25)
    @given(st.integers(1, 4), st.integers(2, 5), st.integers(0, 10 ** 6), st.integers(4, 60))
    def test_observed_rank_bounded(self, m, n, seed, N):
        k = np.random.default_rng(seed).integers(1, n + 1, N + m)
        assert brute_rank(assemble_system(k, None, m, n)) <= m * n - m + 1

    def test_guard(self):
        with pytest.raises(TooLarge):
            enumerate_full_system(7, 10)


class TestSolve:
    def setup_method(self):
        rng = np.random.default_rng(0)
        self.U = rng.normal(size=(3, 4))
        self.sys = enumerate_full_system(3, 4, UrysohnModel(self.U))

    def test_min_norm_reproduces_rhs(self):
        Z = min_norm_solve(self.sys)
        np.testing.assert_allclose(self.sys.dense() @ Z, self.sys.rhs, atol=1e-9)
        assert np.linalg.norm(Z) <= np.linalg.norm(self.U)
        np.testing.assert_allclose(Z, np.linalg.pinv(self.sys.dense()) @ self.sys.rhs, atol=1e-9)

    def test_gauge_shift_same_solution(self):
        V = self.U.copy()
        V[0] += 0.7
        V[1] -= 0.7
        other = enumerate_full_system(3, 4, UrysohnModel(V))
        np.testing.assert_allclose(other.rhs, self.sys.rhs, atol=1e-12)
        np.testing.assert_allclose(min_norm_solve(other), min_norm_solve(self.sys), atol=1e-9)

    def test_memoryless_column_means(self):
        s = assemble_system([1, 2, 1, 2, 3], [1.0, 5.0, 1.0, 5.0, 2.0], 1, 3)
        np.testing.assert_allclose(min_norm_solve(s), [1.0, 5.0, 2.0], atol=1e-12)

    def test_inconsistent(self):
        s = assemble_system([1, 1], [1.0, 2.0], 1, 2)
        with pytest.raises(Inconsistent):
            min_norm_solve(s)

    def test_pins_affine(self):
        A = self.sys.dense()
        Z0 = pin_and_solve(self.sys, [(5, 0.0), (9, 0.0)])
        Z1 = pin_and_solve(self.sys, [(5, 1.0), (9, -2.0)])
        Zh = pin_and_solve(self.sys, [(5, 0.5), (9, -1.0)])
        for Z in (Z0, Z1, Zh):
            np.testing.assert_allclose(A @ Z, self.sys.rhs, atol=1e-9)
        assert np.max(np.abs(Z0 - Z1)) > 0.1
        np.testing.assert_allclose(Zh, (Z0 + Z1) / 2, atol=1e-9)

    def test_pin_rules(self):
        with pytest.raises(BadPinPattern):
            pin_and_solve(self.sys, [(1, 0.0), (2, 0.0)])
        with pytest.raises(BadPinPattern):
            pin_and_solve(self.sys, [(1, 0.0), (5, 0.0), (9, 0.0)])
        single = enumerate_full_system(1, 3, UrysohnModel(np.array([[1.0, 2.0, 3.0]])))
        with pytest.raises(BadPinPattern):
            pin_and_solve(single, [(1, 0.0)])
        np.testing.assert_allclose(pin_and_solve(single, []), [1.0, 2.0, 3.0])


class TestDescribability:
    def test_urysohn_model(self):
        U = np.random.default_rng(1).normal(size=(3, 4))
        rep = check_describability(model_black_box(UrysohnModel(U)), 3, 4, 1e-12)
        assert rep.verdict and rep.memory_violation <= 1e-12
        assert rep.max_additivity_violation <= 1e-12 and rep.coverage == 1.0

    def test_fir(self):
        rep = check_describability(fir_black_box([1.0, -0.5, 0.25]), 3, 5, 1e-12)
        assert rep.verdict

    def test_feedback(self):
        rep = check_describability(feedback_black_box(0.5), 3, 4, 1e-9)
        assert not rep.memory_ok and rep.memory_violation > 1e-3 and not rep.verdict

    def test_squared_sum_is_not_additive(self):
        def box(h):
            return float(np.sum(h[-2:]) ** 2)
        rep = check_describability(box, 2, 3, 1e-9)
        assert rep.memory_ok and rep.max_additivity_violation > 0.1 and not rep.verdict

    def test_max_pairs_coverage(self):
        rep = check_describability(fir_black_box([1.0, 1.0, 1.0]), 3, 4, max_pairs=5)
        assert rep.coverage == pytest.approx(5 / 27)

    def test_recorded(self):
        rng = np.random.default_rng(2)
        U = rng.normal(size=(2, 3))
        k = rng.integers(1, 4, 3000)
        y = eval_quantized(UrysohnModel(U), SignalSeries((k - 1) / 2)).values
        rep = check_describability_recorded(k, y, 2, 3, 1e-12)
        assert rep.verdict and rep.coverage == 1.0

    def test_recorded_insufficient(self):
        with pytest.raises(InsufficientQueries):
            check_describability_recorded([2, 2, 2, 2], [0.0] * 4, 2, 3)


class TestClassify:
    grid = np.linspace(0, 1, 9)

    def test_hammerstein(self):
        U = np.outer([1.0, 0.5, -0.2], np.sin(3 * self.grid))
        assert classify_structure(UrysohnModel(U)).kind is Structure.HAMMERSTEIN

    def test_linear(self):
        U = np.outer([1.0, 0.5, -0.2], self.grid)
        assert classify_structure(UrysohnModel(U)).kind is Structure.LINEAR

    def test_general(self):
        U = np.vstack([np.sin(3 * self.grid), self.grid ** 2])
        assert classify_structure(UrysohnModel(U)).kind is Structure.GENERAL

    def test_identified_hammerstein(self):
        rng = np.random.default_rng(3)
        U = np.outer([1.0, 0.6, 0.3], np.cos(4 * self.grid))
        x = rng.integers(0, 9, 4000) / 8
        y = eval_quantized(UrysohnModel(U), SignalSeries(x)).values
        s = run_identification(x, y, IdentConfig(), 3, 9)
        for _ in range(30):
            s = run_identification(x, y, state=s)
        rep = classify_structure(s.model, 1e-6)
        assert rep.kind is Structure.HAMMERSTEIN

    def test_mechanical_system_is_general(self):
        from urysohn.bench.experiment import default_config, evaluate_cell, _Records
        from urysohn.bench.plant import MechanicalSystemParams
        rec = _Records("discrete_control", 0, 0, MechanicalSystemParams())
        _, state = evaluate_cell(rec, default_config("discrete_control", t_max=2000.0), True)
        assert classify_structure(state.model, 1e-3).kind is Structure.GENERAL

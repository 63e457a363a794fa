"""
Тесты для управлений и энтропийной стоимости
"""
import numpy as np
import pytest

from control import (
    ControlGrid,
    entropy_conjugate,
    entropy_l,
    in_bounded_class,
    in_SN,
    interpolate_to_null,
    oscillating,
    perturbed,
    project_SN,
    q_cost,
    random_in_SN,
    young_bound,
)
from errors import InvalidControlError
from mark_space import make_mark_space


class TestControlGrid:
    """Тесты для сетки управления"""

    def test_shape_and_step(self):
        """n_t, m и шаг по времени"""
        g = ControlGrid.constant(10, 2, T=2.0, value=1.5)
        assert g.n_t == 10
        assert g.m == 2
        assert g.dt == pytest.approx(0.2)

    def test_one_dimensional_values_become_single_mark(self):
        """Одномерный массив задаёт одну метку"""
        assert ControlGrid(np.array([1.0, 2.0, 3.0])).m == 1

    @pytest.mark.parametrize("values", [np.array([[1.0, -0.1]]), np.array([[np.nan]]), np.zeros((0, 1))])
    def test_invalid_values(self, values):
        """Отрицательные, бесконечные и пустые значения отклоняются"""
        with pytest.raises(InvalidControlError):
            ControlGrid(values)

    def test_non_positive_horizon(self):
        """T ≤ 0 отклоняется"""
        with pytest.raises(InvalidControlError):
            ControlGrid(np.ones((2, 1)), T=0.0)

    def test_cell_index(self):
        """Правый конец относится к последней ячейке"""
        g = ControlGrid(np.array([[1.0], [2.0], [3.0], [4.0]]), T=1.0)
        assert g.cell_index(0.0) == 0
        assert g.cell_index(0.3) == 1
        assert g.cell_index(1.0) == 3
        np.testing.assert_array_equal(g.row(0.6), [3.0])

    def test_refine(self):
        """Измельчение повторяет значения, некратное число ячеек отклоняется"""
        g = ControlGrid(np.array([[1.0], [2.0]]))
        np.testing.assert_array_equal(g.refine(4).values[:, 0], [1.0, 1.0, 2.0, 2.0])
        assert g.refine(2) is g
        with pytest.raises(InvalidControlError):
            g.refine(3)

    def test_values_are_read_only(self):
        """Значения неизменяемы"""
        g = ControlGrid.null(2, 1)
        with pytest.raises(ValueError):
            g.values[0, 0] = 3.0


class TestEntropy:
    """Тесты для l(r) и стоимости Q"""

    def test_entropy_values(self):
        """l(0) = 1, l(1) = 0, l(e) = 1"""
        assert entropy_l(0.0) == pytest.approx(1.0)
        assert entropy_l(1.0) == pytest.approx(0.0)
        assert entropy_l(np.e) == pytest.approx(1.0)

    def test_entropy_negative_rejected(self):
        """l не определена при r < 0"""
        with pytest.raises(InvalidControlError):
            entropy_l(np.array([1.0, -0.5]))

    def test_conjugate(self):
        """l*(s) = e^s − 1"""
        assert entropy_conjugate(1.0) == pytest.approx(np.e - 1.0)

    def test_q_cost_closed_form(self, single_mark_space):
        """Q(2) = (2 log 2 − 1)·ν(Z)·T"""
        g = ControlGrid.constant(20, 1, T=1.0, value=2.0)
        assert q_cost(g, single_mark_space) == pytest.approx(2.0 * np.log(2.0) - 1.0, rel=1e-12)

    def test_q_cost_zero_control(self, two_mark_space):
        """Q(0) = ν(Z)·T, Q(1) = 0"""
        assert q_cost(ControlGrid.constant(5, 2, T=2.0, value=0.0), two_mark_space) == pytest.approx(4.0)
        assert q_cost(ControlGrid.null(5, 2, T=2.0), two_mark_space) == 0.0

    def test_q_cost_mark_mismatch(self, single_mark_space):
        """Число меток управления должно совпадать с пространством"""
        with pytest.raises(InvalidControlError):
            q_cost(ControlGrid.null(4, 2), single_mark_space)

    def test_q_cost_is_convex(self, two_mark_space, rng):
        """Q((g1 + g2)/2) ≤ (Q(g1) + Q(g2))/2 на случайных парах"""
        for _ in range(100):
            g1 = ControlGrid(rng.exponential(2.0, (6, 2)))
            g2 = ControlGrid(rng.exponential(2.0, (6, 2)))
            mid = ControlGrid(0.5 * (g1.values + g2.values))
            average = 0.5 * (q_cost(g1, two_mark_space) + q_cost(g2, two_mark_space))
            assert q_cost(mid, two_mark_space) <= average + 1e-12


class TestProjection:
    """Тесты для проекции на S^N"""

    def test_inside_is_unchanged(self, single_mark_space):
        """Управление из S^N возвращается как есть"""
        g = ControlGrid.constant(10, 1, value=1.2)
        assert project_SN(g, single_mark_space, 1.0) is g

    def test_projection_hits_boundary(self, two_mark_space):
        """Q(proj) ∈ [N − tol, N]"""
        g = ControlGrid(np.array([[3.0, 0.0], [5.0, 2.0], [0.5, 4.0]]))
        projected = project_SN(g, two_mark_space, 0.1)
        q = q_cost(projected, two_mark_space)
        assert 0.1 - 1e-9 <= q <= 0.1
        assert in_SN(projected, two_mark_space, 0.1)

    def test_projection_is_idempotent(self, two_mark_space):
        """Повторная проекция ничего не меняет"""
        g = ControlGrid(np.array([[3.0, 0.0], [5.0, 2.0], [0.5, 4.0]]))
        once = project_SN(g, two_mark_space, 0.1)
        twice = project_SN(once, two_mark_space, 0.1)
        np.testing.assert_array_equal(twice.values, once.values)

    def test_projection_is_interpolation(self, single_mark_space):
        """Проекция лежит на отрезке между g и 1"""
        g = ControlGrid.constant(4, 1, value=4.0)
        projected = project_SN(g, single_mark_space, 0.05)
        assert np.all(projected.values >= 1.0)
        assert np.all(projected.values < 4.0)

    def test_non_positive_budget(self, single_mark_space):
        """N ≤ 0 отклоняется"""
        with pytest.raises(ValueError):
            project_SN(ControlGrid.null(2, 1), single_mark_space, 0.0)

    def test_random_in_SN(self, two_mark_space, rng):
        """Случайное управление лежит в S^N"""
        for _ in range(5):
            g = random_in_SN(8, two_mark_space, 1.0, 0.5, rng, spread=2.0)
            assert in_SN(g, two_mark_space, 0.5)

    def test_interpolate_to_null(self):
        """θ = 0 даёт g ≡ 1"""
        g = ControlGrid.constant(3, 1, value=5.0)
        np.testing.assert_array_equal(interpolate_to_null(g, 0.0).values, 1.0)


class TestControlFamilies:
    """Тесты для вспомогательных семейств управлений"""

    def test_young_bound(self, rng):
        """ab ≤ e^{σa} + l(b)/σ на случайных парах"""
        for _ in range(200):
            a = rng.uniform(-2.0, 2.0)
            b = rng.uniform(0.0, 10.0)
            sigma = rng.uniform(1.0, 5.0)
            lhs, rhs = young_bound(a, b, sigma)
            assert lhs <= rhs

    def test_young_bound_sigma_below_one(self):
        """σ < 1 отклоняется"""
        with pytest.raises(ValueError):
            young_bound(1.0, 1.0, 0.5)

    def test_bounded_class(self):
        """n ≥ φ ≥ 1/n на компакте и φ = 1 вне его"""
        phi = ControlGrid(np.array([[1.5, 1.0], [0.6, 1.0]]))
        assert in_bounded_class(phi, 2.0, compact_size=1)
        assert not in_bounded_class(phi, 1.2, compact_size=1)
        assert not in_bounded_class(ControlGrid(np.array([[1.5, 1.3]])), 2.0, compact_size=1)

    def test_oscillating(self):
        """1 + a sin(2πkt/T) в серединах ячеек"""
        g = oscillating(8, 2, 1.0, frequency=1.0)
        midpoints = (np.arange(8) + 0.5) / 8
        np.testing.assert_allclose(g.values[:, 1], 1.0 + np.sin(2.0 * np.pi * midpoints))
        with pytest.raises(InvalidControlError):
            oscillating(8, 1, 1.0, frequency=1.0, amplitude=1.5)

    def test_perturbed_clips_at_zero(self):
        """Возмущение не делает управление отрицательным"""
        g = perturbed(ControlGrid.null(2, 1), np.array([[-3.0], [1.0]]), 1.0)
        np.testing.assert_array_equal(g.values[:, 0], [0.0, 2.0])

    def test_mark_space_helper(self):
        """Веса по умолчанию равны единице"""
        assert make_mark_space([0.0, 1.0]).total_mass == 2.0

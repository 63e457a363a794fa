"""
Тесты для нелинейности Ψ
"""
import numpy as np
import pytest

from errors import InvalidPsiError, UnsupportedCombinationError
from nonlinearity import PsiSpec, apply_psi, check_H1, make_psi, temperature
from spectral_space import SpectralField, to_grid


class TestMakePsi:
    """Тесты для семейств Ψ"""

    def test_linear(self):
        """Ψ(r) = k₀ r, Lip = k₀"""
        psi = make_psi("linear", k0=2.5)
        assert psi(2.0) == pytest.approx(5.0)
        assert psi.lip == 2.5
        assert psi.alpha_tilde == pytest.approx(1.0 / 3.5)

    def test_stefan_pieces(self, stefan_psi):
        """Ψ = a r при r < 0, 0 на [0, ρ], b(r − ρ) при r > ρ"""
        np.testing.assert_allclose(stefan_psi(np.array([-1.0, 0.0, 0.5, 1.0, 2.0])),
                                   [-1.0, 0.0, 0.0, 0.0, 2.0])
        assert stefan_psi.lip == 2.0

    def test_stefan_above_melting_point(self):
        """Стефан с a = 2, b = 3, ρ = 1 в точке 2 равна 3"""
        psi = make_psi("stefan", a=2.0, b=3.0, rho=1.0)
        assert float(psi(2.0)) == pytest.approx(3.0)
        np.testing.assert_allclose(psi(np.full(5, 2.0)), 3.0)
        assert float(psi(-1.0)) == pytest.approx(-2.0)

    def test_tanh_saturates(self, tanh_psi):
        """k₀ s tanh(r/s) ограничена k₀ s"""
        assert abs(float(tanh_psi(100.0))) == pytest.approx(0.75)
        assert tanh_psi.lip == 1.5

    @pytest.mark.parametrize("kind,params", [
        ("linear", {"k0": -1.0}),
        ("stefan", {"a": 1.0, "b": 0.0, "rho": 1.0}),
        ("stefan", {"a": 1.0, "b": 1.0}),
        ("tanh_saturating", {"k0": 1.0, "s": 0.0}),
        ("cubic", {}),
    ])
    def test_invalid_parameters(self, kind, params):
        """Недопустимые параметры отклоняются"""
        with pytest.raises(InvalidPsiError):
            make_psi(kind, **params)

    def test_with_identity(self, stefan_psi):
        """Ψ + δ·id увеличивает Lip на δ"""
        shifted = stefan_psi.with_identity(0.25)
        assert shifted.lip == pytest.approx(2.25)
        assert float(shifted(0.5)) == pytest.approx(0.125)
        assert stefan_psi.with_identity(0.0) is stefan_psi
        with pytest.raises(InvalidPsiError):
            stefan_psi.with_identity(-0.1)


class TestCheckH1:
    """Тесты для выборочной проверки (H1)"""

    @pytest.mark.parametrize("kind,params", [
        ("linear", {"k0": 1.0}),
        ("stefan", {"a": 1.0, "b": 2.0, "rho": 1.0}),
        ("tanh_saturating", {"k0": 1.5, "s": 0.5}),
    ])
    def test_families_satisfy_h1(self, kind, params, rng):
        """Все встроенные семейства монотонны, липшицевы и сильно монотонны"""
        report = check_H1(make_psi(kind, **params), n_samples=2000, rng=rng)
        assert report.monotone
        assert report.lip_ok
        assert report.psi0 == 0.0
        assert report.strong_monotonicity_slack >= -1e-12

    def test_decreasing_psi_is_not_monotone(self, rng):
        """Убывающая Ψ(r) = −r не проходит проверку монотонности"""
        decreasing = PsiSpec("linear", {"k0": -1.0}, lip=1.0)
        report = check_H1(decreasing, n_samples=500, rng=rng)
        assert report.monotone is False
        assert report.worst_monotonicity < 0.0

    def test_understated_lipschitz_constant(self, rng):
        """Заниженная константа Липшица обнаруживается"""
        psi = PsiSpec("linear", {"k0": 2.0}, lip=1.0)
        report = check_H1(psi, n_samples=500, rng=rng)
        assert report.monotone
        assert report.lip_ok is False
        assert report.lip_observed == pytest.approx(2.0)

    def test_too_few_samples(self, linear_psi):
        """Меньше двух точек отклоняется"""
        with pytest.raises(ValueError):
            check_H1(linear_psi, n_samples=1)


class TestApplyPsi:
    """Тесты для оператора Немыцкого"""

    def test_linear_is_exact(self, laplacian_op):
        """Линейная Ψ умножает коэффициенты"""
        psi = make_psi("linear", k0=3.0)
        u = SpectralField(np.array([1.0, -2.0, 0.0, 0.5]))
        np.testing.assert_allclose(apply_psi(psi, laplacian_op, u, 16).coeffs, 3.0 * u.coeffs)

    def test_stefan_flat_region_is_zero(self, laplacian_op, stefan_psi):
        """Поле со значениями в [0, ρ] отображается в ноль"""
        u = SpectralField.unit(4, 1).scaled(0.5)
        assert np.max(to_grid(laplacian_op, u, 16)) < 1.0
        np.testing.assert_allclose(apply_psi(stefan_psi, laplacian_op, u, 16).coeffs, 0.0, atol=1e-15)

    def test_nonlinear_on_abstract_basis(self, explicit_op, tanh_psi):
        """Нелинейная Ψ на абстрактном базисе не поддерживается"""
        with pytest.raises(UnsupportedCombinationError):
            apply_psi(tanh_psi, explicit_op, SpectralField(np.ones(3)), 8)

    def test_linear_on_abstract_basis(self, explicit_op, linear_psi):
        """Линейная Ψ работает и на абстрактном базисе"""
        u = SpectralField(np.array([1.0, 2.0, 3.0]))
        np.testing.assert_array_equal(apply_psi(linear_psi, explicit_op, u, 8).coeffs, u.coeffs)

    def test_temperature(self, laplacian_op, tanh_psi):
        """Температура равна Ψ от значений в узлах"""
        u = SpectralField(np.array([1.0, 0.2, 0.0, -0.3]))
        np.testing.assert_allclose(temperature(tanh_psi, laplacian_op, u, 16),
                                   tanh_psi(to_grid(laplacian_op, u, 16)))

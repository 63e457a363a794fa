"""
Тесты для пространства меток и коэффициента скачка
"""
import numpy as np
import pytest

from control import ControlGrid
from errors import (
    DimensionMismatchError,
    InfeasibleTruncationError,
    InvalidMarkSpaceError,
    MarkIndexError,
)
from mark_space import (
    BetaProfile,
    JumpCoefficient,
    aggregate_h,
    check_H2,
    eval_f,
    h_integral,
    make_mark_space,
    sup_h_integral,
    tail_compact,
)
from spectral_space import SpectralField, make_operator


@pytest.fixture
def decaying_space():
    """Десять меток с весами 2^{−j}"""
    return make_mark_space(np.arange(1, 11), 0.5 ** np.arange(1, 11))


@pytest.fixture
def decaying_fc():
    """Аддитивный шум по e_1 с σ ≡ 1 на десяти метках"""
    return JumpCoefficient(sigma=np.ones(10), eta=SpectralField.unit(4, 1))


class TestMarkSpace:
    """Тесты для пространства меток"""

    def test_mass_and_compacts(self, two_mark_space):
        """ν(Z), K_n и ν(K_nᶜ)"""
        assert two_mark_space.m == 2
        assert two_mark_space.total_mass == 2.0
        np.testing.assert_array_equal(two_mark_space.compact(1), [0])
        assert two_mark_space.tail_mass(1) == 0.5
        assert two_mark_space.tail_mass(5) == 0.0

    @pytest.mark.parametrize("marks,weights", [([], []), ([1.0, 2.0], [1.0]), ([1.0], [0.0]),
                                               ([1.0], [np.inf])])
    def test_invalid_space(self, marks, weights):
        """Пустое пространство и неположительные веса отклоняются"""
        with pytest.raises(InvalidMarkSpaceError):
            make_mark_space(marks, weights)


class TestJumpCoefficient:
    """Тесты для f(t, x, z) = σ(z)β(t)(c·x + η)"""

    def test_eval_f(self, multiplicative_fc):
        """Аффинная форма по x"""
        x = SpectralField(np.array([2.0, 0.0, 0.0, -2.0]))
        value = eval_f(multiplicative_fc, 0.3, x, 1)
        np.testing.assert_allclose(value.coeffs, 0.5 * np.array([2.0, 0.0, 0.0, -1.0]))

    def test_eval_f_bad_mark(self, additive_fc):
        """Индекс метки вне диапазона"""
        with pytest.raises(MarkIndexError):
            eval_f(additive_fc, 0.0, SpectralField.zeros(4), 1)

    def test_eval_f_bad_dimension(self, additive_fc):
        """Поле другой размерности"""
        with pytest.raises(DimensionMismatchError):
            eval_f(additive_fc, 0.0, SpectralField.zeros(3), 0)

    def test_negative_sigma(self):
        """σ < 0 отклоняется"""
        with pytest.raises(InvalidMarkSpaceError):
            JumpCoefficient(sigma=np.array([-1.0]), eta=SpectralField.unit(2, 1))

    def test_cosine_beta(self):
        """β(t) = a cos(2πkt)"""
        beta = BetaProfile("cosine", amplitude=2.0, frequency=1.0)
        assert float(beta(0.5)) == pytest.approx(-2.0)
        assert beta.bound == 2.0
        with pytest.raises(InvalidMarkSpaceError):
            BetaProfile("square")

    def test_bound_functions(self, multiplicative_fc):
        """l₁ = |c|σ|β|, l₂ = l₃ = σ|β|·gain"""
        np.testing.assert_allclose(multiplicative_fc.l1(0.0), [0.5, 0.25])
        np.testing.assert_allclose(multiplicative_fc.l2(0.0), [1.0, 0.5])
        np.testing.assert_array_equal(multiplicative_fc.bound_function(3, 0.0), multiplicative_fc.l2(0.0))
        with pytest.raises(ValueError):
            multiplicative_fc.bound_function(4, 0.0)

    def test_is_zero(self):
        """f ≡ 0 при σ ≡ 0 или c = 0, η = 0"""
        assert JumpCoefficient(sigma=np.zeros(2), eta=SpectralField.unit(2, 1)).is_zero
        assert JumpCoefficient(sigma=np.ones(1), eta=SpectralField.zeros(2)).is_zero
        assert not JumpCoefficient(sigma=np.ones(1), eta=SpectralField.zeros(2), c=1.0).is_zero

    def test_weights(self, multiplicative_fc, two_mark_space):
        """Веса дрейфа и компенсатора"""
        g_row = np.array([2.0, 3.0])
        assert multiplicative_fc.drift_weight(0.0, g_row, two_mark_space.weights) == pytest.approx(2.0)
        assert multiplicative_fc.compensator_weight(0.0, two_mark_space.weights) == pytest.approx(1.75)


class TestCheckH2:
    """Тесты для выборочной проверки условий на f"""

    def test_additive_holds(self, additive_fc, single_mark_space, laplacian_op, rng):
        """Аддитивный шум удовлетворяет условиям"""
        report = check_H2(additive_fc, single_mark_space, laplacian_op, n_samples=300, rng=rng)
        assert report.holds
        assert report.slack_i >= 0.0

    def test_multiplicative_holds(self, multiplicative_fc, two_mark_space, laplacian_op, rng):
        """Мультипликативный шум удовлетворяет условиям, включая ε-вариант"""
        report = check_H2(multiplicative_fc, two_mark_space, laplacian_op, n_samples=300, rng=rng)
        assert report.holds
        assert set(report.slack_eps) == {0.1, 0.5, 1.0}
        assert min(report.slack_eps.values()) >= -1e-12

    def test_linear_coefficient_attains_lipschitz_bound(self, multiplicative_fc, two_mark_space,
                                                        laplacian_op, rng):
        """При f линейном по x неравенство (i) выполняется с нулевым запасом"""
        report = check_H2(multiplicative_fc, two_mark_space, laplacian_op, n_samples=200, rng=rng)
        assert report.holds
        assert report.slack_i == pytest.approx(0.0, abs=1e-12)

    def test_mark_mismatch(self, additive_fc, two_mark_space, laplacian_op):
        """Коэффициент и пространство с разным числом меток"""
        with pytest.raises(DimensionMismatchError):
            check_H2(additive_fc, two_mark_space, laplacian_op)


class TestTailCompact:
    """Тесты для подбора компакта"""

    def test_single_mark_compact(self, additive_fc, single_mark_space):
        """Для одной метки хвост пуст уже при n = 1"""
        certificate = tail_compact(single_mark_space, additive_fc, 1.0, 1e-3)
        assert certificate.n == 1
        assert certificate.certificate == 0.0

    def test_certificates_shrink(self, decaying_space, decaying_fc):
        """Сертификат не растёт с n и обнуляется на всём Z"""
        certificate = tail_compact(decaying_space, decaying_fc, 1.0, 1e-3)
        values = [certificate.certificates[n] for n in sorted(certificate.certificates)]
        assert all(b <= a + 1e-12 for a, b in zip(values, values[1:]))
        assert certificate.certificate <= 1e-3

    def test_infeasible(self, decaying_space, decaying_fc):
        """Ошибка, если ни один K_n при n ≤ max_n не подходит"""
        with pytest.raises(InfeasibleTruncationError):
            tail_compact(decaying_space, decaying_fc, 1.0, 1e-3, max_n=3)

    def test_non_positive_tolerance(self, decaying_space, decaying_fc):
        """eps_tail ≤ 0 отклоняется"""
        with pytest.raises(ValueError):
            tail_compact(decaying_space, decaying_fc, 1.0, 0.0)


class TestAggregates:
    """Тесты для h_i и их интегралов"""

    def test_h_integral_closed_form(self, additive_fc, single_mark_space):
        """∫ h₂ ds = T·|g − 1|·ν для g ≡ 2 и аддитивного шума; h₁ = 0"""
        g = ControlGrid.constant(10, 1, value=2.0)
        assert h_integral(2, additive_fc, single_mark_space, g) == pytest.approx(1.0)
        assert h_integral(1, additive_fc, single_mark_space, g) == 0.0
        assert aggregate_h(3, additive_fc, single_mark_space, g, 0) == pytest.approx(1.0)

    def test_aggregate_mismatch(self, additive_fc, two_mark_space):
        """Разное число меток"""
        with pytest.raises(DimensionMismatchError):
            aggregate_h(2, additive_fc, two_mark_space, ControlGrid.null(4, 2), 0)

    def test_sup_monotone_in_budget(self, multiplicative_fc, two_mark_space, rng):
        """Оценка C_{l,N} не убывает по N"""
        estimates = sup_h_integral(2, multiplicative_fc, two_mark_space, [0.1, 0.5, 2.0],
                                   n_samples=20, rng=rng)
        values = [estimates[N] for N in (0.1, 0.5, 2.0)]
        assert all(b >= a - 1e-9 for a, b in zip(values, values[1:]))

    def test_operator_fixture_consistency(self):
        """Коэффициент и оператор согласованы по K"""
        op = make_operator("laplacian", 3)
        fc = JumpCoefficient(sigma=np.ones(1), eta=SpectralField.unit(3, 2))
        assert fc.K == op.K

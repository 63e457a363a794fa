"""
Общие фикстуры для всех тестов проекта
"""
import logging
from unittest.mock import Mock

import numpy as np
import pytest

from logging_config import DEDICATED_LOGS
from mark_space import JumpCoefficient, make_mark_space
from nonlinearity import make_psi
from schemas import SolverConfig
from skeleton_solver import Problem
from spectral_space import SpectralField, make_operator


@pytest.fixture
def rng():
    """Генератор с фиксированным зерном"""
    return np.random.default_rng(12345)


@pytest.fixture
def laplacian_op():
    """Лапласиан Дирихле на (0, π), K = 4"""
    return make_operator("laplacian", 4)


@pytest.fixture
def fractional_op():
    """Дробный лапласиан α = 0.5, K = 4"""
    return make_operator("fractional", 4, alpha=0.5)


@pytest.fixture
def explicit_op():
    """Абстрактный спектр из трёх значений"""
    return make_operator("explicit", 3, eigenvalues=[0.5, 2.0, 7.0])


@pytest.fixture
def linear_psi():
    """Ψ(r) = r"""
    return make_psi("linear", k0=1.0)


@pytest.fixture
def stefan_psi():
    """Двухфазная Ψ задачи Стефана с a = 1, b = 2, ρ = 1"""
    return make_psi("stefan", a=1.0, b=2.0, rho=1.0)


@pytest.fixture
def tanh_psi():
    """Насыщающаяся Ψ(r) = k₀ s tanh(r/s)"""
    return make_psi("tanh_saturating", k0=1.5, s=0.5)


@pytest.fixture
def single_mark_space():
    """Одна метка с весом 1"""
    return make_mark_space([1.0], [1.0])


@pytest.fixture
def two_mark_space():
    """Две метки с весами 1.5 и 0.5"""
    return make_mark_space([1.0, 2.0], [1.5, 0.5])


@pytest.fixture
def additive_fc():
    """Аддитивный коэффициент скачка f = η = e_1, K = 4"""
    return JumpCoefficient(sigma=np.array([1.0]), eta=SpectralField.unit(4, 1), c=0.0)


@pytest.fixture
def multiplicative_fc():
    """f(t, x, z_j) = σ_j(0.5·x + e_1) на двух метках, K = 4"""
    return JumpCoefficient(sigma=np.array([1.0, 0.5]), eta=SpectralField.unit(4, 1), c=0.5)


@pytest.fixture
def solver_cfg():
    """Решатель на [0, 1] со 100 шагами"""
    return SolverConfig(T=1.0, n_t=100)


@pytest.fixture
def heat_problem(laplacian_op, linear_psi, additive_fc, single_mark_space, solver_cfg):
    """Линейная задача с x0 = (1, 1, 1, 1)"""
    return Problem(laplacian_op, linear_psi, additive_fc, single_mark_space,
                   SpectralField(np.ones(4)), solver_cfg)


@pytest.fixture
def small_additive_problem(linear_psi, single_mark_space):
    """Две моды, аддитивный шум по e_1, x0 = e_1, 50 шагов"""
    return Problem(
        make_operator("laplacian", 2),
        linear_psi,
        JumpCoefficient(sigma=np.array([1.0]), eta=SpectralField.unit(2, 1)),
        single_mark_space,
        SpectralField.unit(2, 1),
        SolverConfig(T=1.0, n_t=50, track_psi_integral=False),
    )


@pytest.fixture
def restore_logging():
    """Восстанавливает обработчики логгеров после вызова setup_logging"""
    root = logging.getLogger()
    saved_handlers, saved_level = root.handlers[:], root.level
    yield
    for handler in root.handlers[:]:
        root.removeHandler(handler)
        handler.close()
    for names in DEDICATED_LOGS.values():
        for name in names:
            module_logger = logging.getLogger(name)
            for handler in module_logger.handlers[:]:
                module_logger.removeHandler(handler)
                handler.close()
    for handler in saved_handlers:
        root.addHandler(handler)
    root.setLevel(saved_level)


@pytest.fixture
def mock_experiment_service():
    """Мок для experiment_service"""
    mock_service = Mock()
    mock_service.run = Mock(return_value={
        "outputs": {"results": "results/skeleton/results.csv"},
        "summary": {"q_cost": 0.0},
    })
    return mock_service


# Маркеры для pytest
def pytest_configure(config):
    """Конфигурация pytest с пользовательскими маркерами"""
    config.addinivalue_line("markers", "unit: Unit tests")
    config.addinivalue_line("markers", "integration: Integration tests")
    config.addinivalue_line("markers", "api: API tests")
    config.addinivalue_line("markers", "slow: Slow tests")
    config.addinivalue_line("markers", "statistical: Monte Carlo tests with fixed seeds")


# Hooks для pytest
def pytest_collection_modifyitems(config, items):
    """Автоматически добавляет маркеры к тестам на основе их расположения"""
    for item in items:
        if "test_main" in item.nodeid:
            item.add_marker(pytest.mark.api)
        elif "test_experiment_service" in item.nodeid or "test_cli" in item.nodeid:
            item.add_marker(pytest.mark.integration)
        else:
            item.add_marker(pytest.mark.unit)

        # Маркируем медленные тесты
        if "acceptance" in item.name.lower() or "large" in item.name.lower():
            item.add_marker(pytest.mark.slow)

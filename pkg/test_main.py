"""
Тестирование основного FastAPI приложения.

Содержит тесты для всех эндпоинтов API и проверку их корректной работы.
"""
from pathlib import Path
from unittest.mock import patch

import pytest
from fastapi.testclient import TestClient

from main import app


@pytest.fixture
def client(mock_experiment_service):
    """Создает тестовый клиент FastAPI с замоканным сервисом расчётов"""
    with patch('main.experiment_service', mock_experiment_service):
        with TestClient(app) as test_client:
            yield test_client


class TestRootEndpoints:
    """Тесты для корневых эндпоинтов"""

    def test_read_root(self, client):
        """Тест главной страницы"""
        response = client.get("/")
        assert response.status_code == 200
        assert response.json()["status"] == "running"

    def test_api_root(self, client):
        """Тест корневого API эндпоинта"""
        response = client.get("/api")
        assert response.status_code == 200
        data = response.json()
        assert data["status"] == "running"
        assert data["subcommands"] == ["skeleton", "sample", "rate", "ldp", "verify"]

    def test_health_check(self, client):
        """Тест проверки здоровья"""
        response = client.get("/health")
        assert response.status_code == 200
        assert response.json() == {"status": "healthy"}


class TestRunEndpoints:
    """Тесты для эндпоинтов запуска расчётов"""

    @pytest.mark.parametrize("subcommand", ["skeleton", "sample", "rate", "ldp", "verify"])
    def test_run_success(self, client, mock_experiment_service, subcommand):
        """Успешный запуск передаёт подкоманду и параметры сервису"""
        response = client.post(f"/{subcommand}", json={"seed": 7, "trials": 10})
        assert response.status_code == 200
        data = response.json()
        assert data["status"] == "success"
        assert data["subcommand"] == subcommand
        assert data["outputs"]["results"] == "results/skeleton/results.csv"

        args = mock_experiment_service.run.call_args.args
        assert args[0] == subcommand
        assert args[2] == 7
        assert args[4] == 10

    def test_run_passes_config(self, client, mock_experiment_service):
        """Конфигурация из запроса проверяется и передаётся сервису"""
        body = {"config": {"operator": {"kind": "fractional", "K": 6, "alpha": 0.5}},
                "eps_list": [0.2, 0.1]}
        response = client.post("/skeleton", json=body)
        assert response.status_code == 200
        config = mock_experiment_service.run.call_args.args[1]
        assert config.operator.K == 6
        assert mock_experiment_service.run.call_args.args[5] == [0.2, 0.1]

    def test_run_error(self, client, mock_experiment_service):
        """Ошибка расчёта возвращается в поле error"""
        mock_experiment_service.run.side_effect = ValueError("control_cells=3 does not divide n_t=10")
        response = client.post("/rate", json={})
        assert response.status_code == 200
        data = response.json()
        assert data["status"] == "error"
        assert "control_cells" in data["error"]

    def test_invalid_config_rejected(self, client, mock_experiment_service):
        """Неизвестное поле конфигурации отклоняется до запуска"""
        response = client.post("/skeleton", json={"config": {"solver": {"steps": 10}}})
        assert response.status_code == 422
        mock_experiment_service.run.assert_not_called()

    def test_invalid_seed_rejected(self, client):
        """Отрицательное зерно отклоняется"""
        response = client.post("/sample", json={"seed": -1})
        assert response.status_code == 422

    def test_out_is_placed_under_output_dir(self, client, mock_experiment_service):
        """Относительный out размещается внутри OUTPUT_DIR"""
        with patch('main.settings.OUTPUT_DIR', 'results'):
            response = client.post("/sample", json={"out": "runs/first"})
        assert response.status_code == 200
        assert mock_experiment_service.run.call_args.args[3] == str(Path("results") / "runs" / "first")

    @pytest.mark.parametrize("out", ["/tmp/elsewhere", "../outside", "runs/../../outside", " "])
    def test_out_outside_output_dir_rejected(self, client, mock_experiment_service, out):
        """Абсолютный путь или выход из OUTPUT_DIR отклоняется"""
        response = client.post("/sample", json={"out": out})
        assert response.status_code == 422
        mock_experiment_service.run.assert_not_called()


class TestLogsEndpoint:
    """Тесты для эндпоинта информации о логах"""

    def test_logs_info(self, client, tmp_path):
        """Информация о файлах логов"""
        (tmp_path / "pme.log").write_text("line\n", encoding="utf-8")
        with patch('main.settings.LOG_DIR', str(tmp_path)):
            response = client.get("/logs/info")
        assert response.status_code == 200
        data = response.json()
        assert data["status"] == "success"
        assert data["total_files"] == 1
        assert data["logs"]["pme.log"]["size_bytes"] == 5

"""
Главный модуль FastAPI приложения для расчётов стохастического уравнения
пористой среды.

Этот модуль содержит конфигурацию FastAPI приложения, эндпоинты для
мониторинга состояния и запуска расчётов skeleton, sample, rate, ldp и verify.
"""
import asyncio
import logging
from functools import partial
from pathlib import Path

from fastapi import FastAPI
from fastapi.middleware.cors import CORSMiddleware

import settings
from experiment_service import experiment_service
from logging_config import get_log_files_info, setup_logging
from schemas import RunRequest, RunResponse

# Настройка логирования с сохранением в файлы
setup_logging(log_dir=settings.LOG_DIR, log_level=settings.LOG_LEVEL)
logger = logging.getLogger(__name__)

app = FastAPI(
    title="Porous Media LDP API",
    description="Skeleton equation, jump SPDE sampling and rate function estimates",
    version="1.0.0",
)

# Configure CORS
app.add_middleware(
    CORSMiddleware,
    allow_origins=["*"],
    allow_credentials=True,
    allow_methods=["*"],
    allow_headers=["*"],
)


# Root endpoint
@app.get("/")
async def read_root():
    """Главная страница с кратким описанием сервиса."""
    return {"message": "Stochastic porous media toolkit", "docs": "/docs", "status": "running"}


# API Root endpoint
@app.get("/api")
async def api_root():
    """Корневой эндпоинт API с информацией о статусе."""
    return {"message": "Porous Media LDP API", "status": "running",
            "subcommands": ["skeleton", "sample", "rate", "ldp", "verify"]}


# Health check endpoint
@app.get("/health")
async def health_check():
    """Проверка здоровья приложения."""
    return {"status": "healthy"}


async def _run(subcommand: str, request: RunRequest) -> RunResponse:
    """Выполняет расчёт в пуле потоков, чтобы не блокировать цикл событий."""
    loop = asyncio.get_running_loop()
    out = str(Path(settings.OUTPUT_DIR) / request.out) if request.out else None
    try:
        result = await loop.run_in_executor(
            None,
            partial(experiment_service.run, subcommand, request.config, request.seed,
                    out, request.trials, request.eps_list),
        )
        return RunResponse(status="success", subcommand=subcommand, **result)
    except Exception as e:  # pylint: disable=broad-except
        logger.error("Error running %s: %s", subcommand, str(e))
        return RunResponse(status="error", subcommand=subcommand, error=str(e))


@app.post("/skeleton", response_model=RunResponse)
async def run_skeleton(request: RunRequest):
    """Решить скелетное уравнение."""
    return await _run("skeleton", request)


@app.post("/sample", response_model=RunResponse)
async def run_sample(request: RunRequest):
    """Смоделировать траекторию с пуассоновским шумом."""
    return await _run("sample", request)


@app.post("/rate", response_model=RunResponse)
async def run_rate(request: RunRequest):
    """Оценить функцию уровня на событии."""
    return await _run("rate", request)


@app.post("/ldp", response_model=RunResponse)
async def run_ldp(request: RunRequest):
    """Сравнить ε log P̂ с −I."""
    return await _run("ldp", request)


@app.post("/verify", response_model=RunResponse)
async def run_verify(request: RunRequest):
    """Выполнить приёмочные проверки."""
    return await _run("verify", request)


@app.get("/logs/info")
async def get_logs_info():
    """Получить информацию о файлах логов."""
    try:
        logs_info = get_log_files_info(settings.LOG_DIR)
        return {
            "status": "success",
            "logs": logs_info,
            "total_files": len(logs_info)
        }
    except Exception as e:  # pylint: disable=broad-except
        logger.error("Error getting logs info: %s", str(e))
        return {"status": "error", "error": str(e)}


if __name__ == "__main__":
    import uvicorn
    uvicorn.run(app, host="0.0.0.0", port=8000)

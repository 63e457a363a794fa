"""
Настройки процесса из переменных окружения.

Значения читаются из окружения и файла .env (python-dotenv): директория
логов и уровень логирования, директория результатов, зерно по умолчанию
и число потоков для траекторий Монте-Карло.
"""
import logging
import os

from dotenv import load_dotenv

# Load environment variables from .env file
load_dotenv()

LOG_DIR = os.getenv("LOG_DIR", "logs")
LOG_LEVEL = getattr(logging, os.getenv("LOG_LEVEL", "INFO").upper(), logging.INFO)
OUTPUT_DIR = os.getenv("OUTPUT_DIR", "results")
DEFAULT_SEED = int(os.getenv("DEFAULT_SEED", "20240607"))
MC_WORKERS = max(1, int(os.getenv("MC_WORKERS", "1")))

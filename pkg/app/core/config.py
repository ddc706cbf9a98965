import logging
import os
from pathlib import Path

from dotenv import load_dotenv
from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict

logger = logging.getLogger(__name__)

# Ищем .env в корне проекта
project_root = Path(__file__).parent.parent.parent
env_path = project_root / ".env"

if env_path.exists():
    load_dotenv(dotenv_path=env_path)
else:
    load_dotenv()


class Settings(BaseSettings):
    """Конфигурация окружения с валидацией."""

    model_config = SettingsConfigDict(
        env_file=".env",
        env_file_encoding="utf-8",
        extra="ignore",  # Игнорировать дополнительные поля
    )

    # Уровень логирования
    log_level: str = Field("INFO", validation_alias="LOG_LEVEL")

    # Окружение
    environment: str = Field("production", validation_alias="ENVIRONMENT")

    # Ограничение пула воркеров CLI
    worker_threads: int = Field(
        default_factory=lambda: os.cpu_count() or 1,
        ge=1,
        validation_alias="MORPHFIT_THREADS",
    )

    # Порог числа вершин, выше которого используется Nyström
    nystrom_threshold: int = Field(
        2000, ge=1, validation_alias="MORPHFIT_NYSTROM_THRESHOLD"
    )

    # Количество опорных вершин для Nyström
    nystrom_points: int = Field(500, ge=1, validation_alias="MORPHFIT_NYSTROM_POINTS")

    # Каталог результатов по умолчанию
    output_dir: Path = Field(Path("results"), validation_alias="MORPHFIT_OUTPUT_DIR")

    # Прогресс-бары tqdm для цепочек
    show_progress: bool = Field(False, validation_alias="MORPHFIT_PROGRESS")


# Создаем экземпляр настроек
try:
    settings = Settings()
except Exception as e:
    logger.warning(f"Ошибка загрузки конфигурации, используются значения по умолчанию: {e}")
    settings = Settings.model_construct(
        log_level="INFO",
        environment="production",
        worker_threads=os.cpu_count() or 1,
        nystrom_threshold=2000,
        nystrom_points=500,
        output_dir=Path("results"),
        show_progress=False,
    )


def get_log_level() -> str:
    """Получить уровень логирования"""
    return settings.log_level


def get_environment() -> str:
    """Получить окружение (development/production)"""
    return settings.environment


def get_worker_threads() -> int:
    """Получить верхнюю границу пула воркеров (MORPHFIT_THREADS)"""
    return settings.worker_threads


def get_nystrom_threshold() -> int:
    """Число вершин, начиная с которого модель строится через Nyström"""
    return settings.nystrom_threshold


def get_nystrom_points() -> int:
    """Количество опорных вершин Nyström"""
    return settings.nystrom_points


def get_output_dir() -> Path:
    """Каталог результатов по умолчанию"""
    return settings.output_dir


def get_show_progress() -> bool:
    """Показывать ли прогресс цепочек"""
    return settings.show_progress


# Экспортируем функции
__all__ = [
    "Settings",
    "get_log_level",
    "get_environment",
    "get_worker_threads",
    "get_nystrom_threshold",
    "get_nystrom_points",
    "get_output_dir",
    "get_show_progress",
]

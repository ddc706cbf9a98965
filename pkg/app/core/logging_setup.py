import logging

from core.config import get_log_level


def setup_logging(level: str | None = None) -> None:
    """Настраивает корневой логгер в формате сервиса.

    Args:
        level (str, optional): Уровень логирования. По умолчанию берётся из LOG_LEVEL.
    """
    logging.basicConfig(
        level=logging.INFO,
        format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
        datefmt="%Y-%m-%d %H:%M:%S",
    )
    log_level = getattr(logging, (level or get_log_level()).upper(), logging.INFO)
    logging.getLogger().setLevel(log_level)

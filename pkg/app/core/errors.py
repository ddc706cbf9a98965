"""
Иерархия исключений morphfit.

Ошибки валидации входных данных наследуют ValueError, численные ошибки
наследуют ArithmeticError. CLI отображает их на коды выхода 1 и 2.
"""

from pathlib import Path


class MorphfitError(Exception):
    """Базовое исключение пакета."""


class ValidationError(MorphfitError, ValueError):
    """Некорректные входные данные."""


class MeshFormatError(ValidationError):
    """Ошибка разбора файла сетки с указанием смещения в байтах."""

    def __init__(self, message: str, path: str | Path | None = None, offset: int = 0):
        self.path = str(path) if path is not None else None
        self.offset = int(offset)
        where = f"{self.path}, " if self.path else ""
        super().__init__(f"{message} ({where}смещение {self.offset} байт)")


class PreconditionError(ValidationError):
    """Нарушено предусловие операции."""


class NumericError(MorphfitError, ArithmeticError):
    """Численная ошибка (факторизация, неположительная матрица и т.п.)."""


class ModelBuildError(NumericError):
    """Спектр ядра не является положительно полуопределённым."""


class ChainInitializationError(NumericError):
    """Неконечная апостериорная плотность в начальном состоянии цепочки."""


class DegenerateOverlapError(NumericError):
    """Все соответствия отфильтрованы: сетки не перекрываются."""


__all__ = [
    "MorphfitError",
    "ValidationError",
    "MeshFormatError",
    "PreconditionError",
    "NumericError",
    "ModelBuildError",
    "ChainInitializationError",
    "DegenerateOverlapError",
]

"""
Запись цепочки Маркова: состояния, значения плотностей, принятие и метки.
"""

import csv
from dataclasses import dataclass, field
import logging
from pathlib import Path
from typing import Any

import numpy as np

from core.errors import ValidationError

logger = logging.getLogger(__name__)

CHAIN_COLUMNS = (
    "iteration",
    "log_posterior",
    "log_likelihood",
    "log_prior",
    "accepted",
    "proposal",
)


@dataclass
class ChainRecord:
    """Результат одного прогона Метрополиса-Гастингса.

    Attributes:
        alphas (np.ndarray): Состояние после каждой итерации, форма (S, r).
        log_likelihood (np.ndarray): log P(Γ_T | α) после каждой итерации.
        log_prior (np.ndarray): log P(α) после каждой итерации.
        accepted (np.ndarray): Флаг принятия предложения.
        tags (list[str]): Метка предложения на каждой итерации.
        wall_clock_ms (np.ndarray): Время от старта цепочки (мс).
        seed (int | None): Зерно генератора.
        config (dict): Снимок конфигурации прогона.
    """

    alphas: np.ndarray
    log_likelihood: np.ndarray
    log_prior: np.ndarray
    accepted: np.ndarray
    tags: list[str]
    wall_clock_ms: np.ndarray
    seed: int | None = None
    config: dict[str, Any] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.alphas)

    @property
    def log_posterior(self) -> np.ndarray:
        return self.log_likelihood + self.log_prior

    @property
    def acceptance_rate(self) -> float:
        return float(np.mean(self.accepted)) if len(self) else 0.0

    @property
    def map_index(self) -> int:
        """Индекс первой записи с наибольшим апостериорным значением."""
        return int(np.argmax(self.log_posterior))

    @property
    def map_alpha(self) -> np.ndarray:
        return self.alphas[self.map_index]

    def samples(self, burn_in: int = 0, thinning: int = 1) -> np.ndarray:
        """Состояния после периода прогрева с прореживанием."""
        if thinning < 1:
            raise ValidationError(f"Шаг прореживания должен быть ≥ 1, получено {thinning}")
        if not 0 <= burn_in < len(self):
            raise ValidationError(f"Прогрев {burn_in} должен быть меньше длины цепочки {len(self)}")
        return self.alphas[burn_in::thinning]

    def acceptance_by_tag(self) -> dict[str, float]:
        tags = np.asarray(self.tags)
        return {
            tag: float(np.mean(self.accepted[tags == tag])) for tag in sorted(set(self.tags))
        }

    def to_csv(self, path: str | Path, include_timing: bool = True) -> Path:
        """Пишет журнал цепочки построчно по итерациям.

        Без столбца wall_clock_ms (``include_timing=False``) файлы прогонов
        с одинаковым зерном совпадают побайтно.
        """
        path = Path(path)
        columns = CHAIN_COLUMNS + (("wall_clock_ms",) if include_timing else ())
        log_posterior = self.log_posterior
        with open(path, "w", newline="", encoding="utf-8") as f:
            writer = csv.writer(f)
            writer.writerow(columns)
            for i in range(len(self)):
                row = [
                    i,
                    repr(float(log_posterior[i])),
                    repr(float(self.log_likelihood[i])),
                    repr(float(self.log_prior[i])),
                    int(self.accepted[i]),
                    self.tags[i],
                ]
                if include_timing:
                    row.append(f"{self.wall_clock_ms[i]:.3f}")
                writer.writerow(row)
        logger.info(f"Журнал цепочки ({len(self)} итераций) записан: {path}")
        return path


def write_coefficients(path: str | Path, alphas: np.ndarray) -> Path:
    """CSV коэффициентов: строка на образец, столбцы alpha_0..alpha_{r-1}."""
    path = Path(path)
    alphas = np.atleast_2d(alphas)
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow([f"alpha_{i}" for i in range(alphas.shape[1])])
        writer.writerows([[repr(float(x)) for x in row] for row in alphas])
    return path


def read_coefficients(path: str | Path) -> np.ndarray:
    """Читает CSV, записанный write_coefficients."""
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if not header or not all(h.startswith("alpha_") for h in header):
            raise ValidationError(f"Некорректный заголовок коэффициентов в {path}")
        try:
            rows = [[float(x) for x in row] for row in reader if row]
        except ValueError as e:
            raise ValidationError(f"Некорректное значение коэффициента в {path}: {e}") from e
    return np.asarray(rows, dtype=np.float64).reshape(-1, len(header))

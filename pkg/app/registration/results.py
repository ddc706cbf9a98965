"""
Результат регистрации и его сохранение в каталог.

Состав каталога:
    map.ply         - MAP-сетка, quality = суммарная дисперсия вершины
    map_alpha.csv   - коэффициенты MAP
    samples.csv     - апостериорные образцы (после прогрева, с прореживанием)
    chain.csv       - журнал цепочки (только для MCMC)
    metrics.json    - расстояния, доля принятия, итерации, время
"""

from dataclasses import dataclass, field
import json
import logging
from pathlib import Path
from typing import Any

import numpy as np
from pydantic import BaseModel, Field, ValidationError as SchemaError

from core.errors import ValidationError
from mcmc import ChainRecord, write_coefficients
from mesh import TriangleMesh, save_mesh
from registration.metrics import SurfaceMetrics
from registration.uncertainty import UncertaintyMap

logger = logging.getLogger(__name__)

METRICS_FILE = "metrics.json"


class ResultMetrics(BaseModel):
    """Схема metrics.json."""

    method: str
    target: str = ""
    seed: int | None = None
    mean_l2: float = Field(ge=0)
    hausdorff: float = Field(ge=0)
    acceptance_rate: float | None = None
    iterations: int = Field(ge=0)
    wall_clock_ms: float = Field(ge=0)
    fold_overs: int | None = None
    proposal: str | None = None
    likelihood: str | None = None


@dataclass
class RegistrationResult:
    """Результат одного прогона регистрации.

    Attributes:
        method (str): "mcmc" или "icp".
        map_alpha (np.ndarray): Коэффициенты MAP (для ICP - последнее состояние).
        map_mesh (TriangleMesh): Экземпляр модели при map_alpha.
        samples (np.ndarray): Апостериорные образцы, форма (k, r); пусто для ICP.
        metrics (SurfaceMetrics): Расстояния MAP-сетки до цели.
        uncertainty (UncertaintyMap | None): Дисперсии вершин по образцам.
        chain (ChainRecord | None): Полная запись цепочки.
        trajectory (np.ndarray | None): Состояния ICP по итерациям.
        iterations (int): Выполнено итераций.
        wall_clock_ms (float): Время прогона.
        seed (int | None): Зерно генератора.
    """

    method: str
    map_alpha: np.ndarray
    map_mesh: TriangleMesh
    samples: np.ndarray
    metrics: SurfaceMetrics
    uncertainty: UncertaintyMap | None = None
    chain: ChainRecord | None = None
    trajectory: np.ndarray | None = None
    iterations: int = 0
    wall_clock_ms: float = 0.0
    seed: int | None = None
    fold_overs: int | None = None
    extra: dict[str, Any] = field(default_factory=dict)

    @property
    def acceptance_rate(self) -> float | None:
        return self.chain.acceptance_rate if self.chain is not None else None

    def to_metrics(self, target: str = "") -> ResultMetrics:
        return ResultMetrics(
            method=self.method,
            target=target,
            seed=self.seed,
            mean_l2=self.metrics.mean_l2,
            hausdorff=self.metrics.hausdorff,
            acceptance_rate=self.acceptance_rate,
            iterations=self.iterations,
            wall_clock_ms=self.wall_clock_ms,
            fold_overs=self.fold_overs,
            proposal=self.extra.get("proposal"),
            likelihood=self.extra.get("likelihood"),
        )

    def save(
        self,
        directory: str | Path,
        target: str = "",
        config: dict[str, Any] | None = None,
        chain_timing: bool = True,
    ) -> Path:
        """Записывает артефакты результата в каталог (создаётся при необходимости)."""
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        scalars = self.uncertainty.total if self.uncertainty is not None else None
        save_mesh(self.map_mesh, directory / "map.ply", scalars=scalars)
        write_coefficients(directory / "map_alpha.csv", self.map_alpha)
        write_coefficients(
            directory / "samples.csv",
            self.samples if len(self.samples) else np.zeros((0, len(self.map_alpha))),
        )
        if self.chain is not None:
            self.chain.to_csv(directory / "chain.csv", include_timing=chain_timing)
        if self.trajectory is not None:
            write_coefficients(directory / "trajectory.csv", self.trajectory)
        if config is not None:
            (directory / "config.json").write_text(
                json.dumps(config, indent=2, ensure_ascii=False, sort_keys=True), encoding="utf-8"
            )
        (directory / METRICS_FILE).write_text(
            self.to_metrics(target).model_dump_json(indent=2), encoding="utf-8"
        )
        logger.info(f"Результат {self.method} сохранён: {directory}")
        return directory


def load_metrics(directory: str | Path) -> ResultMetrics:
    """Читает и проверяет metrics.json каталога результата.

    Raises:
        ValidationError: Файл отсутствует или не соответствует схеме.
    """
    path = Path(directory) / METRICS_FILE
    if not path.is_file():
        raise ValidationError(f"В каталоге {directory} нет {METRICS_FILE}")
    try:
        return ResultMetrics.model_validate_json(path.read_text(encoding="utf-8"))
    except SchemaError as e:
        raise ValidationError(f"Некорректный {path}: {e}") from e

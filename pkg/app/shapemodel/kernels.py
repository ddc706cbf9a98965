"""
Ковариационные функции для моделей формы.

GaussianKernel задаёт гладкие деформации k(x, x') = g(x, x')·I₃,
SampleKernel - классическую PDM-ковариацию по выборке деформаций.
"""

from dataclasses import dataclass
import logging

import numpy as np
from scipy.spatial.distance import cdist

from core.errors import ValidationError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class GaussianKernel:
    """Гауссово ядро g(x, x') = s·exp(-|x - x'|² / σ²), матричное k = g·I₃.

    Attributes:
        scale (float): Дисперсия s (мм²).
        bandwidth (float): Ширина σ (мм).
    """

    scale: float
    bandwidth: float

    def __post_init__(self):
        if not (self.scale > 0 and self.bandwidth > 0):
            raise ValidationError(
                f"Параметры ядра должны быть положительны: s={self.scale}, σ={self.bandwidth}"
            )

    def scalar(self, x: np.ndarray, y: np.ndarray | None = None) -> np.ndarray:
        """Скалярная матрица g между наборами точек (n, 3) и (m, 3)."""
        x = np.asarray(x, dtype=np.float64).reshape(-1, 3)
        y = x if y is None else np.asarray(y, dtype=np.float64).reshape(-1, 3)
        return self.scale * np.exp(-cdist(x, y, "sqeuclidean") / self.bandwidth**2)

    def matrix(self, x: np.ndarray, y: np.ndarray | None = None) -> np.ndarray:
        """Полная матрица 3n×3m, порядок индексов: 3·вершина + ось."""
        return np.kron(self.scalar(x, y), np.eye(3))


@dataclass(frozen=True)
class SampleKernel:
    """Ковариация классической PDM по выборке деформаций.

    Attributes:
        mean (np.ndarray): Средняя деформация μ_PDM, форма (n, 3).
        centered (np.ndarray): Центрированные деформации u_i - μ, форма (N, n, 3).
    """

    mean: np.ndarray
    centered: np.ndarray

    @property
    def n_samples(self) -> int:
        return len(self.centered)

    def block(self, i: int, j: int) -> np.ndarray:
        """Блок 3×3 ковариации между вершинами i и j."""
        u = self.centered
        return np.einsum("sa,sb->ab", u[:, i], u[:, j]) / (self.n_samples - 1)

    def matrix(self) -> np.ndarray:
        """Плотная матрица 3n×3n в порядке 3·вершина + ось."""
        flat = self.centered.reshape(self.n_samples, -1)
        return flat.T @ flat / (self.n_samples - 1)


def build_from_samples(samples: np.ndarray | list, reference=None) -> SampleKernel:
    """Среднее и ковариация PDM по выборке деформаций.

    Args:
        samples: Деформации, форма (N, n, 3) или список массивов (n, 3).
        reference (TriangleMesh, optional): Опорная сетка для проверки числа вершин.

    Returns:
        SampleKernel: μ_PDM = (1/N)Σu_i и центрированные выборки для k_PDM с множителем 1/(N-1).

    Raises:
        ValidationError: Меньше двух выборок или несовпадение числа вершин.
    """
    shapes = {np.shape(s) for s in samples}
    if len(shapes) != 1:
        raise ValidationError(f"Выборки с разным числом вершин: {sorted(shapes)}")
    data = np.asarray(samples, dtype=np.float64)
    if data.ndim != 3 or data.shape[2] != 3:
        raise ValidationError(f"Ожидались деформации формы (N, n, 3), получено {data.shape}")
    if len(data) < 2:
        raise ValidationError("Для PDM нужно не меньше двух выборок")
    if reference is not None and data.shape[1] != reference.n_vertices:
        raise ValidationError(
            f"Выборки содержат {data.shape[1]} вершин, опорная сетка - {reference.n_vertices}"
        )
    mean = data.mean(axis=0)
    return SampleKernel(mean=mean, centered=data - mean)

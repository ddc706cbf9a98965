"""
Карты неопределённости соответствий по апостериорным образцам.
"""

from dataclasses import dataclass
import logging

import numpy as np

from core.errors import ValidationError
from mesh import VertexNormalField
from shapemodel import LowRankGP

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class UncertaintyMap:
    """Дисперсия положения каждой вершины (мм²).

    Attributes:
        total (np.ndarray): След ковариации 3×3.
        normal (np.ndarray): Составляющая вдоль нормали nᵀCn.
        tangential (np.ndarray): Остаток total - normal.
    """

    total: np.ndarray
    normal: np.ndarray
    tangential: np.ndarray

    def __len__(self) -> int:
        return len(self.total)


def sample_deformations(model: LowRankGP, samples: np.ndarray) -> np.ndarray:
    """Поля деформации для набора коэффициентов, форма (k, n, 3)."""
    samples = np.atleast_2d(np.asarray(samples, dtype=np.float64))
    if samples.shape[1] != model.rank:
        raise ValidationError(f"Ожидалось {model.rank} коэффициентов, получено {samples.shape[1]}")
    flat = model.scaled_basis().reshape(-1, model.rank) @ samples.T
    return model.mean[None] + flat.T.reshape(len(samples), model.n_vertices, 3)


def uncertainty_map(
    model: LowRankGP, samples: np.ndarray, normals: VertexNormalField | np.ndarray
) -> UncertaintyMap:
    """Неопределённость положения вершин по образцам и её разложение по нормали.

    Args:
        model (LowRankGP): Модель, в которой заданы образцы.
        samples (np.ndarray): Коэффициенты образцов, форма (k, r), k ≥ 2.
        normals: Нормали вершин, по которым раскладывается дисперсия.

    Returns:
        UncertaintyMap: total, normal и tangential для каждой вершины.

    Raises:
        ValidationError: Меньше двух образцов или неверное число нормалей.
    """
    samples = np.atleast_2d(np.asarray(samples, dtype=np.float64))
    if len(samples) < 2:
        raise ValidationError("Для карты неопределённости нужно не меньше двух образцов")
    n = np.asarray(normals.normals if isinstance(normals, VertexNormalField) else normals)
    if n.shape != (model.n_vertices, 3):
        raise ValidationError(f"Ожидались нормали формы {(model.n_vertices, 3)}, получено {n.shape}")

    deformations = sample_deformations(model, samples)
    centered = deformations - deformations.mean(axis=0)
    covariance = np.einsum("kna,knb->nab", centered, centered) / (len(samples) - 1)
    total = np.trace(covariance, axis1=1, axis2=2)
    normal = np.clip(np.einsum("na,nab,nb->n", n, covariance, n), 0.0, total)
    logger.debug(
        f"Неопределённость по {len(samples)} образцам: max total={total.max():.4g} мм²"
    )
    return UncertaintyMap(total=total, normal=normal, tangential=total - normal)

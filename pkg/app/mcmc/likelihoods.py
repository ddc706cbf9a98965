"""
Модели правдоподобия P(Γ_T | α) по расстояниям до ближайших точек.

Все значения возвращаются в логарифмической шкале: произведение по
тысячам вершин в обычной шкале уходит в ноль.
"""

from dataclasses import dataclass
import logging
from typing import Protocol

import numpy as np

from core.errors import DegenerateOverlapError, ValidationError
from mesh import TriangleMesh, closest_points, on_boundary

logger = logging.getLogger(__name__)

_LOG_2PI = float(np.log(2.0 * np.pi))


class LikelihoodModel(Protocol):
    name: str

    def log_likelihood(self, target: TriangleMesh, instance: TriangleMesh) -> float: ...


def _normal_logpdf(x: np.ndarray | float, sigma: float) -> np.ndarray | float:
    return -0.5 * _LOG_2PI - np.log(sigma) - 0.5 * (np.asarray(x) / sigma) ** 2


def _check_positive(**values: float) -> None:
    for name, value in values.items():
        if not value > 0:
            raise ValidationError(f"Параметр {name} должен быть положительным, получено {value}")


def surface_distances(target: TriangleMesh, mesh: TriangleMesh) -> np.ndarray:
    """Расстояния от вершин ``mesh`` до поверхности ``target``."""
    return closest_points(target, mesh.vertices).distances


def hausdorff_distance(a: TriangleMesh, b: TriangleMesh) -> float:
    """Симметричная оценка Хаусдорфа по вершинам обеих сеток."""
    return float(max(surface_distances(a, b).max(), surface_distances(b, a).max()))


def log_likelihood_l2(target: TriangleMesh, instance: TriangleMesh, sigma: float) -> float:
    """Σ_i log N(d_i; 0, σ²) по вершинам экземпляра."""
    _check_positive(sigma=sigma)
    distances = surface_distances(target, instance)
    return float(np.sum(_normal_logpdf(distances, sigma)))


def log_likelihood_hausdorff(target: TriangleMesh, instance: TriangleMesh, rate: float) -> float:
    """ln λ_H - λ_H·d_H, экспоненциальное распределение расстояния Хаусдорфа."""
    _check_positive(rate=rate)
    return float(np.log(rate) - rate * hausdorff_distance(target, instance))


def log_likelihood_collective(
    target: TriangleMesh,
    instance: TriangleMesh,
    sigma: float,
    rate: float,
    boundary_filter: bool = True,
) -> float:
    """Коллективное усреднённое правдоподобие с членом Хаусдорфа.

    log N(d_CL; 0, σ_CL²) + ln λ_H - λ_H·d_H, где d_CL - среднее квадратов
    расстояний по нефильтрованным вершинам экземпляра. Вершины, чья
    ближайшая точка цели лежит на её границе, исключаются и из d_CL, и из
    направления экземпляр→цель в d_H.

    Raises:
        DegenerateOverlapError: Если отфильтрованы все вершины.
    """
    _check_positive(sigma=sigma, rate=rate)
    closest = closest_points(target, instance.vertices)
    keep = np.ones(len(closest), dtype=bool)
    if boundary_filter:
        keep = ~on_boundary(target, closest)
    if not keep.any():
        raise DegenerateOverlapError(
            "Все соответствия отфильтрованы по границе цели: перекрытие вырождено"
        )
    distances = closest.distances[keep]
    d_cl = float(np.mean(distances**2))
    d_h = max(float(distances.max()), float(surface_distances(instance, target).max()))
    return float(_normal_logpdf(d_cl, sigma) + np.log(rate) - rate * d_h)


@dataclass(frozen=True)
class L2Likelihood:
    sigma: float = 1.0
    name: str = "l2"

    def __post_init__(self):
        _check_positive(sigma=self.sigma)

    def log_likelihood(self, target: TriangleMesh, instance: TriangleMesh) -> float:
        return log_likelihood_l2(target, instance, self.sigma)


@dataclass(frozen=True)
class HausdorffLikelihood:
    rate: float = 1.0
    name: str = "hausdorff"

    def __post_init__(self):
        _check_positive(rate=self.rate)

    def log_likelihood(self, target: TriangleMesh, instance: TriangleMesh) -> float:
        return log_likelihood_hausdorff(target, instance, self.rate)


@dataclass(frozen=True)
class CollectiveLikelihood:
    """Правдоподобие для частично наблюдаемых целей.

    Attributes:
        sigma (float): σ_CL для среднего квадрата расстояния.
        rate (float): λ_H экспоненциального члена Хаусдорфа.
        boundary_filter (bool): Исключать соответствия на границе цели.
    """

    sigma: float = 1.0
    rate: float = 1.0
    boundary_filter: bool = True
    name: str = "collective"

    def __post_init__(self):
        _check_positive(sigma=self.sigma, rate=self.rate)

    def log_likelihood(self, target: TriangleMesh, instance: TriangleMesh) -> float:
        return log_likelihood_collective(
            target, instance, self.sigma, self.rate, self.boundary_filter
        )

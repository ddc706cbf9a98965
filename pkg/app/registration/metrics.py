"""
Метрики качества регистрации.
"""

from dataclasses import dataclass, asdict
import logging

import numpy as np

from core.errors import ValidationError
from mcmc import hausdorff_distance, surface_distances
from mesh import TriangleMesh, triangle_normals

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SurfaceMetrics:
    """Расстояния результата до цели (мм)."""

    mean_l2: float
    hausdorff: float

    def as_dict(self) -> dict[str, float]:
        return asdict(self)


def mean_surface_distance(target: TriangleMesh, mesh: TriangleMesh) -> float:
    """Среднее расстояние от вершин ``mesh`` до поверхности цели."""
    return float(np.mean(surface_distances(target, mesh)))


def surface_metrics(target: TriangleMesh, mesh: TriangleMesh) -> SurfaceMetrics:
    return SurfaceMetrics(
        mean_l2=mean_surface_distance(target, mesh),
        hausdorff=hausdorff_distance(target, mesh),
    )


def count_fold_overs(reference: TriangleMesh, mesh: TriangleMesh) -> int:
    """Число треугольников, нормаль которых развернулась относительно опорной сетки.

    Вырожденные треугольники (в любой из сеток) не учитываются.
    """
    if reference.n_triangles != mesh.n_triangles or not np.array_equal(
        reference.triangles, mesh.triangles
    ):
        raise ValidationError("Для подсчёта перекрутов нужна одинаковая топология сеток")
    before = triangle_normals(reference)
    after = triangle_normals(mesh)
    flipped = np.einsum("ij,ij->i", before, after) < 0
    count = int(flipped.sum())
    if count:
        logger.info(f"Обнаружено перекрученных треугольников: {count}")
    return count

"""
Треугольная сетка и дифференциальные величины на ней.

Сетка неизменяема после создания: массивы копируются и помечаются только
для чтения, пространственный индекс строится лениво под блокировкой,
поэтому один объект можно читать из параллельных цепочек.
"""

from dataclasses import dataclass, field, InitVar
import logging
import threading
from typing import Any, Callable

import numpy as np

from core.errors import PreconditionError, ValidationError
from mesh.bvh import ClosestPoints, TriangleBVH

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SurfacePoint:
    """Точка на поверхности сетки (результат одиночного запроса)."""

    position: np.ndarray
    triangle: int
    barycentric: np.ndarray
    distance: float


@dataclass(frozen=True)
class VertexNormalField:
    """Единичная нормаль в каждой вершине."""

    normals: np.ndarray

    def __len__(self) -> int:
        return len(self.normals)


@dataclass(frozen=True, eq=False)
class TriangleMesh:
    """Индексированная треугольная поверхность (координаты в мм).

    Attributes:
        vertices (np.ndarray): Позиции вершин, форма (n, 3).
        triangles (np.ndarray): Индексы вершин треугольников, форма (m, 3).
    """

    vertices: np.ndarray
    triangles: np.ndarray
    check: InitVar[bool] = True
    parent: InitVar["TriangleMesh | None"] = None
    _cache: dict = field(default_factory=dict, init=False, repr=False)
    _cache_lock: Any = field(default_factory=threading.RLock, init=False, repr=False)

    def __post_init__(self, check: bool, parent: "TriangleMesh | None") -> None:
        vertices = np.array(self.vertices, dtype=np.float64).reshape(-1, 3)
        triangles = np.array(self.triangles, dtype=np.int64).reshape(-1, 3)
        if check:
            _validate(vertices, triangles)
        vertices.flags.writeable = False
        triangles.flags.writeable = False
        object.__setattr__(self, "vertices", vertices)
        object.__setattr__(self, "triangles", triangles)
        if parent is not None:
            # Экземпляры модели делят топологию с опорной сеткой
            self._cache["topology_source"] = parent
            for key in ("incidence", "boundary"):
                if key in parent._cache:
                    self._cache[key] = parent._cache[key]

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    def with_vertices(self, vertices: np.ndarray) -> "TriangleMesh":
        """Сетка с той же топологией и новыми позициями вершин."""
        vertices = np.asarray(vertices, dtype=np.float64)
        if vertices.shape != self.vertices.shape:
            raise ValidationError(
                f"Ожидалось {self.vertices.shape} координат, получено {vertices.shape}"
            )
        return TriangleMesh(vertices, self.triangles, check=False, parent=self)

    def cached(self, key: str, factory: Callable[[], Any]) -> Any:
        """Потокобезопасный кэш производных величин сетки."""
        with self._cache_lock:
            if key not in self._cache:
                self._cache[key] = factory()
            return self._cache[key]

    @property
    def bvh(self) -> TriangleBVH:
        def build() -> TriangleBVH:
            if self.n_triangles == 0:
                raise PreconditionError("Запрос ближайшей точки к пустой сетке")
            source = self._cache.get("topology_source")
            if source is not None:
                return source.bvh.refit(self.vertices)
            return TriangleBVH(self.vertices, self.triangles)

        return self.cached("bvh", build)


def _validate(vertices: np.ndarray, triangles: np.ndarray) -> None:
    """Проверяет инварианты сетки."""
    if not np.all(np.isfinite(vertices)):
        bad = np.flatnonzero(~np.isfinite(vertices).all(axis=1))
        raise ValidationError(f"Неконечные координаты вершин: {bad[:10].tolist()}")
    if len(triangles) == 0:
        return
    if triangles.min() < 0 or triangles.max() >= len(vertices):
        bad = np.flatnonzero(((triangles < 0) | (triangles >= len(vertices))).any(axis=1))
        raise ValidationError(
            f"Индекс треугольника вне диапазона [0, {len(vertices)}): "
            f"треугольники {bad[:10].tolist()}"
        )
    repeated = (
        (triangles[:, 0] == triangles[:, 1])
        | (triangles[:, 1] == triangles[:, 2])
        | (triangles[:, 0] == triangles[:, 2])
    )
    if repeated.any():
        raise ValidationError(
            f"Треугольники с повторяющимися вершинами: {np.flatnonzero(repeated)[:10].tolist()}"
        )


def closest_points(mesh: TriangleMesh, queries: np.ndarray) -> ClosestPoints:
    """Пакетный поиск ближайших точек поверхности.

    Args:
        mesh (TriangleMesh): Непустая сетка.
        queries (np.ndarray): Точки запроса, форма (k, 3).

    Returns:
        ClosestPoints: Результаты, выровненные по запросам.

    Raises:
        PreconditionError: Если в сетке нет треугольников.
    """
    if mesh.n_triangles == 0:
        raise PreconditionError("Запрос ближайшей точки к пустой сетке")
    return mesh.bvh.query(queries)


def closest_point(mesh: TriangleMesh, query: np.ndarray) -> SurfacePoint:
    """Ближайшая точка поверхности к одной точке запроса."""
    result = closest_points(mesh, np.asarray(query, dtype=np.float64).reshape(1, 3))
    return SurfacePoint(
        position=result.positions[0],
        triangle=int(result.triangles[0]),
        barycentric=result.barycentric[0],
        distance=float(result.distances[0]),
    )


def triangle_normals(mesh: TriangleMesh) -> np.ndarray:
    """Единичные нормали треугольников; для вырожденных - нулевой вектор."""
    v = mesh.vertices
    t = mesh.triangles
    cross = np.cross(v[t[:, 1]] - v[t[:, 0]], v[t[:, 2]] - v[t[:, 0]])
    norm = np.linalg.norm(cross, axis=1)
    out = np.zeros_like(cross)
    ok = norm > _degenerate_tolerance(mesh)
    out[ok] = cross[ok] / norm[ok, None]
    return out


def _degenerate_tolerance(mesh: TriangleMesh) -> float:
    extent = np.ptp(mesh.vertices, axis=0).max() if mesh.n_vertices else 0.0
    return 1e-14 * max(extent, 1.0) ** 2


def _incidence(mesh: TriangleMesh) -> np.ndarray:
    return mesh.cached(
        "incidence",
        lambda: np.bincount(mesh.triangles.ravel(), minlength=mesh.n_vertices),
    )


def vertex_normals(mesh: TriangleMesh) -> VertexNormalField:
    """Нормали вершин: взвешенное по площади среднее нормалей треугольников.

    Вырожденные треугольники в усреднении не участвуют.

    Raises:
        ValidationError: Если есть изолированные вершины (список индексов в сообщении).
    """
    incidence = _incidence(mesh)
    isolated = np.flatnonzero(incidence == 0)
    if len(isolated):
        raise ValidationError(f"Изолированные вершины без треугольников: {isolated.tolist()}")

    v = mesh.vertices
    t = mesh.triangles
    # векторное произведение = удвоенная площадь * нормаль
    cross = np.cross(v[t[:, 1]] - v[t[:, 0]], v[t[:, 2]] - v[t[:, 0]])
    cross[np.linalg.norm(cross, axis=1) <= _degenerate_tolerance(mesh)] = 0.0
    acc = np.zeros_like(v)
    for corner in range(3):
        np.add.at(acc, t[:, corner], cross)
    norm = np.linalg.norm(acc, axis=1)
    flat = np.flatnonzero(norm == 0.0)
    if len(flat):
        raise ValidationError(
            f"Вершины без невырожденных треугольников, нормаль не определена: {flat.tolist()}"
        )
    return VertexNormalField(normals=acc / norm[:, None])


def boundary_vertices(mesh: TriangleMesh) -> np.ndarray:
    """Вершины, касающиеся ребра, которое использует ровно один треугольник.

    Returns:
        np.ndarray: Отсортированные уникальные индексы вершин (пустой для замкнутой сетки).
    """

    def compute() -> np.ndarray:
        if mesh.n_triangles == 0:
            return np.zeros(0, dtype=np.int64)
        t = mesh.triangles
        edges = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
        edges.sort(axis=1)
        unique, counts = np.unique(edges, axis=0, return_counts=True)
        return np.unique(unique[counts == 1])

    return mesh.cached("boundary", compute)


def boundary_mask(mesh: TriangleMesh) -> np.ndarray:
    mask = np.zeros(mesh.n_vertices, dtype=bool)
    mask[boundary_vertices(mesh)] = True
    return mask


def on_boundary(mesh: TriangleMesh, closest: ClosestPoints) -> np.ndarray:
    """Маска ближайших точек, лежащих на границе поверхности.

    Точка на границе, если она лежит на краю своего треугольника
    (одна из барицентрик равна нулю) и опорный элемент (вершина или
    ребро) содержит граничную вершину.
    """
    bmask = boundary_mask(mesh)
    if not bmask.any():
        return np.zeros(len(closest), dtype=bool)
    corners = mesh.triangles[closest.triangles]
    support = closest.barycentric > 1e-12
    on_edge = ~support.all(axis=1)
    touches = (support & bmask[corners]).any(axis=1)
    return on_edge & touches


def tangent_frames(normals: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Пакетная версия tangent_frame для массива нормалей (k, 3)."""
    n = np.asarray(normals, dtype=np.float64).reshape(-1, 3)
    norm = np.linalg.norm(n, axis=1)
    if np.any(norm < 1e-12):
        raise PreconditionError("Нулевая нормаль: касательный базис не определён")
    n = n / norm[:, None]
    # вспомогательная ось, наименее сонаправленная с нормалью
    helper = np.zeros_like(n)
    helper[np.arange(len(n)), np.argmin(np.abs(n), axis=1)] = 1.0
    v1 = np.cross(n, helper)
    v1 /= np.linalg.norm(v1, axis=1, keepdims=True)
    v2 = np.cross(n, v1)
    return v1, v2


def tangent_frame(normal: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Два единичных вектора, образующих с нормалью правый ортонормированный базис.

    Args:
        normal (np.ndarray): Единичная нормаль.

    Returns:
        tuple[np.ndarray, np.ndarray]: (v1, v2), где v2 = n × v1.

    Raises:
        PreconditionError: Для нулевой нормали.
    """
    v1, v2 = tangent_frames(np.asarray(normal).reshape(1, 3))
    return v1[0], v2[0]


def excise(mesh: TriangleMesh, center: np.ndarray, radius: float) -> TriangleMesh:
    """Удаляет треугольники с вершинами строго внутри шара и неиспользуемые вершины.

    Raises:
        ValidationError: Если после удаления не осталось ни одного треугольника.
    """
    if radius < 0:
        raise ValidationError(f"Радиус вырезания должен быть неотрицательным: {radius}")
    inside = np.linalg.norm(mesh.vertices - np.asarray(center, dtype=np.float64), axis=1) < radius
    keep = ~inside[mesh.triangles].any(axis=1)
    if not keep.any():
        raise ValidationError("Вырезание удаляет всю поверхность цели")
    triangles = mesh.triangles[keep]
    used = np.unique(triangles)
    remap = np.full(mesh.n_vertices, -1, dtype=np.int64)
    remap[used] = np.arange(len(used))
    logger.info(
        f"Вырезано {int((~keep).sum())} треугольников, осталось вершин: {len(used)}"
    )
    return TriangleMesh(mesh.vertices[used], remap[triangles])

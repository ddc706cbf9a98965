"""
Иерархия ограничивающих объёмов (AABB) над треугольниками сетки.

Дерево строится разбиением по медиане центроидов вдоль самой длинной оси,
в листьях не более LEAF_SIZE треугольников. Запросы ближайшей точки
выполняются пакетно: все запросы обходят дерево одновременно уровень за
уровнем, что позволяет держать всю арифметику в numpy.
"""

from dataclasses import dataclass
import logging

import numpy as np
from scipy.spatial import cKDTree

logger = logging.getLogger(__name__)

LEAF_SIZE = 4

# Относительный допуск при разрешении равных расстояний (берём меньший индекс)
_TIE_RTOL = 1e-12


def closest_point_on_triangles(
    a: np.ndarray, b: np.ndarray, c: np.ndarray, p: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Ближайшие точки на треугольниках для пар (треугольник, точка).

    Классическая схема Эриксона по областям Вороного вершин, рёбер и грани,
    дополненная барицентрическими координатами результата.

    Args:
        a, b, c (np.ndarray): Вершины треугольников, форма (k, 3).
        p (np.ndarray): Точки запроса, форма (k, 3).

    Returns:
        tuple[np.ndarray, np.ndarray]: Позиции (k, 3) и барицентрические координаты (k, 3).
    """
    tol = np.finfo(np.float64).tiny
    k = len(p)
    bary = np.zeros((k, 3))
    remain = np.ones(k, dtype=bool)

    ab = b - a
    ac = c - a
    ap = p - a
    d1 = np.einsum("ij,ij->i", ab, ap)
    d2 = np.einsum("ij,ij->i", ac, ap)

    # область вершины A
    is_a = (d1 < tol) & (d2 < tol)
    bary[is_a, 0] = 1.0
    remain &= ~is_a

    bp = p - b
    d3 = np.einsum("ij,ij->i", ab, bp)
    d4 = np.einsum("ij,ij->i", ac, bp)

    # область вершины B
    is_b = (d3 > -tol) & (d4 <= d3) & remain
    bary[is_b, 1] = 1.0
    remain &= ~is_b

    # ребро AB
    vc = d1 * d4 - d3 * d2
    is_ab = (vc < tol) & (d1 > -tol) & (d3 < tol) & remain
    if is_ab.any():
        v = d1[is_ab] / (d1[is_ab] - d3[is_ab])
        bary[is_ab, 0] = 1.0 - v
        bary[is_ab, 1] = v
        remain &= ~is_ab

    cp = p - c
    d5 = np.einsum("ij,ij->i", ab, cp)
    d6 = np.einsum("ij,ij->i", ac, cp)

    # область вершины C
    is_c = (d6 > -tol) & (d5 <= d6) & remain
    bary[is_c, 2] = 1.0
    remain &= ~is_c

    # ребро AC
    vb = d5 * d2 - d1 * d6
    is_ac = (vb < tol) & (d2 > -tol) & (d6 < tol) & remain
    if is_ac.any():
        w = d2[is_ac] / (d2[is_ac] - d6[is_ac])
        bary[is_ac, 0] = 1.0 - w
        bary[is_ac, 2] = w
        remain &= ~is_ac

    # ребро BC
    va = d3 * d6 - d5 * d4
    is_bc = (va < tol) & ((d4 - d3) > -tol) & ((d5 - d6) > -tol) & remain
    if is_bc.any():
        d43 = d4[is_bc] - d3[is_bc]
        w = d43 / (d43 + (d5[is_bc] - d6[is_bc]))
        bary[is_bc, 1] = 1.0 - w
        bary[is_bc, 2] = w
        remain &= ~is_bc

    if remain.any():
        denom = va[remain] + vb[remain] + vc[remain]
        flat = np.abs(denom) <= tol
        inside = np.flatnonzero(remain)
        good = inside[~flat]
        if len(good):
            inv = 1.0 / denom[~flat]
            v = vb[good] * inv
            w = vc[good] * inv
            bary[good] = np.column_stack([1.0 - v - w, v, w])
        degenerate = inside[flat]
        if len(degenerate):
            # вырожденный треугольник: ближайшая точка на одном из трёх отрезков
            bary[degenerate] = _closest_on_edges(
                a[degenerate], b[degenerate], c[degenerate], p[degenerate]
            )

    bary = np.clip(bary, 0.0, 1.0)
    bary /= bary.sum(axis=1, keepdims=True)
    points = bary[:, :1] * a + bary[:, 1:2] * b + bary[:, 2:] * c
    return points, bary


def _closest_on_edges(a, b, c, p) -> np.ndarray:
    """Барицентрики ближайшей точки на рёбрах (для треугольников нулевой площади)."""
    best = np.full(len(p), np.inf)
    bary = np.zeros((len(p), 3))
    for i, j, s, t in ((0, 1, a, b), (0, 2, a, c), (1, 2, b, c)):
        seg = t - s
        length2 = np.einsum("ij,ij->i", seg, seg)
        u = np.divide(
            np.einsum("ij,ij->i", p - s, seg),
            length2,
            out=np.zeros(len(p)),
            where=length2 > 0,
        )
        u = np.clip(u, 0.0, 1.0)
        q = s + u[:, None] * seg
        d2 = np.einsum("ij,ij->i", p - q, p - q)
        better = d2 < best
        best[better] = d2[better]
        bary[better] = 0.0
        bary[better, i] = 1.0 - u[better]
        bary[better, j] = u[better]
    return bary


@dataclass(frozen=True)
class ClosestPoints:
    """Результат пакетного запроса ближайших точек.

    Все массивы выровнены по запросам.
    """

    positions: np.ndarray
    triangles: np.ndarray
    barycentric: np.ndarray
    distances: np.ndarray

    def __len__(self) -> int:
        return len(self.distances)


class TriangleBVH:
    """AABB-дерево над треугольниками с плоским хранением узлов.

    Узлы лежат в массивах; дочерние узлы всегда создаются после родителя,
    листья ссылаются на непрерывный диапазон массива ``order``.
    """

    def __init__(self, vertices: np.ndarray, triangles: np.ndarray):
        if len(triangles) == 0:
            raise ValueError("Нельзя построить дерево без треугольников")

        self.triangles = triangles
        self._set_geometry(vertices)

        lower, upper, left, right, start, count, depth = [], [], [], [], [], [], []
        order: list[np.ndarray] = []
        n_sorted = 0

        def new_node(level: int) -> int:
            for store in (lower, upper):
                store.append(None)
            left.append(-1)
            right.append(-1)
            start.append(0)
            count.append(0)
            depth.append(level)
            return len(left) - 1

        centroids = (self._a + self._b + self._c) / 3.0
        stack = [(new_node(0), np.arange(len(triangles)))]
        while stack:
            node, idx = stack.pop()
            lower[node] = self._tri_lo[idx].min(axis=0)
            upper[node] = self._tri_hi[idx].max(axis=0)
            if len(idx) <= LEAF_SIZE:
                start[node] = n_sorted
                count[node] = len(idx)
                order.append(idx)
                n_sorted += len(idx)
                continue

            cent = centroids[idx]
            axis = int(np.argmax(cent.max(axis=0) - cent.min(axis=0)))
            mid = len(idx) // 2
            part = np.argpartition(cent[:, axis], mid, kind="introselect")
            l_node = new_node(depth[node] + 1)
            r_node = new_node(depth[node] + 1)
            left[node] = l_node
            right[node] = r_node
            stack.append((r_node, idx[part[mid:]]))
            stack.append((l_node, idx[part[:mid]]))

        self.lower = np.asarray(lower)
        self.upper = np.asarray(upper)
        self.left = np.asarray(left, dtype=np.int64)
        self.right = np.asarray(right, dtype=np.int64)
        self.start = np.asarray(start, dtype=np.int64)
        self.count = np.asarray(count, dtype=np.int64)
        self.depth = np.asarray(depth, dtype=np.int64)
        self.order = np.concatenate(order)
        logger.debug(
            f"BVH построено: {len(self.left)} узлов, глубина {self.depth.max()}"
        )

    def _set_geometry(self, vertices: np.ndarray) -> None:
        tri = self.triangles
        self.vertices = vertices
        self._a = vertices[tri[:, 0]]
        self._b = vertices[tri[:, 1]]
        self._c = vertices[tri[:, 2]]
        self._tri_lo = np.minimum(np.minimum(self._a, self._b), self._c)
        self._tri_hi = np.maximum(np.maximum(self._a, self._b), self._c)
        surface_ids = np.unique(tri)
        self._surface_ids = surface_ids
        self._kdtree = cKDTree(vertices[surface_ids])

    def refit(self, vertices: np.ndarray) -> "TriangleBVH":
        """Новое дерево с той же топологией и пересчитанными границами.

        Используется для экземпляров модели: треугольники те же,
        меняются только позиции вершин.
        """
        clone = object.__new__(TriangleBVH)
        clone.triangles = self.triangles
        clone._set_geometry(vertices)
        for name in ("left", "right", "start", "count", "depth", "order"):
            setattr(clone, name, getattr(self, name))

        lower = np.empty_like(self.lower)
        upper = np.empty_like(self.upper)
        is_leaf = self.left < 0
        leaves = np.flatnonzero(is_leaf)
        leaves = leaves[np.argsort(self.start[leaves])]
        lo_sorted = clone._tri_lo[self.order]
        hi_sorted = clone._tri_hi[self.order]
        lower[leaves] = np.minimum.reduceat(lo_sorted, self.start[leaves], axis=0)
        upper[leaves] = np.maximum.reduceat(hi_sorted, self.start[leaves], axis=0)
        for level in range(int(self.depth.max()), -1, -1):
            nodes = np.flatnonzero((self.depth == level) & ~is_leaf)
            if len(nodes) == 0:
                continue
            lower[nodes] = np.minimum(lower[self.left[nodes]], lower[self.right[nodes]])
            upper[nodes] = np.maximum(upper[self.left[nodes]], upper[self.right[nodes]])
        clone.lower = lower
        clone.upper = upper
        return clone

    def query(self, points: np.ndarray) -> ClosestPoints:
        """Точные ближайшие точки поверхности для набора запросов.

        Верхняя граница расстояния берётся от ближайшей вершины поверхности,
        затем дерево обходится в ширину с отсечением узлов, чей AABB дальше
        текущей границы. Равные расстояния разрешаются в пользу меньшего
        индекса треугольника.

        Args:
            points (np.ndarray): Запросы, форма (k, 3).

        Returns:
            ClosestPoints: Позиции, индексы треугольников, барицентрики, расстояния.
        """
        points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        k = len(points)
        vertex_dist, _ = self._kdtree.query(points)
        bound = vertex_dist**2 * (1.0 + 1e-9) + 1e-18

        cand_q: list[np.ndarray] = []
        cand_t: list[np.ndarray] = []
        cand_d: list[np.ndarray] = []

        pair_q = np.arange(k)
        pair_n = np.zeros(k, dtype=np.int64)
        while len(pair_q):
            p = points[pair_q]
            gap = np.maximum(self.lower[pair_n] - p, 0.0) + np.maximum(
                p - self.upper[pair_n], 0.0
            )
            box_d2 = np.einsum("ij,ij->i", gap, gap)
            keep = box_d2 <= bound[pair_q]
            pair_q = pair_q[keep]
            pair_n = pair_n[keep]

            leaf = self.left[pair_n] < 0
            if leaf.any():
                lq = pair_q[leaf]
                ln = pair_n[leaf]
                counts = self.count[ln]
                rep_q = np.repeat(lq, counts)
                offsets = np.arange(counts.sum()) - np.repeat(np.cumsum(counts) - counts, counts)
                tri_ids = self.order[np.repeat(self.start[ln], counts) + offsets]
                pos, _ = closest_point_on_triangles(
                    self._a[tri_ids], self._b[tri_ids], self._c[tri_ids], points[rep_q]
                )
                diff = points[rep_q] - pos
                d2 = np.einsum("ij,ij->i", diff, diff)
                np.minimum.at(bound, rep_q, d2 * (1.0 + _TIE_RTOL) + 1e-30)
                cand_q.append(rep_q)
                cand_t.append(tri_ids)
                cand_d.append(d2)

            inner_q = pair_q[~leaf]
            inner_n = pair_n[~leaf]
            pair_q = np.concatenate([inner_q, inner_q])
            pair_n = np.concatenate([self.left[inner_n], self.right[inner_n]])

        q = np.concatenate(cand_q)
        t = np.concatenate(cand_t)
        d = np.concatenate(cand_d)

        # минимум по каждому запросу, затем наименьший индекс среди равных
        best = np.full(k, np.inf)
        np.minimum.at(best, q, d)
        near = d <= best[q] * (1.0 + _TIE_RTOL) + 1e-30
        q, t = q[near], t[near]
        sort = np.lexsort((t, q))
        q, t = q[sort], t[sort]
        first = np.ones(len(q), dtype=bool)
        first[1:] = q[1:] != q[:-1]
        chosen = np.empty(k, dtype=np.int64)
        chosen[q[first]] = t[first]

        pos, bary = closest_point_on_triangles(
            self._a[chosen], self._b[chosen], self._c[chosen], points
        )
        dist = np.linalg.norm(points - pos, axis=1)
        return ClosestPoints(positions=pos, triangles=chosen, barycentric=bary, distances=dist)


def brute_force_closest(vertices: np.ndarray, triangles: np.ndarray, points: np.ndarray) -> ClosestPoints:
    """Перебор всех треугольников для каждого запроса (эталон для проверки дерева)."""
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    a = vertices[triangles[:, 0]]
    b = vertices[triangles[:, 1]]
    c = vertices[triangles[:, 2]]
    m = len(triangles)
    chosen = np.empty(len(points), dtype=np.int64)
    for i, p in enumerate(points):
        pos, _ = closest_point_on_triangles(a, b, c, np.broadcast_to(p, (m, 3)).copy())
        d2 = np.einsum("ij,ij->i", pos - p, pos - p)
        chosen[i] = int(np.flatnonzero(d2 <= d2.min() * (1.0 + _TIE_RTOL) + 1e-30)[0])
    pos, bary = closest_point_on_triangles(a[chosen], b[chosen], c[chosen], points)
    return ClosestPoints(
        positions=pos,
        triangles=chosen,
        barycentric=bary,
        distances=np.linalg.norm(points - pos, axis=1),
    )

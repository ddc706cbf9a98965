"""
Синтетические поверхности для настольных экспериментов.

Эллипсоид - гладкая замкнутая форма, тонкий цилиндр со смещением -
сценарий перекрута ICP, пластина с выступом - аналог реконструкции
носа по частичным данным. Все формы одного типа и разрешения имеют
одинаковую топологию, поэтому цели находятся в соответствии с опорной.
"""

import logging

import numpy as np

from cli.schemas import SynthSpec
from core.errors import ValidationError
from mesh import TriangleMesh

logger = logging.getLogger(__name__)


def _capped_tube_triangles(rings: int, segments: int) -> np.ndarray:
    """Топология «полюс, rings колец по segments вершин, полюс»."""
    j = np.arange(segments)
    nxt = (j + 1) % segments
    last = 1 + rings * segments
    faces = [np.stack([np.zeros(segments, dtype=np.int64), 1 + j, 1 + nxt], axis=1)]
    for i in range(rings - 1):
        a = 1 + i * segments + j
        b = 1 + i * segments + nxt
        c = 1 + (i + 1) * segments + j
        d = 1 + (i + 1) * segments + nxt
        faces.append(np.stack([a, c, b], axis=1))
        faces.append(np.stack([b, c, d], axis=1))
    base = 1 + (rings - 1) * segments
    faces.append(np.stack([np.full(segments, last), base + nxt, base + j], axis=1))
    return np.concatenate(faces)


def _orient_outward(vertices: np.ndarray, triangles: np.ndarray) -> np.ndarray:
    """Разворачивает все треугольники, если ориентированный объём отрицателен."""
    v = vertices[triangles]
    volume = np.einsum("ij,ij->i", v[:, 0], np.cross(v[:, 1], v[:, 2])).sum() / 6.0
    return triangles[:, ::-1].copy() if volume < 0 else triangles


def ellipsoid(semi_axes=(40.0, 25.0, 20.0), resolution: int = 16) -> TriangleMesh:
    """UV-эллипсоид: resolution широтных поясов, 2·resolution меридианов."""
    if resolution < 4:
        raise ValidationError(f"Разрешение должно быть ≥ 4, получено {resolution}")
    segments = 2 * resolution
    theta = np.pi * np.arange(1, resolution) / resolution
    phi = 2.0 * np.pi * np.arange(segments) / segments
    ring = np.stack(
        [
            np.outer(np.sin(theta), np.cos(phi)),
            np.outer(np.sin(theta), np.sin(phi)),
            np.outer(np.cos(theta), np.ones(segments)),
        ],
        axis=2,
    ).reshape(-1, 3)
    unit = np.concatenate([[[0.0, 0.0, 1.0]], ring, [[0.0, 0.0, -1.0]]])
    vertices = unit * np.asarray(semi_axes, dtype=np.float64)
    triangles = _capped_tube_triangles(resolution - 1, segments)
    return TriangleMesh(vertices, _orient_outward(vertices, triangles))


def thin_cylinder(
    radius: float = 5.0, length: float = 100.0, resolution: int = 16, offset: float = 0.0
) -> TriangleMesh:
    """Замкнутый цилиндр вдоль оси x с плоскими торцами, сдвинутый по y на ``offset``."""
    if resolution < 4:
        raise ValidationError(f"Разрешение должно быть ≥ 4, получено {resolution}")
    segments = resolution
    rings = 2 * resolution + 1
    x = np.linspace(-length / 2.0, length / 2.0, rings)
    phi = 2.0 * np.pi * np.arange(segments) / segments
    ring = np.stack(
        [
            np.repeat(x, segments),
            np.tile(radius * np.cos(phi), rings) + offset,
            np.tile(radius * np.sin(phi), rings),
        ],
        axis=1,
    )
    caps = np.array([[-length / 2.0, offset, 0.0], [length / 2.0, offset, 0.0]])
    vertices = np.concatenate([caps[:1], ring, caps[1:]])
    triangles = _capped_tube_triangles(rings, segments)
    return TriangleMesh(vertices, _orient_outward(vertices, triangles))


def plate_with_bump(
    size: float = 60.0, resolution: int = 16, bump_height: float = 10.0, bump_width: float = 8.0
) -> TriangleMesh:
    """Квадратная пластина в z=0 с гауссовым выступом в центре, нормали к +z."""
    if resolution < 4:
        raise ValidationError(f"Разрешение должно быть ≥ 4, получено {resolution}")
    k = resolution + 1
    xs = np.linspace(-size / 2.0, size / 2.0, k)
    gx, gy = np.meshgrid(xs, xs, indexing="xy")
    gz = bump_height * np.exp(-(gx**2 + gy**2) / (2.0 * bump_width**2))
    vertices = np.stack([gx.ravel(), gy.ravel(), gz.ravel()], axis=1)
    i, j = np.meshgrid(np.arange(resolution), np.arange(resolution), indexing="ij")
    a = (i * k + j).ravel()
    b, c, d = a + 1, a + k, a + k + 1
    triangles = np.concatenate([np.stack([a, b, d], axis=1), np.stack([a, d, c], axis=1)])
    return TriangleMesh(vertices, triangles)


def icosphere(radius: float = 30.0, subdivisions: int = 2) -> TriangleMesh:
    """Икосфера: икосаэдр с рекурсивным делением рёбер и проекцией на сферу."""
    t = (1.0 + np.sqrt(5.0)) / 2.0
    vertices = [
        [-1, t, 0], [1, t, 0], [-1, -t, 0], [1, -t, 0],
        [0, -1, t], [0, 1, t], [0, -1, -t], [0, 1, -t],
        [t, 0, -1], [t, 0, 1], [-t, 0, -1], [-t, 0, 1],
    ]
    faces = [
        [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
        [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
        [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
        [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
    ]
    vertices = [np.asarray(v, dtype=np.float64) / np.linalg.norm(v) for v in vertices]
    for _ in range(subdivisions):
        midpoints: dict[tuple[int, int], int] = {}

        def midpoint(p: int, q: int) -> int:
            key = (min(p, q), max(p, q))
            if key not in midpoints:
                m = vertices[p] + vertices[q]
                vertices.append(m / np.linalg.norm(m))
                midpoints[key] = len(vertices) - 1
            return midpoints[key]

        refined = []
        for a, b, c in faces:
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            refined += [[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]
        faces = refined
    points = radius * np.asarray(vertices)
    triangles = np.asarray(faces, dtype=np.int64)
    return TriangleMesh(points, _orient_outward(points, triangles))


def base_shape(spec: SynthSpec) -> TriangleMesh:
    """Опорная форма по спецификации."""
    match spec.shape:
        case "ellipsoid":
            return ellipsoid(spec.semi_axes, spec.resolution)
        case "thin-cylinder":
            return thin_cylinder(spec.radius, spec.length, spec.resolution)
        case "plate":
            return plate_with_bump(spec.size, spec.resolution, spec.bump_height, spec.bump_width)
        case "icosphere":
            return icosphere(min(spec.semi_axes), max(spec.resolution.bit_length() - 3, 0))


def perturbed_shape(spec: SynthSpec, rng: np.random.Generator) -> TriangleMesh:
    """Цель вне линейной оболочки модели: возмущение параметров базовой формы.

    Топология совпадает с базовой формой.
    """
    scale = 1.0 + spec.perturbation * rng.standard_normal(3)
    match spec.shape:
        case "ellipsoid":
            return ellipsoid(tuple(np.asarray(spec.semi_axes) * scale), spec.resolution)
        case "thin-cylinder":
            return thin_cylinder(spec.radius * scale[0], spec.length, spec.resolution, spec.offset)
        case "plate":
            return plate_with_bump(
                spec.size, spec.resolution, spec.bump_height * scale[0], spec.bump_width * scale[1]
            )
        case "icosphere":
            mesh = base_shape(spec)
            return mesh.with_vertices(mesh.vertices * scale)

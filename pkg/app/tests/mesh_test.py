import numpy as np
import pytest

from cli.synth import plate_with_bump
from core.errors import MeshFormatError, PreconditionError, ValidationError
from mesh import (
    TriangleMesh,
    boundary_vertices,
    brute_force_closest,
    closest_point,
    closest_points,
    excise,
    load_mesh,
    read_ply,
    save_mesh,
    tangent_frame,
    vertex_normals,
)

ASCII_TRIANGLE = b"""ply
format ascii 1.0
element vertex 3
property float x
property float y
property float z
element face 1
property list uchar int vertex_indices
end_header
0 0 0
1 0 0
0 1 0
3 0 1 2
"""


def test_load_ascii_ply(tmp_path):
    """Тест чтения минимального ascii PLY"""
    path = tmp_path / "triangle.ply"
    path.write_bytes(ASCII_TRIANGLE)
    mesh = load_mesh(path)
    assert mesh.n_vertices == 3
    assert mesh.n_triangles == 1
    np.testing.assert_array_equal(mesh.triangles, [[0, 1, 2]])
    print(f"✅ ascii PLY: {mesh.n_vertices} вершины")


def test_obj_index_out_of_range(tmp_path):
    """Тест OBJ с индексом вершины вне диапазона"""
    path = tmp_path / "bad.obj"
    path.write_text("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 6\n")
    with pytest.raises(ValidationError):
        load_mesh(path)
    print("✅ Индекс вне диапазона отклонён")


def test_truncated_binary_ply(tmp_path, sphere):
    """Тест усечённого бинарного PLY: ошибка формата со смещением"""
    path = save_mesh(sphere, tmp_path / "sphere.ply")
    data = path.read_bytes()
    path.write_bytes(data[: len(data) - 20])
    with pytest.raises(MeshFormatError) as info:
        load_mesh(path)
    assert info.value.offset > 0
    assert "смещение" in str(info.value)
    print(f"✅ Ошибка формата: {info.value}")


def test_ply_scalars_roundtrip(tmp_path, sphere):
    """Тест записи скалярного поля вершин как quality"""
    scalars = np.zeros(sphere.n_vertices)
    scalars[0] = 2.5
    path = save_mesh(sphere, tmp_path / "scalars.ply", scalars=scalars)
    data = read_ply(path)
    np.testing.assert_allclose(data.vertex_properties["quality"], scalars)
    np.testing.assert_array_equal(data.mesh.triangles, sphere.triangles)
    np.testing.assert_array_equal(data.mesh.vertices, sphere.vertices)
    print("✅ Скалярное поле сохранено")


@pytest.mark.parametrize("fmt", ["ply", "ply-ascii"])
def test_ply_large_coordinates_exact(tmp_path, fmt, rng):
    """Тест: координаты порядка метра и поле вершин сохраняются без потерь"""
    mesh = plate_with_bump(size=600.0, resolution=31, bump_height=40.0, bump_width=80.0)
    assert mesh.n_vertices > 1000
    offset = np.array([1234.5678901, -987.654321, 512.0])
    shifted = mesh.with_vertices(mesh.vertices + offset + rng.normal(scale=1e-3, size=mesh.vertices.shape))
    field = rng.normal(scale=50.0, size=mesh.n_vertices)
    data = read_ply(save_mesh(shifted, tmp_path / "large.ply", format=fmt, scalars=field))
    assert np.abs(data.mesh.vertices - shifted.vertices).max() <= 1e-6
    assert np.abs(data.vertex_properties["quality"] - field).max() == 0.0
    print(f"✅ {fmt}: {mesh.n_vertices} вершин без потерь")


def test_obj_rejects_scalars(tmp_path, sphere):
    """Тест: OBJ не хранит скалярное поле"""
    with pytest.raises(ValidationError):
        save_mesh(sphere, tmp_path / "sphere.obj", scalars=np.ones(sphere.n_vertices))
    print("✅ OBJ со скалярами отклонён")


def test_closest_point_above_triangle(unit_triangle):
    """Тест ближайшей точки над внутренностью треугольника"""
    point = closest_point(unit_triangle, np.array([0.25, 0.25, 2.0]))
    np.testing.assert_allclose(point.position, [0.25, 0.25, 0.0], atol=1e-12)
    assert point.distance == pytest.approx(2.0)
    assert point.triangle == 0
    np.testing.assert_allclose(point.barycentric, [0.5, 0.25, 0.25], atol=1e-12)
    print(f"✅ Расстояние до треугольника: {point.distance}")


def test_closest_point_at_vertex(unit_triangle):
    """Тест запроса в вершине: нулевое расстояние и единичная барицентрика"""
    point = closest_point(unit_triangle, np.array([1.0, 0.0, 0.0]))
    assert point.distance == pytest.approx(0.0, abs=1e-12)
    assert np.max(point.barycentric) == pytest.approx(1.0)
    print("✅ Запрос в вершине")


def test_bvh_matches_brute_force(small_ellipsoid, plate, rng):
    """Тест совпадения BVH с полным перебором"""
    for mesh in (small_ellipsoid, plate):
        extent = np.ptp(mesh.vertices, axis=0)
        queries = mesh.vertices.mean(axis=0) + rng.uniform(-1.0, 1.0, (200, 3)) * extent
        fast = closest_points(mesh, queries)
        slow = brute_force_closest(mesh.vertices, mesh.triangles, queries)
        np.testing.assert_allclose(fast.distances, slow.distances, atol=1e-9)
        # расстояние не больше расстояния до любой вершины
        to_vertices = np.linalg.norm(queries[:, None] - mesh.vertices[None], axis=2).min(axis=1)
        assert np.all(fast.distances <= to_vertices + 1e-9)
    print("✅ BVH совпадает с перебором")


def test_closest_point_idempotent(small_ellipsoid, rng):
    """Тест: повторный запрос в найденной точке даёт нулевое расстояние"""
    queries = rng.normal(scale=20.0, size=(50, 3))
    first = closest_points(small_ellipsoid, queries)
    second = closest_points(small_ellipsoid, first.positions)
    assert np.all(second.distances <= 1e-9)
    print("✅ Идемпотентность ближайшей точки")


def test_refit_after_deformation(small_ellipsoid, rng):
    """Тест дерева экземпляра с той же топологией после деформации"""
    _ = small_ellipsoid.bvh
    moved = small_ellipsoid.with_vertices(small_ellipsoid.vertices * [1.3, 0.8, 1.1])
    queries = rng.normal(scale=15.0, size=(100, 3))
    fast = closest_points(moved, queries)
    slow = brute_force_closest(moved.vertices, moved.triangles, queries)
    np.testing.assert_allclose(fast.distances, slow.distances, atol=1e-9)
    print("✅ Перестроение дерева после деформации")


def test_empty_mesh_query():
    """Тест запроса к сетке без треугольников"""
    mesh = TriangleMesh(np.zeros((3, 3)), np.zeros((0, 3), dtype=np.int64))
    with pytest.raises(PreconditionError):
        closest_points(mesh, np.zeros((1, 3)))
    print("✅ Пустая сетка отклонена")


def test_vertex_normals_flat_square(flat_square):
    """Тест нормалей плоского квадрата"""
    normals = vertex_normals(flat_square).normals
    np.testing.assert_allclose(normals, np.tile([0.0, 0.0, 1.0], (4, 1)), atol=1e-12)
    print("✅ Нормали квадрата направлены вдоль +z")


def test_vertex_normals_sphere(sphere):
    """Тест нормалей икосферы: почти радиальные"""
    normals = vertex_normals(sphere).normals
    radial = sphere.vertices / np.linalg.norm(sphere.vertices, axis=1, keepdims=True)
    cosines = np.einsum("ij,ij->i", normals, radial)
    assert np.all(cosines > np.cos(np.radians(5.0)))
    print(f"✅ Минимальный косинус с радиусом: {cosines.min():.4f}")


def test_isolated_vertex():
    """Тест изолированной вершины: индекс в сообщении"""
    vertices = np.array([[0.0, 0, 0], [1, 0, 0], [0, 1, 0], [5, 5, 5]])
    mesh = TriangleMesh(vertices, np.array([[0, 1, 2]]))
    with pytest.raises(ValidationError, match="3"):
        vertex_normals(mesh)
    print("✅ Изолированная вершина обнаружена")


def test_boundary_vertices(sphere, unit_triangle, plate):
    """Тест граничных вершин"""
    assert len(boundary_vertices(sphere)) == 0
    np.testing.assert_array_equal(boundary_vertices(unit_triangle), [0, 1, 2])
    # сетка 5×5: граница из 16 вершин
    assert len(boundary_vertices(plate)) == 16
    print("✅ Граничные вершины")


def test_tangent_frame():
    """Тест касательного базиса: ортонормированный и правый"""
    for normal in ([0.0, 0.0, 1.0], [1.0, 2.0, -2.0] / np.linalg.norm([1.0, 2.0, -2.0])):
        n = np.asarray(normal)
        v1, v2 = tangent_frame(n)
        frame = np.stack([n, v1, v2])
        np.testing.assert_allclose(frame @ frame.T, np.eye(3), atol=1e-12)
        assert np.linalg.det(frame) == pytest.approx(1.0)
    with pytest.raises(PreconditionError):
        tangent_frame(np.zeros(3))
    print("✅ Касательный базис")


def test_excise(plate):
    """Тест вырезания шара из пластины"""
    center = plate.vertices[np.argmax(plate.vertices[:, 2])]
    cut = excise(plate, center, 6.0)
    assert cut.n_triangles < plate.n_triangles
    assert len(boundary_vertices(cut)) > 16
    assert np.all(np.linalg.norm(cut.vertices - center, axis=1) >= 6.0)
    with pytest.raises(ValidationError):
        excise(plate, center, 1000.0)
    print(f"✅ После вырезания {cut.n_vertices} вершин")

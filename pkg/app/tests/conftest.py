import os
import sys

import numpy as np
import pytest

# Добавляем путь к приложению
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), "..")))

from cli.synth import ellipsoid, icosphere, plate_with_bump
from mesh import TriangleMesh
from shapemodel import GaussianKernel, build_low_rank


@pytest.fixture
def unit_triangle() -> TriangleMesh:
    return TriangleMesh(np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]), np.array([[0, 1, 2]]))


@pytest.fixture
def flat_square() -> TriangleMesh:
    """Квадрат 1×1 в плоскости z=0 из двух треугольников, нормали к +z."""
    vertices = np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [1.0, 1.0, 0.0], [0.0, 1.0, 0.0]])
    return TriangleMesh(vertices, np.array([[0, 1, 2], [0, 2, 3]]))


@pytest.fixture
def sphere() -> TriangleMesh:
    return icosphere(radius=10.0, subdivisions=1)


@pytest.fixture
def small_ellipsoid() -> TriangleMesh:
    return ellipsoid((12.0, 8.0, 6.0), resolution=6)


@pytest.fixture
def plate() -> TriangleMesh:
    return plate_with_bump(size=20.0, resolution=4, bump_height=3.0, bump_width=4.0)


@pytest.fixture
def small_model(small_ellipsoid):
    """Низкоранговая модель на маленьком эллипсоиде (плотное разложение)."""
    kernel = GaussianKernel(scale=4.0, bandwidth=10.0)
    return build_low_rank(kernel, small_ellipsoid, rank=12)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(42)

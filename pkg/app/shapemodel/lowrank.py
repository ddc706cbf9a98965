"""
Низкоранговая гауссовская морфируемая модель (усечённое разложение Карунена-Лоэва).

Экземпляр формы задаётся вектором коэффициентов α:
    x_j + μ(x_j) + Σ_i α_i √λ_i φ_i(x_j),  α_i ~ N(0, 1).
Скалярное произведение для ортонормальности и проекции - сумма по вершинам
трёхмерных скалярных произведений (без весов площади).
"""

from dataclasses import dataclass, field
import logging
from typing import Any

import numpy as np
import numpy.typing as npt
from scipy import linalg

from core.config import get_nystrom_points, get_nystrom_threshold
from core.errors import ModelBuildError, ValidationError
from mesh import TriangleMesh
from shapemodel.kernels import GaussianKernel, SampleKernel, build_from_samples

logger = logging.getLogger(__name__)

# Вектор коэффициентов модели длины r
CoefficientVector = npt.NDArray[np.float64]

# Собственные значения ниже порога считаются нулевыми при проекции
NULL_EIGENVALUE = 1e-12

# Допустимый отрицательный хвост спектра относительно λ_1
NEGATIVE_SPECTRUM_RTOL = 1e-8

_LOG_2PI = float(np.log(2.0 * np.pi))


@dataclass(frozen=True, eq=False)
class LowRankGP:
    """Низкоранговая GP-модель деформаций опорной сетки.

    Attributes:
        reference (TriangleMesh): Опорная поверхность Γ_R.
        eigenvalues (np.ndarray): λ_1 ≥ … ≥ λ_r ≥ 0 (мм²).
        basis (np.ndarray): Собственные функции в вершинах, форма (r, n, 3).
        mean (np.ndarray): Средняя деформация μ, форма (n, 3).
    """

    reference: TriangleMesh
    eigenvalues: np.ndarray
    basis: np.ndarray
    mean: np.ndarray
    _scaled: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        eigenvalues = np.array(self.eigenvalues, dtype=np.float64).ravel()
        basis = np.array(self.basis, dtype=np.float64)
        mean = np.array(self.mean, dtype=np.float64)
        n = self.reference.n_vertices
        r = len(eigenvalues)
        if r < 1:
            raise ValidationError("Ранг модели должен быть положительным")
        if basis.shape != (r, n, 3):
            raise ValidationError(f"Базис должен иметь форму {(r, n, 3)}, получено {basis.shape}")
        if mean.shape != (n, 3):
            raise ValidationError(f"Среднее должно иметь форму {(n, 3)}, получено {mean.shape}")
        if np.any(eigenvalues < 0) or np.any(np.diff(eigenvalues) > 0):
            raise ValidationError("Собственные значения должны быть неотрицательны и не возрастать")
        for name, value in (("eigenvalues", eigenvalues), ("basis", basis), ("mean", mean)):
            value.flags.writeable = False
            object.__setattr__(self, name, value)
        scaled = basis.reshape(r, 3 * n).T * np.sqrt(eigenvalues)
        scaled.flags.writeable = False
        object.__setattr__(self, "_scaled", scaled)

    @property
    def rank(self) -> int:
        return len(self.eigenvalues)

    @property
    def n_vertices(self) -> int:
        return self.reference.n_vertices

    @property
    def null_components(self) -> np.ndarray:
        """Маска компонент с λ ≈ 0: их коэффициенты при проекции обнуляются."""
        return self.eigenvalues <= NULL_EIGENVALUE

    def check_coefficients(self, alpha: Any) -> CoefficientVector:
        """Проверяет длину и конечность вектора коэффициентов."""
        alpha = np.asarray(alpha, dtype=np.float64).ravel()
        if len(alpha) != self.rank:
            raise ValidationError(f"Ожидалось {self.rank} коэффициентов, получено {len(alpha)}")
        if not np.all(np.isfinite(alpha)):
            raise ValidationError("Коэффициенты должны быть конечными")
        return alpha

    def scaled_basis(self, vertex_ids: np.ndarray | None = None) -> np.ndarray:
        """√λ_i φ_i в выбранных вершинах, форма (k, 3, r)."""
        full = self._scaled.reshape(self.n_vertices, 3, self.rank)
        return full if vertex_ids is None else full[np.asarray(vertex_ids)]

    def deformation(self, alpha: Any) -> np.ndarray:
        """Поле деформации u[α] в вершинах, форма (n, 3)."""
        alpha = self.check_coefficients(alpha)
        return self.mean + (self._scaled @ alpha).reshape(self.n_vertices, 3)

    def instance(self, alpha: Any) -> TriangleMesh:
        """Форма Γ[α]: опорная сетка плюс деформация, треугольники копируются."""
        return self.reference.with_vertices(self.reference.vertices + self.deformation(alpha))

    def log_prior(self, alpha: Any) -> float:
        """Логарифм стандартной многомерной нормальной плотности α."""
        alpha = self.check_coefficients(alpha)
        return float(-0.5 * self.rank * _LOG_2PI - 0.5 * alpha @ alpha)

    def project(self, field: np.ndarray) -> CoefficientVector:
        """Проекция поля деформации в пространство коэффициентов.

        α_i = ⟨φ_i, u - μ⟩ / √λ_i. Компоненты с λ_i ≈ 0 обнуляются
        (см. null_components).

        Args:
            field (np.ndarray): Деформация в каждой вершине, форма (n, 3).

        Returns:
            CoefficientVector: Коэффициенты, оптимальные по МНК в усечённом базисе.
        """
        field = np.asarray(field, dtype=np.float64)
        if field.shape != (self.n_vertices, 3):
            raise ValidationError(
                f"Поле деформации должно иметь форму {(self.n_vertices, 3)}, получено {field.shape}"
            )
        residual = (field - self.mean).ravel()
        inner = self.basis.reshape(self.rank, -1) @ residual
        null = self.null_components
        alpha = np.zeros(self.rank)
        alpha[~null] = inner[~null] / np.sqrt(self.eigenvalues[~null])
        if null.any():
            logger.debug(f"Проекция: обнулено {int(null.sum())} компонент с λ≈0")
        return alpha

    def truncate(self, rank: int) -> "LowRankGP":
        """Модель из первых ``rank`` компонент."""
        if not 1 <= rank <= self.rank:
            raise ValidationError(f"Ранг усечения {rank} вне диапазона [1, {self.rank}]")
        return LowRankGP(
            reference=self.reference,
            eigenvalues=self.eigenvalues[:rank],
            basis=self.basis[:rank],
            mean=self.mean,
        )

    def sample_prior(self, rng: np.random.Generator, scale: float = 1.0) -> CoefficientVector:
        """Случайные коэффициенты из априорного распределения (опционально масштабированного)."""
        return scale * rng.standard_normal(self.rank)


def build_low_rank(
    kernel: GaussianKernel | SampleKernel,
    reference: TriangleMesh,
    rank: int,
    nystrom_threshold: int | None = None,
    nystrom_points: int | None = None,
    seed: int = 0,
) -> LowRankGP:
    """Строит низкоранговую модель по ядру на вершинах опорной сетки.

    До порога числа вершин используется точное разложение симметричной
    матрицы ядра, выше порога - приближение Nyström по случайным опорным
    вершинам (детерминировано по ``seed``).

    Args:
        kernel: Гауссово ядро или ядро по выборке.
        reference (TriangleMesh): Опорная сетка.
        rank (int): Число сохраняемых компонент, не больше 3n.
        nystrom_threshold (int, optional): Порог числа вершин для Nyström.
        nystrom_points (int, optional): Число опорных вершин Nyström.
        seed (int): Зерно выбора опорных вершин.

    Returns:
        LowRankGP: Модель с нулевым средним (для SampleKernel - со средним μ_PDM).

    Raises:
        ValidationError: Если ранг вне [1, 3n].
        ModelBuildError: Если спектр существенно отрицателен (ядро не PSD).
    """
    n = reference.n_vertices
    if not 1 <= rank <= 3 * n:
        raise ValidationError(f"Ранг {rank} вне диапазона [1, {3 * n}]")

    if isinstance(kernel, SampleKernel):
        return _from_sample_kernel(kernel, reference, rank)

    threshold = nystrom_threshold if nystrom_threshold is not None else get_nystrom_threshold()
    mean = np.zeros((n, 3))
    if isinstance(kernel, GaussianKernel):
        if n > threshold:
            points = nystrom_points if nystrom_points is not None else get_nystrom_points()
            values, vectors = _nystrom_scalar(kernel, reference.vertices, points, seed)
        else:
            values, vectors = _checked_eigh(kernel.scalar(reference.vertices))
        eigenvalues, basis = _expand_separable(values, vectors, rank)
    else:
        values, vectors = _checked_eigh(kernel.matrix(reference.vertices))
        eigenvalues = values[:rank]
        basis = vectors[:, :rank].T.reshape(rank, n, 3)

    logger.info(
        f"Модель построена: ранг {rank}, λ_1={eigenvalues[0]:.4g}, λ_r={eigenvalues[-1]:.4g}"
    )
    return LowRankGP(reference=reference, eigenvalues=eigenvalues, basis=basis, mean=mean)


def _checked_eigh(matrix: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Собственные пары по убыванию с проверкой положительной полуопределённости."""
    values, vectors = linalg.eigh(matrix)
    order = np.argsort(-values, kind="stable")
    values = values[order]
    vectors = vectors[:, order]
    top = max(values[0], 0.0)
    if values[-1] < -NEGATIVE_SPECTRUM_RTOL * top:
        raise ModelBuildError(
            f"Матрица ядра не положительно полуопределена: λ_min={values[-1]:.3g}, λ_1={top:.3g}"
        )
    return np.clip(values, 0.0, None), vectors


def _expand_separable(
    values: np.ndarray, vectors: np.ndarray, rank: int
) -> tuple[np.ndarray, np.ndarray]:
    """Собственные пары k = g·I₃ из пар скалярного ядра: каждое λ повторяется по трём осям."""
    n = vectors.shape[0]
    count = -(-rank // 3)
    eigenvalues = np.repeat(values[:count], 3)[:rank]
    basis = np.zeros((3 * count, n, 3))
    for axis in range(3):
        basis[axis::3, :, axis] = vectors[:, :count].T
    return eigenvalues, basis[:rank]


def _nystrom_scalar(
    kernel: GaussianKernel, vertices: np.ndarray, points: int, seed: int
) -> tuple[np.ndarray, np.ndarray]:
    """Собственные пары Nyström-приближения скалярного ядра.

    Фактор G ≈ L Lᵀ с L = G_nm U_m Λ_m^{-1/2} ортонормализуется через QR,
    поэтому возвращаемые векторы ортонормальны точно.
    """
    n = len(vertices)
    points = min(points, n)
    rng = np.random.default_rng(seed)
    landmarks = np.sort(rng.choice(n, size=points, replace=False))
    g_nm = kernel.scalar(vertices, vertices[landmarks])
    w, u = linalg.eigh(g_nm[landmarks])
    keep = w > 1e-10 * w.max()
    factor = g_nm @ (u[:, keep] / np.sqrt(w[keep]))
    q, r = linalg.qr(factor, mode="economic")
    values, small = _checked_eigh(r @ r.T)
    logger.info(f"Nyström: {points} опорных вершин из {n}, ранг фактора {int(keep.sum())}")
    return values, q @ small


def _from_sample_kernel(kernel: SampleKernel, reference: TriangleMesh, rank: int) -> LowRankGP:
    n = reference.n_vertices
    if kernel.mean.shape != (n, 3):
        raise ValidationError(
            f"Выборки содержат {kernel.mean.shape[0]} вершин, опорная сетка - {n}"
        )
    flat = kernel.centered.reshape(kernel.n_samples, -1)
    _, singular, vt = linalg.svd(flat, full_matrices=False)
    available = min(kernel.n_samples - 1, 3 * n)
    if rank > available:
        logger.warning(f"Ранг PDM ограничен числом выборок: {rank} -> {available}")
        rank = available
    eigenvalues = singular[:rank] ** 2 / (kernel.n_samples - 1)
    basis = vt[:rank].reshape(rank, n, 3)
    return LowRankGP(reference=reference, eigenvalues=eigenvalues, basis=basis, mean=kernel.mean)


def pdm_from_samples(deformations: np.ndarray | list, reference: TriangleMesh) -> LowRankGP:
    """Классическая PDM по выборке деформаций в виде LowRankGP ранга min(3n, N-1)."""
    kernel = build_from_samples(deformations, reference)
    rank = min(3 * reference.n_vertices, kernel.n_samples - 1)
    return _from_sample_kernel(kernel, reference, rank)

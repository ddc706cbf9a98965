"""
Апостериорная GP-модель по зашумлённым наблюдениям в вершинах.

Регрессия выполняется в пространстве коэффициентов низкоранговой модели:
    Σ_post = (ΦᵀΣ⁻¹Φ + I)⁻¹,  μ_post = Σ_post ΦᵀΣ⁻¹(Û - μ),
где Φ - значения √λ_i φ_i в наблюдаемых вершинах, Σ - блочно-диагональная
матрица шумов наблюдений. Для полного ранга это совпадает с классической
GP-регрессией (с вычитаемым членом в апостериорной ковариации).
"""

from dataclasses import dataclass, field
import logging
from typing import Sequence

import numpy as np
from scipy import linalg
from scipy.spatial import cKDTree

from core.errors import NumericError, ValidationError
from mesh import TriangleMesh, tangent_frames
from shapemodel import CoefficientVector, LowRankGP

logger = logging.getLogger(__name__)

# Допуск совпадения опорной точки наблюдения с вершиной (мм)
VERTEX_MATCH_TOLERANCE = 1e-9

# Минимальное собственное значение ковариации шума
MIN_NOISE_EIGENVALUE = 1e-12

RIDGE_FACTOR = 1e-10

_LOG_2PI = float(np.log(2.0 * np.pi))


@dataclass(frozen=True)
class LandmarkObservation:
    """Наблюдение деформации в опорной точке.

    Attributes:
        reference_point (np.ndarray): Положение l_R на опорной сетке (мм).
        deformation (np.ndarray): Наблюдаемая деформация û = l_T - l_R (мм).
        noise (np.ndarray): Ковариация шума Σ_s, 3×3 (мм²).
    """

    reference_point: np.ndarray
    deformation: np.ndarray
    noise: np.ndarray

    def __post_init__(self):
        point = np.asarray(self.reference_point, dtype=np.float64).reshape(3)
        deformation = np.asarray(self.deformation, dtype=np.float64).reshape(3)
        noise = np.asarray(self.noise, dtype=np.float64).reshape(3, 3)
        if not np.allclose(noise, noise.T, rtol=0.0, atol=1e-12 * max(1.0, np.abs(noise).max())):
            raise ValidationError(f"Ковариация шума не симметрична: {noise.tolist()}")
        if np.linalg.eigvalsh(noise).min() < 0:
            raise ValidationError(f"Ковариация шума не положительно полуопределена: {noise.tolist()}")
        object.__setattr__(self, "reference_point", point)
        object.__setattr__(self, "deformation", deformation)
        object.__setattr__(self, "noise", noise)


@dataclass(frozen=True, eq=False)
class PosteriorModel:
    """Гауссово апостериорное распределение коэффициентов.

    Attributes:
        mean (np.ndarray): μ_post, длина r.
        covariance (np.ndarray): Σ_post, r×r.
        parent (LowRankGP): Модель, к которой относятся коэффициенты.
    """

    mean: np.ndarray
    covariance: np.ndarray
    parent: LowRankGP
    _eigenvalues: np.ndarray = field(init=False, repr=False)
    _eigenvectors: np.ndarray = field(init=False, repr=False)
    _density_eigenvalues: np.ndarray = field(init=False, repr=False)
    _factor: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        r = self.parent.rank
        mean = np.asarray(self.mean, dtype=np.float64).reshape(r)
        covariance = np.asarray(self.covariance, dtype=np.float64).reshape(r, r)
        scale = max(1.0, float(np.abs(covariance).max()))
        if not np.allclose(covariance, covariance.T, rtol=0.0, atol=1e-10 * scale):
            raise NumericError("Апостериорная ковариация не симметрична")
        covariance = 0.5 * (covariance + covariance.T)
        trace = float(np.trace(covariance))
        values, vectors = linalg.eigh(covariance)
        if values.min() < -1e-10 * max(trace, 0.0):
            raise NumericError(
                f"Апостериорная ковариация не положительно полуопределена: λ_min={values.min():.3g}"
            )
        values = np.clip(values, 0.0, None)
        ridge = max(RIDGE_FACTOR * trace / r, np.finfo(np.float64).tiny)
        for name, value in (
            ("mean", mean),
            ("covariance", covariance),
            ("_eigenvalues", values),
            ("_eigenvectors", vectors),
            ("_density_eigenvalues", values + ridge),
            ("_factor", vectors * np.sqrt(values)),
        ):
            value.flags.writeable = False
            object.__setattr__(self, name, value)

    @property
    def rank(self) -> int:
        return self.parent.rank

    def sample(self, rng: np.random.Generator) -> CoefficientVector:
        """α_o = μ_post + A·z, A·Aᵀ = Σ_post."""
        return self.mean + self._factor @ rng.standard_normal(self.rank)

    def log_density(self, alpha: np.ndarray) -> float | np.ndarray:
        """Логарифм нормальной плотности; принимает вектор (r,) или пакет (m, r)."""
        alpha = np.asarray(alpha, dtype=np.float64)
        rotated = (alpha - self.mean) @ self._eigenvectors
        quad = np.sum(rotated**2 / self._density_eigenvalues, axis=-1)
        log_det = float(np.sum(np.log(self._density_eigenvalues)))
        value = -0.5 * (self.rank * _LOG_2PI + log_det + quad)
        return float(value) if np.ndim(value) == 0 else value

    def predictive_mean(self, vertex_ids: np.ndarray | None = None) -> np.ndarray:
        """Апостериорное среднее деформации в вершинах, форма (k, 3)."""
        ids = np.arange(self.parent.n_vertices) if vertex_ids is None else np.asarray(vertex_ids)
        phi = self.parent.scaled_basis(ids)
        return self.parent.mean[ids] + phi @ self.mean

    def predictive_covariance(self, vertex_ids: np.ndarray | None = None) -> np.ndarray:
        """Апостериорная ковариация деформации, 3k×3k в порядке 3·вершина + ось."""
        ids = np.arange(self.parent.n_vertices) if vertex_ids is None else np.asarray(vertex_ids)
        phi = self.parent.scaled_basis(ids).reshape(-1, self.rank)
        return phi @ self.covariance @ phi.T


def anisotropic_noise(normals: np.ndarray, sigma_n2: float, sigma_v2: float) -> np.ndarray:
    """Ковариации шума вдоль нормали и касательных: R·diag(σ_n², σ_v², σ_v²)·Rᵀ.

    Args:
        normals (np.ndarray): Единичные нормали, форма (k, 3).
        sigma_n2 (float): Дисперсия вдоль нормали (мм²).
        sigma_v2 (float): Дисперсия вдоль касательных (мм²).

    Returns:
        np.ndarray: Ковариации, форма (k, 3, 3).
    """
    if not (sigma_n2 > 0 and sigma_v2 > 0):
        raise ValidationError(f"Дисперсии шума должны быть положительны: {sigma_n2}, {sigma_v2}")
    normals = np.asarray(normals, dtype=np.float64).reshape(-1, 3)
    v1, v2 = tangent_frames(normals)
    n = normals / np.linalg.norm(normals, axis=1, keepdims=True)
    frame = np.stack([n, v1, v2], axis=2)
    return np.einsum("kai,i,kbi->kab", frame, np.array([sigma_n2, sigma_v2, sigma_v2]), frame)


def _noise_blocks(noise: float | np.ndarray, count: int) -> np.ndarray:
    noise = np.asarray(noise, dtype=np.float64)
    if noise.ndim == 0:
        noise = noise * np.eye(3)
    return np.broadcast_to(noise, (count, 3, 3))


def regress_at_vertices(
    model: LowRankGP,
    vertex_ids: np.ndarray,
    deformations: np.ndarray,
    noise: float | np.ndarray,
) -> PosteriorModel:
    """Пакетная регрессия по наблюдениям в вершинах опорной сетки.

    Args:
        model (LowRankGP): Априорная модель.
        vertex_ids (np.ndarray): Индексы наблюдаемых вершин (повторы допустимы).
        deformations (np.ndarray): Наблюдаемые деформации, форма (k, 3).
        noise: Скалярная дисперсия, общая матрица 3×3 или матрицы (k, 3, 3).

    Returns:
        PosteriorModel: Апостериорное распределение коэффициентов.

    Raises:
        ValidationError: Нет наблюдений, вершина вне сетки или вырожденный шум.
    """
    ids = np.asarray(vertex_ids, dtype=np.int64).ravel()
    k = len(ids)
    if k == 0:
        raise ValidationError("Для регрессии нужно хотя бы одно наблюдение")
    if ids.min() < 0 or ids.max() >= model.n_vertices:
        raise ValidationError("Индекс наблюдаемой вершины вне опорной сетки")
    observed = np.asarray(deformations, dtype=np.float64).reshape(k, 3)
    blocks = _noise_blocks(noise, k)
    min_eigen = np.linalg.eigvalsh(blocks).min()
    if min_eigen <= MIN_NOISE_EIGENVALUE:
        raise ValidationError(f"Вырожденная ковариация шума: λ_min={min_eigen:.3g}")

    phi = model.scaled_basis(ids)
    weighted = np.linalg.solve(blocks, phi)
    residual = observed - model.mean[ids]
    precision = np.einsum("kdr,kds->rs", phi, weighted) + np.eye(model.rank)
    rhs = np.einsum("kdr,kd->r", weighted, residual)
    try:
        factor = linalg.cho_factor(precision, lower=True)
        mean = linalg.cho_solve(factor, rhs)
        covariance = linalg.cho_solve(factor, np.eye(model.rank))
    except linalg.LinAlgError as e:
        raise NumericError(f"Разложение апостериорной точности не удалось: {e}") from e
    logger.debug(f"Регрессия по {k} наблюдениям, след Σ_post={np.trace(covariance):.4g}")
    return PosteriorModel(mean=mean, covariance=covariance, parent=model)


def vertex_index(mesh: TriangleMesh) -> cKDTree:
    """KD-дерево по вершинам сетки (кэшируется в объекте сетки)."""
    return mesh.cached("vertex_kdtree", lambda: cKDTree(mesh.vertices))


def regress(model: LowRankGP, observations: Sequence[LandmarkObservation]) -> PosteriorModel:
    """Регрессия по списку наблюдений; опорные точки должны совпадать с вершинами.

    Raises:
        ValidationError: Пустой список, точка не в вершине или вырожденный шум.
    """
    if len(observations) == 0:
        raise ValidationError("Для регрессии нужно хотя бы одно наблюдение")
    points = np.stack([o.reference_point for o in observations])
    distances, ids = vertex_index(model.reference).query(points)
    off = np.flatnonzero(distances > VERTEX_MATCH_TOLERANCE)
    if len(off):
        raise ValidationError(
            f"Наблюдения вне вершин опорной сетки: {off[:10].tolist()} "
            f"(max отклонение {distances[off].max():.3g} мм)"
        )
    return regress_at_vertices(
        model,
        ids,
        np.stack([o.deformation for o in observations]),
        np.stack([o.noise for o in observations]),
    )


def sample(posterior: PosteriorModel, rng: np.random.Generator) -> CoefficientVector:
    return posterior.sample(rng)


def log_density(posterior: PosteriorModel, alpha: np.ndarray) -> float:
    return posterior.log_density(np.asarray(alpha, dtype=np.float64).ravel())


def posterior_mean_mesh(posterior: PosteriorModel) -> TriangleMesh:
    """Экземпляр модели при α = μ_post."""
    return posterior.parent.instance(posterior.mean)

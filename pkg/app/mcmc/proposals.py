"""
Распределения предложений для Метрополиса-Гастингса.

Каждое предложение умеет сгенерировать новое состояние и вернуть
логарифм плотности перехода q(α′|α), нужный в отношении Гастингса.
Параметр ``step`` (номер итерации) передаётся в оба метода, чтобы
детерминированные части предложения восстанавливались однозначно.
"""

from collections import OrderedDict
from dataclasses import dataclass
import logging
import threading
from typing import Protocol, Sequence

import numpy as np
from scipy.special import logsumexp

from core.errors import ValidationError
from gpreg import PosteriorModel, anisotropic_noise, regress_at_vertices
from mesh import TriangleMesh, boundary_mask, closest_points, on_boundary, vertex_normals
from shapemodel import LowRankGP

logger = logging.getLogger(__name__)

DEFAULT_SCALES = (1.0, 0.1, 0.01, 1e-3, 1e-4, 1e-5)

# До этого числа вершин в шаге 1 берутся все вершины
FULL_SUBSET_LIMIT = 5000
DEFAULT_SUBSET_SIZE = 1000

_LOG_2PI = float(np.log(2.0 * np.pi))


@dataclass(frozen=True)
class ProposedMove:
    alpha: np.ndarray
    tag: str


class Proposal(Protocol):
    """Контракт предложения: генерация состояния и плотность перехода."""

    tag: str

    def propose(self, alpha: np.ndarray, rng: np.random.Generator, step: int = 0) -> ProposedMove: ...

    def log_transition(self, source: np.ndarray, destination: np.ndarray, step: int = 0): ...


def _check_weights(weights: Sequence[float], count: int) -> np.ndarray:
    weights = np.asarray(weights, dtype=np.float64)
    if len(weights) != count or count == 0:
        raise ValidationError(f"Ожидалось {count} весов, получено {len(weights)}")
    if np.any(weights < 0) or not np.isclose(weights.sum(), 1.0, rtol=0.0, atol=1e-9):
        raise ValidationError(f"Веса должны быть неотрицательны и в сумме давать 1: {weights.tolist()}")
    return weights


def _isotropic_logpdf(offset: np.ndarray, scale: float) -> np.ndarray | float:
    """log N(offset; 0, scale²·I) для вектора (r,) или пакета (m, r)."""
    r = offset.shape[-1]
    return -0.5 * r * (_LOG_2PI + 2.0 * np.log(scale)) - 0.5 * np.sum(offset**2, axis=-1) / scale**2


class RandomWalkProposal:
    """Смесь изотропных гауссовых случайных блужданий.

    Args:
        scales: Масштабы σ_j (в единицах коэффициентов).
        weights: Веса компонент; по умолчанию равные.
    """

    tag = "rw"

    def __init__(self, scales: Sequence[float] = DEFAULT_SCALES, weights: Sequence[float] | None = None):
        scales = np.asarray(scales, dtype=np.float64).ravel()
        if len(scales) == 0 or np.any(scales <= 0):
            raise ValidationError(f"Масштабы случайного блуждания должны быть положительны: {scales}")
        if weights is None:
            weights = np.full(len(scales), 1.0 / len(scales))
        self.scales = scales
        self.weights = _check_weights(weights, len(scales))
        self._log_weights = np.log(self.weights)

    def propose(self, alpha: np.ndarray, rng: np.random.Generator, step: int = 0) -> ProposedMove:
        j = rng.choice(len(self.scales), p=self.weights)
        scale = self.scales[j]
        return ProposedMove(alpha + scale * rng.standard_normal(len(alpha)), f"rw-{scale:g}")

    def log_transition(self, source: np.ndarray, destination: np.ndarray, step: int = 0):
        offset = np.asarray(destination, dtype=np.float64) - source
        terms = [
            lw + _isotropic_logpdf(offset, s) for lw, s in zip(self._log_weights, self.scales)
        ]
        value = logsumexp(np.stack(terms), axis=0)
        return float(value) if np.ndim(value) == 0 else value


class MixtureProposal:
    """Случайный выбор между предложениями с маргинализованной плотностью перехода."""

    tag = "mixture"

    def __init__(self, components: Sequence[tuple[float, Proposal]]):
        if not components:
            raise ValidationError("Смесь предложений не может быть пустой")
        self.proposals = [p for _, p in components]
        self.weights = _check_weights([w for w, _ in components], len(components))
        with np.errstate(divide="ignore"):
            self._log_weights = np.log(self.weights)

    def propose(self, alpha: np.ndarray, rng: np.random.Generator, step: int = 0) -> ProposedMove:
        j = rng.choice(len(self.proposals), p=self.weights)
        return self.proposals[j].propose(alpha, rng, step)

    def log_transition(self, source: np.ndarray, destination: np.ndarray, step: int = 0):
        terms = [
            lw + np.asarray(p.log_transition(source, destination, step))
            for lw, p in zip(self._log_weights, self.proposals)
            if np.isfinite(lw)
        ]
        value = logsumexp(np.stack(terms), axis=0)
        return float(value) if np.ndim(value) == 0 else value


@dataclass(frozen=True)
class CPProposalConfig:
    """Параметры CP-предложения.

    Attributes:
        points (int | None): Число точек модели m; None - все вершины до
            5000, иначе 1000.
        sigma_n2 (float): Дисперсия шума вдоль нормали (мм²).
        sigma_v2 (float): Дисперсия шума вдоль касательных (мм²).
        step_lengths (tuple): Длины шага d.
        step_weights (tuple): Веса длин шага.
        p_flip (float): Вероятность соответствий в направлении цель→модель.
        boundary_filter (bool): Отбрасывать пары с точкой цели на её границе.
    """

    points: int | None = None
    sigma_n2: float = 3.0
    sigma_v2: float = 100.0
    step_lengths: tuple[float, ...] = (0.1, 0.5, 1.0)
    step_weights: tuple[float, ...] = (0.7, 0.2, 0.1)
    p_flip: float = 0.2
    boundary_filter: bool = True

    def __post_init__(self):
        if self.points is not None and self.points < 1:
            raise ValidationError(f"Число точек m должно быть ≥ 1, получено {self.points}")
        if not (self.sigma_n2 > 0 and self.sigma_v2 > 0):
            raise ValidationError("Дисперсии σ_n² и σ_v² должны быть положительны")
        lengths = tuple(float(d) for d in self.step_lengths)
        if any(not 0.0 < d <= 1.0 for d in lengths):
            raise ValidationError(f"Длины шага должны лежать в (0, 1]: {lengths}")
        _check_weights(self.step_weights, len(lengths))
        if not 0.0 <= self.p_flip <= 1.0:
            raise ValidationError(f"p_flip должно лежать в [0, 1], получено {self.p_flip}")
        object.__setattr__(self, "step_lengths", lengths)
        object.__setattr__(self, "step_weights", tuple(float(w) for w in self.step_weights))


class CPProposal:
    """Информированное предложение по ближайшим точкам.

    Для текущего состояния α: точки экземпляра сопоставляются с ближайшими
    точками цели (или наоборот с вероятностью p_flip), по соответствиям
    строится апостериорная модель с анизотропным шумом, из неё берётся
    α_o, и предлагается α′ = α + d·(α_o - α). Апостериорные модели зависят
    только от (α, step), поэтому плотность перехода вычисляется точно:
    маргинализуются направление соответствий и длина шага d.

    Args:
        model (LowRankGP): Модель формы.
        target (TriangleMesh): Целевая поверхность.
        config (CPProposalConfig): Параметры предложения.
        seed (int): Зерно выбора подмножеств точек.
        cache_size (int): Число кэшируемых состояний.
    """

    tag = "cp"

    def __init__(
        self,
        model: LowRankGP,
        target: TriangleMesh,
        config: CPProposalConfig | None = None,
        seed: int = 0,
        cache_size: int = 16,
    ):
        self.model = model
        self.target = target
        self.config = config or CPProposalConfig()
        self.seed = seed
        self._log_lengths = np.log(np.asarray(self.config.step_lengths))
        with np.errstate(divide="ignore"):
            self._log_step_weights = np.log(np.asarray(self.config.step_weights))
        self._target_boundary = boundary_mask(target)
        self._cache: OrderedDict = OrderedDict()
        self._cache_size = cache_size
        self._cache_lock = threading.Lock()

    def _subset_size(self, n: int) -> int:
        if self.config.points is not None:
            return min(self.config.points, n)
        return n if n <= FULL_SUBSET_LIMIT else DEFAULT_SUBSET_SIZE

    def _subset(self, n: int, step: int, stream: int) -> np.ndarray:
        m = self._subset_size(n)
        if m >= n:
            return np.arange(n)
        rng = np.random.default_rng([self.seed, step, stream])
        return np.sort(rng.choice(n, size=m, replace=False))

    def _step_dependent(self) -> bool:
        return (
            self._subset_size(self.model.n_vertices) < self.model.n_vertices
            or self._subset_size(self.target.n_vertices) < self.target.n_vertices
        )

    def posteriors(self, alpha: np.ndarray, step: int = 0) -> dict[str, PosteriorModel | None]:
        """Апостериорные модели обоих направлений для состояния (None - всё отфильтровано)."""
        alpha = np.ascontiguousarray(alpha, dtype=np.float64)
        key = (alpha.tobytes(), step if self._step_dependent() else None)
        with self._cache_lock:
            if key in self._cache:
                self._cache.move_to_end(key)
                return self._cache[key]
            value = self._compute_posteriors(alpha, step)
            self._cache[key] = value
            if len(self._cache) > self._cache_size:
                self._cache.popitem(last=False)
            return value

    def _compute_posteriors(self, alpha: np.ndarray, step: int) -> dict[str, PosteriorModel | None]:
        instance = self.model.instance(alpha)
        try:
            normals = vertex_normals(instance).normals
        except ValidationError as e:
            logger.warning(f"Нормали экземпляра не определены, используется изотропный шум: {e}")
            normals = None
        result: dict[str, PosteriorModel | None] = {"forward": None, "flip": None}
        if self.config.p_flip < 1.0:
            result["forward"] = self._forward(instance, normals, step)
        if self.config.p_flip > 0.0:
            result["flip"] = self._flip(instance, normals, step)
        return result

    def _noise(self, normals: np.ndarray | None, ids: np.ndarray) -> np.ndarray | float:
        if normals is None:
            return self.config.sigma_v2
        return anisotropic_noise(normals[ids], self.config.sigma_n2, self.config.sigma_v2)

    def _forward(self, instance: TriangleMesh, normals, step: int) -> PosteriorModel | None:
        ids = self._subset(self.model.n_vertices, step, 0)
        closest = closest_points(self.target, instance.vertices[ids])
        keep = np.ones(len(ids), dtype=bool)
        if self.config.boundary_filter:
            keep = ~on_boundary(self.target, closest)
        if not keep.any():
            return None
        ids = ids[keep]
        observed = closest.positions[keep] - self.model.reference.vertices[ids]
        return regress_at_vertices(self.model, ids, observed, self._noise(normals, ids))

    def _flip(self, instance: TriangleMesh, normals, step: int) -> PosteriorModel | None:
        target_ids = self._subset(self.target.n_vertices, step, 1)
        if self.config.boundary_filter:
            target_ids = target_ids[~self._target_boundary[target_ids]]
        if len(target_ids) == 0:
            return None
        points = self.target.vertices[target_ids]
        closest = closest_points(instance, points)
        # ближайшая точка на экземпляре переносится в вершину с наибольшей барицентрикой
        corners = instance.triangles[closest.triangles]
        ids = corners[np.arange(len(corners)), np.argmax(closest.barycentric, axis=1)]
        observed = points - self.model.reference.vertices[ids]
        return regress_at_vertices(self.model, ids, observed, self._noise(normals, ids))

    def propose(self, alpha: np.ndarray, rng: np.random.Generator, step: int = 0) -> ProposedMove:
        alpha = np.asarray(alpha, dtype=np.float64)
        flip = rng.random() < self.config.p_flip
        posterior = self.posteriors(alpha, step)["flip" if flip else "forward"]
        if posterior is None:
            logger.debug(f"Шаг {step}: все соответствия отфильтрованы, случайное блуждание")
            return ProposedMove(alpha + rng.standard_normal(len(alpha)), "cp-fallback")
        target_alpha = posterior.sample(rng)
        j = rng.choice(len(self.config.step_lengths), p=self.config.step_weights)
        d = self.config.step_lengths[j]
        return ProposedMove(alpha + d * (target_alpha - alpha), "cp-flip" if flip else "cp")

    def log_transition(self, source: np.ndarray, destination: np.ndarray, step: int = 0):
        """log q(α′|α) с маргинализацией направления и длины шага.

        α_o = α + (α′ - α)/d_j для каждой компоненты, якобиан линейного
        отображения даёт множитель d_j^{-r}.
        """
        source = np.asarray(source, dtype=np.float64)
        destination = np.asarray(destination, dtype=np.float64)
        posteriors = self.posteriors(source, step)
        r = len(source)
        terms = []
        for direction, weight in (("forward", 1.0 - self.config.p_flip), ("flip", self.config.p_flip)):
            if weight <= 0.0:
                continue
            posterior = posteriors[direction]
            if posterior is None:
                terms.append(np.log(weight) + _isotropic_logpdf(destination - source, 1.0))
                continue
            for log_w, log_d, d in zip(
                self._log_step_weights, self._log_lengths, self.config.step_lengths
            ):
                origin = source + (destination - source) / d
                terms.append(
                    np.log(weight) + log_w + np.asarray(posterior.log_density(origin)) - r * log_d
                )
        value = logsumexp(np.stack(terms), axis=0)
        return float(value) if np.ndim(value) == 0 else value

"""
Конвейеры регистрации: MCMC с извлечением MAP и детерминированный
нежёсткий ICP как базовый метод.
"""

import logging
import time
from typing import Any

import numpy as np

from core.errors import ValidationError
from gpreg import posterior_mean_mesh, regress_at_vertices
from mcmc import LikelihoodModel, ModelPosterior, Proposal, metropolis_hastings
from mesh import TriangleMesh, closest_points, on_boundary, vertex_normals
from registration.metrics import count_fold_overs, mean_surface_distance, surface_metrics
from registration.results import RegistrationResult
from registration.uncertainty import uncertainty_map
from shapemodel import LowRankGP

logger = logging.getLogger(__name__)

DEFAULT_BURN_IN = 300
DEFAULT_THINNING = 10
ICP_TOLERANCE = 1e-4


def initial_coefficients(model: LowRankGP, mode: str = "zero", seed: int = 0) -> np.ndarray:
    """Начальное состояние цепочки: нулевое или случайное из априорного распределения.

    Генератор для "prior" отделён от генератора цепочки, поэтому одно и то же
    зерно даёт одинаковый старт при любых параметрах предложения.
    """
    if mode == "zero":
        return np.zeros(model.rank)
    if mode == "prior":
        return model.sample_prior(np.random.default_rng([seed, 1]))
    raise ValidationError(f"Неизвестный способ инициализации '{mode}'")


def register_mcmc(
    model: LowRankGP,
    target: TriangleMesh,
    likelihood: LikelihoodModel,
    proposal: Proposal,
    iterations: int,
    burn_in: int = DEFAULT_BURN_IN,
    thinning: int = DEFAULT_THINNING,
    seed: int = 0,
    init: np.ndarray | None = None,
    config: dict[str, Any] | None = None,
    progress: bool | None = None,
) -> RegistrationResult:
    """Вероятностная регистрация модели на цель.

    Args:
        model (LowRankGP): Модель формы.
        target (TriangleMesh): Целевая поверхность.
        likelihood (LikelihoodModel): Модель правдоподобия.
        proposal (Proposal): Распределение предложений.
        iterations (int): Длина цепочки S.
        burn_in (int): Отбрасываемый прогрев B < S.
        thinning (int): Шаг прореживания k ≥ 1.
        seed (int): Зерно генератора цепочки.
        init (np.ndarray, optional): Начальное состояние; по умолчанию α = 0.
        config (dict, optional): Снимок конфигурации для ChainRecord.
        progress (bool, optional): Показывать прогресс цепочки.

    Returns:
        RegistrationResult: MAP, образцы после прогрева, неопределённость и метрики.

    Raises:
        ValidationError: Если B ≥ S или k < 1.
        ChainInitializationError: Если плотность в начальном состоянии неконечна.
    """
    if not 0 <= burn_in < iterations:
        raise ValidationError(f"Прогрев {burn_in} должен быть меньше числа итераций {iterations}")
    if thinning < 1:
        raise ValidationError(f"Шаг прореживания должен быть ≥ 1, получено {thinning}")

    start = time.perf_counter()
    rng = np.random.default_rng(seed)
    alpha0 = np.zeros(model.rank) if init is None else model.check_coefficients(init)
    chain = metropolis_hastings(
        alpha0,
        proposal,
        ModelPosterior(model, target, likelihood),
        iterations,
        rng,
        seed=seed,
        config=config,
        progress=progress,
    )
    map_alpha = chain.map_alpha.copy()
    map_mesh = model.instance(map_alpha)
    samples = chain.samples(burn_in, thinning)

    uncertainty = None
    if len(samples) >= 2:
        uncertainty = uncertainty_map(model, samples, vertex_normals(map_mesh))
    else:
        logger.warning(f"После прогрева остался {len(samples)} образец, карта неопределённости не строится")

    metrics = surface_metrics(target, map_mesh)
    elapsed = (time.perf_counter() - start) * 1000.0
    logger.info(
        f"MCMC-регистрация: mean L2={metrics.mean_l2:.4f} мм, Хаусдорф={metrics.hausdorff:.4f} мм, "
        f"принятие {chain.acceptance_rate:.3f}"
    )
    return RegistrationResult(
        method="mcmc",
        map_alpha=map_alpha,
        map_mesh=map_mesh,
        samples=samples,
        metrics=metrics,
        uncertainty=uncertainty,
        chain=chain,
        iterations=iterations,
        wall_clock_ms=elapsed,
        seed=seed,
        fold_overs=count_fold_overs(model.reference, map_mesh),
    )


def register_icp(
    model: LowRankGP,
    target: TriangleMesh,
    iterations: int,
    sigma: float = 1.0,
    init: np.ndarray | None = None,
    boundary_filter: bool = False,
    tolerance: float = ICP_TOLERANCE,
) -> RegistrationResult:
    """Нежёсткий ICP: ближайшие точки → апостериорное среднее → новое состояние.

    Останавливается после ``iterations`` шагов или когда среднее расстояние
    до цели меняется меньше чем на ``tolerance`` мм.

    Args:
        model (LowRankGP): Модель формы.
        target (TriangleMesh): Целевая поверхность.
        iterations (int): Максимальное число итераций.
        sigma (float): σ изотропного шума регрессии (мм).
        init (np.ndarray, optional): Начальные коэффициенты.
        boundary_filter (bool): Отбрасывать соответствия на границе цели.
        tolerance (float): Порог изменения среднего расстояния.

    Returns:
        RegistrationResult: Без образцов и карты неопределённости, с траекторией α.
    """
    if iterations < 1:
        raise ValidationError(f"Число итераций ICP должно быть ≥ 1, получено {iterations}")
    if not sigma > 0:
        raise ValidationError(f"σ регрессии должна быть положительной, получено {sigma}")

    start = time.perf_counter()
    alpha = np.zeros(model.rank) if init is None else model.check_coefficients(init)
    instance = model.instance(alpha)
    distance = mean_surface_distance(target, instance)
    trajectory = [alpha]
    all_ids = np.arange(model.n_vertices)
    done = 0
    for done in range(1, iterations + 1):
        closest = closest_points(target, instance.vertices)
        ids = all_ids
        if boundary_filter:
            ids = all_ids[~on_boundary(target, closest)]
            if len(ids) == 0:
                logger.warning("ICP: все соответствия на границе цели, остановка")
                break
        observed = closest.positions[ids] - model.reference.vertices[ids]
        posterior = regress_at_vertices(model, ids, observed, sigma**2)
        alpha = posterior.mean.copy()
        instance = posterior_mean_mesh(posterior)
        trajectory.append(alpha)
        previous, distance = distance, mean_surface_distance(target, instance)
        logger.debug(f"ICP итерация {done}: mean L2={distance:.6f} мм")
        if abs(previous - distance) < tolerance:
            break

    metrics = surface_metrics(target, instance)
    elapsed = (time.perf_counter() - start) * 1000.0
    logger.info(f"ICP: {done} итераций, mean L2={metrics.mean_l2:.4f} мм")
    return RegistrationResult(
        method="icp",
        map_alpha=alpha,
        map_mesh=instance,
        samples=np.zeros((0, model.rank)),
        metrics=metrics,
        trajectory=np.asarray(trajectory),
        iterations=done,
        wall_clock_ms=elapsed,
        fold_overs=count_fold_overs(model.reference, instance),
    )

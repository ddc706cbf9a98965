"""
Метрополис-Гастингс в логарифмической шкале.
"""

from dataclasses import dataclass
import logging
import time
from typing import Any, Callable, Protocol

import numpy as np
from tqdm import tqdm

from core.config import get_show_progress
from core.errors import ChainInitializationError, NumericError, ValidationError
from mcmc.chain import ChainRecord
from mcmc.likelihoods import LikelihoodModel
from mcmc.proposals import Proposal
from mesh import TriangleMesh
from shapemodel import LowRankGP

logger = logging.getLogger(__name__)


class PosteriorEvaluator(Protocol):
    """Ненормированная апостериорная плотность: (log правдоподобия, log априорной)."""

    def evaluate(self, alpha: np.ndarray) -> tuple[float, float]: ...


@dataclass(frozen=True)
class ModelPosterior:
    """Апостериорная плотность коэффициентов модели для целевой сетки."""

    model: LowRankGP
    target: TriangleMesh
    likelihood: LikelihoodModel

    def evaluate(self, alpha: np.ndarray) -> tuple[float, float]:
        instance = self.model.instance(alpha)
        return (
            self.likelihood.log_likelihood(self.target, instance),
            self.model.log_prior(alpha),
        )


@dataclass(frozen=True)
class FunctionPosterior:
    """Апостериорная плотность из двух функций (игрушечные цели и тесты)."""

    log_likelihood: Callable[[np.ndarray], float]
    log_prior: Callable[[np.ndarray], float]

    def evaluate(self, alpha: np.ndarray) -> tuple[float, float]:
        return float(self.log_likelihood(alpha)), float(self.log_prior(alpha))


def metropolis_hastings(
    init: np.ndarray,
    proposal: Proposal,
    posterior: PosteriorEvaluator,
    iterations: int,
    rng: np.random.Generator,
    seed: int | None = None,
    config: dict[str, Any] | None = None,
    progress: bool | None = None,
) -> ChainRecord:
    """Запускает цепочку Метрополиса-Гастингса.

    Предложение принимается, если ln t > ln u, u ~ U(0, 1), где
    ln t = [log q(α|α′) + log p(α′|Γ_T)] - [log q(α′|α) + log p(α|Γ_T)].
    При отклонении состояние повторяется. Предложения с неконечной
    плотностью отклоняются.

    Args:
        init (np.ndarray): Начальное состояние α₀.
        proposal (Proposal): Распределение предложений.
        posterior (PosteriorEvaluator): Правдоподобие и априорная плотность.
        iterations (int): Число итераций S.
        rng (np.random.Generator): Генератор цепочки.
        seed (int, optional): Зерно для записи в ChainRecord.
        config (dict, optional): Снимок конфигурации для записи.
        progress (bool, optional): Показывать tqdm; по умолчанию из настроек.

    Returns:
        ChainRecord: Записи по каждой итерации.

    Raises:
        ChainInitializationError: Если в α₀ апостериорная плотность неконечна.
    """
    if iterations < 1:
        raise ValidationError(f"Число итераций должно быть ≥ 1, получено {iterations}")
    alpha = np.array(init, dtype=np.float64).ravel()
    try:
        log_like, log_prior = posterior.evaluate(alpha)
    except NumericError as e:
        raise ChainInitializationError(f"Не удалось вычислить плотность в α₀: {e}") from e
    if not np.isfinite(log_like + log_prior):
        raise ChainInitializationError(
            f"Неконечная апостериорная плотность в α₀: log L={log_like}, log p={log_prior}"
        )

    r = len(alpha)
    alphas = np.empty((iterations, r))
    log_likes = np.empty(iterations)
    log_priors = np.empty(iterations)
    accepted = np.zeros(iterations, dtype=bool)
    clock = np.empty(iterations)
    tags: list[str] = []

    show = get_show_progress() if progress is None else progress
    start = time.perf_counter()
    for step in tqdm(range(iterations), desc="MCMC", disable=not show):
        move = proposal.propose(alpha, rng, step)
        candidate = np.asarray(move.alpha, dtype=np.float64)
        log_u = np.log(rng.random())

        new_like, new_prior = -np.inf, -np.inf
        if np.all(np.isfinite(candidate)):
            try:
                new_like, new_prior = posterior.evaluate(candidate)
            except NumericError as e:
                logger.debug(f"Итерация {step}: плотность предложения не вычислена: {e}")

        new_post = new_like + new_prior
        if np.isfinite(new_post):
            log_t = (
                proposal.log_transition(candidate, alpha, step)
                + new_post
                - proposal.log_transition(alpha, candidate, step)
                - (log_like + log_prior)
            )
            if log_t > log_u:
                alpha, log_like, log_prior = candidate, new_like, new_prior
                accepted[step] = True

        alphas[step] = alpha
        log_likes[step] = log_like
        log_priors[step] = log_prior
        tags.append(move.tag)
        clock[step] = (time.perf_counter() - start) * 1000.0

    record = ChainRecord(
        alphas=alphas,
        log_likelihood=log_likes,
        log_prior=log_priors,
        accepted=accepted,
        tags=tags,
        wall_clock_ms=clock,
        seed=seed,
        config=dict(config or {}),
    )
    logger.info(
        f"Цепочка завершена: {iterations} итераций, доля принятия {record.acceptance_rate:.3f}, "
        f"max log p={record.log_posterior.max():.4g}"
    )
    return record

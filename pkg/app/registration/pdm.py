"""
PDM по апостериорным образцам и кривые обобщения.
"""

from dataclasses import dataclass
import logging
from typing import Sequence

import numpy as np

from core.errors import ValidationError
from mesh import TriangleMesh
from shapemodel import NULL_EIGENVALUE, LowRankGP, pdm_from_samples

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class GeneralizationCurve:
    """Ошибка реконструкции отложенной формы по числу компонент.

    Attributes:
        components (np.ndarray): Число компонент 1..C.
        rms_error (np.ndarray): Среднеквадратичная ошибка по вершинам (мм).
        mean_error (np.ndarray): Средняя длина ошибки по вершинам (мм).
    """

    components: np.ndarray
    rms_error: np.ndarray
    mean_error: np.ndarray

    def __len__(self) -> int:
        return len(self.components)


def build_pdm(sample_sets: Sequence[np.ndarray], reference: TriangleMesh) -> LowRankGP:
    """Классическая PDM по объединению наборов деформаций.

    Args:
        sample_sets: Наборы деформаций формы (k_i, n, 3) или отдельные поля (n, 3).
        reference (TriangleMesh): Опорная сетка.

    Returns:
        LowRankGP: PDM ранга min(3n, N-1), N - общее число образцов.

    Raises:
        ValidationError: Меньше двух образцов или несовпадение числа вершин.
    """
    blocks = []
    for s in sample_sets:
        s = np.asarray(s, dtype=np.float64)
        if s.size == 0:
            continue
        if s.shape[-2:] != (reference.n_vertices, 3):
            raise ValidationError(
                f"Образцы формы {s.shape} не соответствуют опорной сетке из {reference.n_vertices} вершин"
            )
        blocks.append(s.reshape(-1, reference.n_vertices, 3))
    if sum(len(b) for b in blocks) < 2:
        raise ValidationError("Для PDM нужно не меньше двух образцов")
    samples = np.concatenate(blocks)
    model = pdm_from_samples(samples, reference)
    nonzero = int(np.sum(model.eigenvalues > NULL_EIGENVALUE))
    logger.info(f"PDM по {len(samples)} образцам: ранг {model.rank}, ненулевых λ: {nonzero}")
    return model


def _as_deformation(pdm: LowRankGP, held_out: TriangleMesh | np.ndarray) -> np.ndarray:
    if isinstance(held_out, TriangleMesh):
        if held_out.n_vertices != pdm.n_vertices:
            raise ValidationError(
                f"Отложенная форма содержит {held_out.n_vertices} вершин, модель - {pdm.n_vertices}"
            )
        return held_out.vertices - pdm.reference.vertices
    field = np.asarray(held_out, dtype=np.float64)
    if field.shape != (pdm.n_vertices, 3):
        raise ValidationError(
            f"Отложенная деформация должна иметь форму {(pdm.n_vertices, 3)}, получено {field.shape}"
        )
    return field


def generalization(
    pdm: LowRankGP, held_out: TriangleMesh | np.ndarray, max_components: int | None = None
) -> GeneralizationCurve:
    """Ошибка реконструкции отложенной формы верхними c компонентами PDM.

    Для c больше ранга модели ошибка остаётся равной ошибке полного ранга.

    Args:
        pdm (LowRankGP): Модель, по которой строится реконструкция.
        held_out: Сетка в соответствии с опорной или поле деформации (n, 3).
        max_components (int, optional): Длина кривой; по умолчанию ранг модели.
    """
    residual = _as_deformation(pdm, held_out) - pdm.mean
    count = pdm.rank if max_components is None else max_components
    if count < 1:
        raise ValidationError(f"Число компонент должно быть ≥ 1, получено {count}")

    basis = pdm.basis.reshape(pdm.rank, -1)
    inner = basis @ residual.ravel()
    inner[pdm.null_components] = 0.0
    error = residual.ravel().copy()
    rms = np.empty(count)
    mean = np.empty(count)
    for c in range(count):
        if c < pdm.rank:
            error -= inner[c] * basis[c]
        lengths = np.linalg.norm(error.reshape(-1, 3), axis=1)
        rms[c] = np.sqrt(np.mean(lengths**2))
        mean[c] = np.mean(lengths)
    return GeneralizationCurve(components=np.arange(1, count + 1), rms_error=rms, mean_error=mean)


def leave_one_out_generalization(
    sample_sets: Sequence[np.ndarray],
    held_out: Sequence[TriangleMesh | np.ndarray],
    reference: TriangleMesh,
    max_components: int | None = None,
) -> GeneralizationCurve:
    """Средняя кривая обобщения с исключением по одному.

    Для каждой цели i PDM строится по наборам всех остальных целей и
    проверяется на отложенной форме i.

    Args:
        sample_sets: Наборы деформаций по целям, форма (k_i, n, 3).
        held_out: Истинные формы целей в соответствии с опорной сеткой.
        reference (TriangleMesh): Опорная сетка.
        max_components (int, optional): Длина кривой; по умолчанию наибольший ранг фолдов.
    """
    if len(sample_sets) != len(held_out) or len(sample_sets) < 3:
        raise ValidationError("Нужно не меньше трёх целей и по набору образцов на каждую")
    folds = []
    for i in range(len(sample_sets)):
        others = [s for j, s in enumerate(sample_sets) if j != i]
        folds.append(build_pdm(others, reference))
    count = max_components or max(pdm.rank for pdm in folds)
    curves = [generalization(pdm, target, count) for pdm, target in zip(folds, held_out)]
    return GeneralizationCurve(
        components=np.arange(1, count + 1),
        rms_error=np.mean([c.rms_error for c in curves], axis=0),
        mean_error=np.mean([c.mean_error for c in curves], axis=0),
    )

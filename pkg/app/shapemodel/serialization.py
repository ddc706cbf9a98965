"""
Сохранение и загрузка LowRankGP.

Контейнер - zip-архив из .npy-массивов и текстового члена ``format``.
Метки времени членов фиксированы, поэтому одинаковые модели дают
побайтно одинаковые файлы.
"""

import io
import logging
from pathlib import Path
import zipfile

import numpy as np

from core.errors import ValidationError
from mesh import TriangleMesh
from shapemodel.lowrank import LowRankGP

logger = logging.getLogger(__name__)

MODEL_FORMAT = "morphfit-gpmm-v1"

_EPOCH = (1980, 1, 1, 0, 0, 0)
_ARRAYS = ("reference_vertices", "reference_triangles", "eigenvalues", "basis", "mean")


def _member(name: str) -> zipfile.ZipInfo:
    info = zipfile.ZipInfo(name, date_time=_EPOCH)
    info.compress_type = zipfile.ZIP_DEFLATED
    info.external_attr = 0o644 << 16
    return info


def save_model(model: LowRankGP, path: str | Path) -> Path:
    """Сохраняет модель в файл.

    Args:
        model (LowRankGP): Модель.
        path (str | Path): Путь к файлу модели.

    Returns:
        Path: Путь записанного файла.
    """
    path = Path(path)
    arrays = {
        "reference_vertices": model.reference.vertices,
        "reference_triangles": model.reference.triangles,
        "eigenvalues": model.eigenvalues,
        "basis": model.basis,
        "mean": model.mean,
    }
    with zipfile.ZipFile(path, "w") as archive:
        archive.writestr(_member("format"), MODEL_FORMAT)
        for name in _ARRAYS:
            buffer = io.BytesIO()
            np.save(buffer, np.ascontiguousarray(arrays[name]), allow_pickle=False)
            archive.writestr(_member(f"{name}.npy"), buffer.getvalue())
    logger.info(f"Модель ранга {model.rank} сохранена: {path}")
    return path


def load_model(path: str | Path) -> LowRankGP:
    """Загружает модель из файла.

    Raises:
        ValidationError: Если файл не является контейнером модели нужной версии.
    """
    path = Path(path)
    try:
        with zipfile.ZipFile(path) as archive:
            tag = archive.read("format").decode("utf-8").strip()
            if tag != MODEL_FORMAT:
                raise ValidationError(f"Неизвестный формат модели '{tag}' в {path}")
            arrays = {
                name: np.load(io.BytesIO(archive.read(f"{name}.npy")), allow_pickle=False)
                for name in _ARRAYS
            }
    except (zipfile.BadZipFile, KeyError) as e:
        raise ValidationError(f"Файл {path} не является моделью {MODEL_FORMAT}: {e}") from e

    reference = TriangleMesh(arrays["reference_vertices"], arrays["reference_triangles"])
    model = LowRankGP(
        reference=reference,
        eigenvalues=arrays["eigenvalues"],
        basis=arrays["basis"],
        mean=arrays["mean"],
    )
    logger.info(f"Загружена модель ранга {model.rank} на {reference.n_vertices} вершинах")
    return model

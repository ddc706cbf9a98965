from shapemodel.kernels import GaussianKernel, SampleKernel, build_from_samples
from shapemodel.lowrank import (
    NULL_EIGENVALUE,
    CoefficientVector,
    LowRankGP,
    build_low_rank,
    pdm_from_samples,
)
from shapemodel.serialization import MODEL_FORMAT, load_model, save_model

__all__ = [
    "GaussianKernel",
    "SampleKernel",
    "build_from_samples",
    "NULL_EIGENVALUE",
    "CoefficientVector",
    "LowRankGP",
    "build_low_rank",
    "pdm_from_samples",
    "MODEL_FORMAT",
    "load_model",
    "save_model",
]

from registration.metrics import (
    SurfaceMetrics,
    count_fold_overs,
    mean_surface_distance,
    surface_metrics,
)
from registration.pdm import (
    GeneralizationCurve,
    build_pdm,
    generalization,
    leave_one_out_generalization,
)
from registration.pipelines import (
    DEFAULT_BURN_IN,
    DEFAULT_THINNING,
    initial_coefficients,
    register_icp,
    register_mcmc,
)
from registration.results import RegistrationResult, ResultMetrics, load_metrics
from registration.uncertainty import UncertaintyMap, sample_deformations, uncertainty_map

__all__ = [
    "SurfaceMetrics",
    "count_fold_overs",
    "mean_surface_distance",
    "surface_metrics",
    "GeneralizationCurve",
    "build_pdm",
    "generalization",
    "leave_one_out_generalization",
    "DEFAULT_BURN_IN",
    "DEFAULT_THINNING",
    "initial_coefficients",
    "register_icp",
    "register_mcmc",
    "RegistrationResult",
    "ResultMetrics",
    "load_metrics",
    "UncertaintyMap",
    "sample_deformations",
    "uncertainty_map",
]

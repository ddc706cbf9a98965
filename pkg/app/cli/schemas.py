"""
Схемы конфигурации запусков (JSON-файл + переопределения флагами CLI).
"""

import json
import logging
from pathlib import Path
from typing import Any, Literal

from pydantic import BaseModel, ConfigDict, Field, PositiveFloat, model_validator

from core.config import get_output_dir
from core.errors import ValidationError
from mcmc import (
    DEFAULT_SCALES,
    CollectiveLikelihood,
    CPProposal,
    CPProposalConfig,
    HausdorffLikelihood,
    L2Likelihood,
    LikelihoodModel,
    MixtureProposal,
    Proposal,
    RandomWalkProposal,
)
from mesh import TriangleMesh
from shapemodel import GaussianKernel, LowRankGP

logger = logging.getLogger(__name__)


class _Spec(BaseModel):
    model_config = ConfigDict(extra="forbid")


class KernelSpec(_Spec):
    """Гауссово ядро и ранг модели."""

    scale: PositiveFloat = 25.0
    bandwidth: PositiveFloat = 40.0
    rank: int = Field(50, ge=1)

    def build(self) -> GaussianKernel:
        return GaussianKernel(scale=self.scale, bandwidth=self.bandwidth)


class LikelihoodSpec(_Spec):
    kind: Literal["l2", "hausdorff", "collective"] = "l2"
    sigma_l2: PositiveFloat = 1.0
    rate: PositiveFloat = Field(1.0, description="λ_H, 1/мм")
    sigma_cl: PositiveFloat = 1.0
    boundary_filter: bool = True

    def build(self) -> LikelihoodModel:
        match self.kind:
            case "l2":
                return L2Likelihood(sigma=self.sigma_l2)
            case "hausdorff":
                return HausdorffLikelihood(rate=self.rate)
            case "collective":
                return CollectiveLikelihood(
                    sigma=self.sigma_cl, rate=self.rate, boundary_filter=self.boundary_filter
                )


class RandomWalkSpec(_Spec):
    scales: list[PositiveFloat] = Field(default_factory=lambda: list(DEFAULT_SCALES))
    weights: list[float] | None = None


class CPProposalSpec(_Spec):
    points: int | None = Field(None, ge=1)
    sigma_n2: PositiveFloat = 3.0
    sigma_v2: PositiveFloat = 100.0
    step_lengths: list[float] = Field(default_factory=lambda: [0.1, 0.5, 1.0])
    step_weights: list[float] = Field(default_factory=lambda: [0.7, 0.2, 0.1])
    p_flip: float = Field(0.2, ge=0.0, le=1.0)
    boundary_filter: bool = True

    def to_config(self) -> CPProposalConfig:
        return CPProposalConfig(
            points=self.points,
            sigma_n2=self.sigma_n2,
            sigma_v2=self.sigma_v2,
            step_lengths=tuple(self.step_lengths),
            step_weights=tuple(self.step_weights),
            p_flip=self.p_flip,
            boundary_filter=self.boundary_filter,
        )


class ProposalSpec(_Spec):
    """Предложение цепочки; для mixture - CP с весом cp_weight и случайное блуждание."""

    kind: Literal["random-walk", "cp", "mixture"] = "cp"
    random_walk: RandomWalkSpec = Field(default_factory=RandomWalkSpec)
    cp: CPProposalSpec = Field(default_factory=CPProposalSpec)
    cp_weight: float = Field(0.9, gt=0.0, lt=1.0)

    @model_validator(mode="after")
    def _check_parts(self) -> "ProposalSpec":
        # проверка весов и длин шага на этапе разбора конфигурации
        self.cp.to_config()
        RandomWalkProposal(self.random_walk.scales, self.random_walk.weights)
        return self

    def build(self, model: LowRankGP, target: TriangleMesh, seed: int) -> Proposal:
        walk = RandomWalkProposal(self.random_walk.scales, self.random_walk.weights)
        if self.kind == "random-walk":
            return walk
        cp = CPProposal(model, target, self.cp.to_config(), seed=seed)
        if self.kind == "cp":
            return cp
        return MixtureProposal([(self.cp_weight, cp), (1.0 - self.cp_weight, walk)])


class ExcisionSpec(_Spec):
    center: tuple[float, float, float]
    radius: float = Field(ge=0.0)


class RunConfig(_Spec):
    """Конфигурация регистрации и реконструкции.

    Модель задаётся либо готовым файлом ``model``, либо ядром ``kernel`` с
    опорной сеткой ``reference``.
    """

    model: Path | None = None
    kernel: KernelSpec | None = None
    reference: Path | None = None
    targets: list[Path] = Field(default_factory=list)
    method: Literal["mcmc", "icp"] = "mcmc"
    likelihood: LikelihoodSpec = Field(default_factory=LikelihoodSpec)
    proposal: ProposalSpec = Field(default_factory=ProposalSpec)
    iterations: int = Field(2000, ge=1)
    burn_in: int = Field(300, ge=0)
    thinning: int = Field(10, ge=1)
    seeds: list[int] = Field(default_factory=lambda: [0], min_length=1)
    init: Literal["zero", "prior"] = "zero"
    icp_iterations: int = Field(100, ge=1)
    icp_sigma: PositiveFloat = 1.0
    excision: ExcisionSpec | None = None
    output_dir: Path = Field(default_factory=get_output_dir)
    chain_timing: bool = Field(
        True, description="столбец wall_clock_ms в chain.csv; false даёт побайтно воспроизводимый журнал"
    )

    @model_validator(mode="after")
    def _check_inputs(self) -> "RunConfig":
        if self.model is None and (self.kernel is None or self.reference is None):
            raise ValueError("нужен файл модели или ядро вместе с опорной сеткой")
        if self.method == "mcmc" and self.burn_in >= self.iterations:
            raise ValueError(f"burn_in={self.burn_in} должен быть меньше iterations={self.iterations}")
        missing = [
            str(p)
            for p in [self.model, self.reference, *self.targets]
            if p is not None and not p.exists()
        ]
        if missing:
            raise ValueError(f"файлы не найдены: {', '.join(missing)}")
        return self

    def snapshot(self) -> dict[str, Any]:
        return self.model_dump(mode="json")


class SynthSpec(_Spec):
    """Синтетические данные: базовая форма, цели и вырезанные варианты."""

    shape: Literal["ellipsoid", "thin-cylinder", "plate", "icosphere"] = "ellipsoid"
    resolution: int = Field(16, ge=4)
    semi_axes: tuple[PositiveFloat, PositiveFloat, PositiveFloat] = (40.0, 25.0, 20.0)
    radius: PositiveFloat = 5.0
    length: PositiveFloat = 100.0
    offset: float = 7.5
    size: PositiveFloat = 60.0
    bump_height: float = 10.0
    bump_width: PositiveFloat = 8.0
    model: Path | None = None
    count: int = Field(1, ge=1)
    seed: int = 0
    coefficient_scale: PositiveFloat = 1.0
    coefficients: list[float] | None = None
    perturbation: float = Field(0.1, ge=0.0)
    excision: ExcisionSpec | None = None

    @model_validator(mode="after")
    def _check_model(self) -> "SynthSpec":
        if self.model is not None and not self.model.exists():
            raise ValueError(f"файл модели не найден: {self.model}")
        if self.coefficients is not None and self.model is None:
            raise ValueError("коэффициенты задаются только вместе с моделью")
        return self


def load_config(path: str | Path | None, schema: type[_Spec], overrides: dict[str, Any]) -> _Spec:
    """Читает JSON-конфигурацию и накладывает переопределения флагов CLI.

    Вложенные словари объединяются по ключам; значения None в
    переопределениях игнорируются.

    Raises:
        ValidationError: Файл не является корректным JSON-объектом.
        pydantic.ValidationError: Конфигурация не проходит схему.
    """
    data: dict[str, Any] = {}
    if path is not None:
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as e:
            raise ValidationError(f"Некорректный JSON в {path}: {e}") from e
        if not isinstance(data, dict):
            raise ValidationError(f"Конфигурация {path} должна быть JSON-объектом")
    merged = _merge(data, overrides)
    logger.debug(f"Конфигурация {schema.__name__}: {merged}")
    return schema.model_validate(merged)


def _merge(base: dict[str, Any], overrides: dict[str, Any]) -> dict[str, Any]:
    result = dict(base)
    for key, value in overrides.items():
        if value is None:
            continue
        if isinstance(value, dict) and isinstance(result.get(key), dict):
            result[key] = _merge(result[key], value)
        elif isinstance(value, dict):
            result[key] = _merge({}, value)
        else:
            result[key] = value
    return result

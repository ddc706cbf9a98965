"""
Реализация подкоманд CLI.

Каждая команда принимает уже проверенную конфигурацию и возвращает пути
записанных артефактов; разбор аргументов и коды выхода - в main.py.
"""

from concurrent.futures import ThreadPoolExecutor
import csv
import json
import logging
from pathlib import Path
from typing import Iterable

import numpy as np

from cli.schemas import ExcisionSpec, KernelSpec, RunConfig, SynthSpec
from cli.synth import base_shape, perturbed_shape
from core.config import get_worker_threads
from core.errors import ValidationError
from mcmc import read_coefficients
from mesh import TriangleMesh, excise, load_mesh, save_mesh
from registration import (
    RegistrationResult,
    initial_coefficients,
    leave_one_out_generalization,
    load_metrics,
    register_icp,
    register_mcmc,
    sample_deformations,
)
from shapemodel import LowRankGP, build_low_rank, load_model, save_model

logger = logging.getLogger(__name__)

SUMMARY_COLUMNS = (
    "directory",
    "target",
    "method",
    "proposal",
    "likelihood",
    "seed",
    "mean_l2",
    "hausdorff",
    "acceptance_rate",
    "iterations",
    "wall_clock_ms",
)


def cmd_build_model(
    reference_path: Path, kernel: KernelSpec, output: Path, seed: int = 0
) -> Path:
    """Строит низкоранговую модель по гауссову ядру и сохраняет её.

    Ранг больше 3n уменьшается до 3n с предупреждением.
    """
    reference = load_mesh(reference_path)
    rank = kernel.rank
    limit = 3 * reference.n_vertices
    if rank > limit:
        logger.warning(f"Ранг {rank} больше 3n={limit}, используется {limit}")
        rank = limit
    model = build_low_rank(kernel.build(), reference, rank, seed=seed)
    output.parent.mkdir(parents=True, exist_ok=True)
    save_model(model, output)

    values = model.eigenvalues
    explained = values.cumsum() / values.sum() if values.sum() > 0 else np.zeros_like(values)
    print(f"Модель: {reference.n_vertices} вершин, ранг {model.rank}")
    print(f"λ_1 = {values[0]:.6g}, λ_r = {values[-1]:.6g} мм²")
    for k in sorted({1, min(10, model.rank), model.rank}):
        print(f"  {k:>4} компонент: {explained[k - 1] * 100:.2f}% дисперсии")
    return output


def load_run_model(config: RunConfig) -> LowRankGP:
    if config.model is not None:
        return load_model(config.model)
    return _model_from_kernel(config.reference, config.kernel)


def _model_from_kernel(reference_path: Path, kernel: KernelSpec) -> LowRankGP:
    reference = load_mesh(reference_path)
    rank = min(kernel.rank, 3 * reference.n_vertices)
    return build_low_rank(kernel.build(), reference, rank)


def _result_name(target: Path, config: RunConfig, seed: int, suffix: str = "") -> str:
    label = config.method if config.method == "icp" else f"mcmc-{config.proposal.kind}"
    return f"{target.stem}{suffix}-{label}-{config.likelihood.kind}-seed{seed}"


def _run_one(
    model: LowRankGP,
    target: TriangleMesh,
    config: RunConfig,
    seed: int,
    boundary_filter: bool = False,
) -> RegistrationResult:
    init = initial_coefficients(model, config.init, seed)
    if config.method == "icp":
        result = register_icp(
            model,
            target,
            config.icp_iterations,
            sigma=config.icp_sigma,
            init=init,
            boundary_filter=boundary_filter,
        )
        result.seed = seed
    else:
        result = register_mcmc(
            model,
            target,
            config.likelihood.build(),
            config.proposal.build(model, target, seed),
            config.iterations,
            burn_in=config.burn_in,
            thinning=config.thinning,
            seed=seed,
            init=init,
            config=config.snapshot(),
        )
        result.extra["proposal"] = config.proposal.kind
    result.extra["likelihood"] = config.likelihood.kind if config.method == "mcmc" else None
    return result


def _fan_out(jobs: list, worker) -> list:
    """Выполняет задания в ограниченном пуле потоков, сохраняя порядок."""
    workers = max(1, min(get_worker_threads(), len(jobs)))
    if workers == 1:
        return [worker(job) for job in jobs]
    logger.info(f"Запуск {len(jobs)} заданий в пуле из {workers} потоков")
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(worker, jobs))


def cmd_register(config: RunConfig) -> list[Path]:
    """Регистрирует модель на каждую цель для каждого зерна.

    Returns:
        list[Path]: Каталоги результатов в порядке (цель, зерно).
    """
    if not config.targets:
        raise ValidationError("Не заданы целевые сетки")
    model = load_run_model(config)
    targets = {path: load_mesh(path) for path in config.targets}
    jobs = [(path, seed) for path in config.targets for seed in config.seeds]

    def worker(job: tuple[Path, int]) -> Path:
        path, seed = job
        result = _run_one(model, targets[path], config, seed)
        return result.save(
            config.output_dir / _result_name(path, config, seed),
            target=str(path),
            config=config.snapshot(),
            chain_timing=config.chain_timing,
        )

    return _fan_out(jobs, worker)


def region_labels(mesh: TriangleMesh, excision: ExcisionSpec) -> np.ndarray:
    """Метки вершин: excised внутри шара вырезания, observed снаружи."""
    inside = np.linalg.norm(mesh.vertices - np.asarray(excision.center), axis=1) < excision.radius
    return np.where(inside, "excised", "observed")


def cmd_reconstruct(config: RunConfig) -> list[Path]:
    """Регистрация на частично наблюдаемые цели с картой неопределённости по регионам.

    Цель вырезается шаром ``config.excision``; правдоподобие принудительно
    коллективное с фильтрацией границы. При нулевом радиусе цель не
    меняется и команда совпадает с cmd_register, включая правдоподобие
    и имена каталогов.
    """
    if config.excision is None:
        raise ValidationError("Для реконструкции нужна область вырезания (excision)")
    if not config.targets:
        raise ValidationError("Не заданы целевые сетки")
    if config.excision.radius == 0:
        logger.info("Радиус вырезания 0: выполняется обычная регистрация")
        return cmd_register(config)
    if config.likelihood.kind != "collective" or not config.likelihood.boundary_filter:
        logger.warning("Реконструкция использует коллективное правдоподобие с фильтрацией границы")
        config = config.model_copy(
            update={
                "likelihood": config.likelihood.model_copy(
                    update={"kind": "collective", "boundary_filter": True}
                )
            }
        )
    model = load_run_model(config)
    partial = {
        path: excise(load_mesh(path), config.excision.center, config.excision.radius)
        for path in config.targets
    }
    jobs = [(path, seed) for path in config.targets for seed in config.seeds]

    def worker(job: tuple[Path, int]) -> Path:
        path, seed = job
        result = _run_one(model, partial[path], config, seed, boundary_filter=True)
        directory = result.save(
            config.output_dir / _result_name(path, config, seed, suffix="-partial"),
            target=str(path),
            config=config.snapshot(),
            chain_timing=config.chain_timing,
        )
        save_mesh(partial[path], directory / "target_partial.ply")
        if result.uncertainty is not None:
            _write_uncertainty(directory, result, config.excision)
        return directory

    return _fan_out(jobs, worker)


def _write_uncertainty(directory: Path, result: RegistrationResult, excision: ExcisionSpec) -> None:
    labels = region_labels(result.map_mesh, excision)
    u = result.uncertainty
    with open(directory / "uncertainty.csv", "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(["vertex", "region", "total", "normal", "tangential"])
        for i in range(len(u)):
            writer.writerow(
                [i, labels[i], repr(float(u.total[i])), repr(float(u.normal[i])), repr(float(u.tangential[i]))]
            )
    summary = {
        region: {
            "vertices": int(np.sum(labels == region)),
            "normal": float(u.normal[labels == region].mean()) if np.any(labels == region) else None,
            "tangential": float(u.tangential[labels == region].mean())
            if np.any(labels == region)
            else None,
        }
        for region in ("excised", "observed")
    }
    (directory / "uncertainty_summary.json").write_text(
        json.dumps(summary, indent=2, ensure_ascii=False), encoding="utf-8"
    )
    logger.info(f"Неопределённость по регионам: {summary}")


def cmd_synth(spec: SynthSpec, output: Path) -> list[Path]:
    """Генерирует опорную форму и цели.

    С моделью цели - экземпляры модели (коэффициенты пишутся в JSON рядом),
    без модели - возмущённые базовые формы.
    """
    output.mkdir(parents=True, exist_ok=True)
    written = [save_mesh(base_shape(spec), output / "reference.ply")]
    rng = np.random.default_rng(spec.seed)
    model = load_model(spec.model) if spec.model is not None else None

    for i in range(spec.count):
        name = f"target_{i:03d}"
        truth = None
        if model is not None:
            if spec.coefficients is not None:
                alpha = model.check_coefficients(spec.coefficients)
            else:
                alpha = model.sample_prior(rng, spec.coefficient_scale)
            mesh = model.instance(alpha)
            truth = {"alpha": alpha.tolist(), "model": str(spec.model), "seed": spec.seed}
        else:
            mesh = perturbed_shape(spec, rng)
        written.append(save_mesh(mesh, output / f"{name}.ply"))
        if truth is not None:
            path = output / f"{name}.json"
            path.write_text(json.dumps(truth, indent=2), encoding="utf-8")
            written.append(path)
        if spec.excision is not None:
            partial = excise(mesh, spec.excision.center, spec.excision.radius)
            written.append(save_mesh(partial, output / f"{name}_excised.ply"))
    logger.info(f"Синтетические данные ({spec.shape}): {len(written)} файлов в {output}")
    return written


def _result_dirs(patterns: Iterable[str]) -> list[Path]:
    dirs: set[Path] = set()
    for pattern in patterns:
        path = Path(pattern)
        if path.is_dir():
            dirs.add(path)
            continue
        anchor = Path(path.anchor) if path.is_absolute() else Path(".")
        relative = str(path.relative_to(anchor)) if path.is_absolute() else pattern
        dirs.update(p for p in anchor.glob(relative) if p.is_dir())
    return sorted(dirs)


def cmd_evaluate(patterns: Iterable[str], output: Path) -> tuple[Path, int]:
    """Сводная таблица по каталогам результатов.

    Returns:
        tuple[Path, int]: Путь CSV и число пропущенных каталогов.

    Raises:
        ValidationError: Если не найдено ни одного каталога или все пропущены.
    """
    dirs = _result_dirs(patterns)
    if not dirs:
        raise ValidationError("Не найдено ни одного каталога результатов")
    rows, skipped = [], 0
    for directory in dirs:
        try:
            metrics = load_metrics(directory)
        except ValidationError as e:
            logger.warning(f"Каталог пропущен: {e}")
            skipped += 1
            continue
        rows.append(
            [
                directory.name,
                metrics.target,
                metrics.method,
                metrics.proposal or "",
                metrics.likelihood or "",
                "" if metrics.seed is None else metrics.seed,
                repr(metrics.mean_l2),
                repr(metrics.hausdorff),
                "" if metrics.acceptance_rate is None else repr(metrics.acceptance_rate),
                metrics.iterations,
                f"{metrics.wall_clock_ms:.3f}",
            ]
        )
    if not rows:
        raise ValidationError(f"Все {skipped} каталогов результатов некорректны")
    output.parent.mkdir(parents=True, exist_ok=True)
    with open(output, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(SUMMARY_COLUMNS)
        writer.writerows(rows)
    logger.info(f"Сводка по {len(rows)} результатам записана: {output}")
    return output, skipped


def cmd_generalize(model_path: Path, patterns: Iterable[str], output: Path) -> Path:
    """Кривые обобщения PDM только по MAP и по апостериорным образцам.

    Результаты группируются по целям; истинная форма цели берётся из файла,
    указанного в metrics.json, и должна быть в соответствии с опорной сеткой.
    """
    model = load_model(model_path)
    groups: dict[str, dict[str, list[np.ndarray]]] = {}
    for directory in _result_dirs(patterns):
        try:
            metrics = load_metrics(directory)
            map_alpha = read_coefficients(directory / "map_alpha.csv")
            samples = read_coefficients(directory / "samples.csv")
        except (ValidationError, OSError) as e:
            logger.warning(f"Каталог пропущен: {e}")
            continue
        group = groups.setdefault(metrics.target, {"map": [], "samples": []})
        group["map"].append(sample_deformations(model, map_alpha))
        if len(samples):
            group["samples"].append(sample_deformations(model, samples))

    if len(groups) < 3:
        raise ValidationError(f"Для исключения по одному нужно ≥ 3 целей, найдено {len(groups)}")
    names = sorted(groups)
    truths = []
    for name in names:
        mesh = load_mesh(name)
        if mesh.n_vertices != model.n_vertices:
            raise ValidationError(
                f"Цель {name} не в соответствии с опорной сеткой: {mesh.n_vertices} вершин"
            )
        truths.append(mesh)

    map_sets = [np.concatenate(groups[n]["map"]) for n in names]
    sample_sets = [
        np.concatenate(groups[n]["samples"]) if groups[n]["samples"] else np.concatenate(groups[n]["map"])
        for n in names
    ]
    posterior_curve = leave_one_out_generalization(sample_sets, truths, model.reference)
    map_curve = leave_one_out_generalization(
        map_sets, truths, model.reference, max_components=len(posterior_curve)
    )

    output.parent.mkdir(parents=True, exist_ok=True)
    with open(output, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(["components", "map_rms", "map_mean", "posterior_rms", "posterior_mean"])
        for i in range(len(posterior_curve)):
            writer.writerow(
                [
                    int(posterior_curve.components[i]),
                    repr(float(map_curve.rms_error[i])),
                    repr(float(map_curve.mean_error[i])),
                    repr(float(posterior_curve.rms_error[i])),
                    repr(float(posterior_curve.mean_error[i])),
                ]
            )
    logger.info(f"Кривые обобщения по {len(names)} целям записаны: {output}")
    return output

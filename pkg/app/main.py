"""
Командная строка morphfit.

Вероятностная нежёсткая регистрация поверхностей: построение GP-модели
формы, регистрация MCMC с CP-предложением или нежёстким ICP, реконструкция
частично наблюдаемых целей, синтетические данные и сводные таблицы.

Коды выхода: 0 - успех, 1 - ошибка входных данных, 2 - численная ошибка.
"""

import argparse
import logging
from pathlib import Path
import sys

from pydantic import ValidationError as SchemaError

from cli.commands import (
    cmd_build_model,
    cmd_evaluate,
    cmd_generalize,
    cmd_reconstruct,
    cmd_register,
    cmd_synth,
)
from cli.schemas import KernelSpec, RunConfig, SynthSpec, load_config
from core.errors import NumericError, ValidationError
from core.logging_setup import setup_logging

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_NUMERIC = 2


def _add_run_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=Path, help="JSON-файл RunConfig")
    parser.add_argument("--model", type=Path, help="файл модели")
    parser.add_argument("--target", type=Path, action="append", dest="targets", help="целевая сетка (можно несколько)")
    parser.add_argument("--method", choices=["mcmc", "icp"])
    parser.add_argument("--proposal", choices=["random-walk", "cp", "mixture"])
    parser.add_argument("--likelihood", choices=["l2", "hausdorff", "collective"])
    parser.add_argument("--iterations", type=int)
    parser.add_argument("--burn-in", type=int)
    parser.add_argument("--thinning", type=int)
    parser.add_argument("--seed", type=int, action="append", dest="seeds", help="зерно (можно несколько)")
    parser.add_argument("--init", choices=["zero", "prior"])
    parser.add_argument("--output", type=Path, help="каталог результатов")
    parser.add_argument(
        "--chain-timing",
        action=argparse.BooleanOptionalAction,
        default=None,
        help="столбец времени в chain.csv (по умолчанию включён)",
    )


def _run_overrides(args: argparse.Namespace) -> dict:
    return {
        "model": args.model,
        "targets": args.targets,
        "method": args.method,
        "proposal": {"kind": args.proposal},
        "likelihood": {"kind": args.likelihood},
        "iterations": args.iterations,
        "burn_in": args.burn_in,
        "thinning": args.thinning,
        "seeds": args.seeds,
        "init": args.init,
        "output_dir": args.output,
        "chain_timing": args.chain_timing,
    }


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="morphfit", description=__doc__.strip().splitlines()[0])
    parser.add_argument("--log-level", help="уровень логирования (по умолчанию LOG_LEVEL)")
    sub = parser.add_subparsers(dest="command", required=True)

    build = sub.add_parser("build-model", help="построить низкоранговую GP-модель")
    build.add_argument("--reference", type=Path, required=True)
    build.add_argument("--scale", type=float, default=KernelSpec.model_fields["scale"].default)
    build.add_argument("--bandwidth", type=float, default=KernelSpec.model_fields["bandwidth"].default)
    build.add_argument("--rank", type=int, default=KernelSpec.model_fields["rank"].default)
    build.add_argument("--seed", type=int, default=0, help="зерно выбора вершин Nyström")
    build.add_argument("--output", type=Path, required=True)

    register = sub.add_parser("register", help="регистрация модели на цели")
    _add_run_arguments(register)

    reconstruct = sub.add_parser("reconstruct", help="регистрация на вырезанные цели")
    _add_run_arguments(reconstruct)
    reconstruct.add_argument("--center", type=float, nargs=3, metavar=("X", "Y", "Z"))
    reconstruct.add_argument("--radius", type=float)

    synth = sub.add_parser("synth", help="синтетические сетки")
    synth.add_argument("--config", type=Path, help="JSON-файл SynthSpec")
    synth.add_argument("--shape", choices=["ellipsoid", "thin-cylinder", "plate", "icosphere"])
    synth.add_argument("--resolution", type=int)
    synth.add_argument("--model", type=Path, help="модель для целей в её оболочке")
    synth.add_argument("--count", type=int)
    synth.add_argument("--seed", type=int)
    synth.add_argument("--center", type=float, nargs=3, metavar=("X", "Y", "Z"))
    synth.add_argument("--radius", type=float)
    synth.add_argument("--output", type=Path, required=True)

    evaluate = sub.add_parser("evaluate", help="сводная таблица результатов")
    evaluate.add_argument("results", nargs="+", help="каталоги или glob-шаблоны")
    evaluate.add_argument("--output", type=Path, required=True)

    generalize = sub.add_parser("generalize", help="кривые обобщения PDM")
    generalize.add_argument("results", nargs="+", help="каталоги или glob-шаблоны")
    generalize.add_argument("--model", type=Path, required=True)
    generalize.add_argument("--output", type=Path, required=True)
    return parser


def _excision_override(args: argparse.Namespace) -> dict | None:
    if args.center is None and args.radius is None:
        return None
    return {"center": args.center, "radius": args.radius}


def run(args: argparse.Namespace) -> int:
    match args.command:
        case "build-model":
            kernel = KernelSpec(scale=args.scale, bandwidth=args.bandwidth, rank=args.rank)
            cmd_build_model(args.reference, kernel, args.output, seed=args.seed)
        case "register":
            config = load_config(args.config, RunConfig, _run_overrides(args))
            for directory in cmd_register(config):
                print(directory)
        case "reconstruct":
            overrides = _run_overrides(args) | {"excision": _excision_override(args)}
            config = load_config(args.config, RunConfig, overrides)
            for directory in cmd_reconstruct(config):
                print(directory)
        case "synth":
            overrides = {
                "shape": args.shape,
                "resolution": args.resolution,
                "model": args.model,
                "count": args.count,
                "seed": args.seed,
                "excision": _excision_override(args),
            }
            spec = load_config(args.config, SynthSpec, overrides)
            for path in cmd_synth(spec, args.output):
                print(path)
        case "evaluate":
            _, skipped = cmd_evaluate(args.results, args.output)
            if skipped:
                logger.warning(f"Пропущено некорректных каталогов: {skipped}")
            print(args.output)
        case "generalize":
            print(cmd_generalize(args.model, args.results, args.output))
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    """Точка входа CLI, возвращает код выхода."""
    parser = build_parser()
    args = parser.parse_args(argv)
    setup_logging(args.log_level)
    try:
        return run(args)
    except (ValidationError, SchemaError) as e:
        logger.error(f"Ошибка входных данных: {e}")
        return EXIT_VALIDATION
    except OSError as e:
        logger.error(f"Ошибка ввода-вывода: {e}")
        return EXIT_VALIDATION
    except NumericError as e:
        logger.error(f"Численная ошибка: {e}")
        return EXIT_NUMERIC
    except Exception as e:
        logger.exception(f"Необработанная ошибка: {e}")
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())

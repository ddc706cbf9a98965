import csv
import json
from unittest.mock import patch

import numpy as np
import pytest
from pydantic import ValidationError as SchemaError

from cli import RunConfig, SynthSpec, cmd_evaluate, cmd_synth, load_config
from core.config import Settings
from core.errors import NumericError, ValidationError
from main import EXIT_NUMERIC, EXIT_OK, EXIT_VALIDATION, main
from mesh import boundary_vertices, load_mesh
from shapemodel import load_model


@pytest.fixture
def workspace(tmp_path):
    """Опорный эллипсоид, модель и три цели из её оболочки."""
    data = tmp_path / "data"
    cmd_synth(SynthSpec(shape="ellipsoid", resolution=6), data)
    model = tmp_path / "model.gpmm"
    code = main(
        ["build-model", "--reference", str(data / "reference.ply"), "--rank", "6", "--output", str(model)]
    )
    assert code == EXIT_OK
    targets = tmp_path / "targets"
    cmd_synth(SynthSpec(shape="ellipsoid", resolution=6, model=model, count=3, seed=1), targets)
    return tmp_path, model, sorted(targets.glob("target_*.ply"))


def _register(model, target, output, *extra) -> int:
    return main(["register", "--model", str(model), "--target", str(target), "--output", str(output), *extra])


def test_synth_deterministic(tmp_path):
    """Тест: синтетические данные воспроизводимы по зерну"""
    spec = SynthSpec(shape="plate", resolution=6, count=2, seed=4)
    first = cmd_synth(spec, tmp_path / "a")
    second = cmd_synth(spec, tmp_path / "b")
    assert [p.name for p in first] == [p.name for p in second]
    for a, b in zip(first, second):
        assert a.read_bytes() == b.read_bytes()
    plate = load_mesh(first[0])
    assert len(boundary_vertices(plate)) == 24
    print(f"✅ Синтетические данные: {len(first)} файлов")


def test_synth_shapes_closed(tmp_path):
    """Тест: эллипсоид, цилиндр и икосфера замкнуты"""
    for shape in ("ellipsoid", "thin-cylinder", "icosphere"):
        written = cmd_synth(SynthSpec(shape=shape, resolution=8), tmp_path / shape)
        mesh = load_mesh(written[0])
        assert len(boundary_vertices(mesh)) == 0, shape
    print("✅ Замкнутые формы")


def test_synth_excision(tmp_path):
    """Тест вырезанных вариантов целей"""
    spec = SynthSpec(shape="plate", resolution=6, excision={"center": [0.0, 0.0, 10.0], "radius": 12.0})
    written = cmd_synth(spec, tmp_path)
    excised = [p for p in written if p.name.endswith("_excised.ply")]
    assert len(excised) == 1
    assert load_mesh(excised[0]).n_vertices < load_mesh(tmp_path / "reference.ply").n_vertices
    print("✅ Вырезанная цель")


def test_build_model_byte_identical(tmp_path):
    """Тест: повторное построение модели даёт тот же файл"""
    cmd_synth(SynthSpec(shape="ellipsoid", resolution=6), tmp_path)
    paths = [tmp_path / "a.gpmm", tmp_path / "b.gpmm"]
    for path in paths:
        args = ["build-model", "--reference", str(tmp_path / "reference.ply"), "--rank", "9", "--output", str(path)]
        assert main(args) == EXIT_OK
    assert paths[0].read_bytes() == paths[1].read_bytes()
    assert load_model(paths[0]).rank == 9
    print("✅ Файл модели детерминирован")


def test_register_and_evaluate(workspace):
    """Тест регистрации ICP и MCMC и сводной таблицы"""
    root, model, targets = workspace
    results = root / "results"
    assert _register(model, targets[0], results, "--method", "icp") == EXIT_OK
    assert (
        _register(
            model, targets[0], results,
            "--proposal", "cp", "--iterations", "30", "--burn-in", "5", "--thinning", "5",
        )
        == EXIT_OK
    )
    dirs = sorted(p for p in results.iterdir() if p.is_dir())
    assert [p.name for p in dirs] == [
        "target_000-icp-l2-seed0",
        "target_000-mcmc-cp-l2-seed0",
    ]
    header = (dirs[1] / "chain.csv").read_text().splitlines()[0]
    assert header.endswith(",wall_clock_ms")
    assert (dirs[0] / "trajectory.csv").is_file()

    (results / "broken").mkdir()
    summary = root / "summary.csv"
    assert main(["evaluate", str(results / "*"), "--output", str(summary)]) == EXIT_OK
    with open(summary, newline="") as f:
        rows = list(csv.DictReader(f))
    assert [r["method"] for r in rows] == ["icp", "mcmc"]
    assert rows[1]["proposal"] == "cp"
    assert rows[0]["acceptance_rate"] == ""
    print(f"✅ Сводка по {len(rows)} результатам")


def test_seeds_in_thread_pool(workspace):
    """Тест: запуски в пуле потоков совпадают с последовательными"""
    root, model, targets = workspace
    args = [
        "--proposal", "random-walk", "--iterations", "40", "--burn-in", "10",
        "--seed", "0", "--seed", "1", "--no-chain-timing",
    ]
    with patch("cli.commands.get_worker_threads", return_value=2):
        assert _register(model, targets[1], root / "parallel", *args) == EXIT_OK
    with patch("cli.commands.get_worker_threads", return_value=1):
        assert _register(model, targets[1], root / "serial", *args) == EXIT_OK
    for seed in (0, 1):
        name = f"target_001-mcmc-random-walk-l2-seed{seed}"
        parallel = (root / "parallel" / name / "chain.csv").read_bytes()
        serial = (root / "serial" / name / "chain.csv").read_bytes()
        assert parallel == serial
    print("✅ Пул потоков воспроизводим")


def test_generalize(workspace):
    """Тест кривых обобщения по результатам трёх целей"""
    root, model, targets = workspace
    results = root / "results"
    for target in targets:
        code = _register(
            model, target, results,
            "--proposal", "random-walk", "--iterations", "40", "--burn-in", "10", "--thinning", "5",
        )
        assert code == EXIT_OK
    output = root / "generalization.csv"
    assert main(["generalize", str(results / "*"), "--model", str(model), "--output", str(output)]) == EXIT_OK
    with open(output, newline="") as f:
        rows = list(csv.DictReader(f))
    # 6 образцов на цель, в фолде 12 образцов: ранг 11
    assert len(rows) == 11
    posterior = np.array([float(r["posterior_rms"]) for r in rows])
    assert np.all(np.diff(posterior) <= 1e-9)
    print(f"✅ Кривая обобщения из {len(rows)} точек")


def test_reconstruct_plate(tmp_path):
    """Тест реконструкции вырезанной пластины с картой неопределённости"""
    data = tmp_path / "data"
    cmd_synth(SynthSpec(shape="plate", resolution=6, count=1, seed=2), data)
    model = tmp_path / "plate.gpmm"
    assert main(["build-model", "--reference", str(data / "reference.ply"), "--rank", "6", "--output", str(model)]) == 0
    code = main(
        [
            "reconstruct", "--model", str(model), "--target", str(data / "target_000.ply"),
            "--iterations", "30", "--burn-in", "5", "--thinning", "5",
            "--center", "0", "0", "10", "--radius", "12", "--output", str(tmp_path / "out"),
        ]
    )
    assert code == EXIT_OK
    directory = tmp_path / "out" / "target_000-partial-mcmc-cp-collective-seed0"
    assert (directory / "target_partial.ply").is_file()
    summary = json.loads((directory / "uncertainty_summary.json").read_text())
    assert set(summary) == {"excised", "observed"}
    assert summary["observed"]["vertices"] > 0
    with open(directory / "uncertainty.csv", newline="") as f:
        header = next(csv.reader(f))
    assert header == ["vertex", "region", "total", "normal", "tangential"]
    print(f"✅ Реконструкция: {summary}")


def test_reconstruct_zero_radius_is_register(workspace):
    """Тест: вырезание нулевого радиуса совпадает с обычной регистрацией"""
    root, model, targets = workspace
    args = [
        "--model", str(model), "--target", str(targets[0]), "--likelihood", "hausdorff",
        "--proposal", "random-walk", "--iterations", "30", "--burn-in", "5", "--no-chain-timing",
    ]
    assert main(["register", *args, "--output", str(root / "register")]) == EXIT_OK
    code = main(
        ["reconstruct", *args, "--center", "0", "0", "0", "--radius", "0", "--output", str(root / "zero")]
    )
    assert code == EXIT_OK
    name = "target_000-mcmc-random-walk-hausdorff-seed0"
    assert [p.name for p in (root / "zero").iterdir()] == [name]
    for artifact in ("chain.csv", "map_alpha.csv", "samples.csv"):
        assert (root / "zero" / name / artifact).read_bytes() == (root / "register" / name / artifact).read_bytes()
    assert not (root / "zero" / name / "target_partial.ply").exists()
    print("✅ Нулевой радиус вырезания")


def test_exit_codes(tmp_path, workspace):
    """Тест кодов выхода CLI"""
    root, model, targets = workspace
    # отсутствующий файл опорной сетки
    assert main(["build-model", "--reference", str(tmp_path / "missing.ply"), "--output", str(tmp_path / "m")]) == EXIT_VALIDATION
    # отсутствующая модель в конфигурации
    assert _register(tmp_path / "missing.gpmm", targets[0], tmp_path) == EXIT_VALIDATION
    # файл, не являющийся моделью
    fake = tmp_path / "fake.gpmm"
    fake.write_bytes(b"junk")
    assert _register(fake, targets[0], tmp_path) == EXIT_VALIDATION

    with patch("main.cmd_register", side_effect=NumericError("сбой разложения")):
        assert _register(model, targets[0], tmp_path) == EXIT_NUMERIC
    with patch("main.cmd_register", side_effect=RuntimeError("неожиданно")):
        assert _register(model, targets[0], tmp_path) == EXIT_NUMERIC
    print("✅ Коды выхода")


def test_load_config_overrides(tmp_path, workspace):
    """Тест объединения JSON-конфигурации с флагами"""
    root, model, targets = workspace
    path = tmp_path / "run.json"
    path.write_text(
        json.dumps(
            {
                "model": str(model),
                "targets": [str(targets[0])],
                "proposal": {"kind": "mixture", "cp": {"p_flip": 0.5}},
                "iterations": 100,
            }
        )
    )
    config = load_config(path, RunConfig, {"proposal": {"cp_weight": 0.8}, "iterations": None, "seeds": [3]})
    assert config.proposal.kind == "mixture"
    assert config.proposal.cp.p_flip == 0.5
    assert config.proposal.cp_weight == 0.8
    assert config.iterations == 100
    assert config.seeds == [3]

    with pytest.raises(SchemaError):
        load_config(path, RunConfig, {"unknown": 1})
    with pytest.raises(SchemaError):
        load_config(path, RunConfig, {"burn_in": 100})
    with pytest.raises(SchemaError):
        load_config(path, RunConfig, {"proposal": {"cp": {"step_weights": [0.5, 0.2, 0.1]}}})
    path.write_text("[1, 2]")
    with pytest.raises(ValidationError):
        load_config(path, RunConfig, {})
    print("✅ Конфигурация объединяется")


def test_evaluate_all_invalid(tmp_path):
    """Тест сводки без корректных каталогов"""
    (tmp_path / "empty").mkdir()
    with pytest.raises(ValidationError):
        cmd_evaluate([str(tmp_path / "empty")], tmp_path / "summary.csv")
    assert main(["evaluate", str(tmp_path / "empty"), "--output", str(tmp_path / "s.csv")]) == EXIT_VALIDATION
    print("✅ Пустая сводка отклонена")


def test_settings_from_environment(monkeypatch):
    """Тест чтения настроек из переменных окружения"""
    monkeypatch.setenv("MORPHFIT_THREADS", "3")
    monkeypatch.setenv("MORPHFIT_NYSTROM_THRESHOLD", "100")
    settings = Settings()
    assert settings.worker_threads == 3
    assert settings.nystrom_threshold == 100
    print("✅ Настройки из окружения")

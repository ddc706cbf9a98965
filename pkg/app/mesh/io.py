"""
Чтение и запись сеток в форматах PLY (ascii и binary_little_endian) и OBJ.

PLY - основной формат: скалярные поля вершин (например, карта
неопределённости) хранятся как свойство ``double quality``. Координаты и поля пишутся
в double, при чтении принимается любой числовой тип PLY. Ошибки разбора
сообщают смещение в байтах от начала файла.
"""

from dataclasses import dataclass, field
import logging
from pathlib import Path

import numpy as np

from core.errors import MeshFormatError, ValidationError
from mesh.mesh import TriangleMesh

logger = logging.getLogger(__name__)

# Типы свойств PLY -> dtype numpy (без порядка байт)
_PLY_TYPES = {
    "char": "i1",
    "int8": "i1",
    "uchar": "u1",
    "uint8": "u1",
    "short": "i2",
    "int16": "i2",
    "ushort": "u2",
    "uint16": "u2",
    "int": "i4",
    "int32": "i4",
    "uint": "u4",
    "uint32": "u4",
    "float": "f4",
    "float32": "f4",
    "double": "f8",
    "float64": "f8",
}

FORMATS = ("ply", "ply-ascii", "obj")


@dataclass
class _PlyProperty:
    name: str
    dtype: str
    count_dtype: str | None = None  # для list-свойств

    @property
    def is_list(self) -> bool:
        return self.count_dtype is not None


@dataclass
class _PlyElement:
    name: str
    count: int
    properties: list[_PlyProperty] = field(default_factory=list)


@dataclass(frozen=True)
class PlyData:
    """Сетка вместе со всеми дополнительными скалярными свойствами вершин."""

    mesh: TriangleMesh
    vertex_properties: dict[str, np.ndarray]


def _infer_format(path: Path, format: str | None) -> str:
    if format is not None:
        fmt = format.lower().replace("_", "-")
        aliases = {
            "ply-binary": "ply",
            "ply-binary-little-endian": "ply",
            "binary-little-endian": "ply",
            "ascii": "ply-ascii",
        }
        fmt = aliases.get(fmt, fmt)
        if fmt not in FORMATS:
            raise ValidationError(f"Неизвестный формат сетки: {format}")
        return fmt
    suffix = path.suffix.lower()
    if suffix == ".ply":
        return "ply"
    if suffix == ".obj":
        return "obj"
    raise ValidationError(f"Не удалось определить формат по расширению: {path}")


def load_mesh(path: str | Path, format: str | None = None) -> TriangleMesh:
    """Загружает сетку из файла.

    Args:
        path (str | Path): Путь к файлу.
        format (str, optional): ``ply`` (любая кодировка), ``ply-ascii`` или ``obj``.
            По умолчанию определяется по расширению.

    Returns:
        TriangleMesh: Проверенная сетка.

    Raises:
        MeshFormatError: Ошибка разбора (со смещением в байтах).
        ValidationError: Индексы вне диапазона и прочие нарушения инвариантов.
    """
    path = Path(path)
    fmt = _infer_format(path, format)
    if fmt == "obj":
        return _read_obj(path)
    return read_ply(path).mesh


def read_ply(path: str | Path) -> PlyData:
    """Читает PLY (ascii или binary_little_endian) со всеми свойствами вершин."""
    path = Path(path)
    data = path.read_bytes()
    encoding, elements, body_offset = _parse_header(data, path)

    if encoding == "ascii":
        values = _read_ascii_body(data, body_offset, elements, path)
    else:
        values = _read_binary_body(data, body_offset, elements, path)

    vertex = values.get("vertex")
    if vertex is None:
        raise MeshFormatError("В файле нет элемента vertex", path, body_offset)
    for axis in ("x", "y", "z"):
        if axis not in vertex:
            raise MeshFormatError(f"У вершин нет свойства {axis}", path, body_offset)
    vertices = np.column_stack([vertex["x"], vertex["y"], vertex["z"]]).astype(np.float64)

    faces = values.get("face", {})
    triangles = faces.get("vertex_indices", faces.get("vertex_index"))
    if triangles is None:
        triangles = np.zeros((0, 3), dtype=np.int64)

    extras = {
        name: np.asarray(column)
        for name, column in vertex.items()
        if name not in ("x", "y", "z")
    }
    mesh = TriangleMesh(vertices, triangles)
    logger.debug(
        f"Прочитан PLY {path.name}: {mesh.n_vertices} вершин, {mesh.n_triangles} треугольников"
    )
    return PlyData(mesh=mesh, vertex_properties=extras)


def _parse_header(data: bytes, path: Path) -> tuple[str, list[_PlyElement], int]:
    if not data.startswith(b"ply"):
        raise MeshFormatError("Отсутствует сигнатура ply", path, 0)

    elements: list[_PlyElement] = []
    encoding = None
    offset = 0
    while True:
        end = data.find(b"\n", offset)
        if end < 0:
            raise MeshFormatError("Заголовок не завершён end_header", path, offset)
        line = data[offset:end].decode("ascii", errors="replace").strip()
        tokens = line.split()
        line_offset = offset
        offset = end + 1

        if not tokens or tokens[0] in ("ply", "comment", "obj_info"):
            continue
        if tokens[0] == "end_header":
            break
        if tokens[0] == "format":
            if len(tokens) < 2 or tokens[1] not in ("ascii", "binary_little_endian"):
                raise MeshFormatError(
                    f"Неподдерживаемая кодировка PLY: {line}", path, line_offset
                )
            encoding = tokens[1]
        elif tokens[0] == "element":
            try:
                elements.append(_PlyElement(tokens[1], int(tokens[2])))
            except (IndexError, ValueError) as e:
                raise MeshFormatError(f"Некорректный элемент: {line}", path, line_offset) from e
        elif tokens[0] == "property":
            if not elements:
                raise MeshFormatError("Свойство вне элемента", path, line_offset)
            try:
                if tokens[1] == "list":
                    prop = _PlyProperty(
                        tokens[4], _PLY_TYPES[tokens[3]], count_dtype=_PLY_TYPES[tokens[2]]
                    )
                else:
                    prop = _PlyProperty(tokens[2], _PLY_TYPES[tokens[1]])
            except (IndexError, KeyError) as e:
                raise MeshFormatError(f"Некорректное свойство: {line}", path, line_offset) from e
            elements[-1].properties.append(prop)
        else:
            raise MeshFormatError(f"Неизвестная строка заголовка: {line}", path, line_offset)

    if encoding is None:
        raise MeshFormatError("В заголовке нет строки format", path, 0)
    return encoding, elements, offset


def _read_ascii_body(
    data: bytes, offset: int, elements: list[_PlyElement], path: Path
) -> dict[str, dict[str, np.ndarray]]:
    result: dict[str, dict[str, np.ndarray]] = {}
    for element in elements:
        columns: dict[str, list] = {p.name: [] for p in element.properties}
        for _ in range(element.count):
            end = data.find(b"\n", offset)
            if end < 0:
                end = len(data)
            if offset >= len(data):
                raise MeshFormatError(
                    f"Неожиданный конец файла в элементе {element.name}", path, offset
                )
            tokens = data[offset:end].split()
            cursor = 0
            try:
                for prop in element.properties:
                    if prop.is_list:
                        n = int(tokens[cursor])
                        if element.name == "face" and n != 3:
                            raise MeshFormatError(
                                f"Поддерживаются только треугольники, получено {n} вершин",
                                path,
                                offset,
                            )
                        columns[prop.name].append([int(t) for t in tokens[cursor + 1 : cursor + 1 + n]])
                        cursor += 1 + n
                    else:
                        columns[prop.name].append(float(tokens[cursor]))
                        cursor += 1
            except MeshFormatError:
                raise
            except (IndexError, ValueError) as e:
                raise MeshFormatError(
                    f"Не удалось разобрать запись {element.name}", path, offset
                ) from e
            offset = end + 1
        result[element.name] = {
            name: np.asarray(values, dtype=np.int64 if prop.is_list else prop.dtype)
            for prop, (name, values) in zip(element.properties, columns.items())
        }
    return result


def _read_binary_body(
    data: bytes, offset: int, elements: list[_PlyElement], path: Path
) -> dict[str, dict[str, np.ndarray]]:
    result: dict[str, dict[str, np.ndarray]] = {}
    for element in elements:
        lists = [p for p in element.properties if p.is_list]
        if not lists:
            dtype = np.dtype([(p.name, "<" + p.dtype) for p in element.properties])
            size = dtype.itemsize * element.count
            if offset + size > len(data):
                raise MeshFormatError(
                    f"Неожиданный конец файла в элементе {element.name}", path, offset
                )
            records = np.frombuffer(data, dtype=dtype, count=element.count, offset=offset)
            result[element.name] = {name: records[name].copy() for name in dtype.names}
            offset += size
            continue

        # Быстрый путь: все списки из трёх индексов
        fields = []
        for p in element.properties:
            if p.is_list:
                fields.append((p.name + "__count", "<" + p.count_dtype))
                fields.append((p.name, "<" + p.dtype, (3,)))
            else:
                fields.append((p.name, "<" + p.dtype))
        dtype = np.dtype(fields)
        size = dtype.itemsize * element.count
        if offset + size > len(data):
            raise MeshFormatError(
                f"Неожиданный конец файла в элементе {element.name}", path, offset
            )
        records = np.frombuffer(data, dtype=dtype, count=element.count, offset=offset)
        for p in lists:
            bad = np.flatnonzero(records[p.name + "__count"] != 3)
            if len(bad):
                raise MeshFormatError(
                    f"Поддерживаются только треугольники (запись {int(bad[0])})",
                    path,
                    offset + int(bad[0]) * dtype.itemsize,
                )
        result[element.name] = {
            p.name: records[p.name].astype(np.int64 if p.is_list else p.dtype)
            for p in element.properties
        }
        offset += size
    return result


def _read_obj(path: Path) -> TriangleMesh:
    data = path.read_bytes()
    vertices: list[list[float]] = []
    faces: list[list[int]] = []
    offset = 0
    for raw in data.splitlines(keepends=True):
        line_offset = offset
        offset += len(raw)
        tokens = raw.split()
        if not tokens or tokens[0].startswith(b"#"):
            continue
        try:
            if tokens[0] == b"v":
                vertices.append([float(t) for t in tokens[1:4]])
                if len(vertices[-1]) != 3:
                    raise ValueError("ожидалось три координаты")
            elif tokens[0] == b"f":
                if len(tokens) != 4:
                    raise MeshFormatError(
                        f"Поддерживаются только треугольные грани, получено {len(tokens) - 1}",
                        path,
                        line_offset,
                    )
                face = []
                for t in tokens[1:]:
                    index = int(t.split(b"/")[0])
                    # отрицательные индексы OBJ отсчитываются от конца списка вершин
                    face.append(index - 1 if index > 0 else len(vertices) + index)
                faces.append(face)
        except MeshFormatError:
            raise
        except ValueError as e:
            raise MeshFormatError(f"Не удалось разобрать строку OBJ: {e}", path, line_offset) from e
    return TriangleMesh(np.asarray(vertices, dtype=np.float64).reshape(-1, 3), np.asarray(faces, dtype=np.int64).reshape(-1, 3))


def save_mesh(
    mesh: TriangleMesh,
    path: str | Path,
    format: str | None = None,
    scalars: np.ndarray | None = None,
) -> Path:
    """Сохраняет сетку, опционально со скалярным полем вершин.

    Args:
        mesh (TriangleMesh): Сетка.
        path (str | Path): Путь к файлу.
        format (str, optional): ``ply`` (binary little endian), ``ply-ascii`` или ``obj``.
        scalars (np.ndarray, optional): Одно значение на вершину, пишется как ``quality``.

    Raises:
        ValidationError: Если длина поля не совпадает с числом вершин или формат его не поддерживает.
        OSError: Если путь недоступен для записи.
    """
    path = Path(path)
    fmt = _infer_format(path, format)
    if scalars is not None:
        scalars = np.asarray(scalars, dtype=np.float64).ravel()
        if len(scalars) != mesh.n_vertices:
            raise ValidationError(
                f"Скалярное поле: {len(scalars)} значений на {mesh.n_vertices} вершин"
            )
        if fmt == "obj":
            raise ValidationError("OBJ не хранит свойства вершин, используйте PLY")

    if fmt == "obj":
        lines = [f"v {x:.17g} {y:.17g} {z:.17g}\n" for x, y, z in mesh.vertices]
        lines += [f"f {a + 1} {b + 1} {c + 1}\n" for a, b, c in mesh.triangles]
        path.write_text("".join(lines), encoding="ascii")
        return path

    encoding = "ascii" if fmt == "ply-ascii" else "binary_little_endian"
    header = [
        "ply",
        f"format {encoding} 1.0",
        "comment morphfit",
        f"element vertex {mesh.n_vertices}",
        "property double x",
        "property double y",
        "property double z",
    ]
    if scalars is not None:
        header.append("property double quality")
    header += [
        f"element face {mesh.n_triangles}",
        "property list uchar int vertex_indices",
        "end_header",
    ]
    head = ("\n".join(header) + "\n").encode("ascii")

    vertex_fields = [("x", "<f8"), ("y", "<f8"), ("z", "<f8")]
    if scalars is not None:
        vertex_fields.append(("quality", "<f8"))
    vrec = np.zeros(mesh.n_vertices, dtype=vertex_fields)
    vrec["x"], vrec["y"], vrec["z"] = mesh.vertices.T
    if scalars is not None:
        vrec["quality"] = scalars

    frec = np.zeros(mesh.n_triangles, dtype=[("n", "u1"), ("idx", "<i4", (3,))])
    frec["n"] = 3
    frec["idx"] = mesh.triangles

    if encoding == "ascii":
        names = vrec.dtype.names
        body = [" ".join(repr(float(row[n])) for n in names) for row in vrec]
        body += [f"3 {a} {b} {c}" for a, b, c in mesh.triangles]
        path.write_bytes(head + ("\n".join(body) + "\n").encode("ascii"))
    else:
        path.write_bytes(head + vrec.tobytes() + frec.tobytes())
    logger.debug(f"Сетка сохранена: {path}")
    return path

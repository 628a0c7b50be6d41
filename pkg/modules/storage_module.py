"""
Модуль хранения: каталоги наборов данных, таблицы эмбеддингов, контрольные точки, журналы и отчёты
"""
import hashlib
import json
import logging
import os
import struct
from typing import Dict, Iterable, List, Optional

import numpy as np

from models.dataset import DatasetBundle, EmbeddingTable, QueryInstance, SplitAssignment
from models.errors import DimensionMismatchError, MissingFileError, ValidationError
from models.knowledge_graph import AnchorSet, Graph
from models.params import AdamState, ParamTensors
from modules.input_module import InputParser

logger = logging.getLogger(__name__)

EMBEDDING_MAGIC = b"QCEAEMB1"
CHECKPOINT_MAGIC = b"QCEACKPT"
CHECKPOINT_VERSION = 1

BUNDLE_FILES = {
    "tcm_graph": "tcm.graph.txt",
    "wm_graph": "wm.graph.txt",
    "anchors": "anchors.tsv",
    "compat": "compat.tsv",
    "queries": "queries.tsv",
    "splits": "splits.tsv",
}
EMBEDDING_NAMES = ("queries", "tcm", "wm")


class Checkpoint:
    """Содержимое контрольной точки: метод, конфигурация, тензоры, состояние Adam и метаданные"""

    def __init__(self, method: str, config: dict, params: ParamTensors,
                 adam: Optional[AdamState] = None, meta: Optional[dict] = None):
        self.method = method
        self.config = config
        self.params = params
        self.adam = adam
        self.meta = meta or {}


class StorageManager:
    """Класс для сохранения и загрузки всех артефактов"""

    # ------------------------------------------------------------------ общее

    @staticmethod
    def _read_lines(path: str) -> List[str]:
        if not os.path.exists(path):
            raise MissingFileError(f"Файл '{path}' не найден", path=path)
        try:
            with open(path, "r", encoding="utf-8") as file:
                return file.readlines()
        except UnicodeDecodeError as e:
            raise ValidationError(f"{path}: файл не в кодировке UTF-8 ({e.reason}, байт {e.start})", path=path)

    @staticmethod
    def write_text(path: str, text: str) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as file:
            file.write(text)

    @staticmethod
    def write_jsonl(path: str, records: Iterable[dict]) -> None:
        """Сохраняет записи построчно в JSON"""
        with open(path, "w", encoding="utf-8", newline="\n") as file:
            for record in records:
                file.write(json.dumps(record, ensure_ascii=False, sort_keys=True) + "\n")

    @staticmethod
    def read_jsonl(path: str) -> List[dict]:
        records = []
        for number, line in enumerate(StorageManager._read_lines(path), start=1):
            if not line.strip():
                continue
            try:
                records.append(json.loads(line))
            except json.JSONDecodeError as e:
                raise ValidationError(f"{path}:{number}: некорректный JSON ({e.msg})", path=path, line=number)
        return records

    @staticmethod
    def write_json(path: str, data: dict) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as file:
            json.dump(data, file, indent=4, ensure_ascii=False, sort_keys=True)
            file.write("\n")

    @staticmethod
    def file_digest(path: str) -> str:
        digest = hashlib.sha256()
        with open(path, "rb") as file:
            for chunk in iter(lambda: file.read(1 << 20), b""):
                digest.update(chunk)
        return digest.hexdigest()

    @staticmethod
    def directory_digests(directory: str) -> Dict[str, str]:
        """Дайджесты всех файлов каталога (имя относительно каталога)"""
        digests = {}
        for root, _, files in os.walk(directory):
            for name in sorted(files):
                path = os.path.join(root, name)
                digests[os.path.relpath(path, directory)] = StorageManager.file_digest(path)
        return digests

    # ------------------------------------------------------------------ эмбеддинги

    @staticmethod
    def save_embeddings(table: EmbeddingTable, path: str) -> None:
        """Сохраняет таблицу: .emb - двоичный формат, .emb.txt - текстовый"""
        if path.endswith(".txt"):
            lines = [f"dim {table.dim}\n"]
            for key, row in zip(table.ids, table.matrix):
                lines.append(" ".join([str(int(key))] + [repr(float(x)) for x in row]) + "\n")
            StorageManager.write_text(path, "".join(lines))
            return
        record = np.dtype([("id", "<i8"), ("vec", "<f8", (table.dim,))])
        records = np.zeros(len(table.ids), dtype=record)
        records["id"] = table.ids
        records["vec"] = table.matrix
        with open(path, "wb") as file:
            file.write(EMBEDDING_MAGIC)
            file.write(struct.pack("<iq", table.dim, len(table.ids)))
            file.write(records.tobytes())

    @staticmethod
    def load_embeddings(path: str) -> EmbeddingTable:
        if not os.path.exists(path):
            raise MissingFileError(f"Файл '{path}' не найден", path=path)
        if path.endswith(".txt"):
            return InputParser.parse_embedding_text(StorageManager._read_lines(path), path)
        with open(path, "rb") as file:
            payload = file.read()
        if payload[:len(EMBEDDING_MAGIC)] != EMBEDDING_MAGIC:
            raise ValidationError(f"{path}: неверная сигнатура файла эмбеддингов", path=path)
        offset = len(EMBEDDING_MAGIC)
        if len(payload) < offset + struct.calcsize("<iq"):
            raise ValidationError(f"{path}: файл эмбеддингов обрезан в заголовке", path=path)
        dim, count = struct.unpack_from("<iq", payload, offset)
        offset += struct.calcsize("<iq")
        if dim < 1 or count < 0:
            raise ValidationError(f"{path}: некорректный заголовок dim={dim}, строк={count}", path=path)
        record = np.dtype([("id", "<i8"), ("vec", "<f8", (dim,))])
        if len(payload) - offset != count * record.itemsize:
            raise DimensionMismatchError(
                f"{path}: размер данных не соответствует dim={dim} и {count} строкам", expected=dim, path=path)
        records = np.frombuffer(payload, dtype=record, count=count, offset=offset)
        return EmbeddingTable(dim, records["id"].copy(), records["vec"].astype(np.float64).reshape(count, dim))

    # ------------------------------------------------------------------ набор данных

    @staticmethod
    def _check_field(value: str, forbidden: str, what: str) -> str:
        """Проверяет, что поле текстового формата не содержит разделителей"""
        bad = sorted({repr(c) for c in value if c in forbidden})
        if bad:
            raise ValidationError(f"{what}: недопустимые символы {', '.join(bad)} в '{value}'", field=what)
        return value

    @staticmethod
    def format_graph(graph: Graph) -> str:
        lines = [f"side {graph.side.value}\n"]
        for e in graph.entities:
            where = f"сущность {e.id}"
            type_tag = StorageManager._check_field(e.type_tag, " \t\r\n", f"{where}, тип")
            name = StorageManager._check_field(e.name, "\t\r\n", f"{where}, имя")
            description = StorageManager._check_field(e.description, "\r\n", f"{where}, описание")
            lines.append(f"E {e.id} {type_tag} {name}\t{description}\n")
        lines += [f"L {a} {b}\n" for a, b in graph.edges]
        return "".join(lines)

    @staticmethod
    def format_queries(queries: Iterable[QueryInstance]) -> str:
        lines = []
        for q in queries:
            description = StorageManager._check_field(q.description, "\t\r\n", f"запрос {q.instance_id}")
            fields = [str(q.instance_id), str(q.entity_id), str(int(q.direction)), description]
            if q.target_ids is not None:
                fields.append(",".join(str(t) for t in sorted(q.target_ids)))
            lines.append("\t".join(fields) + "\n")
        return "".join(lines)

    @staticmethod
    def format_split(split: SplitAssignment) -> str:
        return "".join(f"{t}\t{w}\t{label.value}\n" for (t, w), label in sorted(split.labels.items()))

    @staticmethod
    def save_bundle(bundle: DatasetBundle, directory: str, binary: bool = True) -> List[str]:
        """
        Сохраняет набор данных в каталог

        Returns:
            Список записанных файлов
        """
        os.makedirs(directory, exist_ok=True)
        written = []

        def put(name: str, text: str) -> None:
            path = os.path.join(directory, name)
            StorageManager.write_text(path, text)
            written.append(path)

        put(BUNDLE_FILES["tcm_graph"], StorageManager.format_graph(bundle.tcm_graph))
        put(BUNDLE_FILES["wm_graph"], StorageManager.format_graph(bundle.wm_graph))
        put(BUNDLE_FILES["anchors"], "".join(f"{t}\t{w}\n" for t, w in bundle.anchors.pairs))
        put(BUNDLE_FILES["compat"], "".join(f"{src}\t{tgt}\n" for src in sorted(bundle.compatibility)
                                            for tgt in sorted(bundle.compatibility[src])))
        put(BUNDLE_FILES["queries"], StorageManager.format_queries(bundle.queries))
        if bundle.split is not None:
            put(BUNDLE_FILES["splits"], StorageManager.format_split(bundle.split))

        suffix = ".emb" if binary else ".emb.txt"
        tables = zip(EMBEDDING_NAMES, (bundle.query_embeddings, bundle.tcm_embeddings, bundle.wm_embeddings))
        for name, table in tables:
            path = os.path.join(directory, name + suffix)
            StorageManager.save_embeddings(table, path)
            written.append(path)
        return written

    @staticmethod
    def _embedding_path(directory: str, name: str) -> str:
        for suffix in (".emb", ".emb.txt"):
            path = os.path.join(directory, name + suffix)
            if os.path.exists(path):
                return path
        raise MissingFileError(f"Не найден файл эмбеддингов '{name}.emb' в '{directory}'", path=directory)

    @staticmethod
    def load_bundle(directory: str) -> DatasetBundle:
        """
        Загружает и проверяет набор данных из каталога

        Raises:
            MissingFileError, ValidationError, DimensionMismatchError, MissingEmbeddingError, UnknownIdError
        """
        if not os.path.isdir(directory):
            raise MissingFileError(f"Каталог '{directory}' не найден", path=directory)

        def lines(key: str) -> List[str]:
            return StorageManager._read_lines(os.path.join(directory, BUNDLE_FILES[key]))

        tcm_graph = InputParser.parse_graph(lines("tcm_graph"), BUNDLE_FILES["tcm_graph"])
        wm_graph = InputParser.parse_graph(lines("wm_graph"), BUNDLE_FILES["wm_graph"])
        pairs = InputParser.parse_pairs(lines("anchors"), BUNDLE_FILES["anchors"])
        compat = InputParser.parse_compatibility(lines("compat"), BUNDLE_FILES["compat"])
        queries = InputParser.parse_queries(lines("queries"), BUNDLE_FILES["queries"])
        split = None
        if os.path.exists(os.path.join(directory, BUNDLE_FILES["splits"])):
            split = InputParser.parse_splits(lines("splits"), BUNDLE_FILES["splits"])

        tables = [StorageManager.load_embeddings(StorageManager._embedding_path(directory, name))
                  for name in EMBEDDING_NAMES]
        anchors = AnchorSet(pairs, tcm_graph.ids.tolist(), wm_graph.ids.tolist())
        bundle = DatasetBundle(tcm_graph, wm_graph, anchors, tables[0], tables[1], tables[2],
                               queries, compat, split)
        bundle.validate()
        logger.info("Загружен набор данных %s: %d/%d сущностей, %d соответствий, %d запросов",
                    directory, len(tcm_graph), len(wm_graph), len(anchors), len(queries))
        return bundle

    # ------------------------------------------------------------------ контрольные точки

    @staticmethod
    def save_checkpoint(path: str, checkpoint: Checkpoint) -> None:
        """Сохраняет контрольную точку: сигнатура, версия, JSON-заголовок, тензоры float64"""
        groups = [("params", checkpoint.params)]
        header = {
            "version": CHECKPOINT_VERSION,
            "method": checkpoint.method,
            "config": checkpoint.config,
            "meta": checkpoint.meta,
            "tensors": [],
        }
        if checkpoint.adam is not None:
            groups += [("adam_m", checkpoint.adam.first_moment), ("adam_v", checkpoint.adam.second_moment)]
            header["adam"] = checkpoint.adam.hyperparameters()
        blobs = []
        for group, tensors in groups:
            for name, tensor in tensors.items():
                header["tensors"].append({"group": group, "name": name, "shape": list(tensor.shape)})
                blobs.append(np.ascontiguousarray(tensor, dtype="<f8").tobytes())
        encoded = json.dumps(header, ensure_ascii=False, sort_keys=True).encode("utf-8")
        with open(path, "wb") as file:
            file.write(CHECKPOINT_MAGIC)
            file.write(struct.pack("<IQ", CHECKPOINT_VERSION, len(encoded)))
            file.write(encoded)
            for blob in blobs:
                file.write(blob)

    @staticmethod
    def load_checkpoint(path: str) -> Checkpoint:
        if not os.path.exists(path):
            raise MissingFileError(f"Файл '{path}' не найден", path=path)
        with open(path, "rb") as file:
            payload = file.read()
        if payload[:len(CHECKPOINT_MAGIC)] != CHECKPOINT_MAGIC:
            raise ValidationError(f"{path}: неверная сигнатура контрольной точки", path=path)
        offset = len(CHECKPOINT_MAGIC)
        try:
            version, header_size = struct.unpack_from("<IQ", payload, offset)
            if version != CHECKPOINT_VERSION:
                raise ValidationError(f"{path}: неподдерживаемая версия {version}", path=path)
            offset += struct.calcsize("<IQ")
            header = json.loads(payload[offset:offset + header_size].decode("utf-8"))
            offset += header_size

            groups: Dict[str, Dict[str, np.ndarray]] = {"params": {}, "adam_m": {}, "adam_v": {}}
            for entry in header["tensors"]:
                shape = tuple(entry["shape"])
                count = int(np.prod(shape)) if shape else 1
                tensor = np.frombuffer(payload, dtype="<f8", count=count, offset=offset).reshape(shape)
                groups[entry["group"]][entry["name"]] = tensor.astype(np.float64)
                offset += count * 8

            adam = None
            if "adam" in header:
                hyper = header["adam"]
                adam = AdamState(ParamTensors(groups["adam_m"]), ParamTensors(groups["adam_v"]),
                                 hyper["lr"], hyper["beta1"], hyper["beta2"], hyper["eps"], hyper["step"])
            return Checkpoint(header["method"], header["config"], ParamTensors(groups["params"]),
                              adam, header["meta"])
        except (struct.error, UnicodeDecodeError, ValueError, KeyError, TypeError) as e:
            raise ValidationError(f"{path}: повреждённая контрольная точка ({e})", path=path)

"""
Модуль ввода: разбор текстовых форматов графов, соответствий, запросов и эмбеддингов
"""
from typing import Dict, FrozenSet, Iterable, List, Set, Tuple

import numpy as np

from models.dataset import EmbeddingTable, QueryInstance, Split, SplitAssignment
from models.errors import DimensionMismatchError, InvalidArgumentError, ValidationError
from models.knowledge_graph import Direction, Entity, Graph, Side


def _content_lines(lines: Iterable[str]) -> Iterable[Tuple[int, str]]:
    """Непустые строки без комментариев с номерами (с 1)"""
    for number, line in enumerate(lines, start=1):
        line = line.rstrip("\n").rstrip("\r")
        if not line.strip() or line.startswith("#"):
            continue
        yield number, line


class InputParser:
    """Класс для разбора текстовых файлов набора данных"""

    @staticmethod
    def parse_graph(lines: Iterable[str], source: str = "<graph>") -> Graph:
        """
        Разбирает файл графа

        Args:
            lines: Строки вида 'side <TCM|WM>', 'E <id> <type_tag> <name>\\t<description>', 'L <id> <id>'
            source: Имя источника для сообщений об ошибках

        Returns:
            Граф (без проверки инвариантов)
        """
        side = None
        entities: List[Entity] = []
        edges: List[Tuple[int, int]] = []
        for number, line in _content_lines(lines):
            try:
                if side is None:
                    tag, value = line.split()
                    if tag != "side":
                        raise ValueError("первая строка должна задавать сторону")
                    side = Side(value)
                elif line.startswith("E "):
                    head, description = line.split("\t", 1)
                    _, entity_id, type_tag, name = head.split(" ", 3)
                    entities.append(Entity(int(entity_id), side, type_tag, name, description))
                elif line.startswith("L "):
                    _, a, b = line.split()
                    edges.append((int(a), int(b)))
                else:
                    raise ValueError("неизвестный тип строки")
            except ValueError as e:
                raise ValidationError(f"{source}:{number}: ошибка разбора ({e})", line=number)
        if side is None:
            raise ValidationError(f"{source}: пустой файл графа")
        return Graph(side, entities, edges)

    @staticmethod
    def parse_pairs(lines: Iterable[str], source: str = "<anchors>") -> List[Tuple[int, int]]:
        """Разбирает строки '<tcm_id>\\t<wm_id>'"""
        pairs = []
        for number, line in _content_lines(lines):
            parts = line.split("\t")
            try:
                if len(parts) != 2:
                    raise ValueError("ожидалось два поля")
                pairs.append((int(parts[0]), int(parts[1])))
            except ValueError as e:
                raise ValidationError(f"{source}:{number}: ошибка разбора ({e})", line=number)
        return pairs

    @staticmethod
    def parse_compatibility(lines: Iterable[str], source: str = "<compat>") -> Dict[str, FrozenSet[str]]:
        """Разбирает строки '<src_type>\\t<tgt_type>' в таблицу совместимости"""
        table: Dict[str, Set[str]] = {}
        for number, line in _content_lines(lines):
            parts = line.split("\t")
            if len(parts) != 2 or not parts[0] or not parts[1]:
                raise ValidationError(f"{source}:{number}: ожидалось два непустых типа", line=number)
            table.setdefault(parts[0], set()).add(parts[1])
        return {src: frozenset(tgts) for src, tgts in table.items()}

    @staticmethod
    def parse_queries(lines: Iterable[str], source: str = "<queries>") -> List[QueryInstance]:
        """Разбирает строки 'instance_id\\tentity_id\\tdirection\\tdescription[\\ttarget_ids]'"""
        queries = []
        for number, line in _content_lines(lines):
            parts = line.split("\t")
            try:
                if len(parts) not in (4, 5):
                    raise ValueError("ожидалось 4 или 5 полей")
                targets = None
                if len(parts) == 5 and parts[4]:
                    targets = [int(t) for t in parts[4].split(",")]
                queries.append(QueryInstance(int(parts[0]), int(parts[1]), Direction(int(parts[2])),
                                             parts[3], targets))
            except ValueError as e:
                raise ValidationError(f"{source}:{number}: ошибка разбора ({e})", line=number)
        return queries

    @staticmethod
    def parse_splits(lines: Iterable[str], source: str = "<splits>") -> SplitAssignment:
        """Разбирает строки '<tcm_id>\\t<wm_id>\\t<train|val|test>'"""
        labels = {}
        for number, line in _content_lines(lines):
            parts = line.split("\t")
            try:
                if len(parts) != 3:
                    raise ValueError("ожидалось три поля")
                labels[(int(parts[0]), int(parts[1]))] = Split(parts[2])
            except ValueError as e:
                raise ValidationError(f"{source}:{number}: ошибка разбора ({e})", line=number)
        return SplitAssignment(labels)

    @staticmethod
    def parse_embedding_text(lines: Iterable[str], source: str = "<emb.txt>") -> EmbeddingTable:
        """
        Разбирает текстовую таблицу эмбеддингов

        Args:
            lines: Заголовок 'dim <d>' и строки '<id> <x1> ... <xd>'
        """
        dim = None
        ids: List[int] = []
        rows: List[List[float]] = []
        for number, line in _content_lines(lines):
            parts = line.split()
            try:
                if dim is None:
                    if len(parts) != 2 or parts[0] != "dim":
                        raise ValidationError(f"{source}:{number}: ожидался заголовок 'dim <d>'", line=number)
                    dim = int(parts[1])
                    if dim < 1:
                        raise ValueError(f"размерность {dim} должна быть положительной")
                    continue
                if len(parts) - 1 != dim:
                    raise DimensionMismatchError(
                        f"{source}:{number}: строка {parts[0]} длины {len(parts) - 1}, объявлено dim={dim}",
                        line=number, expected=dim)
                ids.append(int(parts[0]))
                rows.append([float(x) for x in parts[1:]])
            except ValueError as e:
                raise ValidationError(f"{source}:{number}: ошибка разбора ({e})", line=number)
        if dim is None:
            raise ValidationError(f"{source}: пустая таблица эмбеддингов")
        matrix = np.array(rows, dtype=np.float64).reshape(len(ids), dim)
        return EmbeddingTable(dim, ids, matrix)

    @staticmethod
    def parse_int_list(text: str) -> List[int]:
        """Разбирает список '1,10,100'"""
        try:
            return [int(part) for part in text.split(",") if part.strip()]
        except ValueError:
            raise InvalidArgumentError(f"Ожидался список целых чисел через запятую: '{text}'", text=text)

    @staticmethod
    def parse_float_list(text: str) -> List[float]:
        """Разбирает список '0.6,0.2,0.2'"""
        try:
            return [float(part) for part in text.split(",") if part.strip()]
        except ValueError:
            raise InvalidArgumentError(f"Ожидался список чисел через запятую: '{text}'", text=text)

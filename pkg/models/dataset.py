"""
Модели набора данных: таблицы эмбеддингов, экземпляры запросов, разбиение и сборка DatasetBundle
"""
from enum import Enum
from typing import Dict, FrozenSet, Iterable, List, Optional, Sequence, Set, Tuple

import numpy as np

from models.errors import (DimensionMismatchError, DirectionMismatchError, MissingEmbeddingError,
                           UnknownIdError, ValidationError)
from models.knowledge_graph import AnchorSet, Direction, Graph, Side


class EmbeddingTable:
    """Таблица плотных векторов фиксированной размерности, ключ - id сущности или запроса"""

    def __init__(self, dim: int, ids: Sequence[int], matrix: np.ndarray):
        """
        Args:
            dim: Размерность векторов
            ids: Ключи строк в порядке хранения
            matrix: Матрица (len(ids) x dim), float64
        """
        self.dim = int(dim)
        self.ids = np.asarray(ids, dtype=np.int64)
        self.matrix = np.asarray(matrix, dtype=np.float64)
        if self.matrix.ndim != 2 or self.matrix.shape != (len(self.ids), self.dim):
            raise DimensionMismatchError(
                f"Матрица формы {self.matrix.shape} не согласуется с dim={self.dim} и {len(self.ids)} строками",
                expected=self.dim, shape=self.matrix.shape)
        self._index = {int(key): row for row, key in enumerate(self.ids)}

    def validate(self, name: str = "embeddings") -> None:
        if self.dim <= 0:
            raise DimensionMismatchError(f"{name}: размерность должна быть положительной", expected=self.dim)
        if len(self._index) != len(self.ids):
            raise ValidationError(f"{name}: повторяющиеся ключи строк")
        if not np.all(np.isfinite(self.matrix)):
            bad = int(self.ids[np.where(~np.isfinite(self.matrix))[0][0]])
            raise ValidationError(f"{name}: нечисловые компоненты в строке {bad}", entity_id=bad)

    def __contains__(self, key: int) -> bool:
        return int(key) in self._index

    def __len__(self) -> int:
        return len(self.ids)

    def row(self, key: int) -> np.ndarray:
        return self.matrix[self._index[int(key)]]

    def rows(self, keys: Iterable[int]) -> np.ndarray:
        """Матрица строк в порядке keys"""
        return self.matrix[[self._index[int(k)] for k in keys]]

    def __eq__(self, other: object) -> bool:
        return (isinstance(other, EmbeddingTable) and self.dim == other.dim
                and np.array_equal(self.ids, other.ids) and np.array_equal(self.matrix, other.matrix))


class QueryInstance:
    """Экземпляр запроса ξ_v = (v, d_v): сущность-источник и одно её описание"""

    __slots__ = ("instance_id", "entity_id", "direction", "description", "target_ids")

    def __init__(self, instance_id: int, entity_id: int, direction: Direction, description: str,
                 target_ids: Optional[Iterable[int]] = None):
        """
        Args:
            instance_id: Ключ запроса, он же ключ строки в таблице эмбеддингов запросов
            entity_id: Сущность-источник
            direction: Направление выравнивания
            description: Текст описания
            target_ids: Подмножество соответствий, к которым относится именно это описание (None - весь пул)
        """
        self.instance_id = int(instance_id)
        self.entity_id = int(entity_id)
        self.direction = Direction(direction)
        self.description = description
        self.target_ids: Optional[FrozenSet[int]] = (
            None if target_ids is None else frozenset(int(t) for t in target_ids))

    @property
    def scoped(self) -> bool:
        return self.target_ids is not None

    def _key(self) -> tuple:
        targets = None if self.target_ids is None else tuple(sorted(self.target_ids))
        return (self.instance_id, self.entity_id, int(self.direction), self.description, targets)

    def __eq__(self, other: object) -> bool:
        return isinstance(other, QueryInstance) and self._key() == other._key()

    def __hash__(self) -> int:
        return hash(self._key())

    def __repr__(self) -> str:
        return f"QueryInstance({self.instance_id}, entity={self.entity_id}, {self.direction.label})"


class Split(Enum):
    TRAIN = "train"
    VAL = "val"
    TEST = "test"


class SplitAssignment:
    """Разбиение опорных пар на train/val/test на уровне пар"""

    def __init__(self, labels: Dict[Tuple[int, int], Split]):
        self.labels: Dict[Tuple[int, int], Split] = {(int(t), int(w)): Split(s) for (t, w), s in labels.items()}

    def pairs(self, split: Split) -> List[Tuple[int, int]]:
        """Пары выбранной части в порядке возрастания"""
        return sorted(pair for pair, label in self.labels.items() if label is split)

    def counts(self) -> Tuple[int, int, int]:
        return tuple(len(self.pairs(s)) for s in (Split.TRAIN, Split.VAL, Split.TEST))

    def __getitem__(self, pair: Tuple[int, int]) -> Split:
        return self.labels[pair]

    def __eq__(self, other: object) -> bool:
        return isinstance(other, SplitAssignment) and self.labels == other.labels


class DatasetBundle:
    """Полный набор данных: два графа, соответствия, три таблицы эмбеддингов, запросы, совместимость типов"""

    def __init__(self, tcm_graph: Graph, wm_graph: Graph, anchors: AnchorSet,
                 query_embeddings: EmbeddingTable, tcm_embeddings: EmbeddingTable,
                 wm_embeddings: EmbeddingTable, queries: List[QueryInstance],
                 compatibility: Dict[str, FrozenSet[str]], split: Optional[SplitAssignment] = None):
        self.tcm_graph = tcm_graph
        self.wm_graph = wm_graph
        self.anchors = anchors
        if anchors.tcm_ids is None:
            self.anchors = AnchorSet(anchors.pairs, tcm_graph.ids.tolist(), wm_graph.ids.tolist())
        self.query_embeddings = query_embeddings
        self.tcm_embeddings = tcm_embeddings
        self.wm_embeddings = wm_embeddings
        self.queries = list(queries)
        self.compatibility = {src: frozenset(tgts) for src, tgts in compatibility.items()}
        self.split = split
        self._query_index = {q.instance_id: q for q in self.queries}

    # ------------------------------------------------------------------ доступ

    def graph(self, side: Side) -> Graph:
        return self.tcm_graph if side is Side.TCM else self.wm_graph

    def embeddings(self, side: Side) -> EmbeddingTable:
        return self.tcm_embeddings if side is Side.TCM else self.wm_embeddings

    def query(self, instance_id: int) -> QueryInstance:
        return self._query_index[instance_id]

    def queries_for(self, direction: Direction) -> List[QueryInstance]:
        return [q for q in self.queries if q.direction == direction]

    def compatible_types(self, type_tag: str) -> FrozenSet[str]:
        if type_tag not in self.compatibility:
            raise ValidationError(f"Тип '{type_tag}' отсутствует в таблице совместимости", type_tag=type_tag)
        return self.compatibility[type_tag]

    def with_split(self, split: SplitAssignment) -> "DatasetBundle":
        return DatasetBundle(self.tcm_graph, self.wm_graph, self.anchors, self.query_embeddings,
                             self.tcm_embeddings, self.wm_embeddings, self.queries, self.compatibility, split)

    def split_pairs(self, split: Split) -> List[Tuple[int, int]]:
        if self.split is None:
            raise ValidationError("В наборе данных нет разбиения на train/val/test")
        return self.split.pairs(split)

    def query_pool(self, query: QueryInstance, pairs: Optional[Set[Tuple[int, int]]] = None) -> Set[int]:
        """
        Пул позитивов запроса: P_s(v), суженный до target_ids описания и, при необходимости, до набора пар

        Args:
            query: Экземпляр запроса
            pairs: Допустимые пары (tcm_id, wm_id); None - все соответствия
        """
        pool = set(self.anchors.pool(query.entity_id, query.direction))
        if query.target_ids is not None:
            pool &= query.target_ids
        if pairs is not None:
            pool = {u for u in pool
                    if self.anchors.oriented((query.entity_id, u), query.direction) in pairs}
        return pool

    # ------------------------------------------------------------------ проверка

    def validate(self) -> None:
        """Проверяет все инварианты набора данных; ошибки различаются по типу"""
        self.tcm_graph.validate()
        self.wm_graph.validate()
        self.anchors.validate()

        for side in (Side.TCM, Side.WM):
            graph, table = self.graph(side), self.embeddings(side)
            table.validate(f"эмбеддинги {side.value}")
            for key in table.ids:
                if int(key) not in graph:
                    raise UnknownIdError(f"Строка эмбеддинга {side.value} для неизвестной сущности {int(key)}",
                                         entity_id=int(key), side=side)
            for entity in graph.entities:
                if entity.id not in table:
                    raise MissingEmbeddingError(f"Нет эмбеддинга {side.value} для сущности {entity.id}",
                                                entity_id=entity.id, side=side)

        self.query_embeddings.validate("эмбеддинги запросов")
        if len(self._query_index) != len(self.queries):
            raise ValidationError("Повторяющиеся id запросов")
        for query in self.queries:
            source = self.graph(query.direction.source)
            if query.entity_id not in source:
                if query.entity_id in self.graph(query.direction.target):
                    raise DirectionMismatchError(
                        f"Запрос {query.instance_id}: сущность {query.entity_id} не на стороне-источнике",
                        entity_id=query.entity_id)
                raise UnknownIdError(f"Запрос {query.instance_id}: неизвестная сущность {query.entity_id}",
                                     entity_id=query.entity_id)
            if query.instance_id not in self.query_embeddings:
                raise MissingEmbeddingError(f"Нет эмбеддинга запроса {query.instance_id}",
                                            entity_id=query.instance_id)
            if query.target_ids is not None:
                extra = query.target_ids - self.anchors.pool(query.entity_id, query.direction)
                if extra:
                    raise ValidationError(
                        f"Запрос {query.instance_id}: цели {sorted(extra)} не входят в пул соответствий",
                        entity_id=query.entity_id)

        known_types = self.tcm_graph.type_tags() | self.wm_graph.type_tags()
        for src, tgts in self.compatibility.items():
            unknown = ({src} | set(tgts)) - known_types
            if unknown:
                raise ValidationError(f"Таблица совместимости ссылается на неизвестные типы {sorted(unknown)}",
                                      type_tag=sorted(unknown)[0])

        if self.split is not None:
            if set(self.split.labels) != set(self.anchors.pairs):
                raise ValidationError("Разбиение не совпадает с набором опорных пар")

    def __eq__(self, other: object) -> bool:
        return (isinstance(other, DatasetBundle)
                and self.tcm_graph == other.tcm_graph and self.wm_graph == other.wm_graph
                and self.anchors == other.anchors
                and self.query_embeddings == other.query_embeddings
                and self.tcm_embeddings == other.tcm_embeddings
                and self.wm_embeddings == other.wm_embeddings
                and self.queries == other.queries
                and self.compatibility == other.compatibility
                and self.split == other.split)


class TrainBatch:
    """Пакет обучения одного направления: запросы с выбранными позитивами и негативами"""

    def __init__(self, direction: Direction, queries: Sequence[QueryInstance],
                 positives: Sequence[Sequence[int]], negatives: Sequence[Sequence[int]],
                 reduced: int = 0):
        """
        Args:
            direction: Направление s
            queries: Экземпляры запросов пакета
            positives: Для каждого запроса до P позитивов (первый - истинная цель примера)
            negatives: Для каждого запроса K негативов вне глобального пула
            reduced: Число запросов, для которых K пришлось уменьшить
        """
        self.direction = Direction(direction)
        self.queries = list(queries)
        self.positives = [[int(u) for u in pos] for pos in positives]
        self.negatives = [[int(u) for u in neg] for neg in negatives]
        self.reduced = int(reduced)

    def __len__(self) -> int:
        return len(self.queries)

    def __iter__(self):
        return iter(zip(self.queries, self.positives, self.negatives))

"""
Модели данных двух графов знаний (ТКМ и западной медицины) и соответствий между ними
"""
from enum import Enum, IntEnum
from typing import Dict, Iterable, List, Optional, Set, Tuple

import numpy as np
import scipy.sparse as sp

from models.errors import ValidationError


class Side(Enum):
    TCM = "TCM"
    WM = "WM"

    @property
    def other(self) -> "Side":
        return Side.WM if self is Side.TCM else Side.TCM


class Direction(IntEnum):
    """Индикатор направления выравнивания s: 0 = TCM→WM, 1 = WM→TCM"""

    TCM_TO_WM = 0
    WM_TO_TCM = 1

    @property
    def source(self) -> Side:
        return Side.TCM if self == Direction.TCM_TO_WM else Side.WM

    @property
    def target(self) -> Side:
        return self.source.other

    @property
    def label(self) -> str:
        return f"{self.source.value}→{self.target.value}"

    @property
    def key(self) -> str:
        return "tcm2wm" if self == Direction.TCM_TO_WM else "wm2tcm"

    @classmethod
    def from_source(cls, side: Side) -> "Direction":
        return cls.TCM_TO_WM if side is Side.TCM else cls.WM_TO_TCM


class Entity:
    """Сущность одного из графов с текстовым описанием"""

    __slots__ = ("id", "side", "type_tag", "name", "description")

    def __init__(self, entity_id: int, side: Side, type_tag: str, name: str, description: str):
        """
        Args:
            entity_id: Стабильный целочисленный идентификатор (уникален в пределах стороны)
            side: Сторона (граф), которой принадлежит сущность
            type_tag: Короткая категория ("symptom", "herb", "molecule", ...)
            name: Название
            description: Название + определение; из него строятся запросы
        """
        self.id = int(entity_id)
        self.side = side
        self.type_tag = type_tag
        self.name = name
        self.description = description

    def validate(self) -> None:
        if not self.type_tag or not self.type_tag.strip():
            raise ValidationError(f"Сущность {self.side.value}:{self.id} без типа", entity_id=self.id)
        if not self.description or not self.description.strip():
            raise ValidationError(f"Сущность {self.side.value}:{self.id} без описания", entity_id=self.id)

    def _key(self) -> tuple:
        return (self.id, self.side, self.type_tag, self.name, self.description)

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Entity) and self._key() == other._key()

    def __hash__(self) -> int:
        return hash(self._key())

    def __repr__(self) -> str:
        return f"Entity({self.side.value}:{self.id}, {self.type_tag!r}, {self.name!r})"


class Graph:
    """Неориентированный типизированный граф одной стороны"""

    def __init__(self, side: Side, entities: Iterable[Entity], edges: Iterable[Tuple[int, int]] = ()):
        self.side = side
        self.entities: List[Entity] = list(entities)
        # Рёбра хранятся в каноническом виде (меньший id, больший id)
        self.edges: List[Tuple[int, int]] = [(min(int(a), int(b)), max(int(a), int(b))) for a, b in edges]
        self._index: Dict[int, int] = {}
        for position, entity in enumerate(self.entities):
            self._index.setdefault(entity.id, position)
        self._neighbors: Optional[Dict[int, Set[int]]] = None

    def validate(self) -> None:
        """Проверяет инварианты графа; ошибки называют конкретную сущность или ребро"""
        seen: Set[int] = set()
        for entity in self.entities:
            if entity.side is not self.side:
                raise ValidationError(
                    f"Сущность {entity.id} стороны {entity.side.value} в графе {self.side.value}",
                    entity_id=entity.id)
            if entity.id in seen:
                raise ValidationError(f"Повторный id {entity.id} в графе {self.side.value}", entity_id=entity.id)
            seen.add(entity.id)
            entity.validate()

        seen_edges: Set[Tuple[int, int]] = set()
        for edge in self.edges:
            a, b = edge
            if a not in self._index or b not in self._index:
                raise ValidationError(
                    f"Ребро {edge} графа {self.side.value} ссылается на несуществующую сущность", edge=edge)
            if a == b:
                raise ValidationError(f"Петля {edge} во входном графе {self.side.value}", edge=edge)
            if edge in seen_edges:
                raise ValidationError(f"Повторное ребро {edge} в графе {self.side.value}", edge=edge)
            seen_edges.add(edge)

    def __len__(self) -> int:
        return len(self.entities)

    def __contains__(self, entity_id: int) -> bool:
        return entity_id in self._index

    @property
    def ids(self) -> np.ndarray:
        return np.array([entity.id for entity in self.entities], dtype=np.int64)

    def index_of(self, entity_id: int) -> int:
        return self._index[entity_id]

    def entity(self, entity_id: int) -> Entity:
        return self.entities[self._index[entity_id]]

    def type_tags(self) -> Set[str]:
        return {entity.type_tag for entity in self.entities}

    def neighbors(self, entity_id: int) -> Set[int]:
        """Соседи сущности внутри графа"""
        if self._neighbors is None:
            table: Dict[int, Set[int]] = {entity.id: set() for entity in self.entities}
            for a, b in self.edges:
                table.setdefault(a, set()).add(b)
                table.setdefault(b, set()).add(a)
            self._neighbors = table
        return self._neighbors.get(entity_id, set())

    def __eq__(self, other: object) -> bool:
        return (isinstance(other, Graph) and self.side is other.side
                and self.entities == other.entities and self.edges == other.edges)

    def __repr__(self) -> str:
        return f"Graph({self.side.value}, entities={len(self.entities)}, edges={len(self.edges)})"


class AnchorSet:
    """Набор опорных соответствий (tcm_id, wm_id) и пулы позитивов для обоих направлений"""

    def __init__(self, pairs: Iterable[Tuple[int, int]],
                 tcm_ids: Optional[Iterable[int]] = None, wm_ids: Optional[Iterable[int]] = None):
        """
        Args:
            pairs: Пары (tcm_id, wm_id)
            tcm_ids, wm_ids: Множества id сторон; нужны для проверки направления запроса
        """
        self.pairs: List[Tuple[int, int]] = [(int(t), int(w)) for t, w in pairs]
        self.tcm_ids = None if tcm_ids is None else frozenset(int(i) for i in tcm_ids)
        self.wm_ids = None if wm_ids is None else frozenset(int(i) for i in wm_ids)

        pools: Dict[Direction, Dict[int, Set[int]]] = {Direction.TCM_TO_WM: {}, Direction.WM_TO_TCM: {}}
        for tcm_id, wm_id in self.pairs:
            pools[Direction.TCM_TO_WM].setdefault(tcm_id, set()).add(wm_id)
            pools[Direction.WM_TO_TCM].setdefault(wm_id, set()).add(tcm_id)
        self._pools = {s: {v: frozenset(u) for v, u in pool.items()} for s, pool in pools.items()}

    def validate(self) -> None:
        seen: Set[Tuple[int, int]] = set()
        for pair in self.pairs:
            if pair in seen:
                raise ValidationError(f"Повторная опорная пара {pair}", pair=pair)
            seen.add(pair)
            if self.tcm_ids is not None and pair[0] not in self.tcm_ids:
                raise ValidationError(f"Пара {pair}: неизвестная сущность ТКМ {pair[0]}", pair=pair)
            if self.wm_ids is not None and pair[1] not in self.wm_ids:
                raise ValidationError(f"Пара {pair}: неизвестная сущность ЗМ {pair[1]}", pair=pair)

    def side_ids(self, side: Side) -> Optional[frozenset]:
        return self.tcm_ids if side is Side.TCM else self.wm_ids

    def pool(self, entity_id: int, direction: Direction) -> frozenset:
        """Пул P_s(v) без проверки стороны"""
        return self._pools[Direction(direction)].get(entity_id, frozenset())

    def sources(self, direction: Direction) -> List[int]:
        """Сущности-источники с непустым пулом, по возрастанию id"""
        return sorted(self._pools[Direction(direction)])

    def oriented(self, pair: Tuple[int, int], direction: Direction) -> Tuple[int, int]:
        """Пара (источник, цель) для направления s"""
        return pair if Direction(direction) == Direction.TCM_TO_WM else (pair[1], pair[0])

    def __len__(self) -> int:
        return len(self.pairs)

    def __iter__(self):
        return iter(self.pairs)

    def __eq__(self, other: object) -> bool:
        return isinstance(other, AnchorSet) and self.pairs == other.pairs


class NormalizedAdjacency:
    """Симметрично нормированная матрица смежности D^{-1/2}(A+I)D^{-1/2} одного графа"""

    def __init__(self, matrix: sp.csr_matrix, side: Side):
        self.matrix = matrix
        self.side = side

    @property
    def size(self) -> int:
        return self.matrix.shape[0]

    def dense(self) -> np.ndarray:
        return self.matrix.toarray()

    def is_symmetric(self, tol: float = 1e-12) -> bool:
        diff = self.matrix - self.matrix.T
        return diff.nnz == 0 or float(np.abs(diff.data).max()) <= tol

    def __matmul__(self, other: np.ndarray) -> np.ndarray:
        return np.asarray(self.matrix @ other)

"""
Модуль операций над графами: нормированная смежность, пулы позитивов, ограничение кандидатов
"""
import logging
from typing import List

import numpy as np
import scipy.sparse as sp

from models.dataset import DatasetBundle
from models.errors import DirectionMismatchError, InvalidArgumentError
from models.knowledge_graph import AnchorSet, Direction, Graph, NormalizedAdjacency

logger = logging.getLogger(__name__)

FULL = "full"
TYPE_CONSTRAINED = "type"


def build_adjacency(graph: Graph) -> NormalizedAdjacency:
    """
    Строит D^{-1/2}(A+I)D^{-1/2} по неориентированным рёбрам графа

    Args:
        graph: Граф одной стороны (проверяется перед построением)

    Returns:
        Разреженная симметричная нормированная матрица в порядке сущностей графа
    """
    graph.validate()
    n = len(graph)
    rows = [graph.index_of(a) for a, _ in graph.edges]
    cols = [graph.index_of(b) for _, b in graph.edges]
    data = np.ones(len(rows), dtype=np.float64)
    adjacency = sp.coo_matrix((data, (rows, cols)), shape=(n, n))
    adjacency = adjacency + adjacency.T + sp.identity(n, dtype=np.float64, format="coo")

    degree = np.asarray(adjacency.sum(axis=1)).ravel()
    inv_sqrt = sp.diags(1.0 / np.sqrt(degree))
    normalized = (inv_sqrt @ adjacency @ inv_sqrt).tocsr()
    normalized.sort_indices()
    return NormalizedAdjacency(normalized, graph.side)


def positive_pool(anchors: AnchorSet, entity_id: int, direction: Direction) -> frozenset:
    """
    Пул позитивов P_s(v): все соответствия сущности v в противоположном графе

    Raises:
        DirectionMismatchError: Если v не принадлежит стороне-источнику направления s
    """
    direction = Direction(direction)
    source_ids = anchors.side_ids(direction.source)
    if source_ids is not None and entity_id not in source_ids:
        raise DirectionMismatchError(
            f"Сущность {entity_id} не принадлежит стороне {direction.source.value} (направление {direction.label})",
            entity_id=entity_id, direction=int(direction))
    return anchors.pool(entity_id, direction)


def restrict_candidates(bundle: DatasetBundle, direction: Direction, query_type: str, mode: str) -> List[int]:
    """
    Кандидаты целевого графа для запроса

    Args:
        bundle: Набор данных (граф цели и таблица совместимости типов)
        direction: Направление выравнивания
        query_type: Тип сущности-источника
        mode: "full" - все сущности цели, "type" - только совместимые по типу

    Returns:
        Список id кандидатов в порядке графа
    """
    target = bundle.graph(Direction(direction).target)
    if mode == FULL:
        return [entity.id for entity in target.entities]
    if mode != TYPE_CONSTRAINED:
        raise InvalidArgumentError(f"Неизвестный режим поиска '{mode}'", mode=mode)
    allowed = bundle.compatible_types(query_type)
    return [entity.id for entity in target.entities if entity.type_tag in allowed]

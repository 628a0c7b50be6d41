"""
Общие фикстуры тестов: небольшие наборы данных, собранные вручную, и синтетический набор пресета tiny
"""
from typing import Dict, Optional, Sequence, Tuple

import numpy as np
import pytest

from models.configs import resolve_preset
from models.dataset import DatasetBundle, EmbeddingTable, QueryInstance, Split, SplitAssignment
from models.knowledge_graph import AnchorSet, Direction, Entity, Graph, Side
from modules.synthetic_module import generate_synthetic

WM_OFFSET = 100


def build_bundle(tcm_vectors: np.ndarray, wm_vectors: np.ndarray, pairs: Sequence[Tuple[int, int]],
                 tcm_types: Optional[Sequence[str]] = None, wm_types: Optional[Sequence[str]] = None,
                 tcm_edges: Sequence[Tuple[int, int]] = (), wm_edges: Sequence[Tuple[int, int]] = (),
                 compatibility: Optional[Dict[str, frozenset]] = None,
                 label: Optional[Split] = Split.TEST) -> DatasetBundle:
    """
    Набор из явных векторов: id ТКМ 0..n-1, id ЗМ 100..100+m-1 (pairs задаются в этих id)

    Запрос каждой сущности с соответствиями - её собственный вектор, поэтому размерности сторон должны совпадать
    """
    tcm_vectors = np.asarray(tcm_vectors, dtype=np.float64)
    wm_vectors = np.asarray(wm_vectors, dtype=np.float64)
    tcm_types = tcm_types or ["symptom"] * len(tcm_vectors)
    wm_types = wm_types or ["symptom"] * len(wm_vectors)
    tcm_ids = list(range(len(tcm_vectors)))
    wm_ids = [WM_OFFSET + i for i in range(len(wm_vectors))]
    tcm = Graph(Side.TCM, [Entity(i, Side.TCM, t, f"t{i}", f"t{i}: tcm") for i, t in zip(tcm_ids, tcm_types)],
                tcm_edges)
    wm = Graph(Side.WM, [Entity(i, Side.WM, t, f"w{i}", f"w{i}: wm") for i, t in zip(wm_ids, wm_types)], wm_edges)
    anchors = AnchorSet(pairs, tcm_ids, wm_ids)

    queries, rows = [], []
    for direction, ids, vectors in ((Direction.TCM_TO_WM, tcm_ids, tcm_vectors),
                                    (Direction.WM_TO_TCM, wm_ids, wm_vectors)):
        for position, entity_id in enumerate(ids):
            if anchors.pool(entity_id, direction):
                queries.append(QueryInstance(len(queries), entity_id, direction, f"q{len(queries)}"))
                rows.append(vectors[position])
    query_table = EmbeddingTable(tcm_vectors.shape[1], range(len(queries)), np.array(rows))
    if compatibility is None:
        types = set(tcm_types) | set(wm_types)
        compatibility = {t: frozenset(types) for t in types}
    split = None if label is None else SplitAssignment({pair: label for pair in anchors.pairs})
    bundle = DatasetBundle(tcm, wm, anchors, query_table,
                           EmbeddingTable(tcm_vectors.shape[1], tcm_ids, tcm_vectors),
                           EmbeddingTable(wm_vectors.shape[1], wm_ids, wm_vectors),
                           queries, compatibility, split)
    bundle.validate()
    return bundle


class FixedScorer:
    """Scorer с заданной таблицей оценок по id цели"""

    def __init__(self, bundle: DatasetBundle, table: Dict[int, float]):
        self.bundle = bundle
        self.table = table

    def scores(self, query: QueryInstance):
        ids = self.bundle.graph(query.direction.target).ids
        return ids, np.array([self.table.get(int(i), 0.0) for i in ids])


@pytest.fixture
def tiny_bundle() -> DatasetBundle:
    spec, _, _ = resolve_preset("tiny")
    return generate_synthetic(spec, seed=0)


@pytest.fixture
def identity_bundle() -> DatasetBundle:
    """Шесть пар один-к-одному, векторы ЗМ совпадают с векторами ТКМ"""
    rng = np.random.default_rng(3)
    vectors = rng.standard_normal((6, 4))
    return build_bundle(vectors, vectors.copy(), [(i, WM_OFFSET + i) for i in range(6)])

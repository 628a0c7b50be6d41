"""
Модуль генерации синтетического набора данных с заложенным выравниванием
"""
import logging
from typing import Dict, List, Optional, Set, Tuple

import numpy as np

from models.configs import SyntheticSpec
from models.dataset import DatasetBundle, EmbeddingTable, QueryInstance, Split, SplitAssignment
from models.errors import SpecError
from models.knowledge_graph import AnchorSet, Direction, Entity, Graph, Side
from modules.random_module import make_rng
from modules.split_module import DEFAULT_RATIOS, split_anchors

logger = logging.getLogger(__name__)

# Размеры кластеров многие-ко-многим (число сущностей ТКМ, число сущностей ЗМ)
MANY_TO_MANY_PATTERNS = ((1, 2), (2, 1), (2, 2), (1, 3))


def _unit_rows(matrix: np.ndarray) -> np.ndarray:
    return matrix / np.linalg.norm(matrix, axis=1, keepdims=True)


def _view_map(rng: np.random.Generator, dim: int, latent_dim: int, view: str) -> np.ndarray:
    """Отображение латентного пространства в пространство эмбеддингов (dim x latent_dim)"""
    if view == "identity":
        return np.eye(dim, latent_dim)
    q, _ = np.linalg.qr(rng.standard_normal((dim, latent_dim)))
    return q


def _knn_edges(latents: np.ndarray, ids: List[int], degree: int) -> List[Tuple[int, int]]:
    """Рёбра к degree ближайшим по косинусу соседям внутри одной стороны"""
    if degree <= 0 or len(ids) < 2:
        return []
    similarity = latents @ latents.T
    np.fill_diagonal(similarity, -np.inf)
    edges: Set[Tuple[int, int]] = set()
    for row in range(len(ids)):
        order = np.lexsort((np.arange(len(ids)), -similarity[row]))
        for col in order[:min(degree, len(ids) - 1)]:
            a, b = ids[row], ids[col]
            edges.add((min(a, b), max(a, b)))
    return sorted(edges)


def plan_clusters(spec: SyntheticSpec) -> List[Tuple[int, int]]:
    """Размеры кластеров соответствий в порядке генерации"""
    n_many = int(round(spec.many_to_many * spec.n_clusters))
    sizes = [(1, 1)] * (spec.n_clusters - n_many)
    sizes += [MANY_TO_MANY_PATTERNS[i % len(MANY_TO_MANY_PATTERNS)] for i in range(n_many)]
    return sizes


def generate_synthetic(spec: SyntheticSpec, seed: int = 0,
                       ratios: Optional[Tuple[float, float, float]] = DEFAULT_RATIOS) -> DatasetBundle:
    """
    Генерирует набор данных, в котором соответствия - зашумлённые проекции общих латентных векторов

    Args:
        spec: Параметры генератора
        seed: Зерно
        ratios: Доли разбиения пар; None - без разбиения

    Returns:
        Проверенный DatasetBundle

    Raises:
        SpecError: Если требуемых сущностей больше, чем объявлено
    """
    spec.validate()
    clusters = plan_clusters(spec)
    need_tcm = sum(a for a, _ in clusters) + spec.context_split
    need_wm = sum(b for _, b in clusters) + spec.context_split * spec.descriptions_per_split
    if need_tcm > spec.n_tcm or need_wm > spec.n_wm:
        raise SpecError(
            f"Невыполнимая спецификация: нужно {need_tcm} сущностей ТКМ и {need_wm} ЗМ, "
            f"объявлено {spec.n_tcm} и {spec.n_wm}", need_tcm=need_tcm, need_wm=need_wm)

    rng = make_rng(seed, "gen")
    latent_dim = spec.latent_dim

    def fresh(count: int) -> np.ndarray:
        return _unit_rows(rng.standard_normal((count, latent_dim)))

    families = list(spec.families)
    tcm_latent = np.zeros((spec.n_tcm, latent_dim))
    wm_latent = np.zeros((spec.n_wm, latent_dim))
    tcm_family = np.zeros(spec.n_tcm, dtype=int)
    wm_family = np.zeros(spec.n_wm, dtype=int)
    pairs: List[Tuple[int, int]] = []
    # Описания с собственными целями: позиция ТКМ -> [(латентный вектор, позиция ЗМ)]
    split_contexts: Dict[int, List[Tuple[np.ndarray, int]]] = {}

    t_next, w_next = 0, 0
    for a, b in clusters:
        family = int(rng.integers(len(families)))
        latent = fresh(1)[0]
        tcm_slots = list(range(t_next, t_next + a))
        wm_slots = list(range(w_next, w_next + b))
        t_next, w_next = t_next + a, w_next + b
        for t in tcm_slots:
            tcm_latent[t], tcm_family[t] = latent, family
        for w in wm_slots:
            wm_latent[w], wm_family[w] = latent, family
        pairs += [(t, w) for t in tcm_slots for w in wm_slots]

    for _ in range(spec.context_split):
        family = int(rng.integers(len(families)))
        latents = fresh(spec.descriptions_per_split)
        t = t_next
        t_next += 1
        tcm_latent[t] = _unit_rows(latents.mean(axis=0, keepdims=True))[0]
        tcm_family[t] = family
        split_contexts[t] = []
        for latent in latents:
            wm_latent[w_next], wm_family[w_next] = latent, family
            split_contexts[t].append((latent, w_next))
            pairs.append((t, w_next))
            w_next += 1

    tcm_latent[t_next:] = fresh(spec.n_tcm - t_next)
    wm_latent[w_next:] = fresh(spec.n_wm - w_next)
    tcm_family[t_next:] = rng.integers(len(families), size=spec.n_tcm - t_next)
    wm_family[w_next:] = rng.integers(len(families), size=spec.n_wm - w_next)

    # Перемешиваем идентификаторы, чтобы опорные сущности не шли подряд
    tcm_ids = rng.permutation(spec.n_tcm)
    wm_ids = spec.n_tcm + rng.permutation(spec.n_wm)

    def build_graph(side: Side, ids: np.ndarray, family_of: np.ndarray, latents: np.ndarray) -> Graph:
        column = 0 if side is Side.TCM else 1
        order = np.argsort(ids)
        entities = []
        for slot in order:
            type_tag = families[family_of[slot]][column]
            name = f"{side.value.lower()}_{type_tag}_{int(ids[slot])}"
            entities.append(Entity(int(ids[slot]), side, type_tag, name,
                                   f"{name}: synthetic {type_tag} concept"))
        edges = _knn_edges(latents[order], [int(ids[s]) for s in order], spec.edge_degree)
        return Graph(side, entities, edges)

    tcm_graph = build_graph(Side.TCM, tcm_ids, tcm_family, tcm_latent)
    wm_graph = build_graph(Side.WM, wm_ids, wm_family, wm_latent)
    anchor_pairs = sorted((int(tcm_ids[t]), int(wm_ids[w])) for t, w in pairs)
    anchors = AnchorSet(anchor_pairs, tcm_graph.ids.tolist(), wm_graph.ids.tolist())

    maps = {name: _view_map(rng, dim, latent_dim, spec.view)
            for name, dim in (("query", spec.query_dim), ("tcm", spec.tcm_dim), ("wm", spec.wm_dim))}

    def view(name: str, latents: np.ndarray) -> np.ndarray:
        noise = rng.standard_normal(latents.shape) / np.sqrt(latent_dim)
        return (latents + spec.noise * noise) @ maps[name].T

    tcm_table = EmbeddingTable(spec.tcm_dim, tcm_ids[np.argsort(tcm_ids)],
                               view("tcm", tcm_latent[np.argsort(tcm_ids)]))
    wm_table = EmbeddingTable(spec.wm_dim, wm_ids[np.argsort(wm_ids)],
                              view("wm", wm_latent[np.argsort(wm_ids)]))

    # Запросы: по одному (или paraphrases) описанию на сущность с непустым пулом
    queries: List[QueryInstance] = []
    query_latents: List[np.ndarray] = []
    slot_of_tcm = {int(tcm_ids[t]): t for t in range(spec.n_tcm)}
    slot_of_wm = {int(wm_ids[w]): w for w in range(spec.n_wm)}
    for direction, graph, slot_of, latents in (
            (Direction.TCM_TO_WM, tcm_graph, slot_of_tcm, tcm_latent),
            (Direction.WM_TO_TCM, wm_graph, slot_of_wm, wm_latent)):
        for entity in graph.entities:
            if not anchors.pool(entity.id, direction):
                continue
            slot = slot_of[entity.id]
            if direction == Direction.TCM_TO_WM and slot in split_contexts:
                for k, (latent, w) in enumerate(split_contexts[slot]):
                    queries.append(QueryInstance(len(queries), entity.id, direction,
                                                 f"{entity.name}: context {k + 1}", [int(wm_ids[w])]))
                    query_latents.append(latent)
                continue
            for k in range(spec.paraphrases):
                queries.append(QueryInstance(len(queries), entity.id, direction,
                                             f"{entity.name}: description {k + 1}"))
                query_latents.append(latents[slot])

    query_table = EmbeddingTable(spec.query_dim, [q.instance_id for q in queries],
                                 view("query", np.array(query_latents).reshape(len(queries), latent_dim)))

    compatibility: Dict[str, Set[str]] = {}
    for tcm_type, wm_type in families:
        compatibility.setdefault(tcm_type, set()).add(wm_type)
        compatibility.setdefault(wm_type, set()).add(tcm_type)

    bundle = DatasetBundle(tcm_graph, wm_graph, anchors, query_table, tcm_table, wm_table, queries,
                           {k: frozenset(v) for k, v in compatibility.items()})
    if ratios is not None:
        bundle = bundle.with_split(split_anchors(anchors, ratios, seed))
    bundle.validate()
    logger.info("Сгенерирован набор: %d/%d сущностей, %d пар, %d запросов",
                spec.n_tcm, spec.n_wm, len(anchors), len(queries))
    return bundle


def tiny_fixture(seed: int = 0) -> DatasetBundle:
    """
    Крошечный набор для проверки градиентов и модульных тестов:
    по 4 сущности на сторону, размерности 5, одно семейство типов, все пары в обучающей части
    """
    spec = SyntheticSpec(n_tcm=4, n_wm=4, families=(("symptom", "symptom"),), n_clusters=4, many_to_many=0.0,
                         noise=0.1, latent_dim=5, query_dim=5, tcm_dim=5, wm_dim=5, edge_degree=1)
    bundle = generate_synthetic(spec, seed, ratios=None)
    return bundle.with_split(SplitAssignment({pair: Split.TRAIN for pair in bundle.anchors.pairs}))

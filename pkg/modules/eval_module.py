"""
Модуль оценки: групповое ранжирование с несколькими верными ответами, метрики Hit@K, Recall@K, MRR,
стратификация и перебор доли опорных пар
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from models.dataset import DatasetBundle, QueryInstance, Split, SplitAssignment
from models.errors import InvalidArgumentError, MissingEmbeddingError
from models.reports import MetricReport, RankedPrediction
from modules.graph_module import FULL, TYPE_CONSTRAINED, restrict_candidates
from modules.random_module import make_rng

logger = logging.getLogger(__name__)

DEFAULT_K_LIST = (1, 3, 5, 10, 20, 50, 100)
HERB_TYPES = ("herb", "molecule")


def headline_recall_k(bundle: DatasetBundle) -> int:
    """Recall@100 для наборов с травами и молекулами, иначе Recall@10"""
    types = bundle.tcm_graph.type_tags() | bundle.wm_graph.type_tags()
    return 100 if types & set(HERB_TYPES) else 10


def order_candidates(ids: np.ndarray, scores: np.ndarray) -> np.ndarray:
    """Индексы по убыванию оценки, ничьи - по возрастанию id"""
    return np.lexsort((np.asarray(ids), -np.asarray(scores)))


def rank_query(scorer, bundle: DatasetBundle, query: QueryInstance, mode: str = FULL,
               split: Split = Split.TEST, filtered: bool = False) -> RankedPrediction:
    """
    Ранжирует кандидатов одного запроса

    Args:
        scorer: Объект с методом scores(query) -> (id целей, оценки)
        bundle: Набор данных
        query: Экземпляр запроса
        mode: "full" или "type"
        split: Часть, пары которой образуют истинные ответы
        filtered: Убрать из кандидатов соответствия сущности из других частей

    Raises:
        MissingEmbeddingError: Если у запроса или сущности нет эмбеддинга
    """
    source = bundle.graph(query.direction.source)
    if query.instance_id not in bundle.query_embeddings:
        raise MissingEmbeddingError(f"Нет эмбеддинга запроса {query.instance_id}", entity_id=query.instance_id)
    if query.entity_id not in bundle.embeddings(query.direction.source):
        raise MissingEmbeddingError(f"Нет эмбеддинга сущности {query.entity_id}", entity_id=query.entity_id)

    pairs = set(bundle.split_pairs(split)) if bundle.split is not None else None
    ground_truth = bundle.query_pool(query, pairs)
    candidates = restrict_candidates(bundle, query.direction, source.entity(query.entity_id).type_tag, mode)
    if filtered:
        known = set(bundle.anchors.pool(query.entity_id, query.direction)) - ground_truth
        candidates = [u for u in candidates if u not in known]

    ids, scores = scorer.scores(query)
    keep = np.isin(ids, candidates)
    ids, scores = np.asarray(ids)[keep], np.asarray(scores)[keep]
    order = order_candidates(ids, scores)
    return RankedPrediction(query.instance_id, query.entity_id, query.direction, ids[order], scores[order],
                            ground_truth, query.scoped, mode)


def hit_at_k(prediction: RankedPrediction, k: int) -> int:
    """1, если хотя бы одна верная цель в top-k"""
    if k < 1:
        raise InvalidArgumentError(f"k должно быть не меньше 1: {k}", k=k)
    return int(bool(prediction.ground_truth.intersection(prediction.top(k))))


def recall_at_k(prediction: RankedPrediction, k: int) -> Optional[float]:
    """|GT ∩ top-k| / |GT|; None для запроса без истинных ответов (запрос исключается)"""
    if k < 1:
        raise InvalidArgumentError(f"k должно быть не меньше 1: {k}", k=k)
    if not prediction.ground_truth:
        return None
    return len(prediction.ground_truth.intersection(prediction.top(k))) / len(prediction.ground_truth)


def mrr(prediction: RankedPrediction) -> Optional[float]:
    """Обратный ранг лучшей верной цели; 0, если ни одной верной цели нет среди кандидатов"""
    if not prediction.ground_truth:
        return None
    best = prediction.best_rank()
    return 0.0 if best is None else 1.0 / best


def query_metrics(prediction: RankedPrediction, k_list: Sequence[int]) -> Dict[str, float]:
    metrics = {}
    for k in k_list:
        metrics[f"hit@{k}"] = float(hit_at_k(prediction, k))
        metrics[f"recall@{k}"] = recall_at_k(prediction, k)
    metrics["mrr"] = mrr(prediction)
    return metrics


def strata_of(prediction: RankedPrediction) -> List[str]:
    strata = ["overall", prediction.direction.key, "gt1" if len(prediction.ground_truth) == 1 else "gt>1"]
    if prediction.scoped:
        strata.append("ctx")
    return strata


def predict(bundle: DatasetBundle, scorer, split: Split = Split.TEST, mode: str = FULL,
            threads: int = 1, filtered: bool = False) -> List[RankedPrediction]:
    """
    Предсказания для всех запросов с непустыми истинными ответами в части split

    Порядок результатов совпадает с порядком запросов набора при любом числе потоков
    """
    if mode not in (FULL, TYPE_CONSTRAINED):
        raise InvalidArgumentError(f"Неизвестный режим поиска '{mode}'", mode=mode)
    pairs = set(bundle.split_pairs(split))
    queries = [q for q in bundle.queries if bundle.query_pool(q, pairs)]
    skipped = len(bundle.queries) - len(queries)
    if skipped:
        logger.debug("Часть %s: %d запросов без истинных ответов исключены", split.value, skipped)

    def run(query: QueryInstance) -> RankedPrediction:
        return rank_query(scorer, bundle, query, mode, split, filtered)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(run, queries))
    return [run(q) for q in queries]


def evaluate(bundle: DatasetBundle, scorer, split: Split = Split.TEST, modes: Sequence[str] = (FULL, TYPE_CONSTRAINED),
             k_list: Sequence[int] = DEFAULT_K_LIST, threads: int = 1, filtered: bool = False) -> MetricReport:
    """
    Макроусреднённые по запросам метрики в каждой страте и режиме

    Args:
        bundle: Набор данных с разбиением
        scorer: Объект с методом scores(query)
        split: Оцениваемая часть
        modes: Режимы поиска
        k_list: Значения K (1, 10 и K для Recall в таблице добавляются всегда)
        threads: Число потоков скоринга
        filtered: Фильтрованная постановка

    Returns:
        MetricReport
    """
    headline = headline_recall_k(bundle)
    k_list = sorted(set(k_list) | {1, 10, headline})
    report = MetricReport(k_list, headline)
    for mode in modes:
        predictions = predict(bundle, scorer, split, mode, threads, filtered)
        if not predictions:
            logger.warning("Часть %s: нет запросов для оценки", split.value)
            continue
        uncovered = sum(1 for p in predictions if not p.covers_ground_truth())
        if uncovered:
            logger.warning("Режим %s: у %d запросов часть истинных целей отсутствует среди кандидатов",
                           mode, uncovered)

        grouped: Dict[str, List[Dict[str, float]]] = {}
        for prediction in predictions:
            metrics = query_metrics(prediction, k_list)
            for stratum in strata_of(prediction):
                grouped.setdefault(stratum, []).append(metrics)
        for stratum, rows in grouped.items():
            averaged = {name: float(np.mean([row[name] for row in rows])) for name in rows[0]}
            report.set(mode, stratum, averaged, len(rows))
    return report


def subsample_train(bundle: DatasetBundle, ratio: float, seed: int) -> DatasetBundle:
    """
    Оставляет долю ratio обучающих пар (префикс фиксированной перестановки), val/test не меняются

    Подмножества вложены при росте ratio для одного зерна; отброшенные пары не попадают ни в одну часть,
    но остаются в глобальном пуле соответствий
    """
    if not 0.0 < ratio <= 1.0:
        raise InvalidArgumentError(f"Доля {ratio} вне (0, 1]", ratio=ratio)
    train = bundle.split_pairs(Split.TRAIN)
    order = make_rng(seed, "ratio").permutation(len(train))
    keep = {train[i] for i in order[:int(np.floor(ratio * len(train) + 1e-9))]}
    labels = {pair: label for pair, label in bundle.split.labels.items()
              if label is not Split.TRAIN or pair in keep}
    return bundle.with_split(SplitAssignment(labels))


def seed_ratio_sweep(bundle: DatasetBundle, ratios: Sequence[float], fit: Callable[[DatasetBundle], object],
                     seed: int = 0, modes: Sequence[str] = (FULL, TYPE_CONSTRAINED),
                     k_list: Sequence[int] = DEFAULT_K_LIST, threads: int = 1) -> List[Tuple[float, MetricReport]]:
    """
    Для каждой доли обучающих пар обучает метод заново и оценивает на test

    Args:
        fit: Функция набора данных -> обученный scorer
        ratios: Доли в (0, 1]

    Returns:
        Пары (доля, отчёт) для непустых обучающих частей
    """
    results = []
    for ratio in ratios:
        subset = subsample_train(bundle, float(ratio), seed)
        if not subset.split_pairs(Split.TRAIN):
            logger.warning("Доля %.3f даёт пустую обучающую часть, пропущена", ratio)
            continue
        logger.info("Доля опорных пар %.3f: %d обучающих пар", ratio, len(subset.split_pairs(Split.TRAIN)))
        scorer = fit(subset)
        results.append((float(ratio), evaluate(subset, scorer, Split.TEST, modes, k_list, threads)))
    return results
